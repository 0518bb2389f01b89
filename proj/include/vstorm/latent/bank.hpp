#pragma once

// Per-frame diagonal Gaussian posteriors q = N(mu, diag(s^2)) with
// s = softplus(rho), indexed by (slice, time).

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "vstorm/common/binary_io.hpp"

namespace vstorm {

double softplus(double x);
double softplus_inverse(double y);
double sigmoid(double x);

class VariationalLatentBank {
 public:
  VariationalLatentBank() = default;
  /// mu = 0 and s = initial_deviation everywhere.
  VariationalLatentBank(int slices, int frames, int latent_dim, double initial_deviation = 0.1);

  int slices() const { return slices_; }
  int frames() const { return frames_; }
  int latent_dim() const { return dim_; }
  int frame_count() const { return slices_ * frames_; }

  /// Flat frame index of (z, t); throws on out-of-range.
  int index(int z, int t) const;

  std::span<double> mean(int frame) { return {mu_.data() + offset(frame), static_cast<std::size_t>(dim_)}; }
  std::span<const double> mean(int frame) const { return {mu_.data() + offset(frame), static_cast<std::size_t>(dim_)}; }
  std::span<double> raw_deviation(int frame) { return {rho_.data() + offset(frame), static_cast<std::size_t>(dim_)}; }
  std::span<const double> raw_deviation(int frame) const {
    return {rho_.data() + offset(frame), static_cast<std::size_t>(dim_)};
  }
  std::vector<double> deviation(int frame) const;

  /// All means / raw deviations, frame-major.
  std::span<double> means() { return mu_; }
  std::span<const double> means() const { return mu_; }
  std::span<double> raw_deviations() { return rho_; }
  std::span<const double> raw_deviations() const { return rho_; }

  bool operator==(const VariationalLatentBank&) const = default;

 private:
  std::size_t offset(int frame) const;

  int slices_ = 0;
  int frames_ = 0;
  int dim_ = 0;
  std::vector<double> mu_;
  std::vector<double> rho_;
};

struct LatentSample {
  std::vector<double> c;
  std::vector<double> eps;
  int frame = -1;
};

/// c = mu + s * eps.
LatentSample sample(const VariationalLatentBank& bank, int frame, std::span<const double> eps);

/// Standard-normal draws for one frame, from a stream keyed by (seed, epoch, frame).
std::vector<double> draw_eps(std::uint64_t seed, std::uint64_t epoch, int frame, int n);

/// KL(N(mu, diag(s^2)) || N(0, I)) = (sum(-log s^2) - n + sum s^2 + |mu|^2) / 2.
double kl_unit_gaussian(std::span<const double> mu, std::span<const double> s);

struct KlTerm {
  double value = 0.0;
  std::vector<double> d_mu;
  std::vector<double> d_rho;
};

/// KL with s = softplus(rho), and its gradient in (mu, rho).
KlTerm kl_unit_gaussian_raw(std::span<const double> mu, std::span<const double> rho);

struct SmoothnessTerm {
  double value = 0.0;
  std::vector<double> d_mu;  // frames x latent_dim for the requested slice
};

/// sum_t |mu(t+1, z) - mu(t, z)|^2 over slice z (forward differences, no wraparound).
SmoothnessTerm temporal_smoothness(const VariationalLatentBank& bank, int z);

/// Same penalty over a plain (frames x dim) trajectory.
SmoothnessTerm temporal_smoothness(std::span<const double> trajectory, int frames, int dim);

void write_latent_bank(ByteWriter& out, const VariationalLatentBank& bank);
VariationalLatentBank read_latent_bank(ByteReader& in);

/// CSV with header time,slice,mu1..mun; one row per frame.
void write_trajectory_csv(const VariationalLatentBank& bank, const std::filesystem::path& path);

}  // namespace vstorm
