#include "vstorm/latent/bank.hpp"

#include <cmath>
#include <fstream>
#include <random>

#include "vstorm/common/errors.hpp"
#include "vstorm/common/rng.hpp"

namespace vstorm {

double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double softplus_inverse(double y) {
  if (!(y > 0)) throw NumericError("softplus inverse needs a positive value");
  return y > 30 ? y + std::log(-std::expm1(-y)) : std::log(std::expm1(y));
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

VariationalLatentBank::VariationalLatentBank(int slices, int frames, int latent_dim, double initial_deviation)
    : slices_(slices), frames_(frames), dim_(latent_dim) {
  if (slices <= 0 || frames <= 0 || latent_dim <= 0)
    throw ShapeError("latent bank needs positive slices, frames and latent_dim");
  const std::size_t n = static_cast<std::size_t>(slices) * frames * latent_dim;
  mu_.assign(n, 0.0);
  rho_.assign(n, softplus_inverse(initial_deviation));
}

int VariationalLatentBank::index(int z, int t) const {
  if (z < 0 || z >= slices_) throw ShapeError("slice " + std::to_string(z) + " outside bank of " + std::to_string(slices_));
  if (t < 0 || t >= frames_) throw ShapeError("time " + std::to_string(t) + " outside bank of " + std::to_string(frames_));
  return z * frames_ + t;
}

std::size_t VariationalLatentBank::offset(int frame) const {
  if (frame < 0 || frame >= frame_count())
    throw ShapeError("unknown frame " + std::to_string(frame) + " (bank has " + std::to_string(frame_count()) + ")");
  return static_cast<std::size_t>(frame) * dim_;
}

std::vector<double> VariationalLatentBank::deviation(int frame) const {
  const auto r = raw_deviation(frame);
  std::vector<double> s(r.size());
  for (std::size_t i = 0; i < r.size(); ++i) s[i] = softplus(r[i]);
  return s;
}

LatentSample sample(const VariationalLatentBank& bank, int frame, std::span<const double> eps) {
  if (static_cast<int>(eps.size()) != bank.latent_dim())
    throw ShapeError("eps has length " + std::to_string(eps.size()) + ", latent_dim is " +
                     std::to_string(bank.latent_dim()));
  for (double e : eps)
    if (!std::isfinite(e)) throw NumericError("non-finite eps draw for frame " + std::to_string(frame));
  const auto mu = bank.mean(frame);
  const auto s = bank.deviation(frame);
  LatentSample out{std::vector<double>(mu.size()), std::vector<double>(eps.begin(), eps.end()), frame};
  for (std::size_t i = 0; i < mu.size(); ++i) out.c[i] = mu[i] + s[i] * eps[i];
  return out;
}

std::vector<double> draw_eps(std::uint64_t seed, std::uint64_t epoch, int frame, int n) {
  Rng rng(derive_seed(seed, {0x657073, epoch, static_cast<std::uint64_t>(frame)}));
  std::normal_distribution<double> normal;
  std::vector<double> eps(n);
  for (auto& e : eps) e = normal(rng);
  return eps;
}

double kl_unit_gaussian(std::span<const double> mu, std::span<const double> s) {
  if (mu.size() != s.size()) throw ShapeError("mean and deviation lengths differ");
  double v = 0.0;
  for (std::size_t i = 0; i < mu.size(); ++i) {
    if (!(s[i] > 0)) throw NumericError("deviation must be positive, got " + std::to_string(s[i]));
    v += -2.0 * std::log(s[i]) - 1.0 + s[i] * s[i] + mu[i] * mu[i];
  }
  return 0.5 * v;
}

KlTerm kl_unit_gaussian_raw(std::span<const double> mu, std::span<const double> rho) {
  if (mu.size() != rho.size()) throw ShapeError("mean and deviation lengths differ");
  KlTerm k{0.0, std::vector<double>(mu.size()), std::vector<double>(mu.size())};
  std::vector<double> s(mu.size());
  for (std::size_t i = 0; i < mu.size(); ++i) {
    s[i] = softplus(rho[i]);
    k.d_mu[i] = mu[i];
    k.d_rho[i] = (s[i] - 1.0 / s[i]) * sigmoid(rho[i]);
  }
  k.value = kl_unit_gaussian(mu, s);
  return k;
}

SmoothnessTerm temporal_smoothness(std::span<const double> trajectory, int frames, int dim) {
  if (trajectory.size() != static_cast<std::size_t>(frames) * dim) throw ShapeError("trajectory size mismatch");
  SmoothnessTerm out{0.0, std::vector<double>(trajectory.size(), 0.0)};
  for (int t = 0; t + 1 < frames; ++t)
    for (int k = 0; k < dim; ++k) {
      const double d = trajectory[(t + 1) * dim + k] - trajectory[t * dim + k];
      out.value += d * d;
      out.d_mu[(t + 1) * dim + k] += 2.0 * d;
      out.d_mu[t * dim + k] -= 2.0 * d;
    }
  return out;
}

SmoothnessTerm temporal_smoothness(const VariationalLatentBank& bank, int z) {
  const int first = bank.index(z, 0);
  const auto all = bank.means();
  const std::size_t n = static_cast<std::size_t>(bank.frames()) * bank.latent_dim();
  return temporal_smoothness(all.subspan(static_cast<std::size_t>(first) * bank.latent_dim(), n), bank.frames(),
                             bank.latent_dim());
}

void write_latent_bank(ByteWriter& out, const VariationalLatentBank& bank) {
  out.raw("LBNK");
  out.u32(1);
  out.i32(bank.slices());
  out.i32(bank.frames());
  out.i32(bank.latent_dim());
  out.f64_array(bank.means());
  out.f64_array(bank.raw_deviations());
}

VariationalLatentBank read_latent_bank(ByteReader& in) {
  in.expect_magic("LBNK");
  const auto version = in.u32();
  if (version != 1) in.fail("unsupported latent bank version " + std::to_string(version));
  const int slices = in.i32(), frames = in.i32(), dim = in.i32();
  if (slices <= 0 || frames <= 0 || dim <= 0) in.fail("invalid latent bank dimensions");
  VariationalLatentBank bank(slices, frames, dim);
  const auto mu = in.f64_array();
  const auto rho = in.f64_array();
  if (mu.size() != bank.means().size() || rho.size() != mu.size()) in.fail("latent bank arrays have the wrong length");
  std::copy(mu.begin(), mu.end(), bank.means().begin());
  std::copy(rho.begin(), rho.end(), bank.raw_deviations().begin());
  return bank;
}

void write_trajectory_csv(const VariationalLatentBank& bank, const std::filesystem::path& path) {
  std::ofstream f(path);
  if (!f) throw Error("cannot write " + path.string());
  f.precision(17);
  f << "time,slice";
  for (int k = 0; k < bank.latent_dim(); ++k) f << ",mu" << k + 1;
  f << '\n';
  for (int z = 0; z < bank.slices(); ++z)
    for (int t = 0; t < bank.frames(); ++t) {
      f << t << ',' << z;
      for (double m : bank.mean(bank.index(z, t))) f << ',' << m;
      f << '\n';
    }
}

}  // namespace vstorm
