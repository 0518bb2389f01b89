#pragma once

// Objectives over (theta, mu, rho), the Adam optimizer and the progressive
// training loop.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vstorm/data/dataset.hpp"
#include "vstorm/generator/network.hpp"
#include "vstorm/latent/bank.hpp"
#include "vstorm/trainer/config.hpp"

namespace vstorm {

enum class TrainMode { variational, gstorm_baseline };
enum class WeightPenalty { l1_squared, l1 };

const char* mode_name(TrainMode m);
TrainMode parse_mode(const std::string& s);

struct LossConfig {
  TrainMode mode = TrainMode::variational;
  double sigma2 = 1.0;    // weight of the summed KL term
  double lambda1 = 1e-8;  // weight of the generator penalty
  double lambda2 = 1e-2;  // weight of the temporal smoothness of the means
  WeightPenalty penalty = WeightPenalty::l1_squared;
  // Deviations held at exactly zero and excluded from the KL (requires sigma2 = 0).
  bool freeze_deviations = false;

  bool deterministic_latents() const { return mode == TrainMode::gstorm_baseline || freeze_deviations; }
};

struct TrainConfig {
  LossConfig loss;
  int epochs = 100;
  // Progressive stages: frames are binned in runs of stage_bins[k] per slice;
  // epochs are split in proportion to stage_weights.
  std::vector<int> stage_bins{16, 8, 1};
  std::vector<double> stage_weights{1, 1, 2};
  double lr_theta = 1e-3;
  double lr_latent = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  int batch_size = 0;  // latent groups per optimizer step; 0 = all
  int threads = 1;
  double initial_deviation = 0.1;
  std::filesystem::path checkpoint_dir;  // empty: no per-stage checkpoints
};

void validate(const TrainConfig& c);
TrainConfig train_config_from(const KeyValueConfig& kv);
/// Keys understood by train_config_from.
const std::set<std::string>& train_config_keys();

struct ObjectiveValue {
  double total = 0.0;
  double data = 0.0;        // sum_i |A_i D(c_i) - b_i|^2
  double kl = 0.0;          // sum_i KL(q_i || N(0, I)), unweighted
  double penalty = 0.0;     // generator penalty, unweighted
  double smoothness = 0.0;  // sum over slices of temporal smoothness, unweighted
  std::vector<double> d_theta;
  std::vector<double> d_mu;
  std::vector<double> d_rho;
};

/// Full objective for a single-slice dataset (bank with one slice). `eps` holds
/// the standard-normal draws frame-major (frame_count x latent_dim); it is
/// ignored in gstorm-baseline mode.
ObjectiveValue loss_single_slice(const GeneratorNetwork& net, const VariationalLatentBank& bank,
                                 const KTDataset& ds, const LossConfig& cfg, std::span<const double> eps,
                                 int threads = 1);

/// Full objective with one shared generator and a latent bank covering every
/// slice; frame (z, t) compares only slice z of the generated volume.
ObjectiveValue loss_multislice(const GeneratorNetwork& net, const VariationalLatentBank& bank, const KTDataset& ds,
                               const LossConfig& cfg, std::span<const double> eps, int threads = 1);

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  long step = 0;
};

/// Bias-corrected Adam update of params in place.
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state, double lr, double beta1,
               double beta2, double eps);

struct EpochRecord {
  int epoch = 0;
  int stage = 0;
  int bin = 1;
  double total = 0.0;
  double data = 0.0;
  double kl = 0.0;
  double penalty = 0.0;
  double smoothness = 0.0;
};

struct TrainReport {
  std::vector<EpochRecord> history;
  std::vector<std::filesystem::path> checkpoints;
  std::map<std::string, double> metrics;
  double wall_seconds = 0.0;
};

/// Trains net and bank in place. Deterministic for a fixed seed; with any
/// thread count the reduction order is fixed, so results do not depend on it.
TrainReport train(const TrainConfig& config, GeneratorNetwork& net, VariationalLatentBank& bank, const KTDataset& ds,
                  std::uint64_t seed, const std::function<void(const EpochRecord&)>& on_epoch = {});

/// CSV: epoch,stage,bin,total,data,kl,penalty,smoothness (wall time excluded).
void write_report_csv(const TrainReport& report, const std::filesystem::path& path);

struct Checkpoint {
  GeneratorNetwork net;
  std::optional<VariationalLatentBank> bank;
};

void save_checkpoint(const std::filesystem::path& path, const GeneratorNetwork& net,
                     const VariationalLatentBank* bank);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace vstorm
