#include "vstorm/trainer/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>

#include "vstorm/common/errors.hpp"
#include "vstorm/common/parallel.hpp"
#include "vstorm/common/rng.hpp"

namespace vstorm {

const char* mode_name(TrainMode m) { return m == TrainMode::variational ? "variational" : "gstorm-baseline"; }

TrainMode parse_mode(const std::string& s) {
  if (s == "variational") return TrainMode::variational;
  if (s == "gstorm-baseline") return TrainMode::gstorm_baseline;
  throw UsageError("unknown mode '" + s + "' (expected variational or gstorm-baseline)");
}

void validate(const TrainConfig& c) {
  const auto& l = c.loss;
  if (!(l.sigma2 >= 0 && l.lambda1 >= 0 && l.lambda2 >= 0)) throw UsageError("loss weights must be non-negative");
  if (l.freeze_deviations && l.sigma2 != 0)
    throw UsageError("freeze_deviations needs sigma2 = 0 (the KL of a zero deviation is unbounded)");
  if (c.epochs < 0) throw UsageError("epochs must be non-negative");
  if (c.stage_bins.empty() || c.stage_bins.size() != c.stage_weights.size())
    throw UsageError("stage_bins and stage_weights must be non-empty and of equal length");
  for (int b : c.stage_bins)
    if (b < 1) throw UsageError("stage bins must be at least 1");
  for (double w : c.stage_weights)
    if (!(w >= 0)) throw UsageError("stage weights must be non-negative");
  if (std::accumulate(c.stage_weights.begin(), c.stage_weights.end(), 0.0) <= 0)
    throw UsageError("stage weights must not all be zero");
  if (!(c.lr_theta >= 0 && c.lr_latent >= 0)) throw UsageError("learning rates must be non-negative");
  if (!(c.beta1 >= 0 && c.beta1 < 1 && c.beta2 >= 0 && c.beta2 < 1 && c.adam_eps > 0))
    throw UsageError("invalid Adam constants");
  if (c.batch_size < 0) throw UsageError("batch_size must be non-negative");
  if (c.threads < 1) throw UsageError("threads must be at least 1");
  if (!(c.initial_deviation > 0)) throw UsageError("initial_deviation must be positive");
}

const std::set<std::string>& train_config_keys() {
  static const std::set<std::string> keys{"mode",     "sigma2",        "lambda1",       "lambda2",
                                          "penalty",  "freeze_deviations", "epochs",    "stage_bins",
                                          "stage_weights", "lr_theta", "lr_latent",     "beta1",
                                          "beta2",    "adam_eps",      "batch_size",    "threads",
                                          "initial_deviation", "checkpoint_dir"};
  return keys;
}

TrainConfig train_config_from(const KeyValueConfig& kv) {
  TrainConfig c;
  c.loss.mode = parse_mode(kv.get_string("mode", "variational"));
  c.loss.sigma2 = kv.get_double("sigma2", c.loss.sigma2);
  c.loss.lambda1 = kv.get_double("lambda1", c.loss.lambda1);
  c.loss.lambda2 = kv.get_double("lambda2", c.loss.lambda2);
  const auto pen = kv.get_string("penalty", "l1-squared");
  if (pen == "l1-squared")
    c.loss.penalty = WeightPenalty::l1_squared;
  else if (pen == "l1")
    c.loss.penalty = WeightPenalty::l1;
  else
    throw UsageError("unknown penalty '" + pen + "' (expected l1-squared or l1)");
  c.loss.freeze_deviations = kv.get_bool("freeze_deviations", false);
  c.epochs = static_cast<int>(kv.get_int("epochs", c.epochs));
  c.stage_bins = kv.get_int_list("stage_bins", c.stage_bins);
  c.stage_weights = kv.get_double_list("stage_weights", c.stage_weights);
  c.lr_theta = kv.get_double("lr_theta", c.lr_theta);
  c.lr_latent = kv.get_double("lr_latent", c.lr_latent);
  c.beta1 = kv.get_double("beta1", c.beta1);
  c.beta2 = kv.get_double("beta2", c.beta2);
  c.adam_eps = kv.get_double("adam_eps", c.adam_eps);
  c.batch_size = static_cast<int>(kv.get_int("batch_size", c.batch_size));
  c.threads = static_cast<int>(kv.get_int("threads", c.threads));
  c.initial_deviation = kv.get_double("initial_deviation", c.initial_deviation);
  c.checkpoint_dir = kv.get_string("checkpoint_dir", "");
  validate(c);
  return c;
}

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state, double lr, double beta1,
               double beta2, double eps) {
  if (params.size() != grads.size()) throw ShapeError("Adam: parameter and gradient sizes differ");
  if (state.m.size() != params.size()) {
    state.m.assign(params.size(), 0.0);
    state.v.assign(params.size(), 0.0);
    state.step = 0;
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * grads[i];
    state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * grads[i] * grads[i];
    params[i] -= lr * (state.m[i] / c1) / (std::sqrt(state.v[i] / c2) + eps);
  }
}

namespace {

// Frames of each slice are split into consecutive runs of `bin` frames; every
// run shares one latent row of a (slices x groups_per_slice) bank.
struct Grouping {
  int slices = 1;
  int frames = 1;
  int bin = 1;
  int per_slice() const { return (frames + bin - 1) / bin; }
  int count() const { return slices * per_slice(); }
  int slice_of(int g) const { return g / per_slice(); }
  int first_time(int g) const { return (g % per_slice()) * bin; }
  int end_time(int g) const { return std::min(frames, first_time(g) + bin); }
};

void check_compatible(const GeneratorNetwork& net, const VariationalLatentBank& bank, const KTDataset& ds) {
  const auto g = net.output_geometry();
  if (g.slices != ds.slices() || g.channels != ds.geometry.channels || g.height != ds.geometry.height ||
      g.width != ds.geometry.width)
    throw ShapeError("generator output " + std::to_string(g.slices) + "x" + std::to_string(g.channels) + "x" +
                     std::to_string(g.height) + "x" + std::to_string(g.width) + " does not match the dataset grid " +
                     std::to_string(ds.slices()) + "x" + std::to_string(ds.geometry.channels) + "x" +
                     std::to_string(ds.geometry.height) + "x" + std::to_string(ds.geometry.width));
  if (bank.slices() != ds.slices() || bank.frames() != ds.frames_per_slice)
    throw ShapeError("latent bank covers " + std::to_string(bank.slices()) + " x " + std::to_string(bank.frames()) +
                     " frames, dataset has " + std::to_string(ds.slices()) + " x " +
                     std::to_string(ds.frames_per_slice));
  if (bank.latent_dim() != net.latent_dim()) throw ShapeError("latent bank and generator latent sizes differ");
  for (std::size_t i = 0; i < ds.frames.size(); ++i) {
    const auto& f = ds.frames[i];
    if (f.b.size() != measurement_size(f.op) || target_slice(f.op) != f.slice)
      throw ShapeError("operator/dataset mismatch at frame " + std::to_string(i));
  }
}

struct ChunkScratch {
  ForwardTape tape;
  std::vector<double> d_theta;
  std::vector<double> d_c, c, upstream, residual, back;
  double data = 0.0;
  double kl = 0.0;
};

class Evaluator {
 public:
  static constexpr std::size_t max_chunks = 16;

  Evaluator(const GeneratorNetwork& net, const KTDataset& ds, const LossConfig& cfg, int threads)
      : net_(net), ds_(ds), cfg_(cfg), threads_(threads) {}

  // Objective over `groups` (data and KL), plus `fraction` of the global penalties
  // in the gradient. eps_of(g) returns the draw for group g.
  ObjectiveValue run(const VariationalLatentBank& bank, const Grouping& grouping, std::span<const int> groups,
                     const std::function<std::span<const double>(int)>& eps_of, double fraction) {
    const std::size_t n_chunks = std::min<std::size_t>(max_chunks, groups.size());
    chunks_.resize(std::max<std::size_t>(chunks_.size(), n_chunks));
    ObjectiveValue out;
    out.d_theta.assign(net_.parameter_count(), 0.0);
    out.d_mu.assign(bank.means().size(), 0.0);
    out.d_rho.assign(bank.means().size(), 0.0);
    // Frozen deviations keep the sampling path with s = 0 exactly, so c = mu + 0 * eps = mu.
    const bool sampled = cfg_.mode == TrainMode::variational;
    const bool with_kl = !cfg_.deterministic_latents();
    const int n = bank.latent_dim();
    const int slice_arg = net_.spec().slices > 1 ? 0 : -1;

    parallel_for(n_chunks, threads_, [&](std::size_t ci) {
      auto& ch = chunks_[ci];
      ch.d_theta.assign(net_.parameter_count(), 0.0);
      ch.data = 0.0;
      ch.kl = 0.0;
      const std::size_t lo = groups.size() * ci / n_chunks, hi = groups.size() * (ci + 1) / n_chunks;
      for (std::size_t k = lo; k < hi; ++k) {
        const int g = groups[k];
        const int z = grouping.slice_of(g);
        const auto mu = bank.mean(g);
        const auto rho = bank.raw_deviation(g);
        std::span<const double> eps;
        ch.c.assign(mu.begin(), mu.end());
        if (sampled) {
          eps = eps_of(g);
          for (int i = 0; i < n; ++i) ch.c[i] = mu[i] + (cfg_.freeze_deviations ? 0.0 : softplus(rho[i])) * eps[i];
        }
        const auto x = forward(net_, ch.c, ch.tape, slice_arg < 0 ? -1 : z);
        ch.upstream.assign(x.size(), 0.0);
        ch.back.resize(x.size());
        for (int t = grouping.first_time(g); t < grouping.end_time(g); ++t) {
          const auto& f = ds_.frame(z, t);
          ch.residual.resize(f.b.size());
          apply_slice(f.op, x, ch.residual);
          double r2 = 0.0;
          for (std::size_t i = 0; i < f.b.size(); ++i) {
            ch.residual[i] -= f.b[i];
            r2 += ch.residual[i] * ch.residual[i];
            ch.residual[i] *= 2.0;
          }
          ch.data += r2;
          adjoint_slice(f.op, ch.residual, ch.back);
          for (std::size_t i = 0; i < x.size(); ++i) ch.upstream[i] += ch.back[i];
        }
        ch.d_c.assign(n, 0.0);
        backward(net_, ch.tape, ch.upstream, ch.d_theta, ch.d_c);
        double* dmu = out.d_mu.data() + static_cast<std::size_t>(g) * n;
        double* drho = out.d_rho.data() + static_cast<std::size_t>(g) * n;
        for (int i = 0; i < n; ++i) dmu[i] += ch.d_c[i];
        if (with_kl)
          for (int i = 0; i < n; ++i) drho[i] += ch.d_c[i] * eps[i] * sigmoid(rho[i]);
        if (with_kl) {
          const double weight = grouping.end_time(g) - grouping.first_time(g);
          const auto k = kl_unit_gaussian_raw(mu, rho);
          ch.kl += weight * k.value;
          for (int i = 0; i < n; ++i) {
            dmu[i] += cfg_.sigma2 * weight * k.d_mu[i];
            drho[i] += cfg_.sigma2 * weight * k.d_rho[i];
          }
        }
      }
    });

    for (std::size_t ci = 0; ci < n_chunks; ++ci) {
      const auto& ch = chunks_[ci];
      out.data += ch.data;
      out.kl += ch.kl;
      for (std::size_t i = 0; i < out.d_theta.size(); ++i) out.d_theta[i] += ch.d_theta[i];
    }

    const auto pen = cfg_.penalty == WeightPenalty::l1_squared ? l1sq_penalty(net_.params()) : l1_penalty(net_.params());
    out.penalty = pen.value;
    for (std::size_t i = 0; i < out.d_theta.size(); ++i) out.d_theta[i] += fraction * cfg_.lambda1 * pen.gradient[i];
    for (int z = 0; z < bank.slices(); ++z) {
      const auto s = temporal_smoothness(bank, z);
      out.smoothness += s.value;
      const std::size_t off = static_cast<std::size_t>(z) * bank.frames() * n;
      for (std::size_t i = 0; i < s.d_mu.size(); ++i) out.d_mu[off + i] += fraction * cfg_.lambda2 * s.d_mu[i];
    }
    out.total = out.data + cfg_.sigma2 * out.kl + cfg_.lambda1 * out.penalty + cfg_.lambda2 * out.smoothness;
    return out;
  }

 private:
  const GeneratorNetwork& net_;
  const KTDataset& ds_;
  const LossConfig& cfg_;
  int threads_;
  std::vector<ChunkScratch> chunks_;
};

ObjectiveValue full_objective(const GeneratorNetwork& net, const VariationalLatentBank& bank, const KTDataset& ds,
                              const LossConfig& cfg, std::span<const double> eps, int threads) {
  check_compatible(net, bank, ds);
  const int n = bank.latent_dim();
  if (cfg.mode == TrainMode::variational && eps.size() != static_cast<std::size_t>(bank.frame_count()) * n)
    throw ShapeError("need " + std::to_string(bank.frame_count() * n) + " eps values, got " +
                     std::to_string(eps.size()));
  Grouping grouping{ds.slices(), ds.frames_per_slice, 1};
  std::vector<int> groups(grouping.count());
  std::iota(groups.begin(), groups.end(), 0);
  Evaluator ev(net, ds, cfg, threads);
  return ev.run(bank, grouping, groups, [&](int g) { return eps.subspan(static_cast<std::size_t>(g) * n, n); }, 1.0);
}

}  // namespace

ObjectiveValue loss_single_slice(const GeneratorNetwork& net, const VariationalLatentBank& bank, const KTDataset& ds,
                                 const LossConfig& cfg, std::span<const double> eps, int threads) {
  if (ds.slices() != 1 || bank.slices() != 1) throw ShapeError("single-slice objective needs a one-slice dataset");
  return full_objective(net, bank, ds, cfg, eps, threads);
}

ObjectiveValue loss_multislice(const GeneratorNetwork& net, const VariationalLatentBank& bank, const KTDataset& ds,
                               const LossConfig& cfg, std::span<const double> eps, int threads) {
  return full_objective(net, bank, ds, cfg, eps, threads);
}

namespace {

// Row of `to` (grouping b) inherits the row of `from` (grouping a) covering its first frame.
void inherit_rows(const VariationalLatentBank& from, const Grouping& a, VariationalLatentBank& to, const Grouping& b) {
  for (int g = 0; g < b.count(); ++g) {
    const int z = b.slice_of(g);
    const int parent = z * a.per_slice() + b.first_time(g) / a.bin;
    std::copy(from.mean(parent).begin(), from.mean(parent).end(), to.mean(g).begin());
    std::copy(from.raw_deviation(parent).begin(), from.raw_deviation(parent).end(), to.raw_deviation(g).begin());
  }
}

void check_finite(const ObjectiveValue& v, int epoch) {
  const std::pair<const char*, double> terms[] = {
      {"data term", v.data}, {"KL term", v.kl}, {"generator penalty", v.penalty}, {"temporal smoothness", v.smoothness}};
  for (const auto& [name, value] : terms)
    if (!std::isfinite(value))
      throw NumericError("non-finite " + std::string(name) + " (" + std::to_string(value) + ") at epoch " +
                         std::to_string(epoch));
}

}  // namespace

TrainReport train(const TrainConfig& config, GeneratorNetwork& net, VariationalLatentBank& bank, const KTDataset& ds,
                  std::uint64_t seed, const std::function<void(const EpochRecord&)>& on_epoch) {
  validate(config);
  check_compatible(net, bank, ds);
  TrainReport report;
  if (config.epochs == 0) return report;
  const auto started = std::chrono::steady_clock::now();
  const auto& loss = config.loss;
  const int n = bank.latent_dim();

  // Epochs per stage in proportion to the weights; the remainder goes to the last stage.
  const double weight_sum = std::accumulate(config.stage_weights.begin(), config.stage_weights.end(), 0.0);
  std::vector<int> stage_epochs;
  int assigned = 0;
  for (double w : config.stage_weights) {
    stage_epochs.push_back(static_cast<int>(std::floor(config.epochs * w / weight_sum)));
    assigned += stage_epochs.back();
  }
  stage_epochs.back() += config.epochs - assigned;

  Evaluator ev(net, ds, loss, config.threads);
  AdamState theta_state;
  Grouping full{ds.slices(), ds.frames_per_slice, 1};
  Grouping previous = full;
  VariationalLatentBank current = bank;
  int epoch = 0;

  for (std::size_t stage = 0; stage < config.stage_bins.size(); ++stage) {
    const Grouping grouping{ds.slices(), ds.frames_per_slice, std::min(config.stage_bins[stage], ds.frames_per_slice)};
    VariationalLatentBank stage_bank(ds.slices(), grouping.per_slice(), n);
    inherit_rows(current, previous, stage_bank, grouping);
    AdamState mu_state, rho_state;
    const int n_groups = grouping.count();
    const int batch = config.batch_size > 0 ? std::min(config.batch_size, n_groups) : n_groups;
    std::vector<int> order(n_groups);
    std::vector<double> eps_store(static_cast<std::size_t>(n_groups) * n);

    for (int e = 0; e < stage_epochs[stage]; ++e, ++epoch) {
      std::iota(order.begin(), order.end(), 0);
      if (batch < n_groups) {
        Rng rng(derive_seed(seed, {0x6f72646572, static_cast<std::uint64_t>(epoch)}));
        std::shuffle(order.begin(), order.end(), rng);
      }
      if (loss.mode == TrainMode::variational)
        for (int g = 0; g < n_groups; ++g) {
          const auto eps = draw_eps(seed, static_cast<std::uint64_t>(epoch), g, n);
          std::copy(eps.begin(), eps.end(), eps_store.begin() + static_cast<std::size_t>(g) * n);
        }
      auto eps_of = [&](int g) { return std::span<const double>(eps_store).subspan(static_cast<std::size_t>(g) * n, n); };

      EpochRecord rec{epoch, static_cast<int>(stage), grouping.bin};
      for (int start = 0; start < n_groups; start += batch) {
        const int count = std::min(batch, n_groups - start);
        const auto groups = std::span<const int>(order).subspan(start, count);
        const double fraction = static_cast<double>(count) / n_groups;
        auto value = ev.run(stage_bank, grouping, groups, eps_of, fraction);
        check_finite(value, epoch);
        rec.data += value.data;
        rec.kl += value.kl;
        if (start == 0) {
          rec.penalty = value.penalty;
          rec.smoothness = value.smoothness;
        }
        adam_step(net.params(), value.d_theta, theta_state, config.lr_theta, config.beta1, config.beta2,
                  config.adam_eps);
        adam_step(stage_bank.means(), value.d_mu, mu_state, config.lr_latent, config.beta1, config.beta2,
                  config.adam_eps);
        if (!loss.deterministic_latents())
          adam_step(stage_bank.raw_deviations(), value.d_rho, rho_state, config.lr_latent, config.beta1,
                    config.beta2, config.adam_eps);
      }
      rec.total = rec.data + loss.sigma2 * rec.kl + loss.lambda1 * rec.penalty + loss.lambda2 * rec.smoothness;
      report.history.push_back(rec);
      if (on_epoch) on_epoch(rec);
    }

    current = std::move(stage_bank);
    previous = grouping;
    if (!config.checkpoint_dir.empty()) {
      VariationalLatentBank expanded(ds.slices(), ds.frames_per_slice, n);
      inherit_rows(current, previous, expanded, full);
      std::filesystem::create_directories(config.checkpoint_dir);
      const auto path = config.checkpoint_dir / ("stage" + std::to_string(stage + 1) + ".ckpt");
      save_checkpoint(path, net, &expanded);
      report.checkpoints.push_back(path);
    }
  }
  inherit_rows(current, previous, bank, full);
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return report;
}

void write_report_csv(const TrainReport& report, const std::filesystem::path& path) {
  std::ofstream f(path);
  if (!f) throw Error("cannot write " + path.string());
  f.precision(17);
  f << "epoch,stage,bin,total,data,kl,penalty,smoothness\n";
  for (const auto& r : report.history)
    f << r.epoch << ',' << r.stage << ',' << r.bin << ',' << r.total << ',' << r.data << ',' << r.kl << ','
      << r.penalty << ',' << r.smoothness << '\n';
}

void save_checkpoint(const std::filesystem::path& path, const GeneratorNetwork& net,
                     const VariationalLatentBank* bank) {
  ByteWriter out;
  out.raw("VCKP");
  out.u32(1);
  write_generator(out, net);
  out.u8(bank ? 1 : 0);
  if (bank) write_latent_bank(out, *bank);
  out.save_with_checksum(path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  auto in = ByteReader::load_with_checksum(path, "checkpoint");
  in.expect_magic("VCKP");
  const auto version = in.u32();
  if (version != 1) in.fail("unsupported checkpoint version " + std::to_string(version));
  Checkpoint ck{read_generator(in), std::nullopt};
  if (in.u8()) {
    ck.bank = read_latent_bank(in);
    if (ck.bank->latent_dim() != ck.net.latent_dim()) in.fail("latent bank and generator latent sizes differ");
  }
  if (!in.at_end()) in.fail("trailing bytes after checkpoint");
  return ck;
}

}  // namespace vstorm
