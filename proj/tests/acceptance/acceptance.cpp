// End-to-end acceptance criteria. Each criterion prints one PASS/FAIL line.
//
//   acceptance --criterion N     run one criterion (exit 0 on pass)
//   acceptance                   run all of them

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "support/test_support.hpp"
#include "vstorm/cli/commands.hpp"
#include "vstorm/common/errors.hpp"
#include "vstorm/data/dataset.hpp"
#include "vstorm/data/mnist.hpp"
#include "vstorm/eval/metrics.hpp"
#include "vstorm/generator/network.hpp"
#include "vstorm/latent/bank.hpp"
#include "vstorm/measurement/ensemble.hpp"
#include "vstorm/trainer/trainer.hpp"

namespace fs = std::filesystem;
using namespace vstorm;
using vstorm::testing::central_differences;
using vstorm::testing::max_relative_error;
using vstorm::testing::random_vector;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string num(double v, int digits = 4) {
  std::ostringstream os;
  os.precision(digits);
  os << v;
  return os.str();
}

fs::path scratch_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("vstorm_acceptance_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

KeyValueConfig config_file(const std::string& name) { return KeyValueConfig::load(fs::path(VSTORM_CONFIG_DIR) / name); }

RunRequest request(const std::string& command, KeyValueConfig config, const fs::path& out) {
  RunRequest r;
  r.command = command;
  r.config = std::move(config);
  r.out_dir = out;
  return r;
}

// Keeps only the keys `command` accepts.
KeyValueConfig subset(const KeyValueConfig& all, const std::string& command) {
  KeyValueConfig out;
  const auto& keys = command_keys(command);
  for (const auto& [k, v] : all.values())
    if (keys.count(k)) out.set(k, v);
  return out;
}

// ---------------------------------------------------------------------------
// 1. Gradients of every objective term against central differences.

GeneratorSpec tiny_generator(int slices, int latent, int channels, int size) {
  GeneratorSpec s;
  s.latent_dim = latent;
  s.slices = slices;
  s.channels_per_slice = channels;
  s.height = size;
  s.width = size;
  s.init_scale = 1.0;
  const int coarse = size / 4;
  s.layers = {{LayerKind::dense, latent, 3, 1, 1, Activation::leaky_relu, 0.1, coarse, coarse},
              {LayerKind::upsample_convolution, 3, 3, 3, 2, Activation::leaky_relu, 0.1, 0, 0},
              {LayerKind::transposed_convolution, 3, channels * slices, 4, 2, Activation::tanh, 0.1, 0, 0}};
  return s;
}

double worst_of(std::initializer_list<double> v) { return *std::max_element(v.begin(), v.end()); }

// Worst relative error of the objective's (theta, mu, rho) gradients.
double objective_gradient_error(const GeneratorNetwork& net, const VariationalLatentBank& bank, const KTDataset& ds,
                                const LossConfig& cfg, std::span<const double> eps) {
  const auto v = loss_multislice(net, bank, ds, cfg, eps);
  const std::vector<double> theta(net.params().begin(), net.params().end());
  const auto ft = central_differences(
      [&](std::span<const double> th) {
        GeneratorNetwork copy = net;
        std::copy(th.begin(), th.end(), copy.params().begin());
        return loss_multislice(copy, bank, ds, cfg, eps).total;
      },
      theta, 1e-5);
  const std::vector<double> mu(bank.means().begin(), bank.means().end());
  const auto fm = central_differences(
      [&](std::span<const double> m) {
        auto b = bank;
        std::copy(m.begin(), m.end(), b.means().begin());
        return loss_multislice(net, b, ds, cfg, eps).total;
      },
      mu, 1e-5);
  double worst = worst_of({max_relative_error(v.d_theta, ft), max_relative_error(v.d_mu, fm)});
  if (!cfg.deterministic_latents()) {
    const std::vector<double> rho(bank.raw_deviations().begin(), bank.raw_deviations().end());
    const auto fr = central_differences(
        [&](std::span<const double> r) {
          auto b = bank;
          std::copy(r.begin(), r.end(), b.raw_deviations().begin());
          return loss_multislice(net, b, ds, cfg, eps).total;
        },
        rho, 1e-5);
    worst = std::max(worst, max_relative_error(v.d_rho, fr));
  }
  return worst;
}

Outcome criterion_gradients() {
  double worst = 0.0;
  int instances = 0;
  for (int i = 0; i < 24; ++i, ++instances) {
    const std::uint64_t seed = 1000 + i;
    // Rotate through the three operator families.
    KTDataset ds;
    int slices = 1, channels = 2, latent = 2 + i % 3;
    if (i % 3 == 0) {
      std::vector<ImageGrid> imgs;
      for (int k = 0; k < 3; ++k) {
        ImageGrid g(8, 8, 1);
        g.values = random_vector(64, seed * 10 + k);
        imgs.push_back(g);
      }
      ds = corrupt_images(imgs, 0.4, 0.05, seed);
      channels = 1;
    } else {
      slices = i % 3 == 1 ? 1 : 2;
      const auto spec = default_phantom_spec(8, 8, slices, 3, seed);
      RandomRowEnsemble ens{8, 8, 3, std::make_shared<const CoilMaps>(make_coil_maps(8, 8, 2))};
      ds = acquire_kt(spec, ens, 0.02, seed);
    }
    GeneratorNetwork net(tiny_generator(slices, latent, channels, 8), seed);
    VariationalLatentBank bank(slices, ds.frames_per_slice, latent);
    const auto mu = random_vector(bank.means().size(), seed + 1);
    const auto rho = random_vector(bank.means().size(), seed + 2, -2.0, 0.5);
    std::copy(mu.begin(), mu.end(), bank.means().begin());
    std::copy(rho.begin(), rho.end(), bank.raw_deviations().begin());
    const auto eps = random_vector(bank.means().size(), seed + 3, -2.0, 2.0);

    LossConfig all;
    all.sigma2 = 0.3 + 0.1 * (i % 5);
    all.lambda1 = 1e-3;
    all.lambda2 = 0.2;
    all.penalty = i % 2 ? WeightPenalty::l1 : WeightPenalty::l1_squared;
    all.mode = i % 4 == 3 ? TrainMode::gstorm_baseline : TrainMode::variational;

    // Full objective, then the data term alone.
    double w = objective_gradient_error(net, bank, ds, all, eps);
    LossConfig data_only = all;
    data_only.sigma2 = data_only.lambda1 = data_only.lambda2 = 0.0;
    w = std::max(w, objective_gradient_error(net, bank, ds, data_only, eps));

    // KL, generator penalty and smoothness on their own.
    for (int f = 0; f < bank.slices() * bank.frames(); ++f) {
      const auto kl = kl_unit_gaussian_raw(bank.mean(f), bank.raw_deviation(f));
      const std::vector<double> m(bank.mean(f).begin(), bank.mean(f).end());
      const std::vector<double> r(bank.raw_deviation(f).begin(), bank.raw_deviation(f).end());
      const auto fm = central_differences(
          [&](std::span<const double> x) { return kl_unit_gaussian_raw(x, r).value; }, m, 1e-5);
      const auto fr = central_differences(
          [&](std::span<const double> x) { return kl_unit_gaussian_raw(m, x).value; }, r, 1e-5);
      w = std::max({w, max_relative_error(kl.d_mu, fm), max_relative_error(kl.d_rho, fr)});
    }
    const std::vector<double> theta(net.params().begin(), net.params().end());
    const auto pen = l1sq_penalty(net.params());
    const auto fp = central_differences([](std::span<const double> x) { return l1sq_penalty(x).value; }, theta, 1e-5);
    w = std::max(w, max_relative_error(pen.gradient, fp));
    for (int z = 0; z < bank.slices(); ++z) {
      const auto sm = temporal_smoothness(bank, z);
      std::vector<double> traj;
      for (int t = 0; t < bank.frames(); ++t)
        traj.insert(traj.end(), bank.mean(bank.index(z, t)).begin(), bank.mean(bank.index(z, t)).end());
      const int frames = bank.frames(), n = bank.latent_dim();
      const auto fs_ = central_differences(
          [&](std::span<const double> x) { return temporal_smoothness(x, frames, n).value; }, traj, 1e-5);
      w = std::max(w, max_relative_error(sm.d_mu, fs_));
    }
    worst = std::max(worst, w);
  }
  return {worst < 1e-5, std::to_string(instances) + " instances, worst relative error " + num(worst)};
}

// ---------------------------------------------------------------------------
// 2. Expectation of A^T A over the operator ensembles.

Outcome criterion_ensemble() {
  bool pass = true;
  std::string detail;
  const std::pair<const char*, OperatorEnsemble> ensembles[] = {{"mask", BernoulliMaskEnsemble{8, 8, 1, 0.3}},
                                                                {"rows", RandomRowEnsemble{8, 8, 4, nullptr}}};
  for (const auto& [name, e] : ensembles) {
    const double d1 = expectation_identity_estimate(e, 100000, 0, 11);
    const double d4 = expectation_identity_estimate(e, 400000, 0, 12);
    const double ratio = d4 / (0.5 * d1);
    pass = pass && d1 <= 0.02 && ratio > 0.5 && ratio < 2.0;
    detail += std::string(detail.empty() ? "" : "; ") + name + " dev(1e5) " + num(d1) + ", dev(4e5)/(dev(1e5)/2) " +
              num(ratio, 3);
  }
  return {pass, detail};
}

// ---------------------------------------------------------------------------
// 3. Closed-form KL against Monte Carlo.

Outcome criterion_kl() {
  std::mt19937_64 rng(77);
  std::uniform_int_distribution<int> dim(1, 8);
  std::uniform_real_distribution<double> mean(-2.0, 2.0), dev(0.2, 2.5);
  std::normal_distribution<double> normal;
  int failures = 0;
  double worst_z = 0.0;
  const long draws = 1000000;
  for (int trial = 0; trial < 50; ++trial) {
    const int n = dim(rng);
    std::vector<double> mu(n), s(n);
    for (int i = 0; i < n; ++i) mu[i] = mean(rng), s[i] = dev(rng);
    const double closed = kl_unit_gaussian(mu, s);
    // log q(c) - log p(c) with c = mu + s * e.
    double sum = 0, sum2 = 0;
    for (long k = 0; k < draws; ++k) {
      double v = 0;
      for (int i = 0; i < n; ++i) {
        const double e = normal(rng);
        const double c = mu[i] + s[i] * e;
        v += -std::log(s[i]) - 0.5 * e * e + 0.5 * c * c;
      }
      sum += v;
      sum2 += v * v;
    }
    const double m = sum / draws;
    const double se = std::sqrt((sum2 / draws - m * m) / draws);
    const double z = std::abs(m - closed) / se;
    worst_z = std::max(worst_z, z);
    if (z > 3.0) ++failures;
  }
  return {failures == 0, "50 trials, worst |closed - MC| = " + num(worst_z, 3) + " standard errors"};
}

// ---------------------------------------------------------------------------
// 4. Digits with 70% of pixels missing.

Outcome criterion_mnist() {
  const auto cfg = config_file("mnist.conf");
  const auto out = scratch_dir("mnist");
  const auto r = run_command(request("mnist", cfg, out));
  const double gain = r.summary.at("mean_psnr") - r.summary.at("mean_zero_filled_psnr");
  const bool pass = gain >= 6.0 && r.summary.at("mean_ssim") >= 0.75;
  return {pass, "PSNR " + num(r.summary.at("mean_psnr")) + " dB vs zero-filled " +
                    num(r.summary.at("mean_zero_filled_psnr")) + " dB (gain " + num(gain) + " dB, need >= 6), SSIM " +
                    num(r.summary.at("mean_ssim")) + " (need >= 0.75)"};
}

// ---------------------------------------------------------------------------
// 5. Single-slice phantom.

Outcome criterion_single_slice() {
  const auto cfg = config_file("single_slice.conf");
  const auto dir = scratch_dir("single");
  run_command(request("make-phantom", subset(cfg, "make-phantom"), dir / "data"));
  auto train_cfg = subset(cfg, "train");
  train_cfg.set("dataset", (dir / "data" / "dataset.vktd").string());
  run_command(request("train", train_cfg, dir / "train"));
  const auto ds = load_dataset(dir / "data" / "dataset.vktd");
  const auto ck = load_checkpoint(dir / "train" / "model.ckpt");
  const auto s = score_series(ck.net, *ck.bank, ds, 0);
  const bool pass = s.mean_ser >= 14.0 && s.mean_ser - s.mean_zero_filled_ser >= 8.0;
  return {pass, "mean SER " + num(s.mean_ser) + " dB (need >= 14), adjoint baseline " + num(s.mean_zero_filled_ser) +
                    " dB (margin " + num(s.mean_ser - s.mean_zero_filled_ser) + ", need >= 8)"};
}

// ---------------------------------------------------------------------------
// 6. Multislice alignment and latent distributions.

double ratio_of(const std::vector<double>& v) {
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  return *hi / *lo;
}

std::string list(const std::vector<double>& v) {
  std::string s;
  for (double x : v) s += (s.empty() ? "" : " ") + num(x, 3);
  return s;
}

Outcome criterion_multislice() {
  const auto cfg = config_file("multislice.conf");
  const auto dir = scratch_dir("multislice");
  run_command(request("make-phantom", subset(cfg, "make-phantom"), dir / "data"));
  const auto ds = load_dataset(dir / "data" / "dataset.vktd");
  auto train_cfg = subset(cfg, "train");
  train_cfg.set("dataset", (dir / "data" / "dataset.vktd").string());

  train_cfg.set("mode", "variational");
  run_command(request("train", train_cfg, dir / "vstorm"));
  train_cfg.set("mode", "gstorm-baseline");
  run_command(request("train", train_cfg, dir / "baseline"));

  const auto v = load_checkpoint(dir / "vstorm" / "model.ckpt");
  const auto b = load_checkpoint(dir / "baseline" / "model.ckpt");
  const double align_v = alignment_score(reconstruct_series(v.net, *v.bank, 1), *ds.phantom, 1);
  const double align_b = alignment_score(reconstruct_series(b.net, *b.bank, 1), *ds.phantom, 1);
  const auto kl_v = kl_summary(*v.bank);
  const auto mm_b = moment_matched_kl(*b.bank);
  const bool pass = align_v >= 0.8 && align_v > align_b && ratio_of(kl_v) < 3.0 && ratio_of(mm_b) > 3.0;
  return {pass, "alignment " + num(align_v) + " (need >= 0.8) vs baseline " + num(align_b) + "; KL per slice [" +
                    list(kl_v) + "] ratio " + num(ratio_of(kl_v), 3) + " (need < 3); baseline moment-matched [" +
                    list(mm_b) + "] ratio " + num(ratio_of(mm_b), 3) + " (need > 3)"};
}

// ---------------------------------------------------------------------------
// 7. Frozen deviations with no KL weight reproduce the baseline bitwise.

bool same_bits(double a, double b) { return std::memcmp(&a, &b, sizeof a) == 0; }

Outcome criterion_reduction() {
  const auto spec = default_phantom_spec(16, 16, 2, 12, 5);
  RandomRowEnsemble ens{16, 16, 4, std::make_shared<const CoilMaps>(make_coil_maps(16, 16, 2))};
  const auto ds = acquire_kt(spec, ens, 0.01, 5);
  GeneratorSpec g = tiny_generator(2, 2, 2, 16);
  TrainConfig c;
  c.epochs = 50;
  c.stage_bins = {4, 2, 1};
  c.lr_theta = 5e-3;
  c.loss.sigma2 = 0.0;
  c.loss.lambda1 = 1e-6;
  c.loss.lambda2 = 1e-2;

  auto run = [&](TrainConfig cfg) {
    GeneratorNetwork net(g, 9);
    VariationalLatentBank bank(2, 12, 2);
    randomize_means(bank, 9, 0.1);
    auto report = train(cfg, net, bank, ds, 9);
    return std::make_tuple(std::move(report), std::move(net), std::move(bank));
  };
  TrainConfig frozen = c;
  frozen.loss.mode = TrainMode::variational;
  frozen.loss.freeze_deviations = true;
  TrainConfig base = c;
  base.loss.mode = TrainMode::gstorm_baseline;
  const auto [ra, na, ba] = run(frozen);
  const auto [rb, nb, bb] = run(base);

  bool same = ra.history.size() == 50 && rb.history.size() == 50;
  int first_diff = -1;
  for (std::size_t e = 0; same && e < ra.history.size(); ++e) {
    const auto &x = ra.history[e], &y = rb.history[e];
    if (!(same_bits(x.total, y.total) && same_bits(x.data, y.data) && same_bits(x.penalty, y.penalty) &&
          same_bits(x.smoothness, y.smoothness))) {
      same = false;
      first_diff = static_cast<int>(e);
    }
  }
  const bool params_same = std::equal(na.params().begin(), na.params().end(), nb.params().begin(), same_bits) &&
                           std::equal(ba.means().begin(), ba.means().end(), bb.means().begin(), same_bits);
  const bool pass = same && params_same;
  return {pass, std::string("50-epoch loss trajectories ") + (same ? "bitwise equal" : "differ at epoch " +
                    std::to_string(first_diff)) + ", final parameters " + (params_same ? "bitwise equal" : "differ")};
}

// ---------------------------------------------------------------------------
// 8. Manifest reruns through the command-line tool.

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), {}};
}

int run_tool(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string("\"") + VSTORM_CLI_PATH + "\" " + args + " > \"" + log.string() + "\" 2>&1";
  return std::system(cmd.c_str());
}

// Compares every output listed in the manifest of `a` with its copy under `b`.
bool outputs_match(const fs::path& a, const fs::path& b, std::string& detail, int& files) {
  const auto m = KeyValueConfig::load(a / "manifest.txt");
  std::stringstream list(m.require_string("outputs"));
  std::string item;
  bool ok = true;
  while (std::getline(list, item, ',')) {
    ++files;
    if (slurp(a / item) != slurp(b / item) || !fs::exists(b / item)) {
      ok = false;
      detail += " " + item + " differs;";
    }
  }
  return ok;
}

Outcome criterion_rerun() {
  const auto dir = scratch_dir("rerun");
  struct Step {
    std::string name, args;
  };
  const std::string data = (dir / "phantom" / "dataset.vktd").string();
  const std::vector<Step> steps{
      {"phantom", "make-phantom --slices 2 --frames 16 --set height=32 --set width=32 --seed 4"},
      {"train", "train --dataset " + data + " --epochs 12 --threads 3 --seed 4 --set stage_bins=4,1 --set stage_weights=1,1 --set init_scale=1"},
      {"baseline", "train --dataset " + data + " --epochs 12 --mode gstorm-baseline --seed 4 --set stage_bins=4,1 --set stage_weights=1,1"},
      {"reconstruct", "reconstruct --checkpoint " + (dir / "train" / "model.ckpt").string() + " --dataset " + data +
                          " --source-slice 1"},
      {"mnist", "mnist --epochs 5 --grid 4 --threads 2 --set count=40"},
  };
  std::string detail;
  bool pass = true;
  int files = 0;
  for (const auto& s : steps) {
    const auto out = dir / s.name;
    if (run_tool(s.args + " --out \"" + out.string() + "\"", dir / (s.name + ".log")) != 0) {
      return {false, s.name + " run failed: " + slurp(dir / (s.name + ".log"))};
    }
    const auto again = dir / (s.name + "_rerun");
    if (run_tool("rerun --manifest \"" + (out / "manifest.txt").string() + "\" --out \"" + again.string() + "\"",
                 dir / (s.name + "_rerun.log")) != 0)
      return {false, s.name + " rerun failed: " + slurp(dir / (s.name + "_rerun.log"))};
    pass = outputs_match(out, again, detail, files) && pass;
  }
  return {pass, std::to_string(steps.size()) + " runs, " + std::to_string(files) + " output files compared" +
                    (detail.empty() ? ", all bitwise identical" : ":" + detail)};
}

}  // namespace

int main(int argc, char** argv) {
  struct Criterion {
    std::string name;
    std::function<Outcome()> run;
    double budget_seconds;  // 0 = no stated budget
  };
  const std::vector<Criterion> criteria{
      {"gradient suite", criterion_gradients, 120},
      {"ensemble expectation", criterion_ensemble, 60},
      {"KL oracle", criterion_kl, 60},
      {"digits with missing pixels", criterion_mnist, 1800},
      {"single-slice phantom", criterion_single_slice, 1800},
      {"multislice alignment", criterion_multislice, 3600},
      {"reduction to baseline", criterion_reduction, 0},
      {"manifest reproducibility", criterion_rerun, 0},
  };
  int only = 0;
  for (int i = 1; i + 1 < argc; ++i)
    if (std::string(argv[i]) == "--criterion") only = std::atoi(argv[i + 1]);
  if (only < 0 || only > static_cast<int>(criteria.size())) {
    std::cerr << "criterion must be 1.." << criteria.size() << "\n";
    return 2;
  }
  bool all = true;
  for (int k = 1; k <= static_cast<int>(criteria.size()); ++k) {
    if (only && k != only) continue;
    const auto started = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[k - 1].run();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    const double budget = criteria[k - 1].budget_seconds;
    if (budget > 0 && secs >= budget) {
      o.pass = false;
      o.detail += "; over the " + num(budget, 4) + " s budget";
    }
    std::cout << "criterion " << k << " (" << criteria[k - 1].name << "): " << (o.pass ? "PASS" : "FAIL") << ": "
              << o.detail << " [" << num(secs, 4) << " s]" << std::endl;
    all = all && o.pass;
  }
  return all ? 0 : 1;
}
