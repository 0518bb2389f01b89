#include "vstorm/cli/commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>

#include "vstorm/common/errors.hpp"
#include "vstorm/common/rng.hpp"
#include "vstorm/data/mnist.hpp"
#include "vstorm/eval/images.hpp"
#include "vstorm/eval/metrics.hpp"
#include "vstorm/generator/presets.hpp"

#ifndef VSTORM_DATA_DIR
#define VSTORM_DATA_DIR "data"
#endif

namespace vstorm {

namespace fs = std::filesystem;

namespace {

const std::set<std::string> path_keys{"dataset", "checkpoint", "mnist_images", "mnist_labels"};

std::set<std::string> with_train_keys(std::set<std::string> keys) {
  keys.insert(train_config_keys().begin(), train_config_keys().end());
  return keys;
}

double mean_of(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

std::uint64_t seed_of(const KeyValueConfig& c) { return c.get_u64("seed", 1); }

void log_line(const std::string& s) { std::cout << s << std::endl; }

std::string fixed(double v, int digits = 3) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(digits);
  os << v;
  return os.str();
}

std::function<void(const EpochRecord&)> progress_printer(int epochs, long long every) {
  if (every <= 0) return {};
  return [epochs, every](const EpochRecord& r) {
    if ((r.epoch + 1) % every == 0 || r.epoch + 1 == epochs)
      log_line("epoch " + std::to_string(r.epoch + 1) + "/" + std::to_string(epochs) + " bin " +
               std::to_string(r.bin) + " total " + fixed(r.total, 6) + " data " + fixed(r.data, 6) + " kl " +
               fixed(r.kl, 4));
  };
}

GeneratorSpec generator_for(const KTDataset& ds, const KeyValueConfig& c, int latent) {
  GeneratorSpec spec;
  if (ds.kind == "digits") {
    spec = mnist_preset(latent, static_cast<int>(c.get_int("hidden_channels", 8)));
  } else {
    spec = mri_preset(latent, ds.geometry.height, ds.geometry.width, ds.slices(),
                      static_cast<int>(c.get_int("channel_width", 0)), c.get_double("params_per_output", 6.0));
  }
  spec.init_scale = c.get_double("init_scale", spec.init_scale);
  return spec;
}

// Trains a fresh generator and bank on `ds`; shared by train and mnist.
struct Trained {
  GeneratorNetwork net;
  VariationalLatentBank bank;
  TrainReport report;
};

Trained train_fresh(const KTDataset& ds, const KeyValueConfig& c, const fs::path& out_dir) {
  auto cfg = train_config_from(c);
  if (!cfg.checkpoint_dir.empty() && cfg.checkpoint_dir.is_relative()) cfg.checkpoint_dir = out_dir / cfg.checkpoint_dir;
  const auto seed = seed_of(c);
  const int latent = static_cast<int>(c.get_int("latent_dim", default_latent_dim(ds.slices())));
  GeneratorNetwork net(generator_for(ds, c, latent), seed);
  VariationalLatentBank bank(ds.slices(), ds.frames_per_slice, latent, cfg.initial_deviation);
  randomize_means(bank, seed, c.get_double("latent_init", 0.01));
  log_line("generator: " + std::to_string(net.params().size()) + " parameters, latent size " +
           std::to_string(latent) + ", mode " + mode_name(cfg.loss.mode));
  auto report = train(cfg, net, bank, ds, seed, progress_printer(cfg.epochs, c.get_int("log_every", 50)));
  log_line("trained " + std::to_string(cfg.epochs) + " epochs in " + fixed(report.wall_seconds, 1) + " s");
  return {std::move(net), std::move(bank), std::move(report)};
}

void write_kl_csv(const VariationalLatentBank& bank, bool deterministic, const fs::path& path) {
  std::vector<MetricRow> rows;
  const auto kl = kl_summary(bank);
  for (int z = 0; z < bank.slices(); ++z) rows.push_back({-1, z, "kl_mean", deterministic ? 0.0 : kl[z]});
  if (bank.frames() > bank.latent_dim()) {
    try {
      const auto mm = moment_matched_kl(bank);
      for (int z = 0; z < bank.slices(); ++z) rows.push_back({-1, z, "kl_moment_matched", mm[z]});
    } catch (const NumericError&) {
      // Degenerate trajectories (for instance untrained means) have no covariance to match.
    }
  }
  write_metric_csv(rows, path);
}

double max_magnitude(const std::vector<ImageGrid>& images) {
  double hi = 0;
  for (const auto& img : images) {
    const auto m = magnitude(img);
    for (double v : m.values) hi = std::max(hi, v);
  }
  return hi > 0 ? hi : 1.0;
}

std::string frame_name(int t, int z) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "t%03d_z%d.png", t, z);
  return buf;
}

// Decodes the g x g grid of latents spanning [-3, 3]^2 in the first two coordinates.
std::vector<ImageGrid> manifold_tiles(const GeneratorNetwork& net, int g) {
  std::vector<ImageGrid> tiles;
  std::vector<double> c(net.latent_dim(), 0.0);
  auto coord = [g](int k) { return g == 1 ? 0.0 : -3.0 + 6.0 * k / (g - 1); };
  for (int i = 0; i < g; ++i)
    for (int j = 0; j < g; ++j) {
      c[0] = coord(j);
      if (c.size() > 1) c[1] = coord(g - 1 - i);
      tiles.push_back(forward(net, c).slice(0));
    }
  return tiles;
}

}  // namespace

int default_latent_dim(int slices) { return slices > 1 ? 3 : 2; }

void randomize_means(VariationalLatentBank& bank, std::uint64_t seed, double scale) {
  Rng rng = make_rng(seed, {0x6c6174});
  std::uniform_real_distribution<double> u(-scale, scale);
  for (auto& v : bank.means()) v = u(rng);
}

const std::set<std::string>& command_keys(const std::string& command) {
  static const std::map<std::string, std::set<std::string>> keys{
      {"make-phantom",
       {"seed", "threads", "height", "width", "slices", "frames", "rows", "coils", "snr_db", "noise_sd"}},
      {"train", with_train_keys({"seed", "dataset", "latent_dim", "init_scale", "channel_width", "params_per_output",
                                 "hidden_channels", "latent_init", "log_every"})},
      {"reconstruct", {"seed", "checkpoint", "dataset", "source_slice", "images", "sample", "threads",
                       "alignment_cells"}},
      {"mnist", with_train_keys({"seed", "mnist_images", "mnist_labels", "digit", "count", "keep", "noise_sd",
                                 "latent_dim", "hidden_channels", "init_scale", "latent_init", "grid", "show",
                                 "log_every"})},
  };
  const auto it = keys.find(command);
  if (it == keys.end()) throw UsageError("unknown command '" + command + "'");
  return it->second;
}

RunResult cmd_make_phantom(const RunRequest& req) {
  const auto& c = req.config;
  const auto seed = seed_of(c);
  const int h = static_cast<int>(c.get_int("height", 64)), w = static_cast<int>(c.get_int("width", 64));
  const auto spec = default_phantom_spec(h, w, static_cast<int>(c.get_int("slices", 4)),
                                         static_cast<int>(c.get_int("frames", 192)), seed);
  const int coils = static_cast<int>(c.get_int("coils", 4));
  if (coils < 1) throw UsageError("coils must be at least 1");
  RandomRowEnsemble ens{h, w, static_cast<int>(c.get_int("rows", 8)),
                        std::make_shared<const CoilMaps>(make_coil_maps(h, w, coils))};
  const double noise = c.has("noise_sd") ? c.get_double("noise_sd", 0.0)
                                         : noise_sd_for_snr(spec, ens, c.get_double("snr_db", 30.0), seed);
  if (!(noise >= 0)) throw UsageError("noise_sd must be non-negative");
  const auto ds = acquire_kt(spec, ens, noise, seed);
  save_dataset(ds, req.out_dir / "dataset.vktd");
  log_line("phantom: " + std::to_string(spec.slices) + " slices x " + std::to_string(spec.frames) + " frames, " +
           std::to_string(h) + "x" + std::to_string(w) + ", noise sd " + std::to_string(noise));
  return {{{"noise_sd", noise}, {"slices", spec.slices}, {"frames", spec.frames}}, {"dataset.vktd"}};
}

RunResult cmd_train(const RunRequest& req) {
  const auto& c = req.config;
  const auto ds = load_dataset(c.require_string("dataset"));
  auto t = train_fresh(ds, c, req.out_dir);
  const auto cfg = train_config_from(c);
  save_checkpoint(req.out_dir / "model.ckpt", t.net, &t.bank);
  write_report_csv(t.report, req.out_dir / "report.csv");
  write_trajectory_csv(t.bank, req.out_dir / "latents.csv");
  write_kl_csv(t.bank, cfg.loss.deterministic_latents(), req.out_dir / "kl.csv");
  RunResult r{{}, {"model.ckpt", "report.csv", "latents.csv", "kl.csv"}};
  for (const auto& p : t.report.checkpoints) r.outputs.push_back(fs::relative(p, req.out_dir));
  if (!t.report.history.empty()) r.summary["final_total"] = t.report.history.back().total;
  if (ds.has_truth() && ds.kind == "phantom")
    for (int z = 0; z < ds.slices(); ++z) {
      const auto s = score_series(t.net, t.bank, ds, z);
      r.summary["mean_ser_z" + std::to_string(z)] = s.mean_ser;
      log_line("slice " + std::to_string(z) + ": mean SER " + fixed(s.mean_ser, 2) + " dB (zero-filled " +
               fixed(s.mean_zero_filled_ser, 2) + " dB)");
    }
  return r;
}

RunResult cmd_reconstruct(const RunRequest& req) {
  const auto& c = req.config;
  auto ck = load_checkpoint(c.require_string("checkpoint"));
  if (!ck.bank) throw UsageError("checkpoint has no latent bank to reconstruct from");
  const auto& bank = *ck.bank;
  const long long z = c.get_int("source_slice", 0);
  if (z < 0 || z >= bank.slices())
    throw UsageError("source slice " + std::to_string(z) + " out of range (checkpoint has " +
                     std::to_string(bank.slices()) + " slices)");
  const int zs = static_cast<int>(z);
  const auto series = c.get_bool("sample", false) ? reconstruct_series_sampled(ck.net, bank, zs, seed_of(c))
                                                  : reconstruct_series(ck.net, bank, zs);
  RunResult r;
  if (c.get_bool("images", true)) {
    fs::create_directories(req.out_dir / "frames");
    std::vector<ImageGrid> all;
    for (const auto& v : series)
      for (int s = 0; s < v.slices; ++s) all.push_back(v.slice(s));
    const double hi = max_magnitude(all);
    for (int t = 0; t < static_cast<int>(series.size()); ++t)
      for (int s = 0; s < series[t].slices; ++s) {
        const auto rel = fs::path("frames") / frame_name(t, s);
        write_png(series[t].slice(s), req.out_dir / rel, 0.0, hi);
        r.outputs.push_back(rel);
      }
  }

  std::vector<MetricRow> rows;
  const auto kl = kl_summary(bank);
  for (int s = 0; s < bank.slices(); ++s) rows.push_back({-1, s, "kl_mean", kl[s]});
  if (c.has("dataset")) {
    const auto ds = load_dataset(c.require_string("dataset"));
    if (ds.slices() != bank.slices() || ds.frames_per_slice != bank.frames())
      throw UsageError("dataset and checkpoint disagree on slices or frames");
    if (ds.has_truth()) {
      std::vector<double> ser_v, psnr_v, ssim_v, zf_v;
      for (int t = 0; t < bank.frames(); ++t) {
        const auto& truth = ds.truth[ds.index(zs, t)];
        const auto m = frame_metrics(truth, series[t].slice(zs));
        const double zf = ser(truth.values, zero_filled(ds.frame(zs, t)).values);
        rows.push_back({t, zs, "ser", m.ser});
        rows.push_back({t, zs, "psnr", m.psnr});
        rows.push_back({t, zs, "ssim", m.ssim});
        rows.push_back({t, zs, "zero_filled_ser", zf});
        ser_v.push_back(m.ser), psnr_v.push_back(m.psnr), ssim_v.push_back(m.ssim), zf_v.push_back(zf);
      }
      r.summary = {{"mean_ser", mean_of(ser_v)}, {"mean_psnr", mean_of(psnr_v)}, {"mean_ssim", mean_of(ssim_v)},
                   {"mean_zero_filled_ser", mean_of(zf_v)}};
      for (const auto& [k, v] : r.summary) rows.push_back({-1, zs, k, v});
    }
    if (ds.phantom) {
      const double a =
          alignment_score(series, *ds.phantom, zs, static_cast<int>(c.get_int("alignment_cells", 16)));
      rows.push_back({-1, zs, "alignment", a});
      r.summary["alignment"] = a;
    }
  }
  write_metric_csv(rows, req.out_dir / "metrics.csv");
  r.outputs.push_back("metrics.csv");
  for (const auto& [k, v] : r.summary) log_line(k + " " + fixed(v, 4));
  return r;
}

RunResult cmd_mnist(const RunRequest& req) {
  const auto& c = req.config;
  const fs::path data_dir = VSTORM_DATA_DIR;
  const fs::path images = c.get_string("mnist_images", (data_dir / "mnist/mnist5k-images-idx3-ubyte.gz").string());
  const fs::path labels = c.get_string("mnist_labels", (data_dir / "mnist/mnist5k-labels-idx1-ubyte.gz").string());
  const auto count = c.get_int("count", 500);
  if (count < 1) throw UsageError("count must be positive");
  const auto set = load_mnist_idx(images, labels, static_cast<int>(c.get_int("digit", 1)),
                                  static_cast<std::size_t>(count));
  if (set.images.empty()) throw UsageError("no images of the requested digit");
  const double keep = c.get_double("keep", 0.3);
  const auto ds = corrupt_images(set.images, keep, c.get_double("noise_sd", 0.05), seed_of(c));
  log_line("digits: " + std::to_string(set.images.size()) + " images, keep fraction " + fixed(keep, 2));

  auto t = train_fresh(ds, c, req.out_dir);
  save_checkpoint(req.out_dir / "model.ckpt", t.net, &t.bank);
  write_report_csv(t.report, req.out_dir / "report.csv");
  write_trajectory_csv(t.bank, req.out_dir / "latents.csv");
  RunResult r{{}, {"model.ckpt", "report.csv", "latents.csv"}};

  const auto scores = score_digits(t.net, t.bank, ds);
  std::vector<MetricRow> rows;
  for (std::size_t i = 0; i < scores.psnr.size(); ++i) {
    const int f = static_cast<int>(i);
    rows.push_back({f, 0, "psnr", scores.psnr[i]});
    rows.push_back({f, 0, "ssim", scores.ssim[i]});
    rows.push_back({f, 0, "zero_filled_psnr", scores.zero_filled_psnr[i]});
    rows.push_back({f, 0, "zero_filled_ssim", scores.zero_filled_ssim[i]});
  }
  r.summary = {{"mean_psnr", scores.mean_psnr},
               {"mean_ssim", scores.mean_ssim},
               {"mean_zero_filled_psnr", scores.mean_zero_filled_psnr},
               {"mean_zero_filled_ssim", scores.mean_zero_filled_ssim}};
  for (const auto& [k, v] : r.summary) rows.push_back({-1, 0, k, v});
  write_metric_csv(rows, req.out_dir / "metrics.csv");
  r.outputs.push_back("metrics.csv");

  const int show = static_cast<int>(std::min<long long>(c.get_int("show", 16), ds.frames_per_slice));
  const int cols = std::min(show, 8);
  std::vector<ImageGrid> orig, zf, rec;
  for (int i = 0; i < show; ++i) {
    orig.push_back(ds.truth[i]);
    zf.push_back(zero_filled(ds.frames[i]));
    rec.push_back(forward(t.net, t.bank.mean(i)).slice(0));
  }
  write_png(montage(orig, cols), req.out_dir / "originals.png", -1.0, 1.0);
  write_png(montage(rec, cols), req.out_dir / "reconstructions.png", -1.0, 1.0);
  r.outputs.insert(r.outputs.end(), {"originals.png", "reconstructions.png"});
  if (keep < 1.0) {
    write_png(montage(zf, cols), req.out_dir / "zero_filled.png", -1.0, 1.0);
    r.outputs.push_back("zero_filled.png");
  }
  const int g = static_cast<int>(c.get_int("grid", 10));
  if (g < 1) throw UsageError("grid must be at least 1");
  write_png(montage(manifold_tiles(t.net, g), g), req.out_dir / "manifold.png", -1.0, 1.0);
  r.outputs.push_back("manifold.png");
  for (const auto& [k, v] : r.summary) log_line(k + " " + fixed(v, 4));
  return r;
}

DigitScores score_digits(const GeneratorNetwork& net, const VariationalLatentBank& bank, const KTDataset& ds) {
  if (!ds.has_truth()) throw UsageError("digit scores need the clean images");
  DigitScores s;
  for (int t = 0; t < ds.frames_per_slice; ++t) {
    const auto& truth = ds.truth[t];
    const auto rec = forward(net, bank.mean(t)).slice(0);
    const auto zf = zero_filled(ds.frames[t]);
    s.psnr.push_back(psnr(truth.values, rec.values));
    s.ssim.push_back(ssim(truth, rec));
    s.zero_filled_psnr.push_back(psnr(truth.values, zf.values));
    s.zero_filled_ssim.push_back(ssim(truth, zf));
  }
  s.mean_psnr = mean_of(s.psnr);
  s.mean_ssim = mean_of(s.ssim);
  s.mean_zero_filled_psnr = mean_of(s.zero_filled_psnr);
  s.mean_zero_filled_ssim = mean_of(s.zero_filled_ssim);
  return s;
}

SeriesScores score_series(const GeneratorNetwork& net, const VariationalLatentBank& bank, const KTDataset& ds,
                          int z) {
  if (!ds.has_truth()) throw UsageError("series scores need ground truth");
  SeriesScores s;
  for (int t = 0; t < ds.frames_per_slice; ++t) {
    const auto& truth = ds.truth[ds.index(z, t)];
    const auto vol = forward(net, bank.mean(bank.index(z, t)));
    s.ser.push_back(ser(truth.values, vol.slice_values(z)));
    s.zero_filled_ser.push_back(ser(truth.values, zero_filled(ds.frame(z, t)).values));
  }
  s.mean_ser = mean_of(s.ser);
  s.mean_zero_filled_ser = mean_of(s.zero_filled_ser);
  return s;
}

RunResult run_command(const RunRequest& input) {
  RunRequest req = input;
  req.config.reject_unknown(command_keys(req.command));
  for (const auto& k : path_keys)
    if (req.config.has(k)) req.config.set(k, fs::absolute(req.config.get_string(k, "")).lexically_normal().string());
  fs::create_directories(req.out_dir);
  RunResult r;
  if (req.command == "make-phantom")
    r = cmd_make_phantom(req);
  else if (req.command == "train")
    r = cmd_train(req);
  else if (req.command == "reconstruct")
    r = cmd_reconstruct(req);
  else
    r = cmd_mnist(req);
  write_manifest(req, r, req.out_dir / "manifest.txt");
  return r;
}

void write_manifest(const RunRequest& req, const RunResult& result, const fs::path& path) {
  KeyValueConfig m;
  m.set("command", req.command);
  m.set("config_path", req.config_path.empty() ? "-" : fs::absolute(req.config_path).lexically_normal().string());
  m.set("tool_version", tool_version);
  m.set("out", fs::absolute(req.out_dir).lexically_normal().string());
  m.set("seed", std::to_string(seed_of(req.config)));
  std::string outputs;
  for (const auto& o : result.outputs) outputs += (outputs.empty() ? "" : ",") + o.generic_string();
  m.set("outputs", outputs.empty() ? "-" : outputs);
  const bool writes_model = req.command == "train" || req.command == "mnist";
  m.set("checkpoint", writes_model ? (fs::absolute(req.out_dir) / "model.ckpt").lexically_normal().string()
                                   : req.config.get_string("checkpoint", "-"));
  if (req.config.has("dataset")) m.set("input", req.config.get_string("dataset", ""));
  for (const auto& [k, v] : req.config.values()) m.set("config." + k, v);
  std::ofstream f(path);
  if (!f) throw Error("cannot write " + path.string());
  f << "# run manifest; repeat with: vstorm rerun --manifest " << path.filename().string() << "\n" << m.to_text();
}

RunRequest request_from_manifest(const fs::path& manifest, const fs::path& out_dir) {
  const auto m = KeyValueConfig::load(manifest);
  RunRequest req;
  req.command = m.require_string("command");
  command_keys(req.command);
  const auto cp = m.get_string("config_path", "-");
  if (cp != "-") req.config_path = cp;
  for (const auto& [k, v] : m.values())
    if (k.rfind("config.", 0) == 0) req.config.set(k.substr(7), v);
  req.config.set("threads", "1");
  req.out_dir = out_dir.empty() ? fs::path(m.require_string("out")) : out_dir;
  return req;
}

}  // namespace vstorm
