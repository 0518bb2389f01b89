// vstorm: phantom simulation, training, reconstruction and the digit experiment.
//
// Exit codes: 0 success, 1 numeric failure (non-finite loss), 2 usage or input error.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "vstorm/cli/commands.hpp"
#include "vstorm/common/errors.hpp"

namespace fs = std::filesystem;
using namespace vstorm;

namespace {

struct CommonFlags {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::vector<std::string> sets;
};

struct TrainFlags {
  std::optional<int> epochs;
  std::optional<std::string> mode;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config, "key = value configuration file");
  cmd->add_option("--out", f.out, "output directory")->required();
  cmd->add_option("--seed", f.seed, "random seed");
  cmd->add_option("--threads", f.threads, "worker threads (1 is bitwise reproducible)");
  cmd->add_option("--set", f.sets, "extra key=value override, repeatable");
}

void add_train(CLI::App* cmd, TrainFlags& f) {
  cmd->add_option("--epochs", f.epochs, "training epochs");
  cmd->add_option("--mode", f.mode, "variational or gstorm-baseline")
      ->check(CLI::IsMember({"variational", "gstorm-baseline"}));
}

// One file may hold the settings of several commands (phantom and training, say):
// keep this command's keys, drop other commands' keys, reject the rest.
KeyValueConfig shared_config(const KeyValueConfig& file, const std::string& command, const std::string& path) {
  KeyValueConfig out;
  const auto& own = command_keys(command);
  for (const auto& [k, v] : file.values()) {
    if (own.count(k)) {
      out.set(k, v);
      continue;
    }
    bool known = false;
    for (const char* other : {"make-phantom", "train", "reconstruct", "mnist"}) known = known || command_keys(other).count(k);
    if (!known) throw UsageError(path + ": unknown key '" + k + "'");
  }
  return out;
}

// Config file first, flags on top.
RunRequest make_request(const std::string& command, const CommonFlags& f) {
  RunRequest req;
  req.command = command;
  if (!f.config.empty()) {
    req.config = shared_config(KeyValueConfig::load(f.config), command, f.config);
    req.config_path = f.config;
  }
  req.out_dir = f.out;
  if (f.seed) req.config.set("seed", std::to_string(*f.seed));
  if (f.threads) req.config.set("threads", std::to_string(*f.threads));
  for (const auto& kv : f.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) throw UsageError("--set expects key=value, got '" + kv + "'");
    req.config.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  return req;
}

void apply_train(RunRequest& req, const TrainFlags& f) {
  if (f.epochs) req.config.set("epochs", std::to_string(*f.epochs));
  if (f.mode) req.config.set("mode", *f.mode);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Variational manifold learning from undersampled dynamic data"};
  app.require_subcommand(1);

  CommonFlags phantom_flags, train_flags, recon_flags, mnist_flags;
  TrainFlags train_extra, mnist_extra;

  auto* phantom = app.add_subcommand("make-phantom", "simulate a multi-coil k-t dataset of the cardiac phantom");
  add_common(phantom, phantom_flags);
  std::optional<double> noise_sd;
  std::optional<int> slices, frames;
  phantom->add_option("--noise-sd", noise_sd, "measurement noise sd (overrides snr_db; 0 for noiseless)");
  phantom->add_option("--slices", slices, "number of slices");
  phantom->add_option("--frames", frames, "frames per slice");

  auto* train = app.add_subcommand("train", "train generator and latent distributions on a dataset");
  add_common(train, train_flags);
  add_train(train, train_extra);
  std::optional<std::string> dataset;
  train->add_option("--dataset", dataset, "dataset file from make-phantom");

  auto* recon = app.add_subcommand("reconstruct", "generate a series from one slice's latents");
  add_common(recon, recon_flags);
  std::optional<std::string> checkpoint, recon_dataset;
  std::optional<int> source_slice;
  recon->add_option("--checkpoint", checkpoint, "checkpoint from train");
  recon->add_option("--dataset", recon_dataset, "dataset with ground truth for metrics");
  recon->add_option("--source-slice", source_slice, "slice whose latents drive the generator");

  auto* mnist = app.add_subcommand("mnist", "learn a digit manifold from complete or 70%-missing pixels");
  add_common(mnist, mnist_flags);
  add_train(mnist, mnist_extra);
  std::optional<int> grid;
  bool fully_sampled = false;
  mnist->add_option("--grid", grid, "latent grid resolution of the manifold montage");
  mnist->add_flag("--fully-sampled", fully_sampled, "train on complete noiseless images");

  auto* rerun = app.add_subcommand("rerun", "repeat a run from its manifest with one thread");
  std::string manifest, rerun_out;
  rerun->add_option("--manifest", manifest, "manifest.txt of an earlier run")->required()->check(CLI::ExistingFile);
  rerun->add_option("--out", rerun_out, "output directory (default: the original one)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    RunRequest req;
    if (*phantom) {
      req = make_request("make-phantom", phantom_flags);
      if (noise_sd) req.config.set("noise_sd", std::to_string(*noise_sd));
      if (slices) req.config.set("slices", std::to_string(*slices));
      if (frames) req.config.set("frames", std::to_string(*frames));
    } else if (*train) {
      req = make_request("train", train_flags);
      apply_train(req, train_extra);
      if (dataset) req.config.set("dataset", *dataset);
    } else if (*recon) {
      req = make_request("reconstruct", recon_flags);
      if (checkpoint) req.config.set("checkpoint", *checkpoint);
      if (recon_dataset) req.config.set("dataset", *recon_dataset);
      if (source_slice) req.config.set("source_slice", std::to_string(*source_slice));
    } else if (*mnist) {
      req = make_request("mnist", mnist_flags);
      apply_train(req, mnist_extra);
      if (grid) req.config.set("grid", std::to_string(*grid));
      if (fully_sampled) {
        req.config.set("keep", "1");
        req.config.set("noise_sd", "0");
      }
    } else {
      req = request_from_manifest(manifest, rerun_out);
    }
    run_command(req);
    std::cout << "wrote " << (req.out_dir / "manifest.txt").string() << "\n";
    return 0;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 1;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
