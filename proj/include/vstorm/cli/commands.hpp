#pragma once

// Subcommands behind the command-line tool. Each command reads a resolved
// key-value configuration, writes its outputs into one directory and leaves a
// manifest there from which the run can be repeated.

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "vstorm/data/dataset.hpp"
#include "vstorm/generator/network.hpp"
#include "vstorm/latent/bank.hpp"
#include "vstorm/trainer/config.hpp"
#include "vstorm/trainer/trainer.hpp"

namespace vstorm {

inline constexpr const char* tool_version = "vstorm 1.0.0";

struct RunRequest {
  std::string command;  // make-phantom, train, reconstruct, mnist
  KeyValueConfig config;
  std::filesystem::path config_path;  // empty when no file was given
  std::filesystem::path out_dir;
};

struct RunResult {
  std::map<std::string, double> summary;
  std::vector<std::filesystem::path> outputs;  // relative to the output directory
};

/// Keys a command accepts (the union of its own keys and, for training
/// commands, the trainer keys).
const std::set<std::string>& command_keys(const std::string& command);

/// Runs the command and writes `manifest.txt` into req.out_dir.
RunResult run_command(const RunRequest& req);

RunResult cmd_make_phantom(const RunRequest& req);
RunResult cmd_train(const RunRequest& req);
RunResult cmd_reconstruct(const RunRequest& req);
RunResult cmd_mnist(const RunRequest& req);

/// Manifest text: command, config path, tool version, output list and the
/// resolved configuration under "config." keys.
void write_manifest(const RunRequest& req, const RunResult& result, const std::filesystem::path& path);
/// Request reproducing a manifest's run, writing into `out_dir` (the
/// manifest's own directory when empty) with threads forced to 1.
RunRequest request_from_manifest(const std::filesystem::path& manifest, const std::filesystem::path& out_dir = {});

/// Small uniform starting means in [-scale, scale], keyed by seed.
void randomize_means(VariationalLatentBank& bank, std::uint64_t seed, double scale);

/// Default latent size: two for single-slice data, three for multislice.
int default_latent_dim(int slices);

struct DigitScores {
  std::vector<double> psnr;
  std::vector<double> ssim;
  std::vector<double> zero_filled_psnr;
  std::vector<double> zero_filled_ssim;
  double mean_psnr = 0, mean_ssim = 0, mean_zero_filled_psnr = 0, mean_zero_filled_ssim = 0;
};

/// Reconstructions D(mu_t) and zero-filled images of a digits dataset scored
/// against its clean images.
DigitScores score_digits(const GeneratorNetwork& net, const VariationalLatentBank& bank, const KTDataset& ds);

struct SeriesScores {
  std::vector<double> ser;             // per frame, slice z of the generated volume vs frame (z, t) truth
  std::vector<double> zero_filled_ser;  // per frame, adjoint baseline
  double mean_ser = 0, mean_zero_filled_ser = 0;
};

/// Per-frame SER of slice z reconstructions fed slice z's own means.
SeriesScores score_series(const GeneratorNetwork& net, const VariationalLatentBank& bank, const KTDataset& ds, int z);

}  // namespace vstorm
