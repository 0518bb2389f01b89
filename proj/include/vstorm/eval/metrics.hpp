#pragma once

// Image quality metrics, latent-swap reconstruction and alignment scoring.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "vstorm/data/phantom.hpp"
#include "vstorm/generator/network.hpp"
#include "vstorm/latent/bank.hpp"
#include "vstorm/measurement/grid.hpp"

namespace vstorm {

inline constexpr double metric_cap_db = 300.0;

/// 20 log10(|ref| / |ref - recon|) over the stacked real values, capped at +300 dB.
double ser(std::span<const double> ref, std::span<const double> recon);
/// 10 log10(peak^2 / MSE), capped at +300 dB.
double psnr(std::span<const double> ref, std::span<const double> recon, double peak = 2.0);

struct SsimOptions {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 2.0;
};

/// Mean SSIM over all fully-contained Gaussian windows of a single-channel image.
double ssim(const ImageGrid& ref, const ImageGrid& recon, const SsimOptions& opt = {});

/// PSNR/SSIM on magnitudes (complex images) or values (real); SER on stacked channels.
struct FrameMetrics {
  double psnr = 0.0;
  double ssim = 0.0;
  double ser = 0.0;
};
FrameMetrics frame_metrics(const ImageGrid& ref, const ImageGrid& recon, double peak = 2.0);

/// Generated volume for every frame of slice z, fed the posterior means mu(t, z).
std::vector<VolumeGrid> reconstruct_series(const GeneratorNetwork& net, const VariationalLatentBank& bank, int z);
/// Same, fed one draw c = mu + s * eps per frame (eps from draw_eps(seed, 0, frame)).
std::vector<VolumeGrid> reconstruct_series_sampled(const GeneratorNetwork& net, const VariationalLatentBank& bank,
                                                   int z, std::uint64_t seed);

/// Phases folded onto [-pi/2, pi/2]: the phantom depends on sin(phase) only.
double fold_phase(double phase);

/// Cell index of a folded phase on a grid of `cells` cells over [-pi/2, pi/2].
int phase_cell(double phase, int cells);

/// Ground-truth volumes at the centre of every (cardiac, respiratory) cell,
/// cardiac-major: index = cardiac_cell * cells + respiratory_cell.
std::vector<VolumeGrid> phase_grid_volumes(const PhantomSpec& spec, int cells);

/// Index of the grid volume with the highest SER against `volume`.
int best_phase_cell(const VolumeGrid& volume, const std::vector<VolumeGrid>& grid);

/// Fraction of frames whose best-matching grid cell lies within one cell (on
/// both axes) of slice z's true phase pair at that frame.
double alignment_score(const std::vector<VolumeGrid>& series, const PhantomSpec& spec, int z, int cells = 16);

/// Per slice: mean over frames of KL(q(t, z) || N(0, I)).
std::vector<double> kl_summary(const VariationalLatentBank& bank);

/// Per slice: KL(N(m, C) || N(0, I)) with m, C the sample mean and covariance of
/// the slice's latent means (for deterministic latents).
std::vector<double> moment_matched_kl(const VariationalLatentBank& bank);

struct MetricRow {
  int frame = 0;
  int slice = 0;
  std::string metric;
  double value = 0.0;
};

/// CSV with header frame,slice,metric,value.
void write_metric_csv(const std::vector<MetricRow>& rows, const std::filesystem::path& path);

}  // namespace vstorm
