#include "vstorm/eval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>

#include "vstorm/common/errors.hpp"

namespace vstorm {

namespace {

void require_same_size(std::span<const double> a, std::span<const double> b, const char* what) {
  if (a.size() != b.size())
    throw ShapeError(std::string(what) + ": sizes differ (" + std::to_string(a.size()) + " vs " +
                     std::to_string(b.size()) + ")");
}

double capped_db(double ratio_db) { return std::min(ratio_db, metric_cap_db); }

}  // namespace

double ser(std::span<const double> ref, std::span<const double> recon) {
  require_same_size(ref, recon, "ser");
  double num = 0, den = 0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    num += ref[i] * ref[i];
    den += (ref[i] - recon[i]) * (ref[i] - recon[i]);
  }
  if (num == 0) throw NumericError("ser: reference is all zero");
  if (den == 0) return metric_cap_db;
  return capped_db(10.0 * std::log10(num / den));
}

double psnr(std::span<const double> ref, std::span<const double> recon, double peak) {
  require_same_size(ref, recon, "psnr");
  if (ref.empty()) throw ShapeError("psnr: empty images");
  double mse = 0;
  for (std::size_t i = 0; i < ref.size(); ++i) mse += (ref[i] - recon[i]) * (ref[i] - recon[i]);
  mse /= static_cast<double>(ref.size());
  if (mse == 0) return metric_cap_db;
  return capped_db(10.0 * std::log10(peak * peak / mse));
}

double ssim(const ImageGrid& ref, const ImageGrid& recon, const SsimOptions& opt) {
  if (ref.channels != 1 || recon.channels != 1) throw ShapeError("ssim expects single-channel images");
  if (ref.height != recon.height || ref.width != recon.width)
    throw ShapeError("ssim: shapes differ (" + ref.shape_string() + " vs " + recon.shape_string() + ")");
  const int k = opt.window;
  if (ref.height < k || ref.width < k) throw ShapeError("ssim: image smaller than the window");
  std::vector<double> w(static_cast<std::size_t>(k) * k);
  double wsum = 0;
  for (int y = 0; y < k; ++y)
    for (int x = 0; x < k; ++x) {
      const double dy = y - (k - 1) / 2.0, dx = x - (k - 1) / 2.0;
      w[y * k + x] = std::exp(-(dx * dx + dy * dy) / (2 * opt.sigma * opt.sigma));
      wsum += w[y * k + x];
    }
  for (auto& v : w) v /= wsum;
  const double c1 = std::pow(opt.k1 * opt.dynamic_range, 2), c2 = std::pow(opt.k2 * opt.dynamic_range, 2);
  double total = 0;
  int count = 0;
  for (int y0 = 0; y0 + k <= ref.height; ++y0)
    for (int x0 = 0; x0 + k <= ref.width; ++x0) {
      double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
      for (int y = 0; y < k; ++y)
        for (int x = 0; x < k; ++x) {
          const double wt = w[y * k + x];
          const double a = ref.at(0, y0 + y, x0 + x), b = recon.at(0, y0 + y, x0 + x);
          mx += wt * a;
          my += wt * b;
          sxx += wt * a * a;
          syy += wt * b * b;
          sxy += wt * a * b;
        }
      sxx -= mx * mx;
      syy -= my * my;
      sxy -= mx * my;
      total += ((2 * mx * my + c1) * (2 * sxy + c2)) / ((mx * mx + my * my + c1) * (sxx + syy + c2));
      ++count;
    }
  return total / count;
}

FrameMetrics frame_metrics(const ImageGrid& ref, const ImageGrid& recon, double peak) {
  if (ref.channels != recon.channels || ref.height != recon.height || ref.width != recon.width)
    throw ShapeError("frame metrics: shapes differ (" + ref.shape_string() + " vs " + recon.shape_string() + ")");
  const auto a = magnitude(ref), b = magnitude(recon);
  return {psnr(a.values, b.values, peak), ssim(a, b), ser(ref.values, recon.values)};
}

namespace {

void check_source(const GeneratorNetwork& net, const VariationalLatentBank& bank, int z) {
  if (z < 0 || z >= bank.slices())
    throw ShapeError("source slice " + std::to_string(z) + " outside 0.." + std::to_string(bank.slices() - 1));
  if (bank.latent_dim() != net.latent_dim()) throw ShapeError("latent bank and generator latent sizes differ");
}

}  // namespace

std::vector<VolumeGrid> reconstruct_series_sampled(const GeneratorNetwork& net, const VariationalLatentBank& bank,
                                                   int z, std::uint64_t seed) {
  check_source(net, bank, z);
  std::vector<VolumeGrid> out;
  out.reserve(bank.frames());
  for (int t = 0; t < bank.frames(); ++t) {
    const int f = bank.index(z, t);
    const auto eps = draw_eps(seed, 0, f, bank.latent_dim());
    out.push_back(forward(net, sample(bank, f, eps).c));
  }
  return out;
}

std::vector<VolumeGrid> reconstruct_series(const GeneratorNetwork& net, const VariationalLatentBank& bank, int z) {
  check_source(net, bank, z);
  std::vector<VolumeGrid> out;
  out.reserve(bank.frames());
  for (int t = 0; t < bank.frames(); ++t) out.push_back(forward(net, bank.mean(bank.index(z, t))));
  return out;
}

double fold_phase(double phase) { return std::asin(std::clamp(std::sin(phase), -1.0, 1.0)); }

int phase_cell(double phase, int cells) {
  const double u = fold_phase(phase) + std::numbers::pi / 2;
  return std::clamp(static_cast<int>(std::floor(u / (std::numbers::pi / cells))), 0, cells - 1);
}

std::vector<VolumeGrid> phase_grid_volumes(const PhantomSpec& spec, int cells) {
  if (cells < 1) throw UsageError("phase grid needs at least one cell");
  std::vector<VolumeGrid> grid;
  grid.reserve(static_cast<std::size_t>(cells) * cells);
  auto centre = [&](int k) { return -std::numbers::pi / 2 + (k + 0.5) * std::numbers::pi / cells; };
  for (int c = 0; c < cells; ++c)
    for (int r = 0; r < cells; ++r) grid.push_back(phantom_volume(spec, {centre(c), centre(r)}));
  return grid;
}

int best_phase_cell(const VolumeGrid& volume, const std::vector<VolumeGrid>& grid) {
  int best = -1;
  double best_err = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (grid[i].values.size() != volume.values.size()) throw ShapeError("series and phantom volumes differ in shape");
    // Highest SER against a candidate reference = smallest relative error norm.
    double err = 0, ref = 0;
    for (std::size_t k = 0; k < volume.values.size(); ++k) {
      const double d = grid[i].values[k] - volume.values[k];
      err += d * d;
      ref += grid[i].values[k] * grid[i].values[k];
    }
    const double rel = err / ref;
    if (rel < best_err) {
      best_err = rel;
      best = static_cast<int>(i);
    }
  }
  return best;
}

double alignment_score(const std::vector<VolumeGrid>& series, const PhantomSpec& spec, int z, int cells) {
  if (static_cast<int>(series.size()) != spec.frames)
    throw ShapeError("series has " + std::to_string(series.size()) + " frames, phantom has " +
                     std::to_string(spec.frames));
  const auto grid = phase_grid_volumes(spec, cells);
  int hits = 0;
  for (int t = 0; t < spec.frames; ++t) {
    const auto truth = slice_phases(spec, z, t);
    const int best = best_phase_cell(series[t], grid);
    const int dc = std::abs(best / cells - phase_cell(truth.cardiac, cells));
    const int dr = std::abs(best % cells - phase_cell(truth.respiratory, cells));
    if (dc <= 1 && dr <= 1) ++hits;
  }
  return static_cast<double>(hits) / spec.frames;
}

std::vector<double> kl_summary(const VariationalLatentBank& bank) {
  std::vector<double> out(bank.slices(), 0.0);
  for (int z = 0; z < bank.slices(); ++z) {
    for (int t = 0; t < bank.frames(); ++t) {
      const int f = bank.index(z, t);
      out[z] += kl_unit_gaussian(bank.mean(f), bank.deviation(f));
    }
    out[z] /= bank.frames();
  }
  return out;
}

std::vector<double> moment_matched_kl(const VariationalLatentBank& bank) {
  const int n = bank.latent_dim();
  const int T = bank.frames();
  if (T < 2) throw NumericError("moment matching needs at least two frames per slice");
  std::vector<double> out;
  for (int z = 0; z < bank.slices(); ++z) {
    std::vector<double> m(n, 0.0), c(static_cast<std::size_t>(n) * n, 0.0);
    for (int t = 0; t < T; ++t) {
      const auto mu = bank.mean(bank.index(z, t));
      for (int i = 0; i < n; ++i) m[i] += mu[i] / T;
    }
    for (int t = 0; t < T; ++t) {
      const auto mu = bank.mean(bank.index(z, t));
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) c[i * n + j] += (mu[i] - m[i]) * (mu[j] - m[j]) / (T - 1);
    }
    // log det C by Cholesky.
    double logdet = 0, trace = 0, mm = 0;
    std::vector<double> l(c);
    for (int j = 0; j < n; ++j) {
      double d = l[j * n + j];
      for (int k = 0; k < j; ++k) d -= l[j * n + k] * l[j * n + k];
      if (!(d > 0)) throw NumericError("latent means of slice " + std::to_string(z) + " have a singular covariance");
      const double ljj = std::sqrt(d);
      l[j * n + j] = ljj;
      logdet += 2 * std::log(ljj);
      for (int i = j + 1; i < n; ++i) {
        double s = l[i * n + j];
        for (int k = 0; k < j; ++k) s -= l[i * n + k] * l[j * n + k];
        l[i * n + j] = s / ljj;
      }
    }
    for (int i = 0; i < n; ++i) {
      trace += c[i * n + i];
      mm += m[i] * m[i];
    }
    out.push_back(0.5 * (trace + mm - n - logdet));
  }
  return out;
}

void write_metric_csv(const std::vector<MetricRow>& rows, const std::filesystem::path& path) {
  std::ofstream f(path);
  if (!f) throw Error("cannot write " + path.string());
  f.precision(17);
  f << "frame,slice,metric,value\n";
  for (const auto& r : rows) f << r.frame << ',' << r.slice << ',' << r.metric << ',' << r.value << '\n';
}

}  // namespace vstorm
