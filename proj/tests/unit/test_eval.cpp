#include <doctest.h>
#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "support/test_support.hpp"
#include "vstorm/common/errors.hpp"
#include "vstorm/eval/images.hpp"
#include "vstorm/eval/metrics.hpp"

using namespace vstorm;
using vstorm::testing::random_vector;

namespace {

GeneratorSpec small_spec(int slices, int latent) {
  GeneratorSpec s;
  s.latent_dim = latent;
  s.slices = slices;
  s.channels_per_slice = 2;
  s.height = 8;
  s.width = 8;
  s.init_scale = 1.0;
  s.layers = {{LayerKind::dense, latent, 3, 1, 1, Activation::leaky_relu, 0.1, 2, 2},
              {LayerKind::transposed_convolution, 3, 3, 4, 2, Activation::leaky_relu, 0.1, 0, 0},
              {LayerKind::transposed_convolution, 3, 2 * slices, 4, 2, Activation::tanh, 0.1, 0, 0}};
  return s;
}

ImageGrid random_image(int h, int w, int c, std::uint64_t seed) {
  ImageGrid g(h, w, c);
  g.values = random_vector(g.values.size(), seed);
  return g;
}

std::vector<VolumeGrid> truth_series(const PhantomSpec& spec, int z) {
  std::vector<VolumeGrid> out;
  for (int t = 0; t < spec.frames; ++t) out.push_back(phantom_volume(spec, slice_phases(spec, z, t)));
  return out;
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("vstorm_eval_" + name);
}

}  // namespace

TEST_CASE("ser examples") {
  const auto ref = random_vector(50, 1);
  CHECK(ser(ref, ref) == metric_cap_db);
  const std::vector<double> zero(ref.size(), 0.0);
  CHECK(ser(ref, zero) == doctest::Approx(0.0).epsilon(1e-12));
  std::vector<double> half(ref);
  for (auto& v : half) v /= 2;
  CHECK(ser(ref, half) == doctest::Approx(6.0206).epsilon(1e-4));
  CHECK_THROWS_AS(ser(zero, ref), NumericError);
  CHECK_THROWS_AS(ser(ref, std::vector<double>(3)), ShapeError);
}

TEST_CASE("ser of a scaled reference follows -20 log10 |1 - alpha|") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (int trial = 0; trial < 200; ++trial) {
    const auto ref = random_vector(37, 100 + trial);
    const double alpha = u(rng);
    if (std::abs(1 - alpha) < 1e-6) continue;
    std::vector<double> rec(ref);
    for (auto& v : rec) v *= alpha;
    CHECK(ser(ref, rec) == doctest::Approx(-20 * std::log10(std::abs(1 - alpha))).epsilon(1e-10));
  }
}

TEST_CASE("psnr examples") {
  const std::vector<double> ref(64, 0.0), rec(64, 0.5);
  CHECK(psnr(ref, rec, 2.0) == doctest::Approx(10 * std::log10(16.0)).epsilon(1e-12));
  CHECK(psnr(ref, rec) == doctest::Approx(12.0412).epsilon(1e-4));
  CHECK(psnr(rec, rec) == metric_cap_db);
}

TEST_CASE("ssim identity, symmetry and range") {
  const auto a = random_image(24, 20, 1, 3);
  CHECK(ssim(a, a) == doctest::Approx(1.0).epsilon(1e-14));
  for (int trial = 0; trial < 20; ++trial) {
    const auto x = random_image(16, 16, 1, 10 + trial);
    const auto y = random_image(16, 16, 1, 50 + trial);
    const double s = ssim(x, y);
    CHECK(std::abs(s - ssim(y, x)) <= 1e-12);
    CHECK(s >= -1.0);
    CHECK(s <= 1.0);
  }
  CHECK_THROWS_AS(ssim(random_image(8, 8, 1, 1), random_image(8, 8, 1, 2)), ShapeError);
  CHECK_THROWS_AS(ssim(a, random_image(24, 21, 1, 2)), ShapeError);
}

TEST_CASE("ssim matches a direct single-window evaluation") {
  // An 11x11 image has exactly one window; compute it independently.
  const auto x = random_image(11, 11, 1, 21), y = random_image(11, 11, 1, 22);
  std::vector<double> w(121);
  for (int i = 0; i < 11; ++i)
    for (int j = 0; j < 11; ++j) w[i * 11 + j] = std::exp(-((i - 5.0) * (i - 5.0) + (j - 5.0) * (j - 5.0)) / 4.5);
  const double ws = std::accumulate(w.begin(), w.end(), 0.0);
  double mx = 0, my = 0;
  for (int k = 0; k < 121; ++k) {
    mx += w[k] / ws * x.values[k];
    my += w[k] / ws * y.values[k];
  }
  double vx = 0, vy = 0, cxy = 0;
  for (int k = 0; k < 121; ++k) {
    vx += w[k] / ws * (x.values[k] - mx) * (x.values[k] - mx);
    vy += w[k] / ws * (y.values[k] - my) * (y.values[k] - my);
    cxy += w[k] / ws * (x.values[k] - mx) * (y.values[k] - my);
  }
  const double c1 = 0.02 * 0.02, c2 = 0.06 * 0.06;
  const double expect = (2 * mx * my + c1) * (2 * cxy + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2));
  CHECK(ssim(x, y) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("frame metrics are permutation-equivariant over frames") {
  std::vector<ImageGrid> ref, rec;
  for (int t = 0; t < 6; ++t) {
    ref.push_back(random_image(12, 12, 2, 200 + t));
    rec.push_back(ref.back());
    for (auto& v : rec.back().values) v += 0.1 * (t + 1) * std::sin(v * 13.0);
  }
  std::vector<FrameMetrics> base;
  for (int t = 0; t < 6; ++t) base.push_back(frame_metrics(ref[t], rec[t]));
  const std::vector<int> perm{3, 0, 5, 1, 4, 2};
  for (int i = 0; i < 6; ++i) {
    const auto m = frame_metrics(ref[perm[i]], rec[perm[i]]);
    CHECK(m.psnr == base[perm[i]].psnr);
    CHECK(m.ssim == base[perm[i]].ssim);
    CHECK(m.ser == base[perm[i]].ser);
  }
  CHECK(base[0].ser > base[5].ser);
}

TEST_CASE("frame metrics compare magnitudes for PSNR and SSIM, channels for SER") {
  auto ref = random_image(12, 12, 2, 31);
  // Rotating every pixel's phase keeps magnitudes and changes the complex values.
  ImageGrid rot(ref);
  for (std::size_t p = 0; p < ref.plane_size(); ++p) {
    rot.values[p] = -ref.values[ref.plane_size() + p];
    rot.values[ref.plane_size() + p] = ref.values[p];
  }
  const auto m = frame_metrics(ref, rot);
  CHECK(m.psnr == metric_cap_db);
  CHECK(m.ssim == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(m.ser == doctest::Approx(-10 * std::log10(2.0)).epsilon(1e-12));
}

TEST_CASE("reconstruct_series of a zero network is all zeros") {
  GeneratorNetwork net(small_spec(2, 3), 5);
  std::fill(net.params().begin(), net.params().end(), 0.0);
  VariationalLatentBank bank(2, 4, 3);
  const auto mu = random_vector(bank.means().size(), 9);
  std::copy(mu.begin(), mu.end(), bank.means().begin());
  const auto series = reconstruct_series(net, bank, 1);
  REQUIRE(series.size() == 4);
  for (const auto& v : series)
    for (double x : v.values) CHECK(x == 0.0);
}

TEST_CASE("reconstruct_series shape and single-slice reduction") {
  for (int slices : {1, 3}) {
    GeneratorNetwork net(small_spec(slices, 2), 11);
    VariationalLatentBank bank(slices, 5, 2);
    const auto mu = random_vector(bank.means().size(), 12);
    std::copy(mu.begin(), mu.end(), bank.means().begin());
    for (int z = 0; z < slices; ++z) {
      const auto series = reconstruct_series(net, bank, z);
      REQUIRE(series.size() == 5);
      for (int t = 0; t < 5; ++t) {
        CHECK(series[t].slices == slices);
        CHECK(series[t].height == 8);
        CHECK(series[t].width == 8);
        CHECK(series[t].channels == 2);
        const auto direct = forward(net, bank.mean(bank.index(z, t)));
        CHECK(series[t].values == direct.values);
      }
    }
    CHECK_THROWS_AS(reconstruct_series(net, bank, slices), ShapeError);
    CHECK_THROWS_AS(reconstruct_series(net, bank, -1), ShapeError);
  }
}

TEST_CASE("sampled reconstruction uses the mean when deviations vanish") {
  GeneratorNetwork net(small_spec(2, 2), 3);
  VariationalLatentBank bank(2, 3, 2);
  std::fill(bank.raw_deviations().begin(), bank.raw_deviations().end(), -800.0);
  const auto mu = random_vector(bank.means().size(), 4);
  std::copy(mu.begin(), mu.end(), bank.means().begin());
  const auto a = reconstruct_series(net, bank, 0), b = reconstruct_series_sampled(net, bank, 0, 99);
  for (int t = 0; t < 3; ++t) CHECK(a[t].values == b[t].values);
  std::fill(bank.raw_deviations().begin(), bank.raw_deviations().end(), 0.0);
  const auto c = reconstruct_series_sampled(net, bank, 0, 99);
  CHECK(c[0].values != a[0].values);
  CHECK(c[0].values == reconstruct_series_sampled(net, bank, 0, 99)[0].values);
}

TEST_CASE("phase folding and cells") {
  CHECK(fold_phase(0.3) == doctest::Approx(0.3));
  CHECK(fold_phase(std::numbers::pi - 0.3) == doctest::Approx(0.3));
  CHECK(fold_phase(-0.4 + 2 * std::numbers::pi) == doctest::Approx(-0.4));
  CHECK(phase_cell(-std::numbers::pi / 2, 16) == 0);
  CHECK(phase_cell(std::numbers::pi / 2, 16) == 15);
  CHECK(phase_cell(0.01, 16) == 8);
  CHECK(phase_cell(-0.01, 16) == 7);
  // The phantom depends on the folded phases only.
  const auto spec = default_phantom_spec(32, 32, 2, 8, 3);
  const auto a = phantom_volume(spec, {0.4, 1.1}), b = phantom_volume(spec, {std::numbers::pi - 0.4, 1.1});
  for (std::size_t i = 0; i < a.values.size(); ++i) CHECK(a.values[i] == doctest::Approx(b.values[i]).epsilon(1e-12));
}

TEST_CASE("alignment: exact trajectory scores 1, shuffled trajectory scores near chance") {
  const auto spec = default_phantom_spec(32, 32, 2, 192, 17);
  for (int z = 0; z < 2; ++z) {
    const auto series = truth_series(spec, z);
    CHECK(alignment_score(series, spec, z) == 1.0);
    // Independent oracle: every frame's best cell by exhaustive SER search.
    const auto grid = phase_grid_volumes(spec, 16);
    REQUIRE(grid.size() == 256);
    for (int t = 0; t < spec.frames; t += 37) {
      int best = -1;
      double best_db = -1e300;
      for (int i = 0; i < 256; ++i) {
        const double db = ser(grid[i].values, series[t].values);
        if (db > best_db) best_db = db, best = i;
      }
      CHECK(best == best_phase_cell(series[t], grid));
    }
  }
  // Chance oracle: expected score over all permutations, from the true phase cells alone.
  auto chance_rate = [](const PhantomSpec& sp) {
    std::vector<std::pair<int, int>> cells;
    for (int t = 0; t < sp.frames; ++t) {
      const auto p = slice_phases(sp, 0, t);
      cells.emplace_back(phase_cell(p.cardiac, 16), phase_cell(p.respiratory, 16));
    }
    double hits = 0;
    for (const auto& a : cells)
      for (const auto& b : cells) hits += std::abs(a.first - b.first) <= 1 && std::abs(a.second - b.second) <= 1;
    return hits / (static_cast<double>(cells.size()) * cells.size());
  };
  auto shuffled_mean = [](const PhantomSpec& sp) {
    const auto series = truth_series(sp, 0);
    double mean = 0;
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 8; ++trial) {
      auto shuffled = series;
      std::shuffle(shuffled.begin(), shuffled.end(), rng);
      mean += alignment_score(shuffled, sp, 0) / 8;
    }
    return mean;
  };
  const double chance = chance_rate(spec), mean = shuffled_mean(spec);
  MESSAGE("shuffled alignment " << mean << ", permutation chance " << chance);
  CHECK(std::abs(mean - chance) < 0.015);
  CHECK(chance < 0.065);
  // With phases covering the grid evenly the chance rate approaches (46/256)^2 ~ 0.032.
  auto even = spec;
  even.respiratory_frequency = 0.0937;
  const double even_chance = chance_rate(even), even_mean = shuffled_mean(even);
  MESSAGE("even coverage: shuffled " << even_mean << ", chance " << even_chance);
  CHECK(even_chance < 0.05);
  CHECK(even_mean < 0.05);
  // A different slice's trajectory does not line up with slice 0's phases.
  CHECK(alignment_score(truth_series(spec, 1), spec, 0) < 0.2);
  const auto head = truth_series(spec, 0);
  CHECK_THROWS_AS(alignment_score(std::vector<VolumeGrid>(head.begin(), head.begin() + 10), spec, 0), ShapeError);
}

TEST_CASE("kl summary examples") {
  VariationalLatentBank bank(3, 7, 3);
  std::fill(bank.raw_deviations().begin(), bank.raw_deviations().end(), softplus_inverse(1.0));
  for (double v : kl_summary(bank)) CHECK(v == doctest::Approx(0.0).scale(1.0).epsilon(1e-14));
  for (int t = 0; t < 7; ++t) bank.mean(bank.index(1, t))[0] = 1.0;
  const auto kl = kl_summary(bank);
  CHECK(kl[0] == doctest::Approx(0.0).scale(1.0).epsilon(1e-14));
  CHECK(kl[1] == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(kl[2] == doctest::Approx(0.0).scale(1.0).epsilon(1e-14));
}

TEST_CASE("moment-matched KL") {
  // Four corners with unit sample covariance and zero mean.
  VariationalLatentBank bank(1, 4, 2);
  const double a = std::sqrt(0.75);
  const double pts[4][2] = {{a, a}, {a, -a}, {-a, a}, {-a, -a}};
  for (int t = 0; t < 4; ++t)
    for (int i = 0; i < 2; ++i) bank.mean(t)[i] = pts[t][i];
  CHECK(moment_matched_kl(bank)[0] == doctest::Approx(0.0).scale(1.0).epsilon(1e-14));

  // Random 2-d means against the closed-form 2x2 determinant.
  VariationalLatentBank r(2, 30, 2);
  const auto mu = random_vector(r.means().size(), 8, -2.0, 3.0);
  std::copy(mu.begin(), mu.end(), r.means().begin());
  const auto kl = moment_matched_kl(r);
  for (int z = 0; z < 2; ++z) {
    double m0 = 0, m1 = 0;
    for (int t = 0; t < 30; ++t) m0 += r.mean(r.index(z, t))[0] / 30, m1 += r.mean(r.index(z, t))[1] / 30;
    double c00 = 0, c11 = 0, c01 = 0;
    for (int t = 0; t < 30; ++t) {
      const double d0 = r.mean(r.index(z, t))[0] - m0, d1 = r.mean(r.index(z, t))[1] - m1;
      c00 += d0 * d0 / 29, c11 += d1 * d1 / 29, c01 += d0 * d1 / 29;
    }
    const double expect = 0.5 * (c00 + c11 + m0 * m0 + m1 * m1 - 2 - std::log(c00 * c11 - c01 * c01));
    CHECK(kl[z] == doctest::Approx(expect).epsilon(1e-12));
  }
  VariationalLatentBank flat(1, 5, 2);
  CHECK_THROWS_AS(moment_matched_kl(flat), NumericError);
}

TEST_CASE("metric csv") {
  const auto path = temp_path("metrics.csv");
  write_metric_csv({{0, 1, "ser", 12.5}, {3, 0, "psnr", 0.1}}, path);
  std::ifstream f(path);
  std::stringstream ss;
  ss << f.rdbuf();
  CHECK(ss.str() == "frame,slice,metric,value\n0,1,ser,12.5\n3,0,psnr,0.10000000000000001\n");
  std::filesystem::remove(path);
}

TEST_CASE("gray mapping, pgm and png") {
  ImageGrid img(2, 3, 1);
  img.values = {-1.0, 0.0, 1.0, 2.0, -5.0, 0.5};
  const auto px = to_gray8(img, -1.0, 1.0);
  CHECK(px == std::vector<unsigned char>{0, 128, 255, 255, 0, 191});
  CHECK_THROWS_AS(to_gray8(img, 1.0, 1.0), UsageError);

  ImageGrid cplx(1, 1, 2);
  cplx.values = {0.6, 0.8};
  CHECK(to_gray8(cplx, 0.0, 1.0)[0] == 255);

  const auto pgm = temp_path("img.pgm");
  write_pgm(img, pgm, -1.0, 1.0);
  std::ifstream f(pgm, std::ios::binary);
  std::string content((std::istreambuf_iterator<char>(f)), {});
  CHECK(content == std::string("P5\n3 2\n255\n") + std::string(px.begin(), px.end()));
  std::filesystem::remove(pgm);

  const auto png = temp_path("img.png");
  write_png(img, png, -1.0, 1.0);
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  REQUIRE(png_image_begin_read_from_file(&image, png.string().c_str()));
  CHECK(image.width == 3);
  CHECK(image.height == 2);
  image.format = PNG_FORMAT_GRAY;
  std::vector<unsigned char> back(PNG_IMAGE_SIZE(image));
  REQUIRE(png_image_finish_read(&image, nullptr, back.data(), 0, nullptr));
  CHECK(back == px);
  std::filesystem::remove(png);
}

TEST_CASE("montage layout") {
  std::vector<ImageGrid> tiles;
  for (int i = 0; i < 5; ++i) {
    ImageGrid t(2, 3, 1);
    std::fill(t.values.begin(), t.values.end(), 0.1 * i);
    tiles.push_back(t);
  }
  const auto m = montage(tiles, 2, 1, -1.0);
  CHECK(m.height == 3 * 2 + 2);
  CHECK(m.width == 2 * 3 + 1);
  CHECK(m.at(0, 0, 0) == 0.0);
  CHECK(m.at(0, 0, 4) == doctest::Approx(0.1));
  CHECK(m.at(0, 0, 3) == -1.0);
  CHECK(m.at(0, 2, 0) == -1.0);
  CHECK(m.at(0, 6, 1) == doctest::Approx(0.4));
  CHECK(m.at(0, 6, 5) == -1.0);
  tiles.push_back(ImageGrid(3, 3, 1));
  CHECK_THROWS_AS(montage(tiles, 2), ShapeError);
}
