#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "support/test_support.hpp"
#include "vstorm/common/errors.hpp"
#include "vstorm/data/dataset.hpp"
#include "vstorm/data/mnist.hpp"
#include "vstorm/data/phantom.hpp"

using namespace vstorm;

namespace {

std::filesystem::path temp_file(const std::string& name) { return std::filesystem::temp_directory_path() / name; }

void write_bytes(const std::filesystem::path& p, const std::vector<std::uint8_t>& bytes) {
  std::ofstream f(p, std::ios::binary);
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

void be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(v >> s));
}

std::vector<std::uint8_t> idx_images(std::uint32_t n, std::uint32_t rows, std::uint32_t cols,
                                     const std::vector<std::uint8_t>& pixels) {
  std::vector<std::uint8_t> out;
  be32(out, 0x00000803);
  be32(out, n);
  be32(out, rows);
  be32(out, cols);
  out.insert(out.end(), pixels.begin(), pixels.end());
  return out;
}

std::vector<std::uint8_t> idx_labels(const std::vector<std::uint8_t>& labels) {
  std::vector<std::uint8_t> out;
  be32(out, 0x00000801);
  be32(out, static_cast<std::uint32_t>(labels.size()));
  out.insert(out.end(), labels.begin(), labels.end());
  return out;
}

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

RandomRowEnsemble row_ensemble(int n, int rows, int coils) {
  return {n, n, rows, coils > 0 ? std::make_shared<const CoilMaps>(make_coil_maps(n, n, coils)) : nullptr};
}

}  // namespace

TEST_CASE("IDX images are scaled to [-1, 1]") {
  const auto p = temp_file("vstorm_idx_one.idx");
  write_bytes(p, idx_images(1, 2, 2, {0, 128, 255, 64}));
  const auto set = load_mnist_idx(p);
  REQUIRE(set.images.size() == 1);
  const auto& v = set.images[0].values;
  CHECK(v[0] == -1.0);
  CHECK(v[1] == doctest::Approx(0.0039).epsilon(1e-2));
  CHECK(v[1] == doctest::Approx(2.0 * 128 / 255 - 1).epsilon(1e-15));
  CHECK(v[2] == 1.0);
  CHECK(v[3] == doctest::Approx(-0.498).epsilon(1e-3));
  std::filesystem::remove(p);
}

TEST_CASE("IDX digit filter") {
  const auto pi = temp_file("vstorm_idx_three.idx"), pl = temp_file("vstorm_idx_three_labels.idx");
  write_bytes(pi, idx_images(3, 1, 2, {0, 0, 10, 10, 20, 20}));
  write_bytes(pl, idx_labels({0, 1, 1}));
  const auto ones = load_mnist_idx(pi, pl, 1);
  CHECK(ones.images.size() == 2);
  CHECK(ones.labels == std::vector<int>{1, 1});
  CHECK(load_mnist_idx(pi, pl).images.size() == 3);
  CHECK(load_mnist_idx(pi, pl, 1, 1).images.size() == 1);
  CHECK_THROWS_AS(load_mnist_idx(pi, {}, 1), UsageError);
  std::filesystem::remove(pi);
  std::filesystem::remove(pl);
}

TEST_CASE("IDX header count and parse errors") {
  const auto p = temp_file("vstorm_idx_header.idx");
  write_bytes(p, idx_images(60000, 28, 28, {}));
  CHECK(idx_image_count(p) == 60000);
  try {
    load_mnist_idx(p);
    FAIL("expected truncation error");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("byte offset 16") != std::string::npos);
  }
  auto bad = idx_images(1, 1, 1, {7});
  bad[3] = 0x04;
  write_bytes(p, bad);
  try {
    load_mnist_idx(p);
    FAIL("expected magic error");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("magic") != std::string::npos);
    CHECK(std::string(e.what()).find("byte offset 0") != std::string::npos);
  }
  std::filesystem::remove(p);
  CHECK_THROWS_AS(load_mnist_idx(temp_file("vstorm_does_not_exist.idx")), ParseError);
}

TEST_CASE("bundled digit subset loads through gzip") {
  const std::filesystem::path dir = VSTORM_DATA_DIR;
  const auto images = dir / "mnist/mnist5k-images-idx3-ubyte.gz";
  const auto labels = dir / "mnist/mnist5k-labels-idx1-ubyte.gz";
  CHECK(idx_image_count(images) == 5000);
  const auto ones = load_mnist_idx(images, labels, 1);
  CHECK(ones.images.size() == 500);
  CHECK(ones.images[0].height == 28);
  double lo = 1, hi = -1;
  for (const auto& img : ones.images)
    for (double v : img.values) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  CHECK(lo == -1.0);
  CHECK(hi == 1.0);
}

TEST_CASE("pixel corruption") {
  std::vector<ImageGrid> images;
  for (int i = 0; i < 3; ++i) {
    ImageGrid g(28, 28, 1);
    g.values = vstorm::testing::random_vector(784, 10 + i);
    images.push_back(g);
  }
  const auto full = corrupt_images(images, 1.0, 0.0, 1);
  for (std::size_t i = 0; i < images.size(); ++i) {
    CHECK(full.frames[i].b == images[i].values);
    CHECK(measurement_size(full.frames[i].op) == 784);
  }
  CHECK(kept_pixel_count(0.3, 784) == 235);
  const auto part = corrupt_images(images, 0.3, 0.05, 1);
  CHECK(part.frames[0].b.size() == 235);
  const auto again = corrupt_images(images, 0.3, 0.05, 1);
  for (std::size_t i = 0; i < images.size(); ++i) {
    const auto& m1 = std::get<PixelMaskOperator>(part.frames[i].op).kept();
    CHECK(m1 == std::get<PixelMaskOperator>(again.frames[i].op).kept());
    CHECK(part.frames[i].b == again.frames[i].b);
  }
  CHECK(std::get<PixelMaskOperator>(part.frames[0].op).kept() != std::get<PixelMaskOperator>(part.frames[1].op).kept());
  CHECK(part.truth.size() == 3);
  validate(part);
  // The zero-filled view puts the noisy kept pixels back and zeros elsewhere.
  const auto zf = zero_filled(full.frames[0]);
  CHECK(zf.values == images[0].values);
  CHECK_THROWS_AS(corrupt_images(images, 0.0, 0.0, 1), UsageError);
  CHECK_THROWS_AS(corrupt_images(images, 1.5, 0.0, 1), UsageError);
}

TEST_CASE("corruption keep rate over many images") {
  std::vector<ImageGrid> images(1000, ImageGrid(28, 28, 1));
  const auto ds = corrupt_images(images, 0.3, 0.0, 2);
  std::size_t kept = 0;
  std::vector<int> hits(784, 0);
  for (const auto& f : ds.frames) {
    const auto& k = std::get<PixelMaskOperator>(f.op).kept();
    kept += k.size();
    for (auto i : k) ++hits[i];
  }
  CHECK(std::abs(double(kept) / (1000.0 * 784) - 0.3) < 0.01);
  // Uniform subsets: every pixel is kept at roughly the same rate.
  for (int h : hits) CHECK(std::abs(h / 1000.0 - 0.3) < 0.1);
}

TEST_CASE("phantom motion model") {
  auto spec = default_phantom_spec(32, 32, 3, 20, 5);
  validate(spec);
  const PhasePair p{0.7, 2.1};
  for (int z = 0; z < 3; ++z) {
    const auto a = phantom_slice(spec, z, p);
    const auto b = phantom_slice(spec, z, {p.cardiac + 2 * std::numbers::pi, p.respiratory});
    CHECK(max_abs_diff(a.values, b.values) < 1e-12);
    for (std::size_t i = 0; i < a.plane_size(); ++i)
      CHECK(std::hypot(a.values[i], a.values[i + a.plane_size()]) <= 1.0);
  }
  // Slice z at its own phases equals slice z of the volume at those phases.
  for (int z = 0; z < 3; ++z)
    for (int t : {0, 7, 19}) {
      const auto own = phantom_generate(spec, z, t);
      const auto vol = phantom_volume(spec, slice_phases(spec, z, t));
      CHECK(own.values == vol.slice(z).values);
    }
  // Motion changes the image; without motion every frame is the same.
  CHECK(phantom_generate(spec, 0, 0).values != phantom_generate(spec, 0, 3).values);
  spec.cardiac_amplitude = 0;
  spec.respiratory_amplitude = 0;
  for (int t = 1; t < 20; ++t) CHECK(phantom_generate(spec, 1, t).values == phantom_generate(spec, 1, 0).values);
}

TEST_CASE("phantom validation") {
  auto spec = default_phantom_spec(64, 64, 4, 192, 1);
  CHECK(spec.cardiac_offset != default_phantom_spec(64, 64, 4, 192, 2).cardiac_offset);
  auto bad = spec;
  bad.respiratory_frequency = bad.cardiac_frequency;
  CHECK_THROWS_AS(validate(bad), Error);
  bad = spec;
  bad.respiratory_amplitude = 20;
  CHECK_THROWS_AS(validate(bad), Error);
  bad = spec;
  bad.anatomy[0].blood_pool.intensity = 1.5;
  CHECK_THROWS_AS(validate(bad), Error);
  bad = spec;
  bad.cardiac_offset.pop_back();
  CHECK_THROWS_AS(validate(bad), Error);
  CHECK_THROWS_AS(phantom_generate(spec, 4, 0), ShapeError);
}

TEST_CASE("coil maps have unit combined power") {
  const auto maps = make_coil_maps(16, 12, 4);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 12; ++x) {
      double p = 0;
      for (int c = 0; c < 4; ++c) {
        const double re = maps.re(c)[y * 12 + x], im = maps.im(c)[y * 12 + x];
        p += re * re + im * im;
      }
      CHECK(p == doctest::Approx(1.0).epsilon(1e-13));
    }
}

TEST_CASE("k-t acquisition") {
  const auto spec = default_phantom_spec(16, 16, 2, 6, 3);
  SUBCASE("noiseless frames are data consistent") {
    const auto ds = acquire_kt(spec, row_ensemble(16, 4, 2), 0.0, 9);
    CHECK(ds.frame_count() == 12);
    for (std::size_t i = 0; i < ds.frame_count(); ++i) {
      const auto& f = ds.frames[i];
      std::vector<double> b(f.b.size());
      apply_slice(f.op, ds.truth[i].values, b);
      CHECK(b == f.b);
      CHECK(target_slice(f.op) == f.slice);
    }
  }
  SUBCASE("full sampling round-trips") {
    const auto ds = acquire_kt(spec, row_ensemble(16, 16, 0), 0.0, 9);
    for (std::size_t i = 0; i < ds.frame_count(); ++i)
      CHECK(max_abs_diff(zero_filled(ds.frames[i]).values, ds.truth[i].values) < 1e-12);
  }
  SUBCASE("undersampling factor") {
    const auto big = default_phantom_spec(64, 64, 1, 2, 3);
    const auto ds = acquire_kt(big, row_ensemble(64, 8, 0), 0.0, 1);
    const auto& f = std::get<SubsampledFourierOperator>(ds.frames[0].op);
    CHECK(64 / f.kept_rows().size() == 8);
  }
  SUBCASE("seeds change rows but not shapes") {
    const auto a = acquire_kt(spec, row_ensemble(16, 4, 0), 0.0, 1);
    const auto b = acquire_kt(spec, row_ensemble(16, 4, 0), 0.0, 2);
    bool differ = false;
    for (std::size_t i = 0; i < a.frame_count(); ++i) {
      CHECK(a.frames[i].b.size() == b.frames[i].b.size());
      differ |= std::get<SliceFourierOperator>(a.frames[i].op).inner().kept_rows() !=
                std::get<SliceFourierOperator>(b.frames[i].op).inner().kept_rows();
    }
    CHECK(differ);
  }
  SUBCASE("noise level hits the requested SNR") {
    const auto ens = row_ensemble(16, 4, 0);
    const double sd = noise_sd_for_snr(spec, ens, 30.0, 4);
    const auto clean = acquire_kt(spec, ens, 0.0, 4);
    const auto noisy = acquire_kt(spec, ens, sd, 4);
    double sig = 0, err = 0;
    for (std::size_t i = 0; i < clean.frame_count(); ++i)
      for (std::size_t k = 0; k < clean.frames[i].b.size(); ++k) {
        sig += clean.frames[i].b[k] * clean.frames[i].b[k];
        const double d = noisy.frames[i].b[k] - clean.frames[i].b[k];
        err += d * d;
      }
    CHECK(10 * std::log10(sig / err) == doctest::Approx(30.0).epsilon(0.05));
    CHECK(noisy.frames[0].noise_sd == sd);
  }
}

TEST_CASE("dataset container round trip") {
  const auto spec = default_phantom_spec(16, 16, 2, 4, 3);
  const auto ds = acquire_kt(spec, row_ensemble(16, 4, 2), 0.01, 5);
  const auto path = temp_file("vstorm_dataset_test.vktd");
  save_dataset(ds, path);
  const auto back = load_dataset(path);
  CHECK(back.kind == "phantom");
  CHECK(back.geometry == ds.geometry);
  CHECK(back.frames_per_slice == 4);
  CHECK(back.seed == 5);
  REQUIRE(back.phantom.has_value());
  CHECK(*back.phantom == spec);
  for (std::size_t i = 0; i < ds.frame_count(); ++i) {
    CHECK(back.frames[i].b == ds.frames[i].b);
    CHECK(back.frames[i].noise_sd == ds.frames[i].noise_sd);
    CHECK(back.truth[i].values == ds.truth[i].values);
    const auto& a = std::get<SliceFourierOperator>(ds.frames[i].op);
    const auto& b = std::get<SliceFourierOperator>(back.frames[i].op);
    CHECK(a.inner().kept_rows() == b.inner().kept_rows());
    CHECK(a.inner().scale() == b.inner().scale());
    CHECK(a.inner().coil_maps()->values == b.inner().coil_maps()->values);
    std::vector<double> ya(ds.frames[i].b.size()), yb(ya.size());
    apply_slice(ds.frames[i].op, ds.truth[i].values, ya);
    apply_slice(back.frames[i].op, ds.truth[i].values, yb);
    CHECK(ya == yb);
  }

  std::vector<ImageGrid> digits(2, ImageGrid(4, 4, 1));
  digits[1].values.assign(16, 0.5);
  const auto masked = corrupt_images(digits, 0.5, 0.1, 3);
  save_dataset(masked, path);
  const auto mb = load_dataset(path);
  CHECK(mb.kind == "digits");
  CHECK_FALSE(mb.phantom.has_value());
  CHECK(std::get<PixelMaskOperator>(mb.frames[1].op).kept() == std::get<PixelMaskOperator>(masked.frames[1].op).kept());
  CHECK(mb.frames[1].b == masked.frames[1].b);

  // A flipped byte fails the checksum.
  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(40);
    f.put('\x7f');
  }
  CHECK_THROWS_AS(load_dataset(path), ParseError);
  std::filesystem::remove(path);
}

TEST_CASE("dataset validation names the frame") {
  const auto spec = default_phantom_spec(16, 16, 1, 3, 3);
  auto ds = acquire_kt(spec, row_ensemble(16, 4, 0), 0.0, 5);
  ds.frames[2].b.pop_back();
  try {
    validate(ds);
    FAIL("expected an error");
  } catch (const ShapeError& e) {
    CHECK(std::string(e.what()).find("frame 2") != std::string::npos);
  }
}
