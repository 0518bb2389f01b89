#include "vstorm/data/mnist.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <random>

#include "vstorm/common/errors.hpp"
#include "vstorm/common/rng.hpp"

namespace vstorm {

namespace {

// Whole file through zlib, which passes plain files through unchanged.
std::vector<std::uint8_t> read_maybe_gzip(const std::filesystem::path& path) {
  std::unique_ptr<gzFile_s, int (*)(gzFile)> f(gzopen(path.string().c_str(), "rb"), gzclose);
  if (!f) throw ParseError("cannot open " + path.string());
  std::vector<std::uint8_t> data;
  std::vector<std::uint8_t> chunk(1 << 16);
  for (;;) {
    const int n = gzread(f.get(), chunk.data(), static_cast<unsigned>(chunk.size()));
    if (n < 0) throw ParseError(path.string() + ": decompression failed after byte " + std::to_string(data.size()));
    if (n == 0) break;
    data.insert(data.end(), chunk.begin(), chunk.begin() + n);
  }
  return data;
}

class IdxCursor {
 public:
  IdxCursor(std::vector<std::uint8_t> bytes, std::string name) : bytes_(std::move(bytes)), name_(std::move(name)) {}

  std::uint32_t be32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v = (v << 8) | bytes_[pos_ + i];
    pos_ += 4;
    return v;
  }
  const std::uint8_t* take(std::size_t n) {
    need(n);
    const auto* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }
  std::size_t pos() const { return pos_; }
  [[noreturn]] void fail(const std::string& msg, std::size_t at) const {
    throw ParseError(name_ + ": " + msg + " at byte offset " + std::to_string(at));
  }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size())
      fail("truncated file (need " + std::to_string(n) + " bytes, " + std::to_string(bytes_.size() - pos_) + " left)",
           pos_);
  }
  std::vector<std::uint8_t> bytes_;
  std::string name_;
  std::size_t pos_ = 0;
};

struct ImageHeader {
  std::uint32_t count, rows, cols;
};

ImageHeader read_image_header(IdxCursor& c) {
  const auto magic = c.be32();
  if (magic != 0x00000803) c.fail("bad image magic 0x" + [&] {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%08x", magic);
    return std::string(buf);
  }(), 0);
  ImageHeader h{c.be32(), c.be32(), c.be32()};
  if (h.rows == 0 || h.cols == 0) c.fail("zero image dimension", 8);
  return h;
}

}  // namespace

std::uint32_t idx_image_count(const std::filesystem::path& images) {
  IdxCursor c(read_maybe_gzip(images), images.string());
  return read_image_header(c).count;
}

ImageSet load_mnist_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                        std::optional<int> digit, std::size_t limit) {
  IdxCursor ic(read_maybe_gzip(images), images.string());
  const auto h = read_image_header(ic);
  std::vector<std::uint8_t> label_bytes;
  if (!labels.empty()) {
    IdxCursor lc(read_maybe_gzip(labels), labels.string());
    const auto magic = lc.be32();
    if (magic != 0x00000801) lc.fail("bad label magic", 0);
    const auto n = lc.be32();
    if (n != h.count) lc.fail("label count " + std::to_string(n) + " differs from image count " + std::to_string(h.count), 4);
    const auto* p = lc.take(n);
    label_bytes.assign(p, p + n);
  } else if (digit) {
    throw UsageError("a digit filter needs a labels file");
  }
  ImageSet set;
  set.declared_count = h.count;
  const std::size_t plane = static_cast<std::size_t>(h.rows) * h.cols;
  for (std::uint32_t i = 0; i < h.count; ++i) {
    const auto* px = ic.take(plane);
    if (digit && label_bytes[i] != *digit) continue;
    ImageGrid img(static_cast<int>(h.rows), static_cast<int>(h.cols), 1);
    for (std::size_t k = 0; k < plane; ++k) img.values[k] = 2.0 * (px[k] / 255.0) - 1.0;
    set.images.push_back(std::move(img));
    if (!label_bytes.empty()) set.labels.push_back(label_bytes[i]);
    if (limit > 0 && set.images.size() == limit) break;
  }
  return set;
}

std::size_t kept_pixel_count(double keep_fraction, std::size_t pixels) {
  if (!(keep_fraction > 0.0 && keep_fraction <= 1.0)) throw UsageError("keep_fraction must lie in (0, 1]");
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(keep_fraction * static_cast<double>(pixels))));
}

KTDataset corrupt_images(const std::vector<ImageGrid>& images, double keep_fraction, double noise_sd,
                         std::uint64_t seed) {
  if (images.empty()) throw UsageError("no images to corrupt");
  if (!(noise_sd >= 0)) throw UsageError("noise level must be non-negative");
  const auto& first = images.front();
  const std::size_t plane = first.plane_size();
  const std::size_t kept = kept_pixel_count(keep_fraction, plane);
  KTDataset ds;
  ds.kind = "digits";
  ds.geometry = {1, first.channels, first.height, first.width};
  ds.frames_per_slice = static_cast<int>(images.size());
  ds.seed = seed;
  std::vector<std::uint32_t> all(plane);
  for (std::size_t i = 0; i < images.size(); ++i) {
    const auto& img = images[i];
    if (img.height != first.height || img.width != first.width || img.channels != first.channels)
      throw ShapeError("image " + std::to_string(i) + " has shape " + img.shape_string() + ", expected " +
                       first.shape_string());
    Rng rng(derive_seed(seed, {0x6d61736b, i}));
    std::iota(all.begin(), all.end(), 0u);
    for (std::size_t k = 0; k < kept; ++k) {
      std::uniform_int_distribution<std::size_t> pick(k, plane - 1);
      std::swap(all[k], all[pick(rng)]);
    }
    std::vector<std::uint32_t> subset(all.begin(), all.begin() + kept);
    std::sort(subset.begin(), subset.end());
    MeasurementOperator op = PixelMaskOperator(img.height, img.width, img.channels, std::move(subset), 1.0);
    KTFrame f{0, static_cast<int>(i), op, vstorm::apply(op, img), noise_sd};
    if (noise_sd > 0) {
      std::normal_distribution<double> normal(0.0, noise_sd);
      for (auto& v : f.b) v += normal(rng);
    }
    ds.frames.push_back(std::move(f));
    ds.truth.push_back(img);
  }
  return ds;
}

}  // namespace vstorm
