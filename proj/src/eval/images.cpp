#include "vstorm/eval/images.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>

#include "vstorm/common/errors.hpp"

namespace vstorm {

std::vector<unsigned char> to_gray8(const ImageGrid& img, double lo, double hi) {
  if (!(hi > lo)) throw UsageError("gray window needs hi > lo");
  const auto mag = magnitude(img);
  std::vector<unsigned char> out(mag.values.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double u = std::clamp((mag.values[i] - lo) / (hi - lo), 0.0, 1.0);
    out[i] = static_cast<unsigned char>(std::lround(255.0 * u));
  }
  return out;
}

void write_pgm(const ImageGrid& img, const std::filesystem::path& path, double lo, double hi) {
  const auto px = to_gray8(img, lo, hi);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot write " + path.string());
  f << "P5\n" << img.width << ' ' << img.height << "\n255\n";
  f.write(reinterpret_cast<const char*>(px.data()), static_cast<std::streamsize>(px.size()));
}

void write_png(const ImageGrid& img, const std::filesystem::path& path, double lo, double hi) {
  const auto px = to_gray8(img, lo, hi);
  std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path.string().c_str(), "wb"), std::fclose);
  if (!fp) throw Error("cannot write " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw Error("libpng initialisation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error("libpng failed writing " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, img.width, img.height, 8, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < img.height; ++y)
    png_write_row(png, const_cast<png_bytep>(px.data() + static_cast<std::size_t>(y) * img.width));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

ImageGrid montage(const std::vector<ImageGrid>& images, int cols, int gap, double background) {
  if (images.empty() || cols < 1) throw UsageError("montage needs images and at least one column");
  const int h = images.front().height, w = images.front().width;
  const int rows = (static_cast<int>(images.size()) + cols - 1) / cols;
  ImageGrid out(rows * h + (rows - 1) * gap, cols * w + (cols - 1) * gap, 1);
  std::fill(out.values.begin(), out.values.end(), background);
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (images[i].height != h || images[i].width != w) throw ShapeError("montage tiles differ in shape");
    const auto tile = magnitude(images[i]);
    const int oy = static_cast<int>(i / cols) * (h + gap), ox = static_cast<int>(i % cols) * (w + gap);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) out.at(0, oy + y, ox + x) = tile.at(0, y, x);
  }
  return out;
}

}  // namespace vstorm
