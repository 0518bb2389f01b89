#include "vstorm/measurement/grid.hpp"

#include <algorithm>
#include <cmath>

#include "vstorm/common/errors.hpp"

namespace vstorm {

ImageGrid::ImageGrid(int h, int w, int c) : height(h), width(w), channels(c) {
  if (h <= 0 || w <= 0 || (c != 1 && c != 2))
    throw ShapeError("invalid image shape " + std::to_string(h) + "x" + std::to_string(w) + "x" +
                     std::to_string(c));
  values.assign(static_cast<std::size_t>(h) * w * c, 0.0);
}

std::string ImageGrid::shape_string() const {
  return std::to_string(height) + "x" + std::to_string(width) + "x" + std::to_string(channels);
}

VolumeGrid::VolumeGrid(int n_slices, int h, int w, int c) : slices(n_slices), height(h), width(w), channels(c) {
  if (n_slices <= 0 || h <= 0 || w <= 0 || (c != 1 && c != 2))
    throw ShapeError("invalid volume shape " + std::to_string(n_slices) + "x" + std::to_string(h) + "x" +
                     std::to_string(w) + "x" + std::to_string(c));
  values.assign(static_cast<std::size_t>(n_slices) * h * w * c, 0.0);
}

VolumeGrid::VolumeGrid(const ImageGrid& img)
    : slices(1), height(img.height), width(img.width), channels(img.channels), values(img.values) {}

ImageGrid VolumeGrid::slice(int z) const {
  if (z < 0 || z >= slices) throw ShapeError("slice index " + std::to_string(z) + " out of range for " + shape_string());
  ImageGrid img(height, width, channels);
  auto src = slice_values(z);
  std::copy(src.begin(), src.end(), img.values.begin());
  return img;
}

void VolumeGrid::set_slice(int z, const ImageGrid& img) {
  if (z < 0 || z >= slices) throw ShapeError("slice index " + std::to_string(z) + " out of range for " + shape_string());
  if (img.height != height || img.width != width || img.channels != channels)
    throw ShapeError("slice shape " + img.shape_string() + " does not match volume " + shape_string());
  std::copy(img.values.begin(), img.values.end(), slice_values(z).begin());
}

std::string VolumeGrid::shape_string() const {
  return std::to_string(slices) + "x" + std::to_string(height) + "x" + std::to_string(width) + "x" +
         std::to_string(channels);
}

void require_finite(std::span<const double> v, const char* what) {
  if (!std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); }))
    throw NumericError(std::string("non-finite value in ") + what);
}

ImageGrid magnitude(const ImageGrid& img) {
  if (!img.is_complex()) return img;
  ImageGrid out(img.height, img.width, 1);
  auto re = img.channel(0);
  auto im = img.channel(1);
  for (std::size_t i = 0; i < img.plane_size(); ++i) out.values[i] = std::hypot(re[i], im[i]);
  return out;
}

}  // namespace vstorm
