#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace vstorm {

/// Planar image: values[channel][y][x]. Two channels hold (real, imaginary).
struct ImageGrid {
  int height = 0;
  int width = 0;
  int channels = 1;
  std::vector<double> values;

  ImageGrid() = default;
  ImageGrid(int h, int w, int c);

  std::size_t plane_size() const { return static_cast<std::size_t>(height) * width; }
  std::size_t size() const { return values.size(); }
  bool is_complex() const { return channels == 2; }

  std::span<double> channel(int c) { return std::span(values).subspan(c * plane_size(), plane_size()); }
  std::span<const double> channel(int c) const {
    return std::span(values).subspan(c * plane_size(), plane_size());
  }
  double& at(int c, int y, int x) { return values[c * plane_size() + static_cast<std::size_t>(y) * width + x]; }
  double at(int c, int y, int x) const {
    return values[c * plane_size() + static_cast<std::size_t>(y) * width + x];
  }

  std::string shape_string() const;
};

/// Stack of equally-shaped slices: values[slice][channel][y][x].
struct VolumeGrid {
  int slices = 0;
  int height = 0;
  int width = 0;
  int channels = 1;
  std::vector<double> values;

  VolumeGrid() = default;
  VolumeGrid(int n_slices, int h, int w, int c);
  /// Single-slice volume wrapping an image.
  explicit VolumeGrid(const ImageGrid& img);

  std::size_t slice_size() const { return static_cast<std::size_t>(channels) * height * width; }
  std::span<double> slice_values(int z) { return std::span(values).subspan(z * slice_size(), slice_size()); }
  std::span<const double> slice_values(int z) const {
    return std::span(values).subspan(z * slice_size(), slice_size());
  }
  ImageGrid slice(int z) const;
  void set_slice(int z, const ImageGrid& img);

  std::string shape_string() const;
};

/// Throws NumericError when any value is NaN or infinite.
void require_finite(std::span<const double> v, const char* what);

/// Per-pixel magnitude of a complex image; a real image is returned unchanged.
ImageGrid magnitude(const ImageGrid& img);

}  // namespace vstorm
