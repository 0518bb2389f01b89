#pragma once

// Grayscale image output.

#include <filesystem>
#include <vector>

#include "vstorm/measurement/grid.hpp"

namespace vstorm {

/// Magnitude (complex) or value (real) mapped linearly from [lo, hi] to 0..255, clamped.
std::vector<unsigned char> to_gray8(const ImageGrid& img, double lo, double hi);

void write_pgm(const ImageGrid& img, const std::filesystem::path& path, double lo, double hi);
void write_png(const ImageGrid& img, const std::filesystem::path& path, double lo, double hi);

/// Tiles single-channel views of `images` row by row into a cols-wide grid
/// with `gap` pixels of `background` between tiles.
ImageGrid montage(const std::vector<ImageGrid>& images, int cols, int gap = 1, double background = -1.0);

}  // namespace vstorm
