#pragma once

// IDX digit files (optionally gzipped) and the missing-pixel corruption.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "vstorm/data/dataset.hpp"
#include "vstorm/measurement/grid.hpp"

namespace vstorm {

struct ImageSet {
  std::uint32_t declared_count = 0;  // image count in the file header
  std::vector<ImageGrid> images;      // values scaled to [-1, 1]
  std::vector<int> labels;            // empty without a labels file
};

/// Reads an IDX image file (magic 0x00000803), scaling bytes v to 2 v / 255 - 1.
/// With a labels file (magic 0x00000801) and `digit`, only that digit is kept.
/// `limit` > 0 stops after that many kept images.
ImageSet load_mnist_idx(const std::filesystem::path& images, const std::filesystem::path& labels = {},
                        std::optional<int> digit = std::nullopt, std::size_t limit = 0);

/// Image count from the header alone.
std::uint32_t idx_image_count(const std::filesystem::path& images);

/// Kept-pixel count used by corrupt_images: round(keep_fraction * pixels).
std::size_t kept_pixel_count(double keep_fraction, std::size_t pixels);

/// Independent fixed-size uniform pixel subsets per image, b = kept pixels +
/// N(0, noise_sd^2). Returns a single-slice dataset with one frame per image
/// and the clean images as ground truth.
KTDataset corrupt_images(const std::vector<ImageGrid>& images, double keep_fraction, double noise_sd,
                         std::uint64_t seed);

}  // namespace vstorm
