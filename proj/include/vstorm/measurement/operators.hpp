#pragma once

// Linear measurement operators with exact adjoints.
//
// Every operator is immutable after construction. Measurement vectors are
// flat real arrays; complex measurements are stored as a real block followed
// by an imaginary block per coil.

#include <cstdint>
#include <memory>
#include <span>
#include <variant>
#include <vector>

#include "vstorm/measurement/dft.hpp"
#include "vstorm/measurement/grid.hpp"

namespace vstorm {

using MeasurementVector = std::vector<double>;

/// Shape an operator acts on. slices == 1 for 2D operators.
struct OperatorGeometry {
  int slices = 1;
  int channels = 1;
  int height = 0;
  int width = 0;

  std::size_t slice_size() const { return static_cast<std::size_t>(channels) * height * width; }
  bool operator==(const OperatorGeometry&) const = default;
};

/// Keeps a subset of pixels (all channels) and multiplies them by `scale`.
class PixelMaskOperator {
 public:
  PixelMaskOperator(int height, int width, int channels, std::vector<std::uint32_t> kept, double scale = 1.0);

  OperatorGeometry geometry() const { return {1, channels_, height_, width_}; }
  const std::vector<std::uint32_t>& kept() const { return kept_; }
  double scale() const { return scale_; }
  std::size_t measurement_size() const { return kept_.size() * static_cast<std::size_t>(channels_); }

  void apply(std::span<const double> image, std::span<double> out) const;
  /// Overwrites `image`.
  void adjoint(std::span<const double> b, std::span<double> image) const;

 private:
  int height_, width_, channels_;
  std::vector<std::uint32_t> kept_;
  double scale_;
};

/// Smooth complex coil sensitivities, planar [coil][re|im][y][x].
struct CoilMaps {
  int coils = 0;
  int height = 0;
  int width = 0;
  std::vector<double> values;

  std::span<const double> re(int c) const {
    return std::span(values).subspan(static_cast<std::size_t>(2 * c) * height * width,
                                     static_cast<std::size_t>(height) * width);
  }
  std::span<const double> im(int c) const {
    return std::span(values).subspan(static_cast<std::size_t>(2 * c + 1) * height * width,
                                     static_cast<std::size_t>(height) * width);
  }
};

/// scale * RowRestrict(F2D(coil_c * x)) for each coil (one uniform coil when none given).
class SubsampledFourierOperator {
 public:
  SubsampledFourierOperator(int height, int width, std::vector<std::uint32_t> kept_rows, double scale = 1.0,
                            std::shared_ptr<const CoilMaps> coils = nullptr);

  OperatorGeometry geometry() const { return {1, 2, height_, width_}; }
  const std::vector<std::uint32_t>& kept_rows() const { return rows_; }
  double scale() const { return scale_; }
  const std::shared_ptr<const CoilMaps>& coil_maps() const { return coils_; }
  int coil_count() const { return coils_ ? coils_->coils : 1; }
  std::size_t measurement_size() const {
    return static_cast<std::size_t>(coil_count()) * 2 * rows_.size() * static_cast<std::size_t>(width_);
  }

  void apply(std::span<const double> image, std::span<double> out) const;
  void adjoint(std::span<const double> b, std::span<double> image) const;

 private:
  int height_, width_;
  std::vector<std::uint32_t> rows_;
  double scale_;
  std::shared_ptr<const CoilMaps> coils_;
  std::shared_ptr<const DftMatrix> fw_;
  std::vector<double> rows_re_, rows_im_;  // F_h restricted to kept rows, m x height
};

/// Extracts slice z of a volume and measures it with `inner`.
class SliceFourierOperator {
 public:
  SliceFourierOperator(int slice_index, int n_slices, SubsampledFourierOperator inner);

  OperatorGeometry geometry() const;
  int slice_index() const { return slice_; }
  int slice_count() const { return n_slices_; }
  const SubsampledFourierOperator& inner() const { return inner_; }
  std::size_t measurement_size() const { return inner_.measurement_size(); }

 private:
  int slice_;
  int n_slices_;
  SubsampledFourierOperator inner_;
};

using MeasurementOperator = std::variant<PixelMaskOperator, SubsampledFourierOperator, SliceFourierOperator>;

OperatorGeometry geometry(const MeasurementOperator& op);
std::size_t measurement_size(const MeasurementOperator& op);
/// Slice the operator reads (0 for 2D operators).
int target_slice(const MeasurementOperator& op);
double operator_scale(const MeasurementOperator& op);
const char* operator_kind_name(const MeasurementOperator& op);

MeasurementVector apply(const MeasurementOperator& op, const ImageGrid& x);
MeasurementVector apply(const MeasurementOperator& op, const VolumeGrid& x);
VolumeGrid adjoint(const MeasurementOperator& op, std::span<const double> b);
/// Adjoint for 2D operators, returned as an image.
ImageGrid adjoint_image(const MeasurementOperator& op, std::span<const double> b);

/// Low-level forms acting on the target slice only (channels x height x width values).
void apply_slice(const MeasurementOperator& op, std::span<const double> slice, std::span<double> out);
void adjoint_slice(const MeasurementOperator& op, std::span<const double> b, std::span<double> slice);

}  // namespace vstorm
