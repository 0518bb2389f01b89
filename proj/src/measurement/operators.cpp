#include "vstorm/measurement/operators.hpp"

#include <algorithm>
#include <string>

#include "vstorm/common/errors.hpp"

namespace vstorm {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};

std::string geometry_string(const OperatorGeometry& g) {
  return std::to_string(g.slices) + "x" + std::to_string(g.height) + "x" + std::to_string(g.width) + "x" +
         std::to_string(g.channels);
}

void check_sorted_unique(const std::vector<std::uint32_t>& v, std::uint32_t bound, const char* what) {
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (v[i] >= bound) throw ShapeError(std::string(what) + " index " + std::to_string(v[i]) + " out of bounds");
    if (i > 0 && v[i] <= v[i - 1]) throw ShapeError(std::string(what) + " indices must be sorted and unique");
  }
}

}  // namespace

PixelMaskOperator::PixelMaskOperator(int height, int width, int channels, std::vector<std::uint32_t> kept,
                                     double scale)
    : height_(height), width_(width), channels_(channels), kept_(std::move(kept)), scale_(scale) {
  if (height <= 0 || width <= 0 || (channels != 1 && channels != 2)) throw ShapeError("invalid pixel mask geometry");
  if (!(scale > 0.0)) throw NumericError("pixel mask scale must be positive");
  check_sorted_unique(kept_, static_cast<std::uint32_t>(height * width), "pixel mask");
}

void PixelMaskOperator::apply(std::span<const double> image, std::span<double> out) const {
  const std::size_t plane = static_cast<std::size_t>(height_) * width_;
  for (int c = 0; c < channels_; ++c)
    for (std::size_t i = 0; i < kept_.size(); ++i) out[c * kept_.size() + i] = scale_ * image[c * plane + kept_[i]];
}

void PixelMaskOperator::adjoint(std::span<const double> b, std::span<double> image) const {
  const std::size_t plane = static_cast<std::size_t>(height_) * width_;
  std::fill(image.begin(), image.end(), 0.0);
  for (int c = 0; c < channels_; ++c)
    for (std::size_t i = 0; i < kept_.size(); ++i) image[c * plane + kept_[i]] = scale_ * b[c * kept_.size() + i];
}

SubsampledFourierOperator::SubsampledFourierOperator(int height, int width, std::vector<std::uint32_t> kept_rows,
                                                     double scale, std::shared_ptr<const CoilMaps> coils)
    : height_(height), width_(width), rows_(std::move(kept_rows)), scale_(scale), coils_(std::move(coils)) {
  if (height <= 0 || width <= 0) throw ShapeError("invalid Fourier operator geometry");
  if (!(scale > 0.0)) throw NumericError("Fourier operator scale must be positive");
  check_sorted_unique(rows_, static_cast<std::uint32_t>(height), "k-space row");
  if (coils_ && (coils_->height != height || coils_->width != width || coils_->coils <= 0))
    throw ShapeError("coil maps " + std::to_string(coils_->height) + "x" + std::to_string(coils_->width) +
                     " do not match operator " + std::to_string(height) + "x" + std::to_string(width));
  auto fh = dft_matrix(height);
  fw_ = dft_matrix(width);
  rows_re_.resize(rows_.size() * height);
  rows_im_.resize(rows_.size() * height);
  for (std::size_t r = 0; r < rows_.size(); ++r) {
    std::copy_n(fh->re.begin() + static_cast<std::ptrdiff_t>(rows_[r]) * height, height, rows_re_.begin() + r * height);
    std::copy_n(fh->im.begin() + static_cast<std::ptrdiff_t>(rows_[r]) * height, height, rows_im_.begin() + r * height);
  }
}

void SubsampledFourierOperator::apply(std::span<const double> image, std::span<double> out) const {
  const std::size_t plane = static_cast<std::size_t>(height_) * width_;
  const int m = static_cast<int>(rows_.size());
  const std::size_t block = static_cast<std::size_t>(m) * width_;
  std::vector<double> yre(plane), yim(plane), tre(block), tim(block), scratch;
  const double* xre = image.data();
  const double* xim = image.data() + plane;
  for (int c = 0; c < coil_count(); ++c) {
    const double* sre = xre;
    const double* sim = xim;
    if (coils_) {
      auto cre = coils_->re(c);
      auto cim = coils_->im(c);
      for (std::size_t i = 0; i < plane; ++i) {
        yre[i] = cre[i] * xre[i] - cim[i] * xim[i];
        yim[i] = cre[i] * xim[i] + cim[i] * xre[i];
      }
      sre = yre.data();
      sim = yim.data();
    }
    std::fill(tre.begin(), tre.end(), 0.0);
    std::fill(tim.begin(), tim.end(), 0.0);
    detail::complex_gemm(false, false, false, m, width_, height_, {rows_re_.data(), rows_im_.data(), height_},
                         {sre, sim, width_}, {tre.data(), tim.data(), width_}, scratch);
    double* ore = out.data() + static_cast<std::size_t>(c) * 2 * block;
    double* oim = ore + block;
    std::fill(ore, ore + 2 * block, 0.0);
    detail::complex_gemm(false, false, false, m, width_, width_, {tre.data(), tim.data(), width_},
                         {fw_->re.data(), fw_->im.data(), width_}, {ore, oim, width_}, scratch);
    for (std::size_t i = 0; i < 2 * block; ++i) ore[i] *= scale_;
  }
}

void SubsampledFourierOperator::adjoint(std::span<const double> b, std::span<double> image) const {
  const std::size_t plane = static_cast<std::size_t>(height_) * width_;
  const int m = static_cast<int>(rows_.size());
  const std::size_t block = static_cast<std::size_t>(m) * width_;
  std::vector<double> yre(plane), yim(plane), tre(block), tim(block), scratch;
  double* xre = image.data();
  double* xim = image.data() + plane;
  std::fill(image.begin(), image.end(), 0.0);
  for (int c = 0; c < coil_count(); ++c) {
    const double* bre = b.data() + static_cast<std::size_t>(c) * 2 * block;
    const double* bim = bre + block;
    std::fill(tre.begin(), tre.end(), 0.0);
    std::fill(tim.begin(), tim.end(), 0.0);
    // T = B conj(F_w)
    detail::complex_gemm(false, false, true, m, width_, width_, {bre, bim, width_},
                         {fw_->re.data(), fw_->im.data(), width_}, {tre.data(), tim.data(), width_}, scratch);
    // Y = conj(F_rows)^T T
    std::fill(yre.begin(), yre.end(), 0.0);
    std::fill(yim.begin(), yim.end(), 0.0);
    detail::complex_gemm(true, true, false, height_, width_, m, {rows_re_.data(), rows_im_.data(), height_},
                         {tre.data(), tim.data(), width_}, {yre.data(), yim.data(), width_}, scratch);
    if (coils_) {
      auto cre = coils_->re(c);
      auto cim = coils_->im(c);
      for (std::size_t i = 0; i < plane; ++i) {
        xre[i] += scale_ * (cre[i] * yre[i] + cim[i] * yim[i]);
        xim[i] += scale_ * (cre[i] * yim[i] - cim[i] * yre[i]);
      }
    } else {
      for (std::size_t i = 0; i < plane; ++i) {
        xre[i] += scale_ * yre[i];
        xim[i] += scale_ * yim[i];
      }
    }
  }
}

SliceFourierOperator::SliceFourierOperator(int slice_index, int n_slices, SubsampledFourierOperator inner)
    : slice_(slice_index), n_slices_(n_slices), inner_(std::move(inner)) {
  if (n_slices <= 0 || slice_index < 0 || slice_index >= n_slices)
    throw ShapeError("slice index " + std::to_string(slice_index) + " out of range for " + std::to_string(n_slices) +
                     " slices");
}

OperatorGeometry SliceFourierOperator::geometry() const {
  auto g = inner_.geometry();
  g.slices = n_slices_;
  return g;
}

OperatorGeometry geometry(const MeasurementOperator& op) {
  return std::visit([](const auto& o) { return o.geometry(); }, op);
}

std::size_t measurement_size(const MeasurementOperator& op) {
  return std::visit([](const auto& o) { return o.measurement_size(); }, op);
}

int target_slice(const MeasurementOperator& op) {
  if (const auto* s = std::get_if<SliceFourierOperator>(&op)) return s->slice_index();
  return 0;
}

double operator_scale(const MeasurementOperator& op) {
  return std::visit(overloaded{[](const SliceFourierOperator& o) { return o.inner().scale(); },
                               [](const auto& o) { return o.scale(); }},
                    op);
}

const char* operator_kind_name(const MeasurementOperator& op) {
  return std::visit(overloaded{[](const PixelMaskOperator&) { return "pixel-mask"; },
                               [](const SubsampledFourierOperator&) { return "subsampled-fourier"; },
                               [](const SliceFourierOperator&) { return "slice-fourier"; }},
                    op);
}

void apply_slice(const MeasurementOperator& op, std::span<const double> slice, std::span<double> out) {
  const auto g = geometry(op);
  if (slice.size() != g.slice_size())
    throw ShapeError(std::string(operator_kind_name(op)) + " operator on " + geometry_string(g) +
                     " received a slice of " + std::to_string(slice.size()) + " values");
  if (out.size() != measurement_size(op))
    throw ShapeError(std::string(operator_kind_name(op)) + " output length mismatch");
  std::visit(overloaded{[&](const SliceFourierOperator& o) { o.inner().apply(slice, out); },
                        [&](const auto& o) { o.apply(slice, out); }},
             op);
}

void adjoint_slice(const MeasurementOperator& op, std::span<const double> b, std::span<double> slice) {
  const auto g = geometry(op);
  if (b.size() != measurement_size(op))
    throw ShapeError(std::string(operator_kind_name(op)) + " adjoint expects " +
                     std::to_string(measurement_size(op)) + " measurements, got " + std::to_string(b.size()));
  if (slice.size() != g.slice_size()) throw ShapeError(std::string(operator_kind_name(op)) + " adjoint slice size mismatch");
  std::visit(overloaded{[&](const SliceFourierOperator& o) { o.inner().adjoint(b, slice); },
                        [&](const auto& o) { o.adjoint(b, slice); }},
             op);
}

MeasurementVector apply(const MeasurementOperator& op, const VolumeGrid& x) {
  const auto g = geometry(op);
  if (x.slices != g.slices || x.channels != g.channels || x.height != g.height || x.width != g.width)
    throw ShapeError(std::string(operator_kind_name(op)) + " operator expects " + geometry_string(g) +
                     " input, got " + x.shape_string());
  require_finite(x.values, "operator input");
  MeasurementVector out(measurement_size(op));
  apply_slice(op, x.slice_values(target_slice(op)), out);
  return out;
}

MeasurementVector apply(const MeasurementOperator& op, const ImageGrid& x) {
  const auto g = geometry(op);
  if (g.slices != 1 || x.channels != g.channels || x.height != g.height || x.width != g.width)
    throw ShapeError(std::string(operator_kind_name(op)) + " operator expects " + geometry_string(g) +
                     " input, got image " + x.shape_string());
  require_finite(x.values, "operator input");
  MeasurementVector out(measurement_size(op));
  apply_slice(op, x.values, out);
  return out;
}

VolumeGrid adjoint(const MeasurementOperator& op, std::span<const double> b) {
  const auto g = geometry(op);
  VolumeGrid x(g.slices, g.height, g.width, g.channels);
  adjoint_slice(op, b, x.slice_values(target_slice(op)));
  return x;
}

ImageGrid adjoint_image(const MeasurementOperator& op, std::span<const double> b) {
  const auto g = geometry(op);
  if (g.slices != 1) throw ShapeError("adjoint_image called on a volume operator");
  ImageGrid x(g.height, g.width, g.channels);
  adjoint_slice(op, b, x.values);
  return x;
}

}  // namespace vstorm
