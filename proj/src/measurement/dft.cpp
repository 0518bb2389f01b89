#include "vstorm/measurement/dft.hpp"

#include <cmath>
#include <map>
#include <mutex>
#include <numbers>

#include "vstorm/common/errors.hpp"
#include "vstorm/simd/kernels.hpp"

namespace vstorm {

std::shared_ptr<const DftMatrix> dft_matrix(int n) {
  static std::mutex mutex;
  static std::map<int, std::shared_ptr<const DftMatrix>> cache;
  if (n <= 0) throw ShapeError("DFT size must be positive");
  std::lock_guard lock(mutex);
  auto& slot = cache[n];
  if (!slot) {
    auto m = std::make_shared<DftMatrix>();
    m->n = n;
    m->re.resize(static_cast<std::size_t>(n) * n);
    m->im.resize(m->re.size());
    const double norm = 1.0 / std::sqrt(static_cast<double>(n));
    for (int k = 0; k < n; ++k) {
      for (int j = 0; j < n; ++j) {
        // Reduce k*j mod n first so every entry uses an angle in [0, 2 pi).
        const long long r = (static_cast<long long>(k) * j) % n;
        const double angle = -2.0 * std::numbers::pi * static_cast<double>(r) / n;
        m->re[static_cast<std::size_t>(k) * n + j] = norm * std::cos(angle);
        m->im[static_cast<std::size_t>(k) * n + j] = norm * std::sin(angle);
      }
    }
    slot = std::move(m);
  }
  return slot;
}

namespace detail {

void complex_gemm(bool trans_a, bool conj_a, bool conj_b, int m, int n, int k, ComplexView a,
                  ComplexView b, ComplexOut c, std::vector<double>& scratch) {
  const auto& kt = simd::kernels();
  const auto gemm = trans_a ? kt.gemm_tn : kt.gemm_nn;
  const double sa = conj_a ? -1.0 : 1.0;
  const double sb = conj_b ? -1.0 : 1.0;
  const std::size_t mn = static_cast<std::size_t>(m) * n;
  scratch.assign(mn, 0.0);
  // re += Ar Br - sa sb Ai Bi
  gemm(m, n, k, a.re, a.ld, b.re, b.ld, c.re, c.ld);
  gemm(m, n, k, a.im, a.ld, b.im, b.ld, scratch.data(), n);
  for (int i = 0; i < m; ++i) kt.axpy(n, -sa * sb, scratch.data() + static_cast<std::size_t>(i) * n, c.re + static_cast<std::size_t>(i) * c.ld);
  // im += sb Ar Bi + sa Ai Br
  if (sa == 1.0 && sb == 1.0) {
    gemm(m, n, k, a.re, a.ld, b.im, b.ld, c.im, c.ld);
    gemm(m, n, k, a.im, a.ld, b.re, b.ld, c.im, c.ld);
    return;
  }
  scratch.assign(mn, 0.0);
  gemm(m, n, k, a.re, a.ld, b.im, b.ld, scratch.data(), n);
  for (int i = 0; i < m; ++i) kt.axpy(n, sb, scratch.data() + static_cast<std::size_t>(i) * n, c.im + static_cast<std::size_t>(i) * c.ld);
  scratch.assign(mn, 0.0);
  gemm(m, n, k, a.im, a.ld, b.re, b.ld, scratch.data(), n);
  for (int i = 0; i < m; ++i) kt.axpy(n, sa, scratch.data() + static_cast<std::size_t>(i) * n, c.im + static_cast<std::size_t>(i) * c.ld);
}

}  // namespace detail

namespace {

ImageGrid transform(const ImageGrid& img, bool inverse) {
  if (!img.is_complex()) throw ShapeError("dft2 requires a two-channel image, got " + img.shape_string());
  require_finite(img.values, "dft2 input");
  const int h = img.height, w = img.width;
  auto fh = dft_matrix(h);
  auto fw = dft_matrix(w);
  std::vector<double> scratch;
  std::vector<double> tre(static_cast<std::size_t>(h) * w, 0.0), tim(tre.size(), 0.0);
  // T = F_h X ; Y = T F_w (F symmetric). Inverse uses conj(F).
  detail::complex_gemm(false, inverse, false, h, w, h, {fh->re.data(), fh->im.data(), h},
                       {img.channel(0).data(), img.channel(1).data(), w}, {tre.data(), tim.data(), w}, scratch);
  ImageGrid out(h, w, 2);
  detail::complex_gemm(false, false, inverse, h, w, w, {tre.data(), tim.data(), w},
                       {fw->re.data(), fw->im.data(), w}, {out.channel(0).data(), out.channel(1).data(), w},
                       scratch);
  return out;
}

}  // namespace

ImageGrid dft2_unitary(const ImageGrid& img) { return transform(img, false); }
ImageGrid idft2_unitary(const ImageGrid& img) { return transform(img, true); }

}  // namespace vstorm
