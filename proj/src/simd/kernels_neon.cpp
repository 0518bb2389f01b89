#include "vstorm/simd/kernels.hpp"

#if defined(__aarch64__)
#include <arm_neon.h>

namespace vstorm::simd::detail {
namespace {

// 4 rows x 4 columns per block (two float64x2 lanes per row).
template <bool TransA>
void gemm_xn(int m, int n, int k, const double* a, int lda, const double* b, int ldb, double* c,
             int ldc) {
  auto a_at = [&](int i, int p) {
    return TransA ? a[static_cast<std::ptrdiff_t>(p) * lda + i]
                  : a[static_cast<std::ptrdiff_t>(i) * lda + p];
  };
  const int n4 = n - n % 4;
  int i = 0;
  for (; i + 4 <= m; i += 4) {
    int j = 0;
    for (; j < n4; j += 4) {
      float64x2_t acc[4][2];
      for (auto& r : acc) r[0] = r[1] = vdupq_n_f64(0.0);
      for (int p = 0; p < k; ++p) {
        const double* bp = b + static_cast<std::ptrdiff_t>(p) * ldb + j;
        const float64x2_t b0 = vld1q_f64(bp);
        const float64x2_t b1 = vld1q_f64(bp + 2);
        for (int r = 0; r < 4; ++r) {
          const float64x2_t av = vdupq_n_f64(a_at(i + r, p));
          acc[r][0] = vfmaq_f64(acc[r][0], av, b0);
          acc[r][1] = vfmaq_f64(acc[r][1], av, b1);
        }
      }
      for (int r = 0; r < 4; ++r) {
        double* cr = c + static_cast<std::ptrdiff_t>(i + r) * ldc + j;
        vst1q_f64(cr, vaddq_f64(vld1q_f64(cr), acc[r][0]));
        vst1q_f64(cr + 2, vaddq_f64(vld1q_f64(cr + 2), acc[r][1]));
      }
    }
    for (; j < n; ++j) {
      for (int r = 0; r < 4; ++r) {
        double acc = 0.0;
        for (int p = 0; p < k; ++p) acc += a_at(i + r, p) * b[static_cast<std::ptrdiff_t>(p) * ldb + j];
        c[static_cast<std::ptrdiff_t>(i + r) * ldc + j] += acc;
      }
    }
  }
  for (; i < m; ++i) {
    double* ci = c + static_cast<std::ptrdiff_t>(i) * ldc;
    for (int j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int p = 0; p < k; ++p) acc += a_at(i, p) * b[static_cast<std::ptrdiff_t>(p) * ldb + j];
      ci[j] += acc;
    }
  }
}

void gemm_nn(int m, int n, int k, const double* a, int lda, const double* b, int ldb, double* c,
             int ldc) {
  gemm_xn<false>(m, n, k, a, lda, b, ldb, c, ldc);
}

void gemm_tn(int m, int n, int k, const double* a, int lda, const double* b, int ldb, double* c,
             int ldc) {
  gemm_xn<true>(m, n, k, a, lda, b, ldb, c, ldc);
}

double dot(std::size_t n, const double* x, const double* y) {
  float64x2_t acc0 = vdupq_n_f64(0.0), acc1 = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    acc0 = vfmaq_f64(acc0, vld1q_f64(x + i), vld1q_f64(y + i));
    acc1 = vfmaq_f64(acc1, vld1q_f64(x + i + 2), vld1q_f64(y + i + 2));
  }
  double s = vaddvq_f64(vaddq_f64(acc0, acc1));
  for (; i < n; ++i) s += x[i] * y[i];
  return s;
}

void gemm_nt(int m, int n, int k, const double* a, int lda, const double* b, int ldb, double* c,
             int ldc) {
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      c[static_cast<std::ptrdiff_t>(i) * ldc + j] +=
          dot(static_cast<std::size_t>(k), a + static_cast<std::ptrdiff_t>(i) * lda,
              b + static_cast<std::ptrdiff_t>(j) * ldb);
}

void axpy(std::size_t n, double alpha, const double* x, double* y) {
  const float64x2_t av = vdupq_n_f64(alpha);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(y + i, vfmaq_f64(vld1q_f64(y + i), av, vld1q_f64(x + i)));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

}  // namespace

const KernelTable* neon_table() {
  static const KernelTable t{Backend::neon, gemm_nn, gemm_tn, gemm_nt, axpy, dot};
  return &t;
}

}  // namespace vstorm::simd::detail

#else

namespace vstorm::simd::detail {
const KernelTable* neon_table() { return nullptr; }
}  // namespace vstorm::simd::detail

#endif
