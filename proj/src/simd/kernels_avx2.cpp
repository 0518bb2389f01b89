// Compiled with -mavx2 -mfma; only reached after a runtime CPU check.
#include "vstorm/simd/kernels.hpp"

#if defined(__x86_64__) || defined(_M_X64)
#include <immintrin.h>

namespace vstorm::simd::detail {
namespace {

inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

// Shared register-blocked kernel for C += op(A) B with B rows contiguous.
// Blocks of 4 rows x 8 columns stay in registers across the whole k loop.
template <bool TransA>
void gemm_xn(int m, int n, int k, const double* a, int lda, const double* b, int ldb, double* c,
             int ldc) {
  auto a_at = [&](int i, int p) {
    return TransA ? a[static_cast<std::ptrdiff_t>(p) * lda + i]
                  : a[static_cast<std::ptrdiff_t>(i) * lda + p];
  };
  const int n8 = n - n % 8;
  const int n4 = n - n % 4;
  int i = 0;
  for (; i + 4 <= m; i += 4) {
    int j = 0;
    for (; j < n8; j += 8) {
      __m256d acc[4][2];
      for (auto& r : acc) r[0] = r[1] = _mm256_setzero_pd();
      for (int p = 0; p < k; ++p) {
        const double* bp = b + static_cast<std::ptrdiff_t>(p) * ldb + j;
        const __m256d b0 = _mm256_loadu_pd(bp);
        const __m256d b1 = _mm256_loadu_pd(bp + 4);
        for (int r = 0; r < 4; ++r) {
          const __m256d av = _mm256_broadcast_sd(&(TransA ? a[static_cast<std::ptrdiff_t>(p) * lda + i + r]
                                                          : a[static_cast<std::ptrdiff_t>(i + r) * lda + p]));
          acc[r][0] = _mm256_fmadd_pd(av, b0, acc[r][0]);
          acc[r][1] = _mm256_fmadd_pd(av, b1, acc[r][1]);
        }
      }
      for (int r = 0; r < 4; ++r) {
        double* cr = c + static_cast<std::ptrdiff_t>(i + r) * ldc + j;
        _mm256_storeu_pd(cr, _mm256_add_pd(_mm256_loadu_pd(cr), acc[r][0]));
        _mm256_storeu_pd(cr + 4, _mm256_add_pd(_mm256_loadu_pd(cr + 4), acc[r][1]));
      }
    }
    for (; j < n4; j += 4) {
      __m256d acc[4] = {_mm256_setzero_pd(), _mm256_setzero_pd(), _mm256_setzero_pd(),
                        _mm256_setzero_pd()};
      for (int p = 0; p < k; ++p) {
        const __m256d bv = _mm256_loadu_pd(b + static_cast<std::ptrdiff_t>(p) * ldb + j);
        for (int r = 0; r < 4; ++r) acc[r] = _mm256_fmadd_pd(_mm256_set1_pd(a_at(i + r, p)), bv, acc[r]);
      }
      for (int r = 0; r < 4; ++r) {
        double* cr = c + static_cast<std::ptrdiff_t>(i + r) * ldc + j;
        _mm256_storeu_pd(cr, _mm256_add_pd(_mm256_loadu_pd(cr), acc[r]));
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
    int j = 0;
    for (; j < n8; j += 8) {
      __m256d acc0 = _mm256_setzero_pd(), acc1 = _mm256_setzero_pd();
      for (int p = 0; p < k; ++p) {
        const double* bp = b + static_cast<std::ptrdiff_t>(p) * ldb + j;
        const __m256d av = _mm256_set1_pd(a_at(i, p));
        acc0 = _mm256_fmadd_pd(av, _mm256_loadu_pd(bp), acc0);
        acc1 = _mm256_fmadd_pd(av, _mm256_loadu_pd(bp + 4), acc1);
      }
      _mm256_storeu_pd(ci + j, _mm256_add_pd(_mm256_loadu_pd(ci + j), acc0));
      _mm256_storeu_pd(ci + j + 4, _mm256_add_pd(_mm256_loadu_pd(ci + j + 4), acc1));
    }
    for (; j < n; ++j) {
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
  __m256d acc0 = _mm256_setzero_pd(), acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4), acc1);
  }
  if (i + 4 <= n) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
    i += 4;
  }
  double s = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) s += x[i] * y[i];
  return s;
}

void gemm_nt(int m, int n, int k, const double* a, int lda, const double* b, int ldb, double* c,
             int ldc) {
  const int k4 = k - k % 4;
  for (int i = 0; i < m; ++i) {
    const double* ai = a + static_cast<std::ptrdiff_t>(i) * lda;
    double* ci = c + static_cast<std::ptrdiff_t>(i) * ldc;
    int j = 0;
    for (; j + 4 <= n; j += 4) {
      const double* bj[4];
      for (int r = 0; r < 4; ++r) bj[r] = b + static_cast<std::ptrdiff_t>(j + r) * ldb;
      __m256d acc[4] = {_mm256_setzero_pd(), _mm256_setzero_pd(), _mm256_setzero_pd(),
                        _mm256_setzero_pd()};
      for (int p = 0; p < k4; p += 4) {
        const __m256d av = _mm256_loadu_pd(ai + p);
        for (int r = 0; r < 4; ++r) acc[r] = _mm256_fmadd_pd(av, _mm256_loadu_pd(bj[r] + p), acc[r]);
      }
      for (int r = 0; r < 4; ++r) {
        double s = hsum(acc[r]);
        for (int p = k4; p < k; ++p) s += ai[p] * bj[r][p];
        ci[j + r] += s;
      }
    }
    for (; j < n; ++j) ci[j] += dot(static_cast<std::size_t>(k), ai, b + static_cast<std::ptrdiff_t>(j) * ldb);
  }
}

void axpy(std::size_t n, double alpha, const double* x, double* y) {
  const __m256d av = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(av, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

}  // namespace

const KernelTable* avx2_table() {
  static const KernelTable t{Backend::avx2, gemm_nn, gemm_tn, gemm_nt, axpy, dot};
  return &t;
}

}  // namespace vstorm::simd::detail

#else

namespace vstorm::simd::detail {
const KernelTable* avx2_table() { return nullptr; }
}  // namespace vstorm::simd::detail

#endif
