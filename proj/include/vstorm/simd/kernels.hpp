#pragma once

// Dense double-precision kernels used by every operator and network layer.
//
// Each backend implements the same table; `kernels()` returns the one chosen at
// startup (best available on the running CPU). The scalar table is the
// reference: other backends must agree with it to rounding.

#include <cstddef>
#include <string_view>

namespace vstorm::simd {

enum class Backend { scalar, avx2, neon };

/// C[m x n] += A[m x k] * B[k x n]   (row-major, leading dimensions in elements)
using GemmFn = void (*)(int m, int n, int k, const double* a, int lda, const double* b, int ldb,
                        double* c, int ldc);

using AxpyFn = void (*)(std::size_t n, double alpha, const double* x, double* y);
using DotFn = double (*)(std::size_t n, const double* x, const double* y);

struct KernelTable {
  Backend backend;
  GemmFn gemm_nn;  // C += A B
  GemmFn gemm_tn;  // C += A^T B, A stored k x m
  GemmFn gemm_nt;  // C += A B^T, B stored n x k
  AxpyFn axpy;     // y += alpha x
  DotFn dot;
};

std::string_view backend_name(Backend b);

/// True when the backend is compiled in and the CPU supports it.
bool backend_available(Backend b);

Backend best_backend();

/// Table for a specific backend; throws std::invalid_argument when unavailable.
const KernelTable& table(Backend b);

/// Active table. Defaults to best_backend().
const KernelTable& kernels();

/// Switch the active backend process-wide (tests and benchmarks).
void select_backend(Backend b);

inline void gemm_nn(int m, int n, int k, const double* a, int lda, const double* b, int ldb,
                    double* c, int ldc) {
  kernels().gemm_nn(m, n, k, a, lda, b, ldb, c, ldc);
}
inline void gemm_tn(int m, int n, int k, const double* a, int lda, const double* b, int ldb,
                    double* c, int ldc) {
  kernels().gemm_tn(m, n, k, a, lda, b, ldb, c, ldc);
}
inline void gemm_nt(int m, int n, int k, const double* a, int lda, const double* b, int ldb,
                    double* c, int ldc) {
  kernels().gemm_nt(m, n, k, a, lda, b, ldb, c, ldc);
}
inline void axpy(std::size_t n, double alpha, const double* x, double* y) {
  kernels().axpy(n, alpha, x, y);
}
inline double dot(std::size_t n, const double* x, const double* y) {
  return kernels().dot(n, x, y);
}

namespace detail {
const KernelTable& scalar_table();
const KernelTable* avx2_table();  // nullptr when not compiled in
const KernelTable* neon_table();
}  // namespace detail

}  // namespace vstorm::simd
