#pragma once

#include <memory>
#include <vector>

#include "vstorm/measurement/grid.hpp"

namespace vstorm {

/// Unitary DFT matrix F[k][j] = exp(-2 pi i k j / n) / sqrt(n), planar storage.
struct DftMatrix {
  int n = 0;
  std::vector<double> re;
  std::vector<double> im;
};

/// Shared, cached matrix for size n (thread-safe).
std::shared_ptr<const DftMatrix> dft_matrix(int n);

/// Unitary 2D DFT of a two-channel (complex) image.
ImageGrid dft2_unitary(const ImageGrid& img);
ImageGrid idft2_unitary(const ImageGrid& img);

namespace detail {

/// Planar complex product C += op(A) op(B) built on the real GEMM kernels.
///   trans_a: A stored k x m and used transposed.
///   conj_a / conj_b: conjugate the operand.
/// `scratch` is resized as needed.
struct ComplexView {
  const double* re;
  const double* im;
  int ld;
};
struct ComplexOut {
  double* re;
  double* im;
  int ld;
};
void complex_gemm(bool trans_a, bool conj_a, bool conj_b, int m, int n, int k, ComplexView a,
                  ComplexView b, ComplexOut c, std::vector<double>& scratch);

}  // namespace detail
}  // namespace vstorm
