#pragma once

// Random operator families whose normalization makes E[A^T A] = I.

#include <cstdint>
#include <memory>
#include <variant>

#include "vstorm/common/rng.hpp"
#include "vstorm/measurement/operators.hpp"

namespace vstorm {

/// Each pixel kept independently with probability p; scale 1/sqrt(p).
struct BernoulliMaskEnsemble {
  int height = 0;
  int width = 0;
  int channels = 1;
  double keep_probability = 1.0;
};

/// Uniformly random subset of `rows_kept` k-space rows; scale sqrt(height / rows_kept).
/// Coil maps, when present, must satisfy sum_c |S_c|^2 = 1 at every pixel.
struct RandomRowEnsemble {
  int height = 0;
  int width = 0;
  int rows_kept = 0;
  std::shared_ptr<const CoilMaps> coils;
};

using OperatorEnsemble = std::variant<BernoulliMaskEnsemble, RandomRowEnsemble>;

double ensemble_scale(const OperatorEnsemble& e);
OperatorGeometry ensemble_geometry(const OperatorEnsemble& e);

/// One operator from the ensemble.
MeasurementOperator draw(const OperatorEnsemble& e, Rng& rng);

/// max_{j,k} |E_hat[A^T A]_{jk} - delta_jk| over `n_draws` operator draws, probed
/// with the first `probe_dim` real basis vectors (0 or larger than the image
/// dimension probes all of them).
double expectation_identity_estimate(const OperatorEnsemble& e, long n_draws, int probe_dim, std::uint64_t seed);

}  // namespace vstorm
