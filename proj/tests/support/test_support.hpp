#pragma once

// Shared helpers for unit and acceptance tests: random inputs and the
// central finite-difference oracle. Nothing here calls library gradients.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <vector>

namespace vstorm::testing {

inline std::vector<double> random_vector(std::size_t n, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

inline double inner(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm2(std::span<const double> a) { return std::sqrt(inner(a, a)); }

/// Central differences of f around x, coordinate by coordinate.
inline std::vector<double> central_differences(const std::function<double(std::span<const double>)>& f,
                                               std::vector<double> x, double step,
                                               std::span<const std::size_t> coords = {}) {
  std::vector<std::size_t> all;
  if (coords.empty()) {
    all.resize(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) all[i] = i;
    coords = all;
  }
  std::vector<double> g(coords.size());
  for (std::size_t n = 0; n < coords.size(); ++n) {
    const std::size_t i = coords[n];
    const double x0 = x[i];
    x[i] = x0 + step;
    const double fp = f(x);
    x[i] = x0 - step;
    const double fm = f(x);
    x[i] = x0;
    g[n] = (fp - fm) / (2.0 * step);
  }
  return g;
}

/// Worst per-coordinate relative error. Coordinates whose magnitude is below
/// `floor_fraction` of the largest analytic entry are compared against that
/// floor instead of their own (vanishing) magnitude.
inline double max_relative_error(std::span<const double> analytic, std::span<const double> numeric,
                                 double floor_fraction = 1e-3) {
  double scale = 0.0;
  for (double a : analytic) scale = std::max(scale, std::abs(a));
  const double floor = std::max(floor_fraction * scale, 1e-300);
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric[i]), floor});
    worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / denom);
  }
  return worst;
}

}  // namespace vstorm::testing
