#include "vstorm/measurement/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "vstorm/common/errors.hpp"

namespace vstorm {

double ensemble_scale(const OperatorEnsemble& e) {
  if (const auto* m = std::get_if<BernoulliMaskEnsemble>(&e)) return 1.0 / std::sqrt(m->keep_probability);
  const auto& r = std::get<RandomRowEnsemble>(e);
  return std::sqrt(static_cast<double>(r.height) / r.rows_kept);
}

OperatorGeometry ensemble_geometry(const OperatorEnsemble& e) {
  if (const auto* m = std::get_if<BernoulliMaskEnsemble>(&e)) return {1, m->channels, m->height, m->width};
  const auto& r = std::get<RandomRowEnsemble>(e);
  return {1, 2, r.height, r.width};
}

namespace {

void validate(const OperatorEnsemble& e) {
  if (const auto* m = std::get_if<BernoulliMaskEnsemble>(&e)) {
    if (!(m->keep_probability > 0.0 && m->keep_probability <= 1.0))
      throw UsageError("Bernoulli keep probability must be in (0, 1]");
    return;
  }
  const auto& r = std::get<RandomRowEnsemble>(e);
  if (r.rows_kept <= 0 || r.rows_kept > r.height) throw UsageError("rows_kept must be in [1, height]");
}

std::vector<std::uint32_t> draw_indices(const OperatorEnsemble& e, Rng& rng) {
  std::vector<std::uint32_t> kept;
  if (const auto* m = std::get_if<BernoulliMaskEnsemble>(&e)) {
    std::bernoulli_distribution keep(m->keep_probability);
    const auto n = static_cast<std::uint32_t>(m->height * m->width);
    for (std::uint32_t i = 0; i < n; ++i)
      if (keep(rng)) kept.push_back(i);
    return kept;
  }
  const auto& r = std::get<RandomRowEnsemble>(e);
  // Partial Fisher-Yates: first rows_kept entries form a uniform subset.
  std::vector<std::uint32_t> rows(r.height);
  std::iota(rows.begin(), rows.end(), 0u);
  for (int i = 0; i < r.rows_kept; ++i) {
    std::uniform_int_distribution<int> pick(i, r.height - 1);
    std::swap(rows[i], rows[pick(rng)]);
  }
  kept.assign(rows.begin(), rows.begin() + r.rows_kept);
  std::sort(kept.begin(), kept.end());
  return kept;
}

}  // namespace

MeasurementOperator draw(const OperatorEnsemble& e, Rng& rng) {
  validate(e);
  auto kept = draw_indices(e, rng);
  if (const auto* m = std::get_if<BernoulliMaskEnsemble>(&e))
    return PixelMaskOperator(m->height, m->width, m->channels, std::move(kept), ensemble_scale(e));
  const auto& r = std::get<RandomRowEnsemble>(e);
  return SubsampledFourierOperator(r.height, r.width, std::move(kept), ensemble_scale(e), r.coils);
}

double expectation_identity_estimate(const OperatorEnsemble& e, long n_draws, int probe_dim, std::uint64_t seed) {
  if (n_draws < 1) throw UsageError("n_draws must be at least 1");
  validate(e);
  // A^T A = scale^2 * sum_u [u kept] G_u, where G_u is the Gram matrix of the
  // unit-scale single-unit operator (one pixel or one k-space row). The
  // empirical mean over draws is therefore sum_u w_u G_u with w_u the mean of
  // scale^2 [u kept]; we accumulate w from genuine draws and probe that sum.
  const bool is_mask = std::holds_alternative<BernoulliMaskEnsemble>(e);
  const auto g = ensemble_geometry(e);
  const int units = is_mask ? g.height * g.width : g.height;
  std::vector<long> counts(units, 0);
  Rng rng(derive_seed(seed, {0x45}));
  for (long d = 0; d < n_draws; ++d) {
    auto op = draw(e, rng);
    const auto& kept = is_mask ? std::get<PixelMaskOperator>(op).kept()
                               : std::get<SubsampledFourierOperator>(op).kept_rows();
    for (auto u : kept) ++counts[u];
  }
  const double s2 = std::pow(ensemble_scale(e), 2);
  const int dim = static_cast<int>(g.slice_size());
  const int probes = (probe_dim <= 0 || probe_dim > dim) ? dim : probe_dim;

  std::vector<double> gram(static_cast<std::size_t>(probes) * dim, 0.0);  // column k at k*dim
  std::vector<double> basis(dim), meas, back(dim);
  for (int u = 0; u < units; ++u) {
    if (counts[u] == 0) continue;
    const double w = s2 * static_cast<double>(counts[u]) / static_cast<double>(n_draws);
    MeasurementOperator unit_op =
        is_mask ? MeasurementOperator(PixelMaskOperator(g.height, g.width, g.channels, {static_cast<std::uint32_t>(u)}))
                : MeasurementOperator(SubsampledFourierOperator(g.height, g.width, {static_cast<std::uint32_t>(u)}, 1.0,
                                                                std::get<RandomRowEnsemble>(e).coils));
    meas.assign(measurement_size(unit_op), 0.0);
    for (int k = 0; k < probes; ++k) {
      std::fill(basis.begin(), basis.end(), 0.0);
      basis[k] = 1.0;
      apply_slice(unit_op, basis, meas);
      adjoint_slice(unit_op, meas, back);
      for (int j = 0; j < dim; ++j) gram[static_cast<std::size_t>(k) * dim + j] += w * back[j];
    }
  }
  double worst = 0.0;
  for (int k = 0; k < probes; ++k)
    for (int j = 0; j < dim; ++j)
      worst = std::max(worst, std::abs(gram[static_cast<std::size_t>(k) * dim + j] - (j == k ? 1.0 : 0.0)));
  return worst;
}

}  // namespace vstorm
