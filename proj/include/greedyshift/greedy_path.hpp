#pragma once

// Importance-weighted orthogonal greedy algorithm. With unit weights this is
// plain OGA (orthogonal matching pursuit with an intercept).
//
// Each step picks the covariate with the largest absolute weighted
// correlation between its centered column and the current residual,
//
//     |(1/n) sum_t w_t (x_tj - mu_j) r_t| / sqrt(gram_jj),
//
// then refits weighted least squares on everything selected so far.

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "greedyshift/error.hpp"
#include "greedyshift/model_core.hpp"

namespace greedyshift {

/// Columns whose weighted variance falls below this are never selected.
inline constexpr double kMinColumnVariance = 1e-12;

/// The Gram factor is rebuilt from scratch every this many steps.
inline constexpr Index kRefactorInterval = 25;

enum class Truncation { none, clamped, singular, exhausted };

inline const char* to_string(Truncation t) {
  switch (t) {
    case Truncation::none: return "none";
    case Truncation::clamped: return "clamped";
    case Truncation::singular: return "singular";
    case Truncation::exhausted: return "exhausted";
  }
  return "unknown";
}

struct GreedyPath {
  std::vector<IndexSet> models;  ///< models[k] has k+1 indices and extends models[k-1]
  std::vector<FitResult> fits;
  std::vector<double> sigma2_trace;
  bool weighted = true;
  Index requested_steps = 0;
  Truncation truncation = Truncation::none;
  std::string truncation_detail;

  std::size_t size() const noexcept { return models.size(); }
  bool empty() const noexcept { return models.empty(); }
  /// Selection order; equal to models.back().
  const IndexSet& order() const { return models.back(); }
};

namespace detail {

/// Argmax of the selection statistic over eligible columns, smallest index on
/// ties. `weighted_residual` is W^{1/2} r.
inline std::optional<Index> select_column(const WeightedDesign& d,
                                          const std::vector<char>& eligible,
                                          const Vector& weighted_residual) {
  const Vector inner = d.xc.transpose() * weighted_residual;
  std::optional<Index> best;
  double best_score = -1.0;
  const double inv_n = 1.0 / static_cast<double>(d.n);
  for (Index j = 0; j < inner.size(); ++j) {
    if (!eligible[static_cast<std::size_t>(j)]) continue;
    const double score = std::abs(inv_n * inner(j)) / std::sqrt(d.col_var(j));
    if (score > best_score) {
      best_score = score;
      best = j;
    }
  }
  return best;
}

inline std::vector<char> eligible_columns(const WeightedDesign& d) {
  std::vector<char> eligible(static_cast<std::size_t>(d.col_var.size()));
  for (Index j = 0; j < d.col_var.size(); ++j)
    eligible[static_cast<std::size_t>(j)] = d.col_var(j) >= kMinColumnVariance;
  return eligible;
}

}  // namespace detail

/// One selection step given the raw residual r = y - yhat of the current fit.
/// Returns nullopt when no eligible column remains.
inline std::optional<Index> greedy_step(const Dataset& data, const WeightVector& w,
                                        const IndexSet& current, const Vector& residual) {
  detail::require(residual.size() == data.n(), "residual length does not match dataset rows");
  const WeightedDesign d(data, w);
  std::vector<char> eligible = detail::eligible_columns(d);
  for (Index j : current) {
    detail::require(j >= 0 && j < data.p(), "current model index out of range");
    eligible[static_cast<std::size_t>(j)] = 0;
  }
  return detail::select_column(d, eligible, d.sqrt_w.cwiseProduct(residual));
}

/// Runs up to k_max greedy steps. Stops early, recording the reason, when the
/// next model is singular or no candidate column is left.
inline GreedyPath build_path(const Dataset& data, const WeightVector& w, Index k_max) {
  detail::require(k_max >= 1, "k_max must be at least 1");
  const WeightedDesign d(data, w);
  const double inv_n = 1.0 / static_cast<double>(d.n);

  GreedyPath path;
  path.weighted = !w.is_uniform();
  path.requested_steps = k_max;
  const Index limit = max_path_length(data.n(), data.p());
  Index steps = k_max;
  if (k_max > limit) {
    steps = limit;
    path.truncation = Truncation::clamped;
    path.truncation_detail = "k_max " + std::to_string(k_max) + " clamped to min(p, n-2) = " +
                             std::to_string(limit);
  }

  std::vector<char> eligible = detail::eligible_columns(d);
  IndexSet model;
  model.reserve(static_cast<std::size_t>(steps));
  IncrementalCholesky chol(steps);
  Vector rhs(steps);
  Vector residual = d.yc;

  auto extend = [&](IncrementalCholesky& c, Index pos, Index j) {
    Vector cross(pos);
    for (Index r = 0; r < pos; ++r)
      cross(r) = inv_n * d.xc.col(model[static_cast<std::size_t>(r)]).dot(d.xc.col(j));
    return c.extend(cross, d.col_var(j));
  };

  for (Index k = 0; k < steps; ++k) {
    const auto next = detail::select_column(d, eligible, residual);
    if (!next) {
      path.truncation = Truncation::exhausted;
      path.truncation_detail = "no eligible covariate left after " + std::to_string(k) + " steps";
      break;
    }
    const Index j = *next;
    bool ok = true;
    if (k > 0 && k % kRefactorInterval == 0) {
      IncrementalCholesky fresh(steps);
      for (Index i = 0; i < k && ok; ++i) ok = extend(fresh, i, model[static_cast<std::size_t>(i)]);
      if (ok) chol = std::move(fresh);
    }
    ok = ok && extend(chol, k, j);
    if (!ok) {
      IndexSet bad = model;
      bad.push_back(j);
      path.truncation = Truncation::singular;
      path.truncation_detail = "weighted Gram submatrix singular at step " + std::to_string(k + 1) +
                               " for model " + detail::format_model(bad);
      break;
    }
    model.push_back(j);
    eligible[static_cast<std::size_t>(j)] = 0;
    rhs(k) = inv_n * d.xc.col(j).dot(d.yc);

    FitResult fit;
    fit.model = model;
    fit.weighted = path.weighted;
    fit.beta = chol.solve(rhs.head(k + 1));
    residual = d.yc;
    double shift = 0.0;
    for (Index i = 0; i <= k; ++i) {
      const Index c = model[static_cast<std::size_t>(i)];
      residual.noalias() -= fit.beta(i) * d.xc.col(c);
      shift += fit.beta(i) * d.mu_x(c);
    }
    fit.alpha = d.mu_y - shift;
    const double sigma2 = inv_n * residual.squaredNorm();
    fit.sigma2 = sigma2;

    path.models.push_back(model);
    path.fits.push_back(std::move(fit));
    path.sigma2_trace.push_back(sigma2);
  }
  return path;
}

}  // namespace greedyshift
