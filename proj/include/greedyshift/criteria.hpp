#pragma once

// Information criteria evaluated along a greedy path.
//
//   HDIWIC(J) = (1 + s_a (#J + 1) d_n^2) sigma2_w(J)   weighted residual variance
//   HDIC(J)   = (1 + s_a (#J + 1) c_n^2) sigma2(J)     unweighted residual variance
//
// The selected iteration count is the first minimizer over k = 1..K.

#include <vector>

#include "greedyshift/error.hpp"
#include "greedyshift/greedy_path.hpp"

namespace greedyshift {

struct CriterionTrace {
  std::vector<double> values;
  double penalty_rate = 0.0;  ///< squared rate: d_n^2 or c_n^2
  double s_a = 0.0;
  Index selected_k = 0;       ///< 1-based
};

inline double penalized_variance(double sigma2, Index model_size, double rate_squared, double s_a) {
  detail::require(sigma2 >= 0.0, "residual variance must be non-negative");
  detail::require(model_size >= 1, "model size must be at least 1");
  return (1.0 + s_a * static_cast<double>(model_size + 1) * rate_squared) * sigma2;
}

inline double hdiwic_value(double sigma2, Index model_size, double d_n, double s_a) {
  return penalized_variance(sigma2, model_size, d_n * d_n, s_a);
}

inline double hdic_value(double sigma2_tr, Index model_size, double c_n, double s_a) {
  return penalized_variance(sigma2_tr, model_size, c_n * c_n, s_a);
}

/// Criterion values over a residual-variance trace whose k-th entry belongs
/// to a model with k indices.
inline CriterionTrace select_k(const std::vector<double>& sigma2_trace, double penalty_rate,
                               double s_a) {
  detail::require(!sigma2_trace.empty(), "cannot select from an empty path");
  CriterionTrace t;
  t.penalty_rate = penalty_rate;
  t.s_a = s_a;
  t.values.reserve(sigma2_trace.size());
  for (std::size_t k = 0; k < sigma2_trace.size(); ++k)
    t.values.push_back(
        penalized_variance(sigma2_trace[k], static_cast<Index>(k + 1), penalty_rate, s_a));
  std::size_t best = 0;
  for (std::size_t k = 1; k < t.values.size(); ++k)
    if (t.values[k] < t.values[best]) best = k;
  t.selected_k = static_cast<Index>(best + 1);
  return t;
}

inline CriterionTrace select_k(const GreedyPath& path, double penalty_rate, double s_a) {
  return select_k(path.sigma2_trace, penalty_rate, s_a);
}

}  // namespace greedyshift
