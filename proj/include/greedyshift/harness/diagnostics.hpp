#pragma once

// How far estimated importance weights are from the true ones, measured by
// the same statistics that control whether estimated weights can stand in
// for the true weights, each scaled by d_n.

#include <algorithm>
#include <cmath>
#include <cstdint>

#include "greedyshift/evaluation.hpp"
#include "greedyshift/harness/config.hpp"
#include "greedyshift/simulation.hpp"
#include "greedyshift/weighting.hpp"

namespace greedyshift::harness {

struct WeightsDiagnostics {
  double d_n = 0.0;
  double b_n = 0.0;
  double max_weight_deviation = 0.0;  ///< max_t |what_t - w_t| (normalized weights)
  double mean_weight_deviation = 0.0;
  double cross_moment = 0.0;  ///< max_{0<=i<=j<=p} |(1/n) sum (v - vhat) x_i x_j|, x_0 = 1
  double noise_cross = 0.0;   ///< max_{0<=i<=p} |(1/n) sum (v - vhat) x_i eps|
  double noise_variance = 0.0;  ///< |(1/n) sum (v - vhat) eps^2|
  double cross_moment_scaled() const { return cross_moment / d_n; }
  double noise_cross_scaled() const { return noise_cross / d_n; }
};

/// Compares trimmed importance `v` from the true model with `vhat` from
/// `estimate` on one simulated draw.
inline WeightsDiagnostics weights_diagnostics(const Population& pop, const SimulatedDraw& draw,
                                              const ImportanceModel& estimate,
                                              const ScheduleConfig& cfg) {
  const Dataset& data = draw.data;
  const Index n = data.n();
  const Index p = data.p();
  WeightsDiagnostics out;
  out.d_n = compute_dn(n, p, cfg);
  out.b_n = compute_bn(n, p, cfg);

  const Vector v = raw_importance_rows(true_importance(pop), data.x()).cwiseMin(out.b_n);
  const Vector v_hat = raw_importance_rows(estimate, data.x()).cwiseMin(out.b_n);
  const Vector w = v / v.mean();
  const Vector w_hat = v_hat / v_hat.mean();
  const Vector gap = v - v_hat;
  out.max_weight_deviation = (w_hat - w).cwiseAbs().maxCoeff();
  out.mean_weight_deviation = (w_hat - w).cwiseAbs().mean();

  const double inv_n = 1.0 / static_cast<double>(n);
  Matrix xa(n, p + 1);
  xa.col(0).setOnes();
  xa.rightCols(p) = data.x();
  const Matrix weighted = gap.asDiagonal() * xa;
  const Matrix moments = inv_n * (xa.transpose() * weighted);
  out.cross_moment = moments.cwiseAbs().maxCoeff();
  out.noise_cross = inv_n * (xa.transpose() * gap.cwiseProduct(draw.noise)).cwiseAbs().maxCoeff();
  out.noise_variance = std::abs(inv_n * gap.dot(draw.noise.cwiseAbs2()));
  return out;
}

inline json to_json(const WeightsDiagnostics& d) {
  return {{"d_n", d.d_n},
          {"b_n", d.b_n},
          {"max_weight_deviation", d.max_weight_deviation},
          {"mean_weight_deviation", d.mean_weight_deviation},
          {"cross_moment", d.cross_moment},
          {"cross_moment_over_d_n", d.cross_moment_scaled()},
          {"noise_cross", d.noise_cross},
          {"noise_cross_over_d_n", d.noise_cross_scaled()},
          {"noise_variance", d.noise_variance}};
}

}  // namespace greedyshift::harness
