#pragma once

// Synthetic covariate-shift regression problems.
//
// Training inputs are N(0, S) with S the AR(1) correlation matrix
// S_ij = rho^|i-j|. The test law changes only the marginal of x_0, to
// N(shift_mean, 1 + shift_cov), and keeps the conditional law of the other
// coordinates given x_0. With u = S e_0 (so u_j = rho^j) that gives
//
//     mu_te = shift_mean * u,    Sigma_te = S + shift_cov * u u^T,
//
// and the density ratio depends on x_0 alone. Coefficients decay
// polynomially, beta_j proportional to j^-(xi+1) (1-based j).

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>

#include <Eigen/Dense>

#include "greedyshift/error.hpp"
#include "greedyshift/evaluation.hpp"
#include "greedyshift/model_core.hpp"
#include "greedyshift/random.hpp"

namespace greedyshift {

inline constexpr double kArCorrelation = 0.3;

enum class WeightMode { known, estimated };

inline const char* to_string(WeightMode m) {
  return m == WeightMode::known ? "known" : "estimated";
}

inline WeightMode parse_weight_mode(const std::string& s) {
  if (s == "known") return WeightMode::known;
  if (s == "estimated") return WeightMode::estimated;
  throw ValidationError("unknown weight_mode '" + s + "'");
}

struct ScenarioConfig {
  Index n = 200;
  Index p = 200;
  double xi = 1.0;
  double shift_mean = 0.5;
  double shift_cov = 0.2;
  double noise_sd = 1.0;
  double misspec_amplitude = 0.0;
  Misspec misspec_kind = Misspec::quadratic;
  std::uint64_t seed = 1;
  WeightMode weight_mode = WeightMode::known;
  double q_declared = 2.0;
  double alpha = 1.0;
  double beta_norm = 5.0;
  Index n_test_inputs = 0;  ///< size of the test-input block; 0 means n
  std::optional<double> c_diff;

  void validate() const {
    detail::require(n >= 10, "scenario: n must be at least 10");
    detail::require(p >= 2, "scenario: p must be at least 2");
    detail::require(std::isfinite(xi) && xi >= 0.0, "scenario: xi must be non-negative");
    detail::require(std::isfinite(noise_sd) && noise_sd > 0.0, "scenario: noise_sd must be positive");
    detail::require(std::isfinite(shift_mean), "scenario: shift_mean must be finite");
    detail::require(std::isfinite(shift_cov) && shift_cov > -1.0,
                    "scenario: shift_cov must exceed -1 (test variance of x_0 must stay positive)");
    detail::require(std::isfinite(misspec_amplitude), "scenario: misspec_amplitude must be finite");
    detail::require(std::isfinite(q_declared) && q_declared > 0.0,
                    "scenario: q_declared must be positive");
    detail::require(std::isfinite(beta_norm) && beta_norm > 0.0, "scenario: beta_norm must be positive");
    detail::require(n_test_inputs >= 0, "scenario: n_test_inputs must be non-negative");
  }

  Index test_inputs() const { return n_test_inputs > 0 ? n_test_inputs : n; }
};

/// beta_j proportional to j^-(xi+1), scaled to the given Euclidean norm.
inline Vector decaying_coefficients(Index p, double xi, double norm) {
  Vector b(p);
  for (Index j = 0; j < p; ++j) b(j) = std::pow(static_cast<double>(j + 1), -(xi + 1.0));
  return b * (norm / b.norm());
}

inline Population make_population(const ScenarioConfig& cfg) {
  cfg.validate();
  const Index p = cfg.p;
  const double rho = kArCorrelation;

  Population pop;
  pop.alpha = cfg.alpha;
  pop.beta = decaying_coefficients(p, cfg.xi, cfg.beta_norm);
  pop.noise_sd = cfg.noise_sd;
  pop.misspec = cfg.misspec_amplitude != 0.0 ? cfg.misspec_kind : Misspec::none;
  pop.misspec_amplitude = cfg.misspec_amplitude;
  pop.c_diff = cfg.c_diff;

  Vector u(p);
  for (Index j = 0; j < p; ++j) u(j) = std::pow(rho, static_cast<double>(j));
  pop.cov_tr.resize(p, p);
  for (Index i = 0; i < p; ++i)
    for (Index j = 0; j < p; ++j) pop.cov_tr(i, j) = u(std::abs(i - j));
  pop.mu_tr = Vector::Zero(p);
  pop.mu_te = cfg.shift_mean * u;
  pop.cov_te = pop.cov_tr;
  pop.cov_te.selfadjointView<Eigen::Lower>().rankUpdate(u, cfg.shift_cov);
  pop.cov_te.triangularView<Eigen::StrictlyUpper>() = pop.cov_te.transpose();
  pop.shift_coords = {0};

  // AR(1) spectrum is bounded below by (1-rho)/(1+rho); a positive rank-one
  // bump cannot lower it.
  if (cfg.shift_cov >= 0.0) {
    pop.lambda_floor = (1.0 - rho) / (1.0 + rho);
  } else {
    const Eigen::SelfAdjointEigenSolver<Matrix> eig(pop.cov_te, Eigen::EigenvaluesOnly);
    pop.lambda_floor = eig.eigenvalues().minCoeff();
    if (!(pop.lambda_floor > 0.0))
      throw NumericalError("test covariance is not positive definite");
  }
  pop.prepare();
  return pop;
}

struct SimulatedDraw {
  Dataset data;
  Matrix test_inputs;  ///< independent test-domain inputs for weight estimation
  Vector noise;        ///< y - y(x) on the training rows
};

/// n training rows and n_test_inputs test-domain inputs (none when 0);
/// fully determined by seed.
inline SimulatedDraw draw_dataset(const Population& pop, Index n, std::uint64_t seed,
                                  Index n_test_inputs = 0) {
  detail::require(n >= 2, "draw_dataset: n must be at least 2");
  detail::require(n_test_inputs >= 0, "draw_dataset: n_test_inputs must be non-negative");
  Engine rng_x(derive_seed(seed, {0}));
  Engine rng_e(derive_seed(seed, {1}));
  Engine rng_te(derive_seed(seed, {2}));
  Matrix x = sample_inputs(pop, Domain::train, n, rng_x);
  const Vector noise = pop.noise_sd * standard_normal(rng_e, n, 1).col(0);
  Vector y = pop.regression_rows(x) + noise;
  Matrix te = n_test_inputs > 0 ? sample_inputs(pop, Domain::test, n_test_inputs, rng_te)
                                : Matrix(0, pop.p());
  return SimulatedDraw{Dataset(std::move(x), std::move(y)), std::move(te), noise};
}

}  // namespace greedyshift
