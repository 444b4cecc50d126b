#pragma once

// Prediction error of a fitted model against a known Gaussian population.
//
// For a fit (alpha_hat, beta_hat on J) and a linear target a + b^T x, the
// conditional expected squared error over x ~ N(mu_te, Sigma_te) is
//
//     (b - beta*)^T Sigma_te (b - beta*) + (a + b^T mu_te - alpha_hat - beta*^T mu_te)^2
//
// with beta* the fitted coefficients embedded into R^p. MCPE uses the
// test-domain best linear predictor as target; CPE uses the regression
// function, which is linear only under correct specification.

#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "greedyshift/error.hpp"
#include "greedyshift/model_core.hpp"
#include "greedyshift/parallel.hpp"
#include "greedyshift/random.hpp"
#include "greedyshift/weighting.hpp"

namespace greedyshift {

/// Nonlinear term added to the regression function, a function of x_0 only.
enum class Misspec { none, quadratic, sine };

inline const char* to_string(Misspec m) {
  switch (m) {
    case Misspec::none: return "none";
    case Misspec::quadratic: return "quadratic";
    case Misspec::sine: return "sine";
  }
  return "unknown";
}

inline Misspec parse_misspec(const std::string& s) {
  if (s == "none") return Misspec::none;
  if (s == "quadratic") return Misspec::quadratic;
  if (s == "sine") return Misspec::sine;
  throw ValidationError("unknown misspecification kind '" + s + "'");
}

/// Gaussian covariate-shift regression population:
/// y = alpha + beta^T x + a g(x_0) + noise_sd * z, with x ~ N(mu_tr, cov_tr)
/// in training and N(mu_te, cov_te) at test time.
class Population {
 public:
  double alpha = 0.0;
  Vector beta;
  Vector mu_tr;
  Vector mu_te;
  Matrix cov_tr;
  Matrix cov_te;
  double noise_sd = 1.0;
  Misspec misspec = Misspec::none;
  double misspec_amplitude = 0.0;
  std::optional<double> c_diff;  ///< declared moderate-shift bound, if any
  double lambda_floor = 0.0;     ///< lower bound on lambda_min(cov_te)
  /// Coordinates carrying the whole density ratio (the conditional law of
  /// the rest given these is the same in both domains). Empty means all.
  IndexSet shift_coords;

  Index p() const noexcept { return beta.size(); }
  bool misspecified() const noexcept {
    return misspec != Misspec::none && misspec_amplitude != 0.0;
  }

  /// Validates and caches covariance factors. Must be called before use.
  void prepare() {
    const Index d = beta.size();
    detail::require(d >= 1, "population needs at least one covariate");
    detail::require(mu_tr.size() == d && mu_te.size() == d, "population mean dimension mismatch");
    detail::require(cov_tr.rows() == d && cov_tr.cols() == d && cov_te.rows() == d &&
                        cov_te.cols() == d,
                    "population covariance dimension mismatch");
    detail::require(std::isfinite(alpha) && beta.allFinite() && mu_tr.allFinite() &&
                        mu_te.allFinite() && cov_tr.allFinite() && cov_te.allFinite(),
                    "population parameters must be finite");
    detail::require(noise_sd > 0.0 && std::isfinite(noise_sd), "noise_sd must be positive");
    chol_tr_ = std::make_shared<const Eigen::LLT<Matrix>>(cov_tr);
    chol_te_ = std::make_shared<const Eigen::LLT<Matrix>>(cov_te);
    if (chol_tr_->info() != Eigen::Success || chol_te_->info() != Eigen::Success)
      throw NumericalError("population covariance is not positive definite");
    if (c_diff) {
      const auto gap = shift_gap();
      detail::require(gap.first <= *c_diff && gap.second <= *c_diff,
                      "population violates the declared moderate-shift bound C_diff");
    }
  }

  bool prepared() const noexcept { return chol_tr_ && chol_te_; }
  const Eigen::LLT<Matrix>& chol_tr() const { return checked(chol_tr_); }
  const Eigen::LLT<Matrix>& chol_te() const { return checked(chol_te_); }

  /// (||mu_te - mu_tr||_2, ||cov_te - cov_tr||_2).
  std::pair<double, double> shift_gap() const {
    const double mean_gap = (mu_te - mu_tr).norm();
    const Matrix diff = cov_te - cov_tr;
    double cov_gap = 0.0;
    if (diff.cwiseAbs().maxCoeff() > 0.0) {
      const Eigen::SelfAdjointEigenSolver<Matrix> eig(diff, Eigen::EigenvaluesOnly);
      cov_gap = eig.eigenvalues().cwiseAbs().maxCoeff();
    }
    return {mean_gap, cov_gap};
  }

  /// g(x_0) scaled by the amplitude.
  double misspec_term(double x0) const {
    switch (misspec) {
      case Misspec::none: return 0.0;
      case Misspec::quadratic: return misspec_amplitude * x0 * x0;
      case Misspec::sine: return misspec_amplitude * std::sin(x0);
    }
    return 0.0;
  }

  /// Regression function y(x) at each row.
  Vector regression_rows(const Matrix& x) const {
    detail::require(x.cols() == p(), "input dimension does not match population");
    Vector out = (x * beta).array() + alpha;
    if (misspecified())
      for (Index t = 0; t < x.rows(); ++t) out(t) += misspec_term(x(t, 0));
    return out;
  }

 private:
  static const Eigen::LLT<Matrix>& checked(const std::shared_ptr<const Eigen::LLT<Matrix>>& c) {
    if (!c) throw ValidationError("population not prepared");
    return *c;
  }

  std::shared_ptr<const Eigen::LLT<Matrix>> chol_tr_;
  std::shared_ptr<const Eigen::LLT<Matrix>> chol_te_;
};

enum class Domain { train, test };

/// m draws of x from the given domain.
inline Matrix sample_inputs(const Population& pop, Domain domain, Index m, Engine& rng) {
  const auto& llt = domain == Domain::train ? pop.chol_tr() : pop.chol_te();
  const Vector& mean = domain == Domain::train ? pop.mu_tr : pop.mu_te;
  const Matrix z = standard_normal(rng, m, pop.p());
  Matrix x = z * llt.matrixU();
  x.rowwise() += mean.transpose();
  return x;
}

/// Intercept and slope of a linear function of x.
struct LinearTarget {
  double alpha = 0.0;
  Vector beta;
};

/// Test-domain best linear predictor of y(x). Exact for Gaussian inputs: by
/// Stein's identity Cov(x, g(x_0)) = Sigma e_0 E[g'(x_0)], so the nonlinear
/// term projects onto the x_0 direction only.
inline LinearTarget best_linear_predictor(const Population& pop, Domain domain = Domain::test) {
  LinearTarget t{pop.alpha, pop.beta};
  if (!pop.misspecified()) return t;
  const Vector& mu = domain == Domain::test ? pop.mu_te : pop.mu_tr;
  const Matrix& cov = domain == Domain::test ? pop.cov_te : pop.cov_tr;
  const double m = mu(0);
  const double s = cov(0, 0);
  double slope = 0.0;
  double mean_g = 0.0;
  switch (pop.misspec) {
    case Misspec::quadratic:
      mean_g = m * m + s;
      slope = 2.0 * m;
      break;
    case Misspec::sine:
      mean_g = std::sin(m) * std::exp(-0.5 * s);
      slope = std::cos(m) * std::exp(-0.5 * s);
      break;
    case Misspec::none: break;
  }
  t.beta(0) += pop.misspec_amplitude * slope;
  t.alpha += pop.misspec_amplitude * (mean_g - slope * m);
  return t;
}

namespace detail {

inline Vector embed(const FitResult& fit, Index p) {
  Vector b = Vector::Zero(p);
  for (std::size_t i = 0; i < fit.model.size(); ++i) {
    const Index j = fit.model[i];
    require(j >= 0 && j < p, "fit index out of range for population");
    b(j) = fit.beta(static_cast<Index>(i));
  }
  return b;
}

inline double linear_gap(const Population& pop, const LinearTarget& target, const FitResult& fit) {
  require(fit.beta.size() == static_cast<Index>(fit.model.size()),
          "fit coefficients do not match model size");
  const Vector delta = target.beta - embed(fit, pop.p());
  const double quad = delta.dot(pop.cov_te * delta);
  const double bias = target.alpha - fit.alpha + delta.dot(pop.mu_te);
  return quad + bias * bias;
}

}  // namespace detail

/// E[(y_te(x) - yhat(x))^2 | training data] over x ~ test law, with y_te the
/// test-domain best linear predictor.
inline double mcpe_analytic(const Population& pop, const FitResult& fit) {
  return detail::linear_gap(pop, best_linear_predictor(pop), fit);
}

/// E[(y(x) - yhat(x))^2 | training data] over x ~ test law. Requires a
/// correctly specified population.
inline double cpe_analytic(const Population& pop, const FitResult& fit) {
  if (pop.misspecified())
    throw ValidationError("analytic CPE requires a correctly specified population");
  return detail::linear_gap(pop, LinearTarget{pop.alpha, pop.beta}, fit);
}

struct Projection {
  IndexSet model;
  double alpha = 0.0;
  Vector beta;
  double residual_variance = 0.0;  ///< E[(y_te(x) - y_te(x|J))^2]
};

/// Best linear predictor of y_te on (1, x_J) under the test law.
inline Projection population_projection(const Population& pop, const IndexSet& model) {
  validate_model(model, pop.p());
  const LinearTarget target = best_linear_predictor(pop);
  const Index k = static_cast<Index>(model.size());
  const Vector sigma_beta = pop.cov_te * target.beta;
  Matrix sub(k, k);
  Vector rhs(k);
  Vector mu(k);
  for (Index a = 0; a < k; ++a) {
    const Index ja = model[static_cast<std::size_t>(a)];
    rhs(a) = sigma_beta(ja);
    mu(a) = pop.mu_te(ja);
    for (Index b = 0; b < k; ++b) sub(a, b) = pop.cov_te(ja, model[static_cast<std::size_t>(b)]);
  }
  const Eigen::LLT<Matrix> llt(sub);
  if (llt.info() != Eigen::Success)
    throw SingularModelError(model, "test covariance submatrix is singular for model " +
                                        detail::format_model(model));
  Projection out;
  out.model = model;
  out.beta = llt.solve(rhs);
  out.alpha = target.alpha + target.beta.dot(pop.mu_te) - out.beta.dot(mu);
  out.residual_variance =
      std::max(0.0, target.beta.dot(sigma_beta) - out.beta.dot(sub * out.beta));
  return out;
}

struct MonteCarloEstimate {
  double estimate = 0.0;
  double std_error = 0.0;
  Index draws = 0;
};

/// Draws per independently seeded chunk.
inline constexpr Index kMonteCarloChunk = 1 << 14;

namespace detail {

template <typename Target>
MonteCarloEstimate squared_error_monte_carlo(const Population& pop, const FitResult& fit,
                                             Index n_draws, std::uint64_t seed, unsigned threads,
                                             Target&& target) {
  require(n_draws >= 100, "Monte Carlo needs at least 100 draws");
  const Index chunks = (n_draws + kMonteCarloChunk - 1) / kMonteCarloChunk;
  std::vector<double> sums(static_cast<std::size_t>(chunks));
  std::vector<double> sums_sq(static_cast<std::size_t>(chunks));
  parallel_for(static_cast<std::size_t>(chunks), threads, [&](std::size_t c) {
    const Index start = static_cast<Index>(c) * kMonteCarloChunk;
    const Index m = std::min(kMonteCarloChunk, n_draws - start);
    Engine rng(derive_seed(seed, {c}));
    const Matrix x = sample_inputs(pop, Domain::test, m, rng);
    const Vector err = (target(x) - predict_rows(fit, x)).cwiseAbs2();
    sums[c] = err.sum();
    sums_sq[c] = err.squaredNorm();
  });
  double s = 0.0;
  double s2 = 0.0;
  for (std::size_t c = 0; c < sums.size(); ++c) {
    s += sums[c];
    s2 += sums_sq[c];
  }
  const double n = static_cast<double>(n_draws);
  const double mean = s / n;
  const double var = std::max(0.0, (s2 - n * mean * mean) / (n - 1.0));
  return {mean, std::sqrt(var / n), n_draws};
}

}  // namespace detail

/// Monte Carlo MCPE over fresh test inputs. Works for misspecified
/// populations. Deterministic in (seed, n_draws) regardless of `threads`.
inline MonteCarloEstimate mcpe_monte_carlo(const Population& pop, const FitResult& fit,
                                           Index n_draws, std::uint64_t seed,
                                           unsigned threads = 1) {
  const LinearTarget t = best_linear_predictor(pop);
  return detail::squared_error_monte_carlo(pop, fit, n_draws, seed, threads,
                                           [&](const Matrix& x) -> Vector {
                                             return (x * t.beta).array() + t.alpha;
                                           });
}

/// Monte Carlo CPE: target is the regression function y(x) itself.
inline MonteCarloEstimate cpe_monte_carlo(const Population& pop, const FitResult& fit,
                                          Index n_draws, std::uint64_t seed,
                                          unsigned threads = 1) {
  return detail::squared_error_monte_carlo(
      pop, fit, n_draws, seed, threads,
      [&](const Matrix& x) -> Vector { return pop.regression_rows(x); });
}

/// Exact importance function of the population, as a Gaussian density ratio
/// on the shift coordinates.
inline ImportanceModel true_importance(const Population& pop) {
  if (pop.shift_coords.empty())
    return ImportanceModel::gaussian({pop.mu_tr, pop.cov_tr}, {pop.mu_te, pop.cov_te});
  const Index k = static_cast<Index>(pop.shift_coords.size());
  GaussianParams tr{Vector(k), Matrix(k, k)};
  GaussianParams te{Vector(k), Matrix(k, k)};
  for (Index a = 0; a < k; ++a) {
    const Index ja = pop.shift_coords[static_cast<std::size_t>(a)];
    tr.mean(a) = pop.mu_tr(ja);
    te.mean(a) = pop.mu_te(ja);
    for (Index b = 0; b < k; ++b) {
      const Index jb = pop.shift_coords[static_cast<std::size_t>(b)];
      tr.cov(a, b) = pop.cov_tr(ja, jb);
      te.cov(a, b) = pop.cov_te(ja, jb);
    }
  }
  return ImportanceModel::gaussian(std::move(tr), std::move(te), pop.shift_coords);
}

}  // namespace greedyshift
