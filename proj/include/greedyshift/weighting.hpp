#pragma once

// Importance weights for covariate shift and the tuning schedules that go
// with them.
//
//   c_n = sqrt(log p / n)
//   d_n = c_n                                         q > 1
//       = c_n^{2q/(1+q)} (log n)^{1/eta + 1/2}        0 < q <= 1
//   b_n = M_w c_n^{-1} (log n)^{-M_eta}               q > 1
//       = M_w c_n^{-2/(1+q)}                          0 < q <= 1
//   K_n = floor(M_k / d_n)   (floor(M_k / c_n) for unweighted OGA)
//
// Weights are v_t = min(w(x_t), b_n) rescaled to mean one.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "greedyshift/error.hpp"
#include "greedyshift/model_core.hpp"

namespace greedyshift {

struct ScheduleConfig {
  double q = 2.0;      ///< moment exponent of the importance function
  double eta = 2.0;    ///< tail exponent of the noise / design
  double M_w = 1.0;
  double M_eta = 1.0;  ///< must be >= 1/eta + 1/2
  double M_k = 5.0;
  double s_a = 2.0;

  /// Default configuration for a given eta, with M_eta at its lower bound.
  static ScheduleConfig for_eta(double eta) {
    ScheduleConfig c;
    c.eta = eta;
    c.M_eta = 1.0 / eta + 0.5;
    return c;
  }

  void validate() const {
    detail::require(std::isfinite(q) && q > 0.0, "schedule: q must be positive");
    detail::require(std::isfinite(eta) && eta > 0.0 && eta <= 2.0,
                    "schedule: eta must lie in (0, 2]");
    detail::require(std::isfinite(M_w) && M_w > 0.0, "schedule: M_w must be positive");
    detail::require(std::isfinite(M_eta) && M_eta >= 1.0 / eta + 0.5 - 1e-12,
                    "schedule: M_eta must be at least 1/eta + 1/2");
    detail::require(std::isfinite(M_k) && M_k > 0.0, "schedule: M_k must be positive");
    detail::require(std::isfinite(s_a) && s_a >= 0.0, "schedule: s_a must be non-negative");
  }
};

enum class PathMode { iwoga, oga };

namespace detail {

inline void require_schedule_sizes(Index n, Index p) {
  require(n >= 2, "schedule: n must be at least 2");
  require(p >= 2, "schedule: p must be at least 2 (log p must be positive)");
}

}  // namespace detail

inline double compute_cn(Index n, Index p) {
  detail::require_schedule_sizes(n, p);
  return std::sqrt(std::log(static_cast<double>(p)) / static_cast<double>(n));
}

inline double compute_dn(Index n, Index p, const ScheduleConfig& cfg) {
  cfg.validate();
  const double cn = compute_cn(n, p);
  if (cfg.q > 1.0) return cn;
  return std::pow(cn, 2.0 * cfg.q / (1.0 + cfg.q)) *
         std::pow(std::log(static_cast<double>(n)), 1.0 / cfg.eta + 0.5);
}

inline double compute_bn(Index n, Index p, const ScheduleConfig& cfg) {
  cfg.validate();
  const double cn = compute_cn(n, p);
  if (cfg.q <= 1.0) return cfg.M_w * std::pow(cn, -2.0 / (1.0 + cfg.q));
  return cfg.M_w / cn * std::pow(std::log(static_cast<double>(n)), -cfg.M_eta);
}

inline Index compute_kn(Index n, Index p, const ScheduleConfig& cfg, PathMode mode) {
  const double rate = mode == PathMode::iwoga ? compute_dn(n, p, cfg) : compute_cn(n, p);
  const double raw = std::floor(cfg.M_k / rate);
  const double cap = static_cast<double>(max_path_length(n, p));
  return static_cast<Index>(std::clamp(raw, 1.0, cap));
}

/// Resolved schedule values for one (n, p).
struct Schedule {
  double c_n = 0.0;
  double d_n = 0.0;
  double b_n = 0.0;
  Index K_n = 0;
};

inline Schedule resolve_schedule(Index n, Index p, const ScheduleConfig& cfg, PathMode mode) {
  Schedule s;
  s.c_n = compute_cn(n, p);
  s.d_n = compute_dn(n, p, cfg);
  s.b_n = compute_bn(n, p, cfg);
  s.K_n = compute_kn(n, p, cfg, mode);
  return s;
}

/// Mean and covariance of a multivariate normal.
struct GaussianParams {
  Vector mean;
  Matrix cov;
};

namespace detail {

/// Cached Cholesky factor and log-determinant of a covariance matrix.
struct GaussianFactor {
  Vector mean;
  Eigen::LLT<Matrix> llt;
  double log_det = 0.0;

  explicit GaussianFactor(const GaussianParams& g) : mean(g.mean) {
    require(g.cov.rows() == g.cov.cols() && g.cov.rows() == g.mean.size(),
            "gaussian parameters have inconsistent dimensions");
    require(g.mean.allFinite() && g.cov.allFinite(), "gaussian parameters must be finite");
    require((g.cov - g.cov.transpose()).cwiseAbs().maxCoeff() <=
                1e-10 * std::max(1.0, g.cov.cwiseAbs().maxCoeff()),
            "covariance must be symmetric");
    const Eigen::SelfAdjointEigenSolver<Matrix> eig(g.cov, Eigen::EigenvaluesOnly);
    const double lo = eig.eigenvalues().minCoeff();
    const double hi = eig.eigenvalues().maxCoeff();
    require(hi > 0.0 && lo > 1e-10 * hi, "covariance is not positive definite");
    llt.compute(g.cov);
    if (llt.info() != Eigen::Success) throw NumericalError("covariance factorization failed");
    log_det = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  }

  /// Squared Mahalanobis distance of every column of `z` (d x m).
  Vector mahalanobis_cols(Matrix z) const {
    z.colwise() -= mean;
    llt.matrixL().solveInPlace(z);
    return z.colwise().squaredNorm().transpose();
  }
};

}  // namespace detail

/// The importance function w(x) = f_te(x) / f_tr(x), or a stand-in for it.
class ImportanceModel {
 public:
  enum class Kind { known_function, gaussian, precomputed };
  using Function = std::function<double(std::span<const double>)>;

  static ImportanceModel known(Function f) {
    detail::require(static_cast<bool>(f), "importance function is empty");
    ImportanceModel m(Kind::known_function);
    m.function_ = std::move(f);
    return m;
  }

  /// Ratio of two normal densities on the coordinates `coords` (all
  /// coordinates when empty). `fitted` records that the parameters are
  /// estimates rather than population values.
  static ImportanceModel gaussian(GaussianParams train, GaussianParams test,
                                  IndexSet coords = {}, bool fitted = false) {
    detail::require(train.mean.size() == test.mean.size(),
                    "train and test gaussians differ in dimension");
    detail::require(coords.empty() || static_cast<Index>(coords.size()) == train.mean.size(),
                    "coordinate list does not match gaussian dimension");
    ImportanceModel m(Kind::gaussian);
    m.coords_ = std::move(coords);
    m.fitted_ = fitted;
    m.train_ = std::make_shared<const detail::GaussianFactor>(train);
    m.test_ = std::make_shared<const detail::GaussianFactor>(test);
    m.train_params_ = std::move(train);
    m.test_params_ = std::move(test);
    return m;
  }

  /// Importance values already evaluated at the training inputs.
  static ImportanceModel precomputed(Vector values) {
    detail::require(values.allFinite(), "precomputed importance values must be finite");
    detail::require(values.size() == 0 || values.minCoeff() >= 0.0,
                    "precomputed importance values must be non-negative");
    ImportanceModel m(Kind::precomputed);
    m.values_ = std::move(values);
    return m;
  }

  Kind kind() const noexcept { return kind_; }
  bool fitted() const noexcept { return fitted_; }
  const IndexSet& coords() const noexcept { return coords_; }
  const GaussianParams& train_params() const { return train_params_; }
  const GaussianParams& test_params() const { return test_params_; }
  const Vector& values() const noexcept { return values_; }

  /// Log importance at each row of `x` (gaussian kind only).
  Vector log_ratio_rows(const Matrix& x) const {
    detail::require(kind_ == Kind::gaussian, "log ratio requires a gaussian importance model");
    const Index d = train_params_.mean.size();
    Matrix z(d, x.rows());
    if (coords_.empty()) {
      detail::require(x.cols() == d, "input dimension does not match importance model");
      z = x.transpose();
    } else {
      for (Index i = 0; i < d; ++i) {
        const Index c = coords_[static_cast<std::size_t>(i)];
        detail::require(c >= 0 && c < x.cols(), "importance coordinate out of range");
        z.row(i) = x.col(c).transpose();
      }
    }
    const Vector q_tr = train_->mahalanobis_cols(z);
    const Vector q_te = test_->mahalanobis_cols(z);
    Vector out = 0.5 * (q_tr - q_te).array() + 0.5 * (train_->log_det - test_->log_det);
    return out;
  }

 private:
  explicit ImportanceModel(Kind k) : kind_(k) {}

  Kind kind_;
  bool fitted_ = false;
  Function function_;
  IndexSet coords_;
  GaussianParams train_params_;
  GaussianParams test_params_;
  std::shared_ptr<const detail::GaussianFactor> train_;
  std::shared_ptr<const detail::GaussianFactor> test_;
  Vector values_;

  friend Vector raw_importance_rows(const ImportanceModel&, const Matrix&);
  friend double raw_importance(const ImportanceModel&, std::span<const double>);
};

/// Importance at every row of `x`. Throws on a non-finite log ratio.
inline Vector raw_importance_rows(const ImportanceModel& model, const Matrix& x) {
  switch (model.kind_) {
    case ImportanceModel::Kind::precomputed:
      detail::require(model.values_.size() == x.rows(),
                      "precomputed importance length does not match rows");
      return model.values_;
    case ImportanceModel::Kind::known_function: {
      Vector out(x.rows());
      Vector row(x.cols());
      for (Index t = 0; t < x.rows(); ++t) {
        row = x.row(t).transpose();
        const double v = model.function_(std::span<const double>(row.data(), row.size()));
        if (!std::isfinite(v) || v < 0.0)
          throw NumericalError("importance function returned " + std::to_string(v) +
                               " at row " + std::to_string(t));
        out(t) = v;
      }
      return out;
    }
    case ImportanceModel::Kind::gaussian: {
      const Vector lr = model.log_ratio_rows(x);
      if (!lr.allFinite()) throw NumericalError("non-finite log importance (support violation)");
      // May overflow to +inf for extreme inputs; trimming handles that.
      return lr.array().exp().matrix();
    }
  }
  return {};
}

inline double raw_importance(const ImportanceModel& model, std::span<const double> x) {
  if (model.kind_ == ImportanceModel::Kind::precomputed)
    throw ValidationError("precomputed importance cannot be evaluated at a new point");
  Matrix row(1, static_cast<Index>(x.size()));
  for (std::size_t i = 0; i < x.size(); ++i) row(0, static_cast<Index>(i)) = x[i];
  return raw_importance_rows(model, row)(0);
}

/// Maximum-likelihood (1/n) mean and covariance of the rows of `x`.
inline GaussianParams gaussian_mle(const Matrix& x) {
  const double n = static_cast<double>(x.rows());
  GaussianParams g;
  g.mean = x.colwise().mean().transpose();
  const Matrix centered = x.rowwise() - g.mean.transpose();
  g.cov = (centered.transpose() * centered) / n;
  g.cov = 0.5 * (g.cov + g.cov.transpose());
  return g;
}

namespace detail {

inline bool well_conditioned(const Matrix& cov) {
  const Eigen::SelfAdjointEigenSolver<Matrix> eig(cov, Eigen::EigenvaluesOnly);
  const double hi = eig.eigenvalues().maxCoeff();
  return hi > 0.0 && eig.eigenvalues().minCoeff() > 1e-10 * hi;
}

inline void regularize(GaussianParams& g) {
  if (well_conditioned(g.cov)) return;
  const double d = static_cast<double>(g.cov.rows());
  const double ridge = 1e-8 * g.cov.trace() / d;
  g.cov.diagonal().array() += ridge;
  if (!well_conditioned(g.cov))
    throw NumericalError("fitted covariance is degenerate after regularization");
}

inline Matrix select_columns(const Matrix& x, const IndexSet& coords) {
  if (coords.empty()) return x;
  Matrix out(x.rows(), static_cast<Index>(coords.size()));
  for (std::size_t i = 0; i < coords.size(); ++i) {
    require(coords[i] >= 0 && coords[i] < x.cols(), "importance coordinate out of range");
    out.col(static_cast<Index>(i)) = x.col(coords[i]);
  }
  return out;
}

}  // namespace detail

/// Plug-in Gaussian density ratio: MLE mean and covariance in each domain,
/// restricted to `coords` when given.
inline ImportanceModel fit_gaussian_importance(const Matrix& x_train, const Matrix& x_test_inputs,
                                               const IndexSet& coords = {}) {
  detail::require(x_train.cols() == x_test_inputs.cols(),
                  "train and test inputs differ in column count");
  detail::require(x_train.allFinite() && x_test_inputs.allFinite(),
                  "inputs for importance estimation must be finite");
  const Matrix tr = detail::select_columns(x_train, coords);
  const Matrix te = detail::select_columns(x_test_inputs, coords);
  const Index d = tr.cols();
  detail::require(tr.rows() >= d + 1 && te.rows() >= d + 1,
                  "importance estimation needs at least d+1 rows per domain (d=" +
                      std::to_string(d) + ")");
  GaussianParams g_tr = gaussian_mle(tr);
  GaussianParams g_te = gaussian_mle(te);
  detail::regularize(g_tr);
  detail::regularize(g_te);
  return ImportanceModel::gaussian(std::move(g_tr), std::move(g_te), coords, true);
}

/// v_t = min(raw_t, b_n), then rescaled to mean one.
inline WeightVector trim_and_normalize(const Vector& raw, double b_n) {
  detail::require(b_n > 0.0, "trimming level b_n must be positive");
  // +inf (an overflowed ratio) is allowed and trims to b_n; NaN is not.
  detail::require(!raw.array().isNaN().any() && (raw.array() >= 0.0).all(),
                  "raw importance must be non-negative");
  const Vector v = raw.cwiseMin(b_n);
  if (!(v.maxCoeff() > 0.0))
    throw NumericalError("trimmed importance is identically zero on the sample");
  return WeightVector::normalize(v);
}

inline WeightVector build_weights(const ImportanceModel& model, const Matrix& x_train, double b_n) {
  return trim_and_normalize(raw_importance_rows(model, x_train), b_n);
}

}  // namespace greedyshift
