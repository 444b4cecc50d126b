#pragma once

// Weighted moments, the centered weighted Gram system, and weighted least
// squares on a subset of covariates.
//
// Every moment uses 1/n normalization. With weights w_t (mean one) and
// W = diag(w), the centered weighted design is
//
//     Xc = W^{1/2} (X - 1 mu^T),   mu = X^T W 1 / n,
//
// which is the same matrix as P_W^perp W^{1/2} X, where P_W projects onto
// W^{1/2} 1. The Gram matrix is Xc^T Xc / n.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "greedyshift/error.hpp"

namespace greedyshift {

using Index = Eigen::Index;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using IndexSet = std::vector<Index>;

/// Relative pivot tolerance of the Gram factorization. A pivot below
/// kPivotTolerance * gram(j, j) declares the model singular.
inline constexpr double kPivotTolerance = 1e-10;

namespace detail {

inline std::string format_model(const IndexSet& model) {
  std::ostringstream os;
  os << '{';
  for (std::size_t i = 0; i < model.size(); ++i) os << (i ? "," : "") << model[i];
  os << '}';
  return os.str();
}

}  // namespace detail

/// Training covariates (n x p, column-major) and responses.
class Dataset {
 public:
  Dataset(Matrix x, Vector y, std::vector<std::string> feature_names = {})
      : x_(std::move(x)), y_(std::move(y)), names_(std::move(feature_names)) {
    detail::require(x_.rows() >= 2, "dataset needs at least 2 rows");
    detail::require(x_.cols() >= 1, "dataset needs at least 1 covariate");
    detail::require(x_.rows() == y_.size(),
                    "covariate rows (" + std::to_string(x_.rows()) +
                        ") do not match response length (" +
                        std::to_string(y_.size()) + ")");
    detail::require(x_.allFinite(), "covariates contain non-finite values");
    detail::require(y_.allFinite(), "responses contain non-finite values");
    detail::require(names_.empty() || static_cast<Index>(names_.size()) == x_.cols(),
                    "feature_names must have one label per covariate");
  }

  const Matrix& x() const noexcept { return x_; }
  const Vector& y() const noexcept { return y_; }
  const std::vector<std::string>& feature_names() const noexcept { return names_; }
  Index n() const noexcept { return x_.rows(); }
  Index p() const noexcept { return x_.cols(); }

 private:
  Matrix x_;
  Vector y_;
  std::vector<std::string> names_;
};

/// Non-negative per-observation weights with (1/n) sum w_t = 1.
class WeightVector {
 public:
  /// Takes weights that are already normalized; validates the invariants.
  explicit WeightVector(Vector w) : w_(std::move(w)) {
    detail::require(w_.size() >= 1, "weight vector is empty");
    detail::require(w_.allFinite(), "weights contain non-finite values");
    detail::require(w_.minCoeff() >= 0.0, "weights must be non-negative");
    detail::require(w_.maxCoeff() > 0.0, "at least one weight must be positive");
    const double mean = w_.mean();
    detail::require(std::abs(mean - 1.0) <= 1e-12,
                    "weights must have mean one (got " + std::to_string(mean) + ")");
  }

  static WeightVector uniform(Index n) { return WeightVector(Vector::Ones(n)); }

  /// Divides non-negative raw values by their mean.
  static WeightVector normalize(const Vector& raw) {
    detail::require(raw.size() >= 1 && raw.allFinite(), "raw weights must be finite");
    detail::require(raw.minCoeff() >= 0.0, "raw weights must be non-negative");
    const double mean = raw.mean();
    if (!(mean > 0.0)) throw ValidationError("raw weights are identically zero");
    return WeightVector(raw / mean);
  }

  const Vector& values() const noexcept { return w_; }
  Index size() const noexcept { return w_.size(); }
  double operator[](Index t) const { return w_(t); }

  /// True when every weight is exactly one.
  bool is_uniform() const { return (w_.array() == 1.0).all(); }

 private:
  Vector w_;
};

struct WeightedMoments {
  Index n = 0;
  double mu_y = 0.0;
  Vector mu_x;  ///< weighted means of the covariates
  Matrix gram;  ///< centered weighted second moments
  Vector cross; ///< centered weighted cross moments with y
};

/// Centered, square-root-weighted copy of the data. Columns of `xc` are
/// W^{1/2}(x_j - mu_j); `yc` is W^{1/2}(y - mu_y).
struct WeightedDesign {
  Index n = 0;
  double mu_y = 0.0;
  Vector mu_x;
  Matrix xc;
  Vector yc;
  Vector sqrt_w;
  Vector col_var;  ///< diagonal of the Gram matrix

  WeightedDesign(const Dataset& data, const WeightVector& w) {
    detail::require(w.size() == data.n(), "weight length does not match dataset rows");
    n = data.n();
    const Vector& wv = w.values();
    const double inv_n = 1.0 / static_cast<double>(n);
    mu_y = inv_n * wv.dot(data.y());
    mu_x = inv_n * (data.x().transpose() * wv);
    sqrt_w = wv.cwiseSqrt();
    xc = (data.x().rowwise() - mu_x.transpose());
    xc = sqrt_w.asDiagonal() * xc;
    yc = sqrt_w.cwiseProduct(data.y() - Vector::Constant(n, mu_y));
    col_var = inv_n * xc.colwise().squaredNorm().transpose();
  }
};

inline WeightedMoments weighted_moments(const Dataset& data, const WeightVector& w) {
  const WeightedDesign d(data, w);
  const double inv_n = 1.0 / static_cast<double>(d.n);
  WeightedMoments m;
  m.n = d.n;
  m.mu_y = d.mu_y;
  m.mu_x = d.mu_x;
  m.gram = Matrix::Zero(d.xc.cols(), d.xc.cols());
  m.gram.selfadjointView<Eigen::Lower>().rankUpdate(d.xc.transpose(), inv_n);
  m.gram.triangularView<Eigen::StrictlyUpper>() = m.gram.transpose();
  m.cross = inv_n * (d.xc.transpose() * d.yc);
  return m;
}

/// Cholesky factor of gram[J, J] grown one index at a time.
class IncrementalCholesky {
 public:
  explicit IncrementalCholesky(Index capacity = 0, double rel_tol = kPivotTolerance)
      : l_(capacity, capacity), tol_(rel_tol) {}

  Index size() const noexcept { return k_; }

  /// Appends one index given its Gram entries against the current model
  /// (`cross`, length size()) and its own variance. Returns false, leaving
  /// the factor unchanged, when the new pivot falls below tolerance.
  bool extend(const Eigen::Ref<const Vector>& cross, double diag) {
    if (k_ + 1 > l_.rows()) {
      const Index cap = std::max<Index>(2 * l_.rows(), k_ + 1);
      Matrix grown = Matrix::Zero(cap, cap);
      grown.topLeftCorner(k_, k_) = l_.topLeftCorner(k_, k_);
      l_ = std::move(grown);
    }
    Vector row = cross;
    if (k_ > 0) l_.topLeftCorner(k_, k_).triangularView<Eigen::Lower>().solveInPlace(row);
    const double pivot = diag - row.squaredNorm();
    if (!(diag > 0.0) || !(pivot > tol_ * diag)) return false;
    l_.row(k_).head(k_) = row.transpose();
    l_(k_, k_) = std::sqrt(pivot);
    l_.row(k_).tail(l_.cols() - k_ - 1).setZero();
    ++k_;
    return true;
  }

  /// Solves gram[J, J] b = rhs.
  Vector solve(const Eigen::Ref<const Vector>& rhs) const {
    Vector b = rhs;
    const auto lower = l_.topLeftCorner(k_, k_).triangularView<Eigen::Lower>();
    lower.solveInPlace(b);
    lower.transpose().solveInPlace(b);
    return b;
  }

  void clear() noexcept { k_ = 0; }

 private:
  Matrix l_;
  Index k_ = 0;
  double tol_;
};

/// Largest iteration count that keeps the Gram submatrix invertible in
/// principle: min(p, n - 2), at least 1.
inline Index max_path_length(Index n, Index p) {
  return std::max<Index>(1, std::min<Index>(p, n - 2));
}

struct FitResult {
  IndexSet model;  ///< covariate indices in selection order
  double alpha = 0.0;
  Vector beta;
  std::optional<double> sigma2;  ///< filled by residual_sigma2 or the path builder
  bool weighted = true;
};

inline void validate_model(const IndexSet& model, Index p) {
  detail::require(!model.empty(), "model must contain at least one index");
  detail::require(static_cast<Index>(model.size()) <= p, "model larger than p");
  std::vector<Index> sorted = model;
  std::sort(sorted.begin(), sorted.end());
  detail::require(sorted.front() >= 0 && sorted.back() < p,
                  "model index out of range [0, " + std::to_string(p) + ")");
  detail::require(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end(),
                  "model indices must be distinct");
}

/// beta = gram[J,J]^{-1} cross[J], alpha = mu_y - beta^T mu_x[J].
/// Throws SingularModelError when a pivot falls below tolerance.
inline FitResult wls_fit(const WeightedMoments& m, const IndexSet& model,
                         bool weighted = true) {
  validate_model(model, m.gram.cols());
  const Index k = static_cast<Index>(model.size());
  IncrementalCholesky chol(k);
  Vector rhs(k);
  Vector col(k);
  for (Index i = 0; i < k; ++i) {
    const Index j = model[static_cast<std::size_t>(i)];
    for (Index r = 0; r < i; ++r) col(r) = m.gram(model[static_cast<std::size_t>(r)], j);
    if (!chol.extend(col.head(i), m.gram(j, j)))
      throw SingularModelError(model, "weighted Gram submatrix is singular for model " +
                                          detail::format_model(model));
    rhs(i) = m.cross(j);
  }
  FitResult fit;
  fit.model = model;
  fit.beta = chol.solve(rhs);
  double shift = 0.0;
  for (Index i = 0; i < k; ++i) shift += fit.beta(i) * m.mu_x(model[static_cast<std::size_t>(i)]);
  fit.alpha = m.mu_y - shift;
  fit.weighted = weighted;
  return fit;
}

/// alpha + beta^T x[J].
inline double predict(const FitResult& fit, std::span<const double> x) {
  double out = fit.alpha;
  for (std::size_t i = 0; i < fit.model.size(); ++i) {
    const auto j = static_cast<std::size_t>(fit.model[i]);
    if (j >= x.size()) throw ValidationError("predict: input shorter than model index");
    out += fit.beta(static_cast<Index>(i)) * x[j];
  }
  return out;
}

inline double predict(const FitResult& fit, const Eigen::Ref<const Vector>& x) {
  return predict(fit, std::span<const double>(x.data(), static_cast<std::size_t>(x.size())));
}

/// Predictions for every row of `x`.
inline Vector predict_rows(const FitResult& fit, const Matrix& x) {
  Vector out = Vector::Constant(x.rows(), fit.alpha);
  for (std::size_t i = 0; i < fit.model.size(); ++i)
    out.noalias() += fit.beta(static_cast<Index>(i)) * x.col(fit.model[i]);
  return out;
}

/// (1/n) sum_t w_t (y_t - alpha - beta^T x_{t,J})^2.
inline double residual_sigma2(const Dataset& data, const WeightVector& w,
                              const FitResult& fit) {
  detail::require(w.size() == data.n(), "weight length does not match dataset rows");
  validate_model(fit.model, data.p());
  detail::require(fit.beta.size() == static_cast<Index>(fit.model.size()),
                  "fit coefficients do not match model size");
  const Vector r = data.y() - predict_rows(fit, data.x());
  return w.values().dot(r.cwiseAbs2()) / static_cast<double>(data.n());
}

}  // namespace greedyshift
