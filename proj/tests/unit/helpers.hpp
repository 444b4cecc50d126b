#pragma once

// Shared fixtures and brute-force reference computations for the unit tests.
// The references deliberately avoid the library's code paths: plain loops,
// explicit n x n matrices, dense solves.

#include <cstdint>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "greedyshift/model_core.hpp"
#include "greedyshift/random.hpp"

namespace testutil {

using greedyshift::Index;
using greedyshift::IndexSet;
using greedyshift::Matrix;
using greedyshift::Vector;

inline Matrix gaussian_matrix(std::uint64_t seed, Index rows, Index cols) {
  greedyshift::Engine rng(seed);
  return greedyshift::standard_normal(rng, rows, cols);
}

/// Correlated design: each column mixes in the previous one.
inline Matrix correlated_matrix(std::uint64_t seed, Index rows, Index cols, double mix = 0.5) {
  Matrix x = gaussian_matrix(seed, rows, cols);
  for (Index j = 1; j < cols; ++j) x.col(j) = mix * x.col(j - 1) + x.col(j);
  return x;
}

/// Positive weights with mean exactly representable as one after normalizing.
inline Vector random_raw_weights(std::uint64_t seed, Index n) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.2, 3.0);
  Vector w(n);
  for (Index t = 0; t < n; ++t) w(t) = u(rng);
  return w;
}

struct BruteMoments {
  double mu_y = 0;
  Vector mu_x;
  Matrix gram;
  Vector cross;
};

/// Double-loop weighted moments with 1/n normalization.
inline BruteMoments brute_moments(const Matrix& x, const Vector& y, const Vector& w) {
  const Index n = x.rows(), p = x.cols();
  BruteMoments m;
  m.mu_x = Vector::Zero(p);
  for (Index t = 0; t < n; ++t) {
    m.mu_y += w(t) * y(t) / static_cast<double>(n);
    for (Index j = 0; j < p; ++j) m.mu_x(j) += w(t) * x(t, j) / static_cast<double>(n);
  }
  m.gram = Matrix::Zero(p, p);
  m.cross = Vector::Zero(p);
  for (Index i = 0; i < p; ++i) {
    for (Index j = 0; j < p; ++j) {
      double s = 0;
      for (Index t = 0; t < n; ++t) s += w(t) * (x(t, i) - m.mu_x(i)) * (x(t, j) - m.mu_x(j));
      m.gram(i, j) = s / static_cast<double>(n);
    }
    double s = 0;
    for (Index t = 0; t < n; ++t) s += w(t) * (x(t, i) - m.mu_x(i)) * (y(t) - m.mu_y);
    m.cross(i) = s / static_cast<double>(n);
  }
  return m;
}

/// Weighted least squares with an intercept via the n x n projection
/// formulation: returns sigma2 = (1/n) y' W^{1/2} (I - P_W - P(J)) W^{1/2} y,
/// where P_W projects onto W^{1/2} 1 and P(J) onto P_W^perp W^{1/2} X_J.
inline double projection_sigma2(const Matrix& x, const Vector& y, const Vector& w,
                                 const IndexSet& model) {
  const Index n = x.rows();
  const Vector s = w.cwiseSqrt();
  const Matrix sqrt_w = s.asDiagonal();
  const Matrix identity = Matrix::Identity(n, n);
  const Matrix p_w = s * s.transpose() / s.squaredNorm();
  Matrix xj(n, static_cast<Index>(model.size()));
  for (std::size_t i = 0; i < model.size(); ++i) xj.col(static_cast<Index>(i)) = x.col(model[i]);
  const Matrix z = (identity - p_w) * sqrt_w * xj;
  const Matrix p_j = z * (z.transpose() * z).inverse() * z.transpose();
  const Vector wy = sqrt_w * y;
  return wy.dot((identity - p_w - p_j) * wy) / static_cast<double>(n);
}

/// Intercept + slopes from the full normal equations of minimizing
/// sum_t w_t (y_t - a - b' x_tJ)^2, solved densely.
inline Vector normal_equation_fit(const Matrix& x, const Vector& y, const Vector& w,
                                  const IndexSet& model) {
  const Index n = x.rows();
  const Index k = static_cast<Index>(model.size());
  Matrix a(n, k + 1);
  a.col(0).setOnes();
  for (Index i = 0; i < k; ++i) a.col(i + 1) = x.col(model[static_cast<std::size_t>(i)]);
  const Matrix lhs = a.transpose() * w.asDiagonal() * a;
  const Vector rhs = a.transpose() * w.asDiagonal() * y;
  return lhs.fullPivLu().solve(rhs);
}

/// Plain orthogonal greedy algorithm (unit weights), written independently:
/// each step regresses y on [1, X_J] by dense least squares, scores every
/// unselected column by |corr(x_j, residual)| and picks the largest.
struct PlainOgaStep {
  Index index;
  double alpha;
  Vector beta;
  double sigma2;
};

inline std::vector<PlainOgaStep> plain_oga(const Matrix& x, const Vector& y, Index steps) {
  const Index n = x.rows(), p = x.cols();
  std::vector<PlainOgaStep> out;
  IndexSet model;
  Vector residual = y.array() - y.mean();
  std::vector<bool> used(static_cast<std::size_t>(p), false);
  for (Index k = 0; k < steps; ++k) {
    Index best = -1;
    double best_score = -1;
    for (Index j = 0; j < p; ++j) {
      if (used[static_cast<std::size_t>(j)]) continue;
      const Vector xc = x.col(j).array() - x.col(j).mean();
      const double var = xc.squaredNorm() / static_cast<double>(n);
      if (var < 1e-12) continue;
      const double score = std::abs(xc.dot(residual) / static_cast<double>(n)) / std::sqrt(var);
      if (score > best_score) {
        best_score = score;
        best = j;
      }
    }
    if (best < 0) break;
    used[static_cast<std::size_t>(best)] = true;
    model.push_back(best);
    const Vector coef = normal_equation_fit(x, y, Vector::Ones(n), model);
    Vector fitted = Vector::Constant(n, coef(0));
    for (std::size_t i = 0; i < model.size(); ++i) fitted += coef(static_cast<Index>(i) + 1) * x.col(model[i]);
    residual = y - fitted;
    out.push_back({best, coef(0), coef.tail(static_cast<Index>(model.size())),
                   residual.squaredNorm() / static_cast<double>(n)});
  }
  return out;
}

}  // namespace testutil
