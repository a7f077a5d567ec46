#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>

#include "orthoforest/errors.hpp"

namespace orf {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Affine model y ≈ intercept + x·coef.
struct LinearModel {
  VectorXd coef;
  double intercept = 0.0;

  double predict(const VectorXd& x) const {
    if (x.size() != coef.size()) {
      throw ShapeError("predict: expected " + std::to_string(coef.size()) + " features, got " +
                       std::to_string(x.size()));
    }
    return intercept + coef.dot(x);
  }

  VectorXd predict_batch(const MatrixXd& x) const {
    if (x.cols() != coef.size()) {
      throw ShapeError("predict_batch: expected " + std::to_string(coef.size()) +
                       " feature columns, got " + std::to_string(x.cols()));
    }
    return (x * coef).array() + intercept;
  }
};

inline void check_weights(const VectorXd& w) {
  if ((w.array() < 0.0).any()) throw WeightError("sample weights must be non-negative");
  if (!(w.sum() > 0.0)) throw WeightError("sample weights must not all be zero");
  if (!w.allFinite()) throw WeightError("sample weights must be finite");
}

inline double weighted_mean(const VectorXd& v, const VectorXd& w) {
  if (v.size() != w.size()) throw ShapeError("weighted_mean: value/weight length mismatch");
  check_weights(w);
  return w.dot(v) / w.sum();
}

// L1-penalized weighted least squares:
//
//   minimize  sum_i ŵ_i (y_i - b0 - x_i·b)^2 + lambda * ||b||_1,
//
// where ŵ = w / mean(w).  Normalizing the weights to mean one makes the fit
// invariant to the overall scale of the weights (and is a no-op for unit
// weights).  The intercept is never penalized.  Solved by cyclic coordinate
// descent on internally standardized columns; the per-coordinate threshold is
// rescaled so the objective above, in original coordinates, is what is
// minimized.  Stops when the largest coefficient change in original
// coordinates falls below `tol` (or after `max_sweeps` full sweeps).
inline LinearModel fit_weighted_lasso(const MatrixXd& x, const VectorXd& y, const VectorXd& w,
                                      double lambda, int max_sweeps = 1000, double tol = 1e-8) {
  const Eigen::Index n = x.rows();
  const Eigen::Index p = x.cols();
  if (y.size() != n || w.size() != n) {
    throw ShapeError("fit_weighted_lasso: rows of x, y and w must match");
  }
  if (n < 1) throw SizeError("fit_weighted_lasso: need at least one row");
  check_weights(w);
  if (lambda < 0.0) throw DomainError("fit_weighted_lasso: lambda must be >= 0");

  const VectorXd wn = w * (static_cast<double>(n) / w.sum());  // mean-one weights
  const double total = static_cast<double>(n);                 // sum of wn

  LinearModel model;
  model.coef = VectorXd::Zero(p);
  const double mean_y = wn.dot(y) / total;
  if (p == 0) {
    model.intercept = mean_y;
    return model;
  }

  // Weighted centering and scaling.  Constant columns get scale 1 and a zero
  // centered column, so their coefficient stays exactly 0.
  VectorXd mu(p), scale(p);
  MatrixXd xs(n, p);
  for (Eigen::Index j = 0; j < p; ++j) {
    mu(j) = wn.dot(x.col(j)) / total;
    VectorXd centered = x.col(j).array() - mu(j);
    double var = wn.dot(centered.cwiseProduct(centered)) / total;
    scale(j) = var > 1e-24 ? std::sqrt(var) : 1.0;
    xs.col(j) = centered / scale(j);
  }
  const VectorXd ys = y.array() - mean_y;

  // a_j = sum_i wn_i xs_ij^2; equals `total` for non-degenerate columns.
  VectorXd col_norm(p);
  for (Eigen::Index j = 0; j < p; ++j) {
    col_norm(j) = wn.dot(xs.col(j).cwiseProduct(xs.col(j)));
  }

  VectorXd b = VectorXd::Zero(p);
  VectorXd residual = ys;
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double max_change = 0.0;
    for (Eigen::Index j = 0; j < p; ++j) {
      if (col_norm(j) <= 1e-24) continue;
      const double c = wn.dot(xs.col(j).cwiseProduct(residual)) + col_norm(j) * b(j);
      const double thr = lambda / (2.0 * scale(j));
      double bj = 0.0;
      if (c > thr) {
        bj = (c - thr) / col_norm(j);
      } else if (c < -thr) {
        bj = (c + thr) / col_norm(j);
      }
      const double delta = bj - b(j);
      if (delta != 0.0) {
        residual -= xs.col(j) * delta;
        b(j) = bj;
      }
      max_change = std::max(max_change, std::abs(delta) / scale(j));
    }
    if (max_change < tol) break;
  }

  model.coef = b.cwiseQuotient(scale);
  model.intercept = mean_y - model.coef.dot(mu);
  return model;
}

// Value of the objective minimized by fit_weighted_lasso (weights normalized
// to mean one), for convergence checks.
inline double lasso_objective(const MatrixXd& x, const VectorXd& y, const VectorXd& w,
                              double lambda, const LinearModel& model) {
  check_weights(w);
  const VectorXd wn = w * (static_cast<double>(x.rows()) / w.sum());
  const VectorXd r = y - model.predict_batch(x);
  return wn.dot(r.cwiseProduct(r)) + lambda * model.coef.lpNorm<1>();
}

// Least squares against an explicit design matrix (no implicit intercept).
// Throws RankError when the design is column-rank deficient.
struct OlsFit {
  VectorXd coef;
  double rss = 0.0;
};

inline OlsFit fit_ols(const MatrixXd& design, const VectorXd& y) {
  if (design.rows() != y.size()) throw ShapeError("fit_ols: design/response rows must match");
  if (design.rows() < design.cols()) {
    throw SizeError("fit_ols: need at least as many rows as columns");
  }
  Eigen::ColPivHouseholderQR<MatrixXd> qr(design);
  qr.setThreshold(1e-10);
  if (qr.rank() < design.cols()) {
    throw RankError("fit_ols: design matrix is rank deficient (rank " +
                    std::to_string(qr.rank()) + " of " + std::to_string(design.cols()) + ")");
  }
  OlsFit fit;
  fit.coef = qr.solve(y);
  fit.rss = (y - design * fit.coef).squaredNorm();
  return fit;
}

// Weighted least squares with an intercept, by rescaling rows with sqrt(w).
inline LinearModel fit_wls(const MatrixXd& x, const VectorXd& y, const VectorXd& w) {
  if (x.rows() != y.size() || w.size() != y.size()) {
    throw ShapeError("fit_wls: rows of x, y and w must match");
  }
  check_weights(w);
  const VectorXd s = w.cwiseSqrt();
  MatrixXd design(x.rows(), x.cols() + 1);
  design.col(0) = s;
  for (Eigen::Index j = 0; j < x.cols(); ++j) design.col(j + 1) = x.col(j).cwiseProduct(s);
  OlsFit fit = fit_ols(design, y.cwiseProduct(s));
  LinearModel model;
  model.intercept = fit.coef(0);
  model.coef = fit.coef.tail(x.cols());
  return model;
}

}  // namespace orf
