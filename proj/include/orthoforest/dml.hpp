#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "orthoforest/dataset.hpp"
#include "orthoforest/errors.hpp"
#include "orthoforest/linear.hpp"
#include "orthoforest/nuisance.hpp"
#include "orthoforest/rng.hpp"

namespace orf {

// Standard normal quantile (Acklam's rational approximation with one Halley
// refinement step through erfc; accurate to ~1e-15 over (0, 1)).
inline double normal_quantile(double p) {
  if (!(p > 0.0) || !(p < 1.0)) throw DomainError("normal_quantile: p must be in (0, 1)");
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                             2.445134137142996e+00, 3.754408661907416e+00};
  const double plow = 0.02425;
  double x;
  if (p < plow) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - plow) {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log(1.0 - p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  // One Halley step on erfc(-x/sqrt(2))/2 - p = 0.
  constexpr double two_pi = 6.283185307179586476925286766559;
  const double e = 0.5 * std::erfc(-x / std::sqrt(2.0)) - p;
  const double u = e * std::sqrt(two_pi) * std::exp(x * x / 2.0);
  return x - u / (1.0 + x * u / 2.0);
}

// Row-to-fold assignment for cross-fitting.
struct CrossFitPlan {
  int k_folds = 2;
  std::uint64_t seed = 0;
  std::vector<int> fold_of;  // length n, values in [0, k_folds)

  // K near-equal random folds.  Requires 2 <= k and k <= n/10 so every
  // training complement keeps a meaningful share of the data.
  static CrossFitPlan make(int n, int k, std::uint64_t seed) {
    if (k < 2) throw ConfigError("cross-fit folds: must be >= 2, got " + std::to_string(k));
    if (k > n / 10) {
      throw ConfigError("cross-fit folds: must be <= n/10 = " + std::to_string(n / 10) +
                        ", got " + std::to_string(k));
    }
    CrossFitPlan plan;
    plan.k_folds = k;
    plan.seed = seed;
    std::vector<int> order(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
    RandomStream rng = derive_stream(seed, "cross-fit");
    rng.shuffle(order);
    plan.fold_of.assign(static_cast<std::size_t>(n), 0);
    for (int i = 0; i < n; ++i) {
      plan.fold_of[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] = i % k;
    }
    return plan;
  }

  std::vector<int> rows_in(int fold, bool complement = false) const {
    std::vector<int> rows;
    for (std::size_t i = 0; i < fold_of.size(); ++i) {
      if ((fold_of[i] == fold) != complement) rows.push_back(static_cast<int>(i));
    }
    return rows;
  }
};

struct FoldDiagnostics {
  int fold = 0;
  int held_out_rows = 0;
  double outcome_residual_mse = 0.0;
  double treatment_residual_mse = 0.0;
  double instrument_residual_mse = std::numeric_limits<double>::quiet_NaN();
};

// Cross-fitted average-effect estimate with a large-sample normal interval.
struct AteEstimate {
  double theta = 0.0;
  double std_error = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  double level = 0.95;
  std::vector<FoldDiagnostics> folds;
};

namespace detail {

struct CrossFitResiduals {
  VectorXd y_res;
  VectorXd t_res;
  MatrixXd z_res;  // 0 columns unless instruments were requested
  std::vector<FoldDiagnostics> folds;
};

// Residualizes Y, T (and optionally every instrument column) out of fold,
// fitting nuisances on each fold's complement with uniform weights.
inline CrossFitResiduals cross_fit_residuals(const Dataset& ds, const LearnerSpec& spec,
                                             const CrossFitPlan& plan, bool instruments) {
  if (static_cast<int>(plan.fold_of.size()) != ds.n()) {
    throw ShapeError("cross-fit plan covers " + std::to_string(plan.fold_of.size()) +
                     " rows, dataset has " + std::to_string(ds.n()));
  }
  spec.validate();
  CrossFitResiduals out;
  out.y_res.resize(ds.n());
  out.t_res.resize(ds.n());
  out.z_res.resize(ds.n(), instruments ? ds.n_instruments() : 0);

  for (int f = 0; f < plan.k_folds; ++f) {
    const std::vector<int> train = plan.rows_in(f, /*complement=*/true);
    const std::vector<int> held = plan.rows_in(f);
    if (train.empty() || held.empty()) {
      throw SizeError("cross-fit fold " + std::to_string(f) + " is empty");
    }
    const VectorXd ones = VectorXd::Ones(static_cast<Eigen::Index>(train.size()));
    const std::uint64_t fold_seed = derive_key(plan.seed, "fold", static_cast<std::uint64_t>(f));
    const NuisancePair pair = fit_nuisance_pair(ds, train, ones, spec, fold_seed);

    FoldDiagnostics diag;
    diag.fold = f;
    diag.held_out_rows = static_cast<int>(held.size());
    const VectorXd qhat = pair.outcome.predict_rows(ds, held);
    const VectorXd ghat = pair.treatment.predict_rows(ds, held);
    double ss_y = 0.0, ss_t = 0.0;
    for (std::size_t i = 0; i < held.size(); ++i) {
      const auto e = static_cast<Eigen::Index>(i);
      const int r = held[i];
      out.y_res(r) = ds.y()(r) - qhat(e);
      out.t_res(r) = ds.t()(r) - ghat(e);
      ss_y += out.y_res(r) * out.y_res(r);
      ss_t += out.t_res(r) * out.t_res(r);
    }
    diag.outcome_residual_mse = ss_y / static_cast<double>(held.size());
    diag.treatment_residual_mse = ss_t / static_cast<double>(held.size());

    if (instruments) {
      double ss_z = 0.0;
      for (int j = 0; j < ds.n_instruments(); ++j) {
        const Predictor rhat = fit_instrument_nuisance(ds, train, ones, spec, j,
                                                       derive_key(fold_seed, "instrument",
                                                                  static_cast<std::uint64_t>(j)));
        const VectorXd pred = rhat.predict_rows(ds, held);
        for (std::size_t i = 0; i < held.size(); ++i) {
          const int r = held[i];
          out.z_res(r, j) = ds.z()(r, j) - pred(static_cast<Eigen::Index>(i));
          ss_z += out.z_res(r, j) * out.z_res(r, j);
        }
      }
      diag.instrument_residual_mse =
          ss_z / static_cast<double>(held.size() * static_cast<std::size_t>(ds.n_instruments()));
    }
    out.folds.push_back(diag);
  }
  return out;
}

inline void fill_interval(AteEstimate* est, double level) {
  est->level = level;
  const double z = normal_quantile(0.5 + level / 2.0);
  est->ci_low = est->theta - z * est->std_error;
  est->ci_high = est->theta + z * est->std_error;
}

}  // namespace detail

// Cross-fitted partially-linear estimate of the average effect:
//   theta = sum(t_res * y_res) / sum(t_res^2)
// with the heteroskedasticity-robust standard error
//   se = sqrt(sum(t_res^2 * eps^2)) / sum(t_res^2),   eps = y_res - theta t_res.
inline AteEstimate fit_dml(const Dataset& ds, const LearnerSpec& spec, const CrossFitPlan& plan,
                           double level = 0.95) {
  if (!(level > 0.0) || !(level < 1.0)) throw ConfigError("interval level must be in (0, 1)");
  detail::CrossFitResiduals res = detail::cross_fit_residuals(ds, spec, plan, false);
  const double denom = res.t_res.squaredNorm();
  if (denom <= 1e-12) {
    throw NoVariationError("fit_dml: no residual treatment variation");
  }
  AteEstimate est;
  est.theta = res.t_res.dot(res.y_res) / denom;
  const VectorXd eps = res.y_res - est.theta * res.t_res;
  est.std_error = std::sqrt(res.t_res.cwiseProduct(eps).squaredNorm()) / denom;
  est.folds = std::move(res.folds);
  detail::fill_interval(&est, level);
  return est;
}

struct DmlivOptions {
  int instrument = 0;               // which instrument column drives the moment
  bool combine_instruments = false; // project t_res on all residualized
                                    // instruments and use the fitted value
};

// Cross-fitted instrumental-variable estimate of the average effect:
//   theta = sum(y_res * z_res) / sum(t_res * z_res)
// with the plug-in standard error
//   se = sqrt(sum(((y_res - theta t_res) * z_res)^2)) / |sum(t_res * z_res)|.
// The moment uses one scalar instrument: column `instrument`, or, with
// combine_instruments, the least-squares projection of t_res on all
// residualized instrument columns.
inline AteEstimate fit_dmliv(const Dataset& ds, const LearnerSpec& spec, const CrossFitPlan& plan,
                             const DmlivOptions& options = {}, double level = 0.95) {
  if (!(level > 0.0) || !(level < 1.0)) throw ConfigError("interval level must be in (0, 1)");
  if (ds.n_instruments() < 1) {
    throw ConfigError("fit_dmliv: dataset declares no instrument column");
  }
  if (options.instrument < 0 || options.instrument >= ds.n_instruments()) {
    throw ConfigError("fit_dmliv: instrument column " + std::to_string(options.instrument) +
                      " out of range [0, " + std::to_string(ds.n_instruments()) + ")");
  }
  detail::CrossFitResiduals res = detail::cross_fit_residuals(ds, spec, plan, true);

  VectorXd z_res;
  if (options.combine_instruments && ds.n_instruments() > 1) {
    // First-stage projection of the treatment residual on all instrument
    // residuals; the fitted value is the strongest scalar combination.
    OlsFit proj = fit_ols(res.z_res, res.t_res);
    z_res = res.z_res * proj.coef;
  } else {
    z_res = res.z_res.col(options.instrument);
  }

  const double cross = res.t_res.dot(z_res);
  const double scale = res.t_res.cwiseProduct(z_res).cwiseAbs().sum();
  if (std::abs(cross) <= 1e-10 * scale || scale == 0.0) {
    throw WeakInstrumentError(
        "fit_dmliv: residualized treatment and instrument are uncorrelated (sum " +
        format_double(cross) + " against magnitude " + format_double(scale) + ")");
  }

  AteEstimate est;
  est.theta = res.y_res.dot(z_res) / cross;
  const VectorXd eps = res.y_res - est.theta * res.t_res;
  est.std_error = std::sqrt(eps.cwiseProduct(z_res).squaredNorm()) / std::abs(cross);
  est.folds = std::move(res.folds);
  detail::fill_interval(&est, level);
  return est;
}

// Joint F-statistic for the instruments in the first-stage regression of T on
// [1, X, Wp, Wn] (restricted) versus [1, X, Wp, Wn, Z] (unrestricted):
//   F = ((RSS_r - RSS_u) / q) / (RSS_u / (n - k_u)).
// A numerically zero unrestricted RSS yields +infinity; rank-deficient
// designs raise RankError.
inline double first_stage_f(const Dataset& ds) {
  const int q = ds.n_instruments();
  if (q < 1) throw ConfigError("first_stage_f: dataset declares no instrument column");
  const int n = ds.n();
  const int k_restricted = 1 + ds.d() + ds.p1() + ds.p2();
  const int k_unrestricted = k_restricted + q;
  if (n <= k_unrestricted) {
    throw SizeError("first_stage_f: need more rows than regressors (" + std::to_string(n) +
                    " rows, " + std::to_string(k_unrestricted) + " regressors)");
  }

  MatrixXd restricted(n, k_restricted);
  restricted.col(0) = VectorXd::Ones(n);
  restricted.middleCols(1, ds.d()) = ds.x();
  if (ds.p1() > 0) restricted.middleCols(1 + ds.d(), ds.p1()) = ds.wp();
  if (ds.p2() > 0) restricted.middleCols(1 + ds.d() + ds.p1(), ds.p2()) = ds.wn();
  MatrixXd unrestricted(n, k_unrestricted);
  unrestricted.leftCols(k_restricted) = restricted;
  unrestricted.rightCols(q) = ds.z();

  const double rss_r = fit_ols(restricted, ds.t()).rss;
  const double rss_u = fit_ols(unrestricted, ds.t()).rss;
  const double tss = (ds.t().array() - ds.t().mean()).matrix().squaredNorm();
  if (rss_u <= 1e-12 * std::max(1.0, tss)) {
    return std::numeric_limits<double>::infinity();
  }
  return ((rss_r - rss_u) / static_cast<double>(q)) /
         (rss_u / static_cast<double>(n - k_unrestricted));
}

}  // namespace orf
