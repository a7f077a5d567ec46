#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "orthoforest/dataset.hpp"
#include "orthoforest/errors.hpp"
#include "orthoforest/linear.hpp"
#include "orthoforest/network.hpp"
#include "orthoforest/rng.hpp"

namespace orf {

enum class LearnerKind { Mean, Lasso, Dnn, Sdnn, Fixed };

inline std::string learner_name(LearnerKind k) {
  switch (k) {
    case LearnerKind::Mean: return "mean";
    case LearnerKind::Lasso: return "lasso";
    case LearnerKind::Dnn: return "dnn";
    case LearnerKind::Sdnn: return "sdnn";
    case LearnerKind::Fixed: return "fixed";
  }
  return "?";
}

inline LearnerKind parse_learner(const std::string& s, const std::string& where) {
  if (s == "mean") return LearnerKind::Mean;
  if (s == "lasso") return LearnerKind::Lasso;
  if (s == "dnn") return LearnerKind::Dnn;
  if (s == "sdnn") return LearnerKind::Sdnn;
  throw ConfigError(where + ": unknown learner '" + s + "'");
}

// Oracle function of (x, wp, wn); used to inject known nuisances in tests.
using NuisanceFn = std::function<double(const VectorXd&, const VectorXd&, const VectorXd&)>;

// Recipe for fitting one conditional-mean learner pair (outcome and
// treatment).  Linear learners absorb sample weights in closed form; network
// learners are fitted on a weighted resample instead (see
// resample_by_weights).
struct LearnerSpec {
  LearnerKind kind = LearnerKind::Lasso;
  double lasso_lambda = 1e-3;
  std::vector<int> hidden;  // empty = two layers, width from input size
  Activation activation = Activation::ReLU;
  TrainConfig train;        // seed is derived per fit and ignored here
  double resample_factor = 1.0;
  NuisanceFn fixed_outcome;     // only for LearnerKind::Fixed
  NuisanceFn fixed_treatment;   // only for LearnerKind::Fixed
  NuisanceFn fixed_instrument;  // only for LearnerKind::Fixed, and only when
                                // an instrument model is requested

  static LearnerSpec mean() {
    LearnerSpec s;
    s.kind = LearnerKind::Mean;
    return s;
  }

  static LearnerSpec lasso(double lambda = 1e-3) {
    LearnerSpec s;
    s.kind = LearnerKind::Lasso;
    s.lasso_lambda = lambda;
    return s;
  }

  static LearnerSpec sdnn(std::vector<int> layers = {}) {
    LearnerSpec s;
    s.kind = LearnerKind::Sdnn;
    s.hidden = std::move(layers);
    return s;
  }

  static LearnerSpec dnn(std::vector<int> layers = {}) {
    LearnerSpec s;
    s.kind = LearnerKind::Dnn;
    s.hidden = std::move(layers);
    return s;
  }

  static LearnerSpec fixed(NuisanceFn outcome, NuisanceFn treatment) {
    LearnerSpec s;
    s.kind = LearnerKind::Fixed;
    s.fixed_outcome = std::move(outcome);
    s.fixed_treatment = std::move(treatment);
    return s;
  }

  void validate() const {
    if (lasso_lambda < 0.0) throw ConfigError("lasso lambda must be >= 0");
    if (!(resample_factor > 0.0)) throw ConfigError("resample_factor must be positive");
    for (int h : hidden) {
      if (h < 1) throw ConfigError("hidden layer widths must be positive");
    }
    if (kind == LearnerKind::Fixed && (!fixed_outcome || !fixed_treatment)) {
      throw ConfigError("fixed learner needs both nuisance functions");
    }
    if (kind == LearnerKind::Dnn || kind == LearnerKind::Sdnn) train.validate();
  }
};

// Default width when no hidden stack is given: two layers, each four units
// per nonlinear input, capped at 100.
inline std::vector<int> default_hidden(int nonlinear_inputs) {
  const int width = std::min(100, std::max(2, 4 * nonlinear_inputs));
  return {width, width};
}

// Draws ceil(factor * |rows|) row ids i.i.d. from `rows` with probability
// proportional to `weights`.  Rows with zero weight are never drawn.  Network
// learners use this to absorb continuous weights: training on the resample
// with uniform weights targets the same weighted objective in expectation,
// and only the relative size of the weights matters.
inline std::vector<int> resample_by_weights(const std::vector<int>& rows, const VectorXd& weights,
                                            double factor, std::uint64_t seed) {
  if (static_cast<Eigen::Index>(rows.size()) != weights.size()) {
    throw ShapeError("resample_by_weights: rows/weights length mismatch");
  }
  if (rows.empty()) throw SizeError("resample_by_weights: empty row set");
  if (!(factor > 0.0)) throw DomainError("resample_by_weights: factor must be positive");
  check_weights(weights);

  std::vector<double> cum(rows.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    acc += weights(static_cast<Eigen::Index>(i));
    cum[i] = acc;
  }
  const int draws = static_cast<int>(std::ceil(factor * static_cast<double>(rows.size())));
  RandomStream rng = derive_stream(seed, "weighted-resample");
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(draws));
  for (int i = 0; i < draws; ++i) {
    const double u = rng.next_double() * acc;
    auto it = std::upper_bound(cum.begin(), cum.end(), u);
    if (it == cum.end()) --it;  // guards the u == acc edge that rounding could produce
    out.push_back(rows[static_cast<std::size_t>(it - cum.begin())]);
  }
  return out;
}

namespace detail {

struct MeanModel {
  double value = 0.0;
};

struct LinearOnAll {
  LinearModel model;  // features are [x | wp | wn]
};

struct NetModel {
  TwoBranchNet net;
  bool split_branches = false;  // true: nonparam=[x|wn], param=wp; false: nonparam=[x|wp|wn]
};

struct FixedModel {
  NuisanceFn fn;
};

}  // namespace detail

// Fitted conditional-mean model, callable on one observation's features.
class Predictor {
 public:
  Predictor() : impl_(detail::MeanModel{}) {}
  explicit Predictor(detail::MeanModel m) : impl_(std::move(m)) {}
  explicit Predictor(detail::LinearOnAll m) : impl_(std::move(m)) {}
  explicit Predictor(detail::NetModel m) : impl_(std::move(m)) {}
  explicit Predictor(detail::FixedModel m) : impl_(std::move(m)) {}

  double predict(const VectorXd& x, const VectorXd& wp, const VectorXd& wn) const {
    if (const auto* m = std::get_if<detail::MeanModel>(&impl_)) return m->value;
    if (const auto* m = std::get_if<detail::LinearOnAll>(&impl_)) {
      VectorXd all(x.size() + wp.size() + wn.size());
      all << x, wp, wn;
      return m->model.predict(all);
    }
    if (const auto* m = std::get_if<detail::NetModel>(&impl_)) {
      if (m->split_branches) {
        VectorXd nonparam(x.size() + wn.size());
        nonparam << x, wn;
        return m->net.forward_one(nonparam, wp);
      }
      VectorXd nonparam(x.size() + wp.size() + wn.size());
      nonparam << x, wp, wn;
      return m->net.forward_one(nonparam, VectorXd(0));
    }
    return std::get<detail::FixedModel>(impl_).fn(x, wp, wn);
  }

  // Predictions for a set of dataset rows (batch path for the network case).
  VectorXd predict_rows(const Dataset& ds, const std::vector<int>& rows) const {
    const int m = static_cast<int>(rows.size());
    if (const auto* mm = std::get_if<detail::MeanModel>(&impl_)) {
      return VectorXd::Constant(m, mm->value);
    }
    if (const auto* lm = std::get_if<detail::LinearOnAll>(&impl_)) {
      return lm->model.predict_batch(gather_all(ds, rows));
    }
    if (const auto* nm = std::get_if<detail::NetModel>(&impl_)) {
      if (nm->split_branches) {
        MatrixXd xn(m, ds.d() + ds.p2()), xp(m, ds.p1());
        for (int i = 0; i < m; ++i) {
          const int r = rows[static_cast<std::size_t>(i)];
          xn.row(i) << ds.x().row(r), ds.wn().row(r);
          xp.row(i) = ds.wp().row(r);
        }
        return nm->net.forward(xn, xp);
      }
      MatrixXd xn = gather_all(ds, rows);
      return nm->net.forward(xn, MatrixXd(m, 0));
    }
    const auto& fn = std::get<detail::FixedModel>(impl_).fn;
    VectorXd out(m);
    for (int i = 0; i < m; ++i) {
      const Observation o = ds.row(rows[static_cast<std::size_t>(i)]);
      out(i) = fn(o.x, o.wp, o.wn);
    }
    return out;
  }

 private:
  static MatrixXd gather_all(const Dataset& ds, const std::vector<int>& rows) {
    MatrixXd all(static_cast<int>(rows.size()), ds.d() + ds.p1() + ds.p2());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const int r = rows[i];
      all.row(static_cast<Eigen::Index>(i)) << ds.x().row(r), ds.wp().row(r), ds.wn().row(r);
    }
    return all;
  }

  std::variant<detail::MeanModel, detail::LinearOnAll, detail::NetModel, detail::FixedModel> impl_;
};

// Fitted outcome/treatment conditional-mean pair.
struct NuisancePair {
  Predictor outcome;    // estimates E[Y | features]
  Predictor treatment;  // estimates E[T | features]
};

namespace detail {

inline MatrixXd gather_features(const Dataset& ds, const std::vector<int>& rows,
                                bool split_branches, MatrixXd* param_out) {
  const int m = static_cast<int>(rows.size());
  if (split_branches) {
    MatrixXd xn(m, ds.d() + ds.p2());
    param_out->resize(m, ds.p1());
    for (int i = 0; i < m; ++i) {
      const int r = rows[static_cast<std::size_t>(i)];
      xn.row(i) << ds.x().row(r), ds.wn().row(r);
      param_out->row(i) = ds.wp().row(r);
    }
    return xn;
  }
  MatrixXd xn(m, ds.d() + ds.p1() + ds.p2());
  param_out->resize(m, 0);
  for (int i = 0; i < m; ++i) {
    const int r = rows[static_cast<std::size_t>(i)];
    xn.row(i) << ds.x().row(r), ds.wp().row(r), ds.wn().row(r);
  }
  return xn;
}

inline Predictor fit_one_net(const Dataset& ds, const std::vector<int>& rows,
                             const VectorXd& target, const LearnerSpec& spec,
                             std::uint64_t train_seed) {
  const bool split = spec.kind == LearnerKind::Sdnn;
  NetArchitecture arch;
  arch.activation = spec.activation;
  arch.nonparam_dim = split ? ds.d() + ds.p2() : ds.d() + ds.p1() + ds.p2();
  arch.param_dim = split ? ds.p1() : 0;
  arch.hidden = spec.hidden.empty() ? default_hidden(split ? ds.p2() : ds.p1() + ds.p2())
                                    : spec.hidden;

  MatrixXd xp;
  MatrixXd xn = gather_features(ds, rows, split, &xp);
  TrainConfig cfg = spec.train;
  cfg.seed = train_seed;
  TwoBranchNet net = train_network(xn, xp, target, VectorXd::Ones(target.size()), arch, cfg);
  return Predictor(NetModel{std::move(net), split});
}

}  // namespace detail

// Fits one conditional-mean model for `target` (an n-vector indexed by
// dataset row) on the given rows with the given importance weights.
// Mean/lasso learners use the weights directly; network learners train with
// uniform weight on a weighted resample of the rows.  `label` keeps the
// derived randomness of distinct targets independent.
inline Predictor fit_single_nuisance(const Dataset& ds, const std::vector<int>& rows,
                                     const VectorXd& weights, const LearnerSpec& spec,
                                     const VectorXd& target, const NuisanceFn& fixed_fn,
                                     const std::string& label, std::uint64_t seed) {
  spec.validate();
  if (rows.empty()) throw SizeError("fit_single_nuisance: empty row set");
  if (static_cast<Eigen::Index>(rows.size()) != weights.size()) {
    throw ShapeError("fit_single_nuisance: rows/weights length mismatch");
  }
  check_weights(weights);

  switch (spec.kind) {
    case LearnerKind::Fixed:
      if (!fixed_fn) {
        throw ConfigError("fixed learner has no function for target '" + label + "'");
      }
      return Predictor(detail::FixedModel{fixed_fn});

    case LearnerKind::Mean: {
      const int m = static_cast<int>(rows.size());
      VectorXd v(m);
      for (int i = 0; i < m; ++i) v(i) = target(rows[static_cast<std::size_t>(i)]);
      return Predictor(detail::MeanModel{weighted_mean(v, weights)});
    }

    case LearnerKind::Lasso: {
      const int m = static_cast<int>(rows.size());
      MatrixXd unused;
      MatrixXd all = detail::gather_features(ds, rows, false, &unused);
      VectorXd v(m);
      for (int i = 0; i < m; ++i) v(i) = target(rows[static_cast<std::size_t>(i)]);
      return Predictor(
          detail::LinearOnAll{fit_weighted_lasso(all, v, weights, spec.lasso_lambda)});
    }

    case LearnerKind::Dnn:
    case LearnerKind::Sdnn: {
      std::vector<int> sampled = resample_by_weights(rows, weights, spec.resample_factor,
                                                     derive_key(seed, "resample-" + label));
      VectorXd v(sampled.size());
      for (std::size_t i = 0; i < sampled.size(); ++i) {
        v(static_cast<Eigen::Index>(i)) = target(sampled[i]);
      }
      return detail::fit_one_net(ds, sampled, v, spec, derive_key(seed, "fit-" + label));
    }
  }
  throw ConfigError("unknown learner kind");
}

// Fits the conditional-mean pair (E[Y|.], E[T|.]); see fit_single_nuisance.
inline NuisancePair fit_nuisance_pair(const Dataset& ds, const std::vector<int>& rows,
                                      const VectorXd& weights, const LearnerSpec& spec,
                                      std::uint64_t seed) {
  NuisancePair pair;
  pair.outcome =
      fit_single_nuisance(ds, rows, weights, spec, ds.y(), spec.fixed_outcome, "outcome", seed);
  pair.treatment = fit_single_nuisance(ds, rows, weights, spec, ds.t(), spec.fixed_treatment,
                                       "treatment", seed);
  return pair;
}

// Conditional-mean model for one instrument column.
inline Predictor fit_instrument_nuisance(const Dataset& ds, const std::vector<int>& rows,
                                         const VectorXd& weights, const LearnerSpec& spec,
                                         int column, std::uint64_t seed) {
  if (column < 0 || column >= ds.n_instruments()) {
    throw ConfigError("instrument column " + std::to_string(column) + " out of range [0, " +
                      std::to_string(ds.n_instruments()) + ")");
  }
  return fit_single_nuisance(ds, rows, weights, spec, ds.z().col(column), spec.fixed_instrument,
                             "instrument-" + std::to_string(column), seed);
}

}  // namespace orf
