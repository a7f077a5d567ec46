#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "orthoforest/dataset.hpp"
#include "orthoforest/errors.hpp"
#include "orthoforest/nuisance.hpp"
#include "orthoforest/threading.hpp"
#include "orthoforest/tree.hpp"

namespace orf {

// A bag of honest trees grown on subsamples of one half of the data.
struct KernelForest {
  std::vector<GradientTree> trees;
  std::vector<int> source_rows;  // dataset rows this forest was grown from
  int n_total = 0;               // row count of the full dataset
};

// Grows cfg.n_trees honest trees on subsamples of `source_rows`.  Each tree
// gets an independent derived stream, so the result does not depend on thread
// count or scheduling.
inline KernelForest grow_forest(const Dataset& ds, std::vector<int> source_rows,
                                const ForestConfig& cfg, std::uint64_t forest_seed) {
  cfg.validate(ds.d());
  const int source = static_cast<int>(source_rows.size());
  const int s = cfg.resolved_subsample(source);
  if (s < 2 || s > source) {
    throw SizeError("forest subsample size " + std::to_string(s) + " out of range [2, " +
                    std::to_string(source) + "]");
  }
  if (s / 2 < cfg.min_leaf) {
    throw SizeError("forest subsample size " + std::to_string(s) +
                    " leaves fewer than min_leaf = " + std::to_string(cfg.min_leaf) +
                    " estimation rows per tree; grow on more rows or lower min_leaf");
  }

  KernelForest forest;
  forest.source_rows = std::move(source_rows);
  forest.n_total = ds.n();
  forest.trees.resize(static_cast<std::size_t>(cfg.n_trees));
  parallel_for(0, cfg.n_trees, cfg.resolved_threads(), [&](int b) {
    const std::uint64_t tree_seed = derive_key(forest_seed, "tree", static_cast<std::uint64_t>(b));
    IndexSplit sub = subsample_halves(source, s, tree_seed);
    std::vector<int> s1(sub.first.size()), s2(sub.second.size());
    for (std::size_t i = 0; i < sub.first.size(); ++i) {
      s1[i] = forest.source_rows[static_cast<std::size_t>(sub.first[i])];
    }
    for (std::size_t i = 0; i < sub.second.size(); ++i) {
      s2[i] = forest.source_rows[static_cast<std::size_t>(sub.second[i])];
    }
    forest.trees[static_cast<std::size_t>(b)] =
        grow_tree(ds, std::move(s1), std::move(s2), cfg, derive_key(tree_seed, "grow"));
  });
  return forest;
}

// Similarity weights of a test point over forest.source_rows: the average
// over trees of (matched-leaf membership) / (matched-leaf size).  Each tree
// contributes total mass 1/n_trees, so the weights sum to 1.
inline VectorXd forest_weights(const KernelForest& forest, const VectorXd& x) {
  if (forest.trees.empty()) throw SizeError("forest_weights: forest has no trees");
  std::vector<int> position(static_cast<std::size_t>(forest.n_total), -1);
  for (std::size_t i = 0; i < forest.source_rows.size(); ++i) {
    position[static_cast<std::size_t>(forest.source_rows[i])] = static_cast<int>(i);
  }
  VectorXd w = VectorXd::Zero(static_cast<Eigen::Index>(forest.source_rows.size()));
  const double tree_mass = 1.0 / static_cast<double>(forest.trees.size());
  for (const auto& tree : forest.trees) {
    const std::vector<int>& members = tree.members_at(x);
    if (members.empty()) continue;
    const double share = tree_mass / static_cast<double>(members.size());
    for (int r : members) {
      const int pos = position[static_cast<std::size_t>(r)];
      if (pos < 0) throw SizeError("forest_weights: leaf member outside source rows");
      w(pos) += share;
    }
  }
  return w;
}

// Point estimate of the heterogeneous effect at x.
struct EffectEstimate {
  VectorXd x;
  double theta = 0.0;
  bool has_interval = false;
  double ci_low = 0.0;
  double ci_high = 0.0;
  double n_effective = 0.0;  // Kish effective size of the local regression
};

// A fitted two-forest model.  Half d1 carries the nuisance-fitting forest and
// the local nuisance fits; half d2 carries the estimation forest and the
// local residual-on-residual regression.
struct OrfModel {
  std::shared_ptr<const Dataset> data;
  ForestConfig cfg;
  LearnerSpec final_learner;
  std::uint64_t seed = 0;
  std::vector<int> d1, d2;
  KernelForest forest_d1;
  KernelForest forest_d2;
};

// Fits the full two-stage model: split rows into halves, grow one forest per
// half.  All downstream estimates at a test point are deterministic functions
// of (model seed, test point).
inline OrfModel fit_orf(std::shared_ptr<const Dataset> data, const ForestConfig& cfg,
                        const LearnerSpec& final_learner, std::uint64_t seed) {
  if (!data) throw SizeError("fit_orf: null dataset");
  cfg.validate(data->d());
  final_learner.validate();
  if (data->n() < 4 * cfg.min_leaf) {
    throw SizeError("fit_orf: need at least " + std::to_string(4 * cfg.min_leaf) +
                    " rows for min_leaf = " + std::to_string(cfg.min_leaf) + ", got " +
                    std::to_string(data->n()));
  }
  OrfModel model;
  model.data = std::move(data);
  model.cfg = cfg;
  model.final_learner = final_learner;
  model.seed = seed;
  IndexSplit halves = split_halves(model.data->n(), derive_key(seed, "halves"));
  model.d1 = std::move(halves.first);
  model.d2 = std::move(halves.second);
  model.forest_d1 = grow_forest(*model.data, model.d1, cfg, derive_key(seed, "forest", 1));
  model.forest_d2 = grow_forest(*model.data, model.d2, cfg, derive_key(seed, "forest", 2));
  return model;
}

namespace detail {

inline void filter_support(const std::vector<int>& rows, const VectorXd& w,
                           std::vector<int>* support, VectorXd* sw) {
  std::vector<double> kept;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const double wi = w(static_cast<Eigen::Index>(i));
    if (wi > 0.0) {
      support->push_back(rows[i]);
      kept.push_back(wi);
    }
  }
  *sw = Eigen::Map<const VectorXd>(kept.data(), static_cast<Eigen::Index>(kept.size()));
}

}  // namespace detail

// Effect estimate at one test point:
//   1. similarity weights from the d1 forest pick out d1 neighbors of x;
//   2. the final learner fits local conditional means on those neighbors;
//   3. d2 rows near x (weights from the d2 forest) are residualized against
//      the local fits, and the effect is the weighted least-squares slope of
//      outcome residuals on treatment residuals.
// Rows with zero similarity weight take no part in either stage.
inline EffectEstimate estimate_effect(const OrfModel& model, const VectorXd& x) {
  const Dataset& ds = *model.data;
  if (x.size() != ds.d()) {
    throw ShapeError("estimate_effect: test point has " + std::to_string(x.size()) +
                     " coordinates, expected " + std::to_string(ds.d()));
  }

  const VectorXd w1 = forest_weights(model.forest_d1, x);
  std::vector<int> nuisance_rows;
  VectorXd nuisance_weights;
  detail::filter_support(model.forest_d1.source_rows, w1, &nuisance_rows, &nuisance_weights);
  if (nuisance_rows.empty()) {
    throw WeightError("estimate_effect: no similarity mass on the nuisance half");
  }
  const std::uint64_t local_seed =
      derive_key(model.seed, "local", hash_doubles(x.data(), static_cast<std::size_t>(x.size())));
  const NuisancePair local =
      fit_nuisance_pair(ds, nuisance_rows, nuisance_weights, model.final_learner, local_seed);

  const VectorXd w2 = forest_weights(model.forest_d2, x);
  std::vector<int> effect_rows;
  VectorXd effect_weights;
  detail::filter_support(model.forest_d2.source_rows, w2, &effect_rows, &effect_weights);
  if (effect_rows.empty()) {
    throw WeightError("estimate_effect: no similarity mass on the estimation half");
  }

  const VectorXd qhat = local.outcome.predict_rows(ds, effect_rows);
  const VectorXd ghat = local.treatment.predict_rows(ds, effect_rows);
  double num = 0.0, denom = 0.0;
  for (std::size_t i = 0; i < effect_rows.size(); ++i) {
    const auto e = static_cast<Eigen::Index>(i);
    const int r = effect_rows[i];
    const double y_res = ds.y()(r) - qhat(e);
    const double t_res = ds.t()(r) - ghat(e);
    const double a = effect_weights(e);
    num += a * t_res * y_res;
    denom += a * t_res * t_res;
  }
  if (denom <= 1e-12) {
    throw NoVariationError("estimate_effect: no residual treatment variation near test point");
  }

  EffectEstimate est;
  est.x = x;
  est.theta = num / denom;
  const double sum_w = effect_weights.sum();
  est.n_effective = sum_w * sum_w / effect_weights.squaredNorm();
  return est;
}

inline std::vector<EffectEstimate> estimate_effects(const OrfModel& model, const MatrixXd& points,
                                                    int threads = 0) {
  std::vector<EffectEstimate> out(static_cast<std::size_t>(points.rows()));
  if (threads <= 0) threads = model.cfg.resolved_threads();
  parallel_for(0, static_cast<int>(points.rows()), threads, [&](int i) {
    out[static_cast<std::size_t>(i)] = estimate_effect(model, points.row(i).transpose());
  });
  return out;
}

// Linear-interpolation quantile of a sorted sample at probability q in [0, 1].
inline double interpolated_quantile(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) throw SizeError("interpolated_quantile: empty sample");
  if (q < 0.0 || q > 1.0) throw DomainError("interpolated_quantile: q must be in [0, 1]");
  const double h = q * static_cast<double>(sorted.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(h);
  if (lo + 1 >= sorted.size()) return sorted.back();
  const double frac = h - static_cast<double>(lo);
  return sorted[lo] + (sorted[lo + 1] - sorted[lo]) * frac;
}

struct BootstrapOptions {
  std::string cluster_column;  // empty = resample rows independently
};

// Percentile-bootstrap confidence intervals around full-sample estimates.
// Replicates refit the whole model on resampled rows (independent rows, or
// whole clusters of the given column when set) with independently derived
// seeds; interval endpoints are interpolated percentiles of the replicate
// estimates at each test point.
inline std::vector<EffectEstimate> bootstrap_ci(std::shared_ptr<const Dataset> data,
                                                const ForestConfig& cfg,
                                                const LearnerSpec& final_learner,
                                                const MatrixXd& points, int replicates,
                                                double level, std::uint64_t seed,
                                                const BootstrapOptions& options = {}) {
  if (!data) throw SizeError("bootstrap_ci: null dataset");
  if (replicates < 2) throw ConfigError("bootstrap replicates: must be >= 2");
  if (!(level > 0.0) || !(level < 1.0)) throw ConfigError("bootstrap level: must be in (0, 1)");

  OrfModel full = fit_orf(data, cfg, final_learner, seed);
  std::vector<EffectEstimate> estimates = estimate_effects(full, points);

  // Cluster structure, if any: clusters keyed by first appearance order.
  std::vector<std::vector<int>> clusters;
  if (!options.cluster_column.empty()) {
    const VectorXd values = data->column_values(options.cluster_column);
    std::vector<double> seen;
    for (int i = 0; i < data->n(); ++i) {
      const double v = values(i);
      std::size_t c = 0;
      for (; c < seen.size(); ++c) {
        if (seen[c] == v) break;
      }
      if (c == seen.size()) {
        seen.push_back(v);
        clusters.emplace_back();
      }
      clusters[c].push_back(i);
    }
    if (clusters.size() < 2) {
      throw ConfigError("bootstrap cluster column '" + options.cluster_column +
                        "' has fewer than 2 clusters");
    }
  }

  const int n_points = static_cast<int>(points.rows());
  MatrixXd reps(replicates, n_points);
  ForestConfig rep_cfg = cfg;
  rep_cfg.threads = 1;  // replicates parallelize across, not within
  parallel_for(0, replicates, cfg.resolved_threads(), [&](int r) {
    RandomStream draw = derive_stream(seed, "bootstrap-draw", static_cast<std::uint64_t>(r));
    std::vector<int> rows;
    if (clusters.empty()) {
      rows.resize(static_cast<std::size_t>(data->n()));
      for (auto& v : rows) {
        v = static_cast<int>(draw.next_below(static_cast<std::uint64_t>(data->n())));
      }
    } else {
      for (std::size_t c = 0; c < clusters.size(); ++c) {
        const auto& pick = clusters[draw.next_below(clusters.size())];
        rows.insert(rows.end(), pick.begin(), pick.end());
      }
    }
    auto replica = std::make_shared<const Dataset>(data->subset(rows));
    OrfModel model = fit_orf(replica, rep_cfg, final_learner,
                             derive_key(seed, "bootstrap-fit", static_cast<std::uint64_t>(r)));
    for (int j = 0; j < n_points; ++j) {
      reps(r, j) = estimate_effect(model, points.row(j).transpose()).theta;
    }
  });

  const double alpha = 1.0 - level;
  for (int j = 0; j < n_points; ++j) {
    std::vector<double> sample(static_cast<std::size_t>(replicates));
    for (int r = 0; r < replicates; ++r) sample[static_cast<std::size_t>(r)] = reps(r, j);
    std::sort(sample.begin(), sample.end());
    estimates[static_cast<std::size_t>(j)].has_interval = true;
    estimates[static_cast<std::size_t>(j)].ci_low = interpolated_quantile(sample, alpha / 2.0);
    estimates[static_cast<std::size_t>(j)].ci_high =
        interpolated_quantile(sample, 1.0 - alpha / 2.0);
  }
  return estimates;
}

}  // namespace orf
