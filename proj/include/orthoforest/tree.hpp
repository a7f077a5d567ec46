#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <string>
#include <utility>
#include <vector>

#include "orthoforest/dataset.hpp"
#include "orthoforest/errors.hpp"
#include "orthoforest/nuisance.hpp"
#include "orthoforest/rng.hpp"

namespace orf {

// Forest growth parameters.  Zeros in subsample_size / features_per_split
// mean "derive from the data" (see resolved_subsample / resolved_features).
struct ForestConfig {
  int n_trees = 500;
  int subsample_size = 0;        // 0 = ceil(0.45 * source rows)
  int min_leaf = 10;             // minimum rows of each half-sample in a leaf
  double min_split_ratio = 0.1;  // each child keeps at least this fraction
  int max_splits = 30;           // total splits per tree
  int features_per_split = 0;    // 0 = ceil(sqrt(d))
  int split_points = 10;         // candidate thresholds per feature
  LearnerSpec node_learner = LearnerSpec::lasso(1e-3);
  std::uint64_t seed = 0;
  int threads = 0;  // 0 = default_thread_count()

  void validate(int d) const {
    if (n_trees < 1) throw ConfigError("forest trees: must be >= 1");
    if (subsample_size < 0) throw ConfigError("forest subsample: must be >= 0");
    if (min_leaf < 1) throw ConfigError("forest min_leaf: must be >= 1");
    if (!(min_split_ratio > 0.0) || min_split_ratio > 0.5) {
      throw ConfigError("forest min_split_ratio: must be in (0, 0.5]");
    }
    if (max_splits < 0) throw ConfigError("forest max_splits: must be >= 0");
    if (features_per_split < 0 || features_per_split > d) {
      throw ConfigError("forest features_per_split: must be in [1, " + std::to_string(d) +
                        "] or 0 for automatic");
    }
    if (split_points < 1) throw ConfigError("forest split_points: must be >= 1");
    node_learner.validate();
  }

  int resolved_subsample(int source_rows) const {
    if (subsample_size > 0) return subsample_size;
    return static_cast<int>(std::ceil(0.45 * static_cast<double>(source_rows)));
  }

  int resolved_features(int d) const {
    if (features_per_split > 0) return features_per_split;
    return static_cast<int>(std::ceil(std::sqrt(static_cast<double>(d))));
  }

  int resolved_threads() const { return threads > 0 ? threads : default_thread_count(); }
};

struct SplitCandidate {
  int feature = 0;
  double threshold = 0.0;
  friend bool operator==(const SplitCandidate&, const SplitCandidate&) = default;
};

// Candidate axis-aligned splits for a node: m features drawn without
// replacement, and per feature up to k of its distinct observed values drawn
// without replacement as thresholds ("goes left" means value <= threshold).
// Candidates come back sorted by (feature, threshold) so that score ties are
// broken toward the lowest feature, then the lowest threshold.
inline std::vector<SplitCandidate> propose_splits(const MatrixXd& x, int m, int k,
                                                  std::uint64_t seed) {
  const int rows = static_cast<int>(x.rows());
  const int d = static_cast<int>(x.cols());
  if (rows < 1) throw SizeError("propose_splits: node has no rows");
  if (m < 1 || m > d) {
    throw ConfigError("propose_splits: features per split must be in [1, " + std::to_string(d) +
                      "], got " + std::to_string(m));
  }
  if (k < 1) throw ConfigError("propose_splits: need at least one threshold per feature");

  RandomStream rng = derive_stream(seed, "propose-splits");
  std::vector<int> features = rng.sample_without_replacement(d, m);
  std::sort(features.begin(), features.end());

  std::vector<SplitCandidate> out;
  std::vector<double> values(static_cast<std::size_t>(rows));
  for (int f : features) {
    for (int i = 0; i < rows; ++i) values[static_cast<std::size_t>(i)] = x(i, f);
    std::sort(values.begin(), values.end());
    auto end = std::unique(values.begin(), values.end());
    const int distinct = static_cast<int>(end - values.begin());
    const int take = std::min(k, distinct);
    std::vector<int> picks = rng.sample_without_replacement(distinct, take);
    std::sort(picks.begin(), picks.end());
    for (int p : picks) out.push_back({f, values[static_cast<std::size_t>(p)]});
  }
  return out;
}

// Residuals of outcome and treatment against node-level nuisance fits.
struct ResidualPair {
  VectorXd y_res;
  VectorXd t_res;
};

// Fits the node nuisance pair on the given rows with uniform weights and
// returns (Y - qhat, T - ghat), aligned with `rows`.
inline ResidualPair node_residualize(const Dataset& ds, const std::vector<int>& rows,
                                     const LearnerSpec& spec, int min_rows = 5,
                                     std::uint64_t seed = 0) {
  if (static_cast<int>(rows.size()) < min_rows) {
    throw SizeError("node_residualize: need at least " + std::to_string(min_rows) +
                    " rows, got " + std::to_string(rows.size()));
  }
  const VectorXd ones = VectorXd::Ones(static_cast<Eigen::Index>(rows.size()));
  NuisancePair pair = fit_nuisance_pair(ds, rows, ones, spec, seed);
  ResidualPair out;
  out.y_res.resize(static_cast<Eigen::Index>(rows.size()));
  out.t_res.resize(static_cast<Eigen::Index>(rows.size()));
  const VectorXd qhat = pair.outcome.predict_rows(ds, rows);
  const VectorXd ghat = pair.treatment.predict_rows(ds, rows);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto e = static_cast<Eigen::Index>(i);
    out.y_res(e) = ds.y()(rows[i]) - qhat(e);
    out.t_res(e) = ds.t()(rows[i]) - ghat(e);
  }
  return out;
}

// Node-level slope of outcome residuals on treatment residuals, plus the
// (negative) curvature of the local moment.
struct NodeTheta {
  double theta = 0.0;
  double hessian = 0.0;  // -sum(t_res^2)/n; always <= 0
};

inline NodeTheta fit_node_theta(const ResidualPair& res) {
  if (res.y_res.size() != res.t_res.size()) {
    throw ShapeError("fit_node_theta: residual lengths differ");
  }
  if (res.y_res.size() < 1) throw SizeError("fit_node_theta: no residuals");
  const double denom = res.t_res.squaredNorm();
  if (denom <= 1e-12) {
    throw NoVariationError("no residual treatment variation at node (sum of squares " +
                           format_double(denom) + ")");
  }
  NodeTheta out;
  out.theta = res.t_res.dot(res.y_res) / denom;
  out.hessian = -denom / static_cast<double>(res.y_res.size());
  return out;
}

// One Newton step from the parent estimate using only the child's rows:
//
//   theta_child = theta_parent - A^-1 * sum_i (y_res_i - theta_parent t_res_i) t_res_i
//
// with A the parent hessian.  Cheap child-quality proxy; no child refit.
inline double newton_proxy(const NodeTheta& parent, const VectorXd& child_y_res,
                           const VectorXd& child_t_res) {
  if (child_y_res.size() != child_t_res.size()) {
    throw ShapeError("newton_proxy: residual lengths differ");
  }
  if (parent.hessian == 0.0) {
    throw DegenerateHessianError("newton_proxy: parent hessian is zero");
  }
  const double moment =
      (child_y_res - parent.theta * child_t_res).dot(child_t_res);
  return parent.theta - moment / parent.hessian;
}

// Split score: size-normalized squared deviation of the child proxies from
// the parent estimate.
inline double heterogeneity_score(double theta_left, double theta_right, double theta_parent,
                                  int n_left, int n_right) {
  if (n_left < 1 || n_right < 1) throw SizeError("heterogeneity_score: empty child");
  const double dl = theta_left - theta_parent;
  const double dr = theta_right - theta_parent;
  return dl * dl / static_cast<double>(n_left) + dr * dr / static_cast<double>(n_right);
}

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double theta = 0.0;    // node estimate (inherited from the parent when the
                         // node was too small or had no residual variation)
  double hessian = 0.0;  // 0 when no node-level fit happened
  int leaf_id = -1;
  int n_split = 0;     // split-half rows that reached the node
  int n_estimate = 0;  // estimation-half rows that reached the node
};

// Honest tree: splits are chosen using only the split half; leaf membership
// lists hold only estimation-half rows.
struct GradientTree {
  std::vector<TreeNode> nodes;               // nodes[0] is the root
  std::vector<std::vector<int>> leaf_rows;   // estimation rows by leaf_id

  int find_leaf_node(const VectorXd& x) const {
    if (nodes.empty()) throw SizeError("find_leaf_node: empty tree");
    int at = 0;
    while (nodes[static_cast<std::size_t>(at)].feature >= 0) {
      const TreeNode& n = nodes[static_cast<std::size_t>(at)];
      if (x.size() <= n.feature) {
        throw ShapeError("find_leaf_node: point has too few coordinates");
      }
      at = x(n.feature) <= n.threshold ? n.left : n.right;
    }
    return at;
  }

  const std::vector<int>& members_at(const VectorXd& x) const {
    const int node = find_leaf_node(x);
    return leaf_rows[static_cast<std::size_t>(nodes[static_cast<std::size_t>(node)].leaf_id)];
  }

  int leaf_count() const { return static_cast<int>(leaf_rows.size()); }
};

// Grows one honest gradient tree on a subsample.  `split_rows` drive nuisance
// fits, node estimates and split selection; `estimate_rows` only flow down
// the chosen splits and populate the leaves.  Split validity requires every
// child to keep at least min_leaf rows of *each* half and at least
// min_split_ratio of each half's node rows; the split score must be finite
// and positive.  Nodes smaller than max(5, min_leaf) on the split half (or
// without residual treatment variation) become leaves that inherit the parent
// estimate.  Growth stops after max_splits splits, breadth first.
inline GradientTree grow_tree(const Dataset& ds, std::vector<int> split_rows,
                              std::vector<int> estimate_rows, const ForestConfig& cfg,
                              std::uint64_t tree_seed) {
  cfg.validate(ds.d());
  if (static_cast<int>(estimate_rows.size()) < cfg.min_leaf) {
    throw SizeError("grow_tree: estimation half has " + std::to_string(estimate_rows.size()) +
                    " rows, need at least min_leaf = " + std::to_string(cfg.min_leaf));
  }
  if (split_rows.empty()) throw SizeError("grow_tree: split half is empty");

  const int m = cfg.resolved_features(ds.d());
  const int min_fit = std::max(5, cfg.min_leaf);

  GradientTree tree;
  tree.nodes.push_back(TreeNode{});

  struct WorkItem {
    int node = 0;
    std::vector<int> s1;
    std::vector<int> s2;
    double parent_theta = 0.0;
  };
  std::deque<WorkItem> queue;
  queue.push_back({0, std::move(split_rows), std::move(estimate_rows), 0.0});

  int splits_made = 0;
  int processed = 0;
  while (!queue.empty()) {
    WorkItem item = std::move(queue.front());
    queue.pop_front();
    const std::uint64_t node_seed = derive_key(tree_seed, "node", static_cast<std::uint64_t>(processed));
    ++processed;

    TreeNode& node = tree.nodes[static_cast<std::size_t>(item.node)];
    node.n_split = static_cast<int>(item.s1.size());
    node.n_estimate = static_cast<int>(item.s2.size());
    node.theta = item.parent_theta;

    bool can_split = splits_made < cfg.max_splits &&
                     static_cast<int>(item.s1.size()) >= min_fit &&
                     static_cast<int>(item.s1.size()) >= 2 * cfg.min_leaf &&
                     static_cast<int>(item.s2.size()) >= 2 * cfg.min_leaf;

    ResidualPair res;
    NodeTheta fit;
    bool fitted = false;
    if (static_cast<int>(item.s1.size()) >= min_fit) {
      res = node_residualize(ds, item.s1, cfg.node_learner, min_fit,
                             derive_key(node_seed, "nuisance"));
      try {
        fit = fit_node_theta(res);
        fitted = true;
        node.theta = fit.theta;
        node.hessian = fit.hessian;
      } catch (const NoVariationError&) {
        fitted = false;
      }
    }

    if (can_split && fitted) {
      MatrixXd node_x(item.s1.size(), ds.d());
      for (std::size_t i = 0; i < item.s1.size(); ++i) {
        node_x.row(static_cast<Eigen::Index>(i)) = ds.x().row(item.s1[i]);
      }
      const auto candidates =
          propose_splits(node_x, m, cfg.split_points, derive_key(node_seed, "candidates"));

      double best_score = 0.0;
      int best = -1;
      std::vector<char> best_mask;
      std::vector<char> mask(item.s1.size());
      for (std::size_t c = 0; c < candidates.size(); ++c) {
        const auto& cand = candidates[c];
        int n1_left = 0;
        for (std::size_t i = 0; i < item.s1.size(); ++i) {
          mask[i] = node_x(static_cast<Eigen::Index>(i), cand.feature) <= cand.threshold;
          n1_left += mask[i];
        }
        const int n1_right = static_cast<int>(item.s1.size()) - n1_left;
        int n2_left = 0;
        for (int r : item.s2) n2_left += ds.x()(r, cand.feature) <= cand.threshold;
        const int n2_right = static_cast<int>(item.s2.size()) - n2_left;

        const double min1 = cfg.min_split_ratio * static_cast<double>(item.s1.size());
        const double min2 = cfg.min_split_ratio * static_cast<double>(item.s2.size());
        if (n1_left < cfg.min_leaf || n1_right < cfg.min_leaf || n2_left < cfg.min_leaf ||
            n2_right < cfg.min_leaf || n1_left < min1 || n1_right < min1 || n2_left < min2 ||
            n2_right < min2) {
          continue;
        }

        VectorXd yl(n1_left), tl(n1_left), yr(n1_right), tr(n1_right);
        int il = 0, ir = 0;
        for (std::size_t i = 0; i < item.s1.size(); ++i) {
          const auto e = static_cast<Eigen::Index>(i);
          if (mask[i]) {
            yl(il) = res.y_res(e);
            tl(il++) = res.t_res(e);
          } else {
            yr(ir) = res.y_res(e);
            tr(ir++) = res.t_res(e);
          }
        }
        const double theta_left = newton_proxy(fit, yl, tl);
        const double theta_right = newton_proxy(fit, yr, tr);
        const double score =
            heterogeneity_score(theta_left, theta_right, fit.theta, n1_left, n1_right);
        if (std::isfinite(score) && score > 0.0 && (best < 0 || score > best_score)) {
          best = static_cast<int>(c);
          best_score = score;
          best_mask = mask;
        }
      }

      if (best >= 0) {
        const auto& cand = candidates[static_cast<std::size_t>(best)];
        WorkItem left_item, right_item;
        left_item.parent_theta = right_item.parent_theta = fit.theta;
        for (std::size_t i = 0; i < item.s1.size(); ++i) {
          (best_mask[i] ? left_item.s1 : right_item.s1).push_back(item.s1[i]);
        }
        for (int r : item.s2) {
          (ds.x()(r, cand.feature) <= cand.threshold ? left_item.s2 : right_item.s2).push_back(r);
        }
        left_item.node = static_cast<int>(tree.nodes.size());
        right_item.node = left_item.node + 1;
        // `node` reference may dangle after push_back; write through index.
        tree.nodes[static_cast<std::size_t>(item.node)].feature = cand.feature;
        tree.nodes[static_cast<std::size_t>(item.node)].threshold = cand.threshold;
        tree.nodes[static_cast<std::size_t>(item.node)].left = left_item.node;
        tree.nodes[static_cast<std::size_t>(item.node)].right = right_item.node;
        tree.nodes.emplace_back();
        tree.nodes.emplace_back();
        ++splits_made;
        queue.push_back(std::move(left_item));
        queue.push_back(std::move(right_item));
        continue;
      }
    }

    // Leaf: record estimation members.
    TreeNode& leaf = tree.nodes[static_cast<std::size_t>(item.node)];
    leaf.leaf_id = static_cast<int>(tree.leaf_rows.size());
    tree.leaf_rows.push_back(std::move(item.s2));
  }
  return tree;
}

}  // namespace orf
