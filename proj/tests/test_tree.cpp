#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <set>
#include <vector>

#include "orthoforest/errors.hpp"
#include "orthoforest/synthetic.hpp"
#include "orthoforest/tree.hpp"

namespace {

using orf::Dataset;
using orf::ForestConfig;
using orf::GradientTree;
using orf::MatrixXd;
using orf::VectorXd;

TEST(SplitProposal, DistinctSortedAndFromObservedValues) {
  orf::RandomStream rng(1);
  MatrixXd x(40, 3);
  for (int i = 0; i < 40; ++i) {
    x(i, 0) = static_cast<double>(i % 4);  // few distinct values
    x(i, 1) = rng.next_normal();
    x(i, 2) = 7.0;  // constant
  }
  const auto cands = orf::propose_splits(x, 3, 5, 11);
  std::set<std::pair<int, double>> seen;
  for (const auto& c : cands) {
    EXPECT_GE(c.feature, 0);
    EXPECT_LT(c.feature, 3);
    bool observed = false;
    for (int i = 0; i < 40; ++i) observed |= x(i, c.feature) == c.threshold;
    EXPECT_TRUE(observed);
    EXPECT_TRUE(seen.insert({c.feature, c.threshold}).second) << "duplicate candidate";
  }
  EXPECT_TRUE(std::is_sorted(cands.begin(), cands.end(), [](const auto& a, const auto& b) {
    return a.feature != b.feature ? a.feature < b.feature : a.threshold < b.threshold;
  }));
  int from0 = 0, from1 = 0, from2 = 0;
  for (const auto& c : cands) {
    from0 += c.feature == 0;
    from1 += c.feature == 1;
    from2 += c.feature == 2;
  }
  EXPECT_LE(from0, 4);  // only 4 distinct values available
  EXPECT_LE(from1, 5);  // capped by the per-feature budget
  EXPECT_EQ(from2, 1);  // constant feature has one distinct value

  // Requesting fewer features than exist subsamples them.
  const auto narrow = orf::propose_splits(x, 1, 5, 11);
  std::set<int> feats;
  for (const auto& c : narrow) feats.insert(c.feature);
  EXPECT_EQ(feats.size(), 1u);

  EXPECT_EQ(orf::propose_splits(x, 3, 5, 11), cands);  // deterministic
}

TEST(NodeTheta, MatchesHandComputedRatio) {
  orf::ResidualPair res;
  res.t_res.resize(3);
  res.y_res.resize(3);
  res.t_res << 1, -1, 2;
  res.y_res << 2, -1, 3;
  const auto node = orf::fit_node_theta(res);
  // theta = (2 + 1 + 6) / (1 + 1 + 4); hessian = -(sum t^2) / n.
  EXPECT_NEAR(node.theta, 9.0 / 6.0, 1e-15);
  EXPECT_NEAR(node.hessian, -2.0, 1e-15);
  EXPECT_LE(node.hessian, 0.0);

  res.t_res.setZero();
  EXPECT_THROW(orf::fit_node_theta(res), orf::NoVariationError);
}

TEST(NewtonProxy, HandOracleAndFullNodeIdentity) {
  orf::ResidualPair res;
  res.t_res.resize(4);
  res.y_res.resize(4);
  res.t_res << 1, 2, -1, 0.5;
  res.y_res << 1.5, 3.5, -0.5, 1.0;
  const auto parent = orf::fit_node_theta(res);
  // Hand numbers: theta = (1.5 + 7 + 0.5 + 0.5) / (1 + 4 + 1 + 0.25) = 9.5 / 6.25.
  EXPECT_NEAR(parent.theta, 9.5 / 6.25, 1e-15);

  // Left child = rows {0, 1}.
  VectorXd tc(2), yc(2);
  tc << 1, 2;
  yc << 1.5, 3.5;
  double moment = 0.0;
  for (int i = 0; i < 2; ++i) moment += (yc(i) - parent.theta * tc(i)) * tc(i);
  const double expected = parent.theta - moment / parent.hessian;
  EXPECT_NEAR(orf::newton_proxy(parent, yc, tc), expected, 1e-14);

  // Child equal to the whole node reproduces the parent estimate exactly.
  EXPECT_NEAR(orf::newton_proxy(parent, res.y_res, res.t_res), parent.theta, 1e-12);

  orf::NodeTheta degenerate{1.0, 0.0};
  EXPECT_THROW(orf::newton_proxy(degenerate, yc, tc), orf::DegenerateHessianError);
}

TEST(HeterogeneityScore, MatchesDefinition) {
  // (thetaL - theta)^2 / nL + (thetaR - theta)^2 / nR
  const double score = orf::heterogeneity_score(2.0, -1.0, 0.5, 10, 20);
  EXPECT_NEAR(score, 2.25 / 10 + 2.25 / 20, 1e-15);
}

std::shared_ptr<const Dataset> tree_world(int n, std::uint64_t seed, double jump = 2.0) {
  orf::DgpSpec spec;
  spec.n = n;
  spec.d = 2;
  spec.p1 = 0;
  spec.p2 = 1;
  spec.theta = {orf::ThetaFamily::Step, 1.0, 1.0 + jump};
  spec.g0.terms = {{orf::TermKind::Linear, 2, 0.5, 1.0}};
  spec.sigma_y = 0.3;
  spec.sigma_t = 1.0;
  spec.covariates = orf::CovariateDistribution::Uniform;
  spec.seed = seed;
  return orf::generate(spec).data;
}

ForestConfig tree_config() {
  ForestConfig cfg;
  cfg.n_trees = 1;
  cfg.min_leaf = 10;
  cfg.max_splits = 6;
  cfg.split_points = 8;
  cfg.features_per_split = 2;
  cfg.node_learner = orf::LearnerSpec::lasso(1e-3);
  return cfg;
}

struct GrownTree {
  std::shared_ptr<const Dataset> data;
  std::vector<int> split_rows, estimate_rows;
  GradientTree tree;
};

GrownTree grow(int n, std::uint64_t seed, ForestConfig cfg) {
  GrownTree g;
  g.data = tree_world(n, seed);
  std::vector<int> rows(static_cast<std::size_t>(n));
  std::iota(rows.begin(), rows.end(), 0);
  g.split_rows.assign(rows.begin(), rows.begin() + n / 2);
  g.estimate_rows.assign(rows.begin() + n / 2, rows.end());
  cfg.validate(g.data->d());
  g.tree = orf::grow_tree(*g.data, g.split_rows, g.estimate_rows, cfg, seed * 31 + 7);
  return g;
}

TEST(GrowTree, ZeroSplitBudgetMakesASingleLeaf) {
  ForestConfig cfg = tree_config();
  cfg.max_splits = 0;
  const auto g = grow(300, 5, cfg);
  ASSERT_EQ(g.tree.nodes.size(), 1u);
  EXPECT_EQ(g.tree.nodes[0].feature, -1);
  EXPECT_EQ(g.tree.leaf_count(), 1);
  EXPECT_EQ(g.tree.members_at(VectorXd::Zero(2)).size(), g.estimate_rows.size());
}

TEST(GrowTree, RespectsStructuralInvariants) {
  const auto g = grow(600, 9, tree_config());
  const auto& nodes = g.tree.nodes;
  ASSERT_GT(nodes.size(), 1u);

  int splits = 0, leaves = 0;
  for (std::size_t id = 0; id < nodes.size(); ++id) {
    const auto& node = nodes[id];
    if (node.feature >= 0) {
      ++splits;
      ASSERT_GT(node.left, 0);
      ASSERT_GT(node.right, 0);
      const auto& l = nodes[static_cast<std::size_t>(node.left)];
      const auto& r = nodes[static_cast<std::size_t>(node.right)];
      // Both halves of both children satisfy the minimum-size rule.
      EXPECT_GE(l.n_split, 10);
      EXPECT_GE(l.n_estimate, 10);
      EXPECT_GE(r.n_split, 10);
      EXPECT_GE(r.n_estimate, 10);
      // Children partition the parent's rows.
      EXPECT_EQ(l.n_split + r.n_split, node.n_split);
      EXPECT_EQ(l.n_estimate + r.n_estimate, node.n_estimate);
      // Balance floor relative to the parent.
      EXPECT_GE(l.n_split, static_cast<int>(0.1 * node.n_split) - 1);
      EXPECT_GE(r.n_split, static_cast<int>(0.1 * node.n_split) - 1);
    } else {
      ++leaves;
      EXPECT_GE(node.leaf_id, 0);
      EXPECT_TRUE(std::isfinite(node.theta));
    }
  }
  EXPECT_LE(splits, tree_config().max_splits);
  EXPECT_EQ(leaves, g.tree.leaf_count());

  // Every estimate row lands in exactly one leaf, and leaf membership matches
  // the recorded rows.
  std::set<int> seen;
  for (const auto& rows : g.tree.leaf_rows) {
    for (int r : rows) EXPECT_TRUE(seen.insert(r).second);
  }
  std::set<int> expected(g.estimate_rows.begin(), g.estimate_rows.end());
  EXPECT_EQ(seen, expected);

  // find_leaf_node agrees with the recorded membership.
  for (int r : g.estimate_rows) {
    const VectorXd x = g.data->x().row(r).transpose();
    const auto& members = g.tree.members_at(x);
    EXPECT_NE(std::find(members.begin(), members.end(), r), members.end());
  }
}

TEST(GrowTree, DeterministicInTheSeed) {
  const auto a = grow(400, 21, tree_config());
  const auto b = grow(400, 21, tree_config());
  ASSERT_EQ(a.tree.nodes.size(), b.tree.nodes.size());
  for (std::size_t i = 0; i < a.tree.nodes.size(); ++i) {
    EXPECT_EQ(a.tree.nodes[i].feature, b.tree.nodes[i].feature);
    EXPECT_EQ(a.tree.nodes[i].threshold, b.tree.nodes[i].threshold);
    EXPECT_EQ(a.tree.nodes[i].theta, b.tree.nodes[i].theta);
  }
}

TEST(GrowTree, FindsTheEffectBoundary) {
  // theta jumps at x1 = 0; with low noise the first split should be near 0 on
  // feature 0.
  ForestConfig cfg = tree_config();
  cfg.max_splits = 4;
  const auto g = grow(2000, 33, cfg);
  ASSERT_GT(g.tree.nodes.size(), 1u);
  const auto& root = g.tree.nodes[0];
  EXPECT_EQ(root.feature, 0);
  EXPECT_NEAR(root.threshold, 0.0, 0.25);
}

TEST(GrowTree, LeafThetasTrackTheTruthOnEachSide) {
  ForestConfig cfg = tree_config();
  const auto g = grow(2000, 41, cfg);
  // Average leaf estimates weighted by membership on each side of the jump.
  double lo = 0, hi = 0, nlo = 0, nhi = 0;
  for (const auto& node : g.tree.nodes) {
    if (node.feature >= 0) continue;
    const auto& rows = g.tree.leaf_rows[static_cast<std::size_t>(node.leaf_id)];
    for (int r : rows) {
      if (g.data->x()(r, 0) < -0.15) {
        lo += node.theta;
        nlo += 1;
      } else if (g.data->x()(r, 0) > 0.15) {
        hi += node.theta;
        nhi += 1;
      }
    }
  }
  ASSERT_GT(nlo, 0);
  ASSERT_GT(nhi, 0);
  EXPECT_NEAR(lo / nlo, 1.0, 0.45);
  EXPECT_NEAR(hi / nhi, 3.0, 0.45);
}

TEST(GrowTree, ConstantTreatmentRegionBecomesALeafInheritingParentTheta) {
  // Hand-built dataset: treatment varies only for x < 0, so any node fully on
  // the right has no treatment variation and must fall back to its parent.
  const int n = 200;
  orf::DatasetSchema schema = orf::DatasetSchema::from_config(orf::ConfigDoc::parse_string(
      "[schema]\ny = outcome\nt = treatment\nx1 = target\n"));
  VectorXd y(n), t(n);
  MatrixXd x(n, 1);
  orf::RandomStream rng(3);
  for (int i = 0; i < n; ++i) {
    x(i, 0) = -1.0 + 2.0 * (i + 0.5) / n;
    t(i) = x(i, 0) < 0 ? rng.next_normal() : 0.0;
    y(i) = 2.0 * t(i) + 0.01 * rng.next_normal();
  }
  Dataset ds(schema, y, t, x, MatrixXd(n, 0), MatrixXd(n, 0), MatrixXd(n, 0));
  std::vector<int> split_rows, estimate_rows;
  for (int i = 0; i < n; ++i) (i % 2 == 0 ? split_rows : estimate_rows).push_back(i);
  ForestConfig cfg = tree_config();
  cfg.features_per_split = 1;
  cfg.node_learner = orf::LearnerSpec::mean();
  cfg.validate(1);
  const auto tree = orf::grow_tree(ds, split_rows, estimate_rows, cfg, 77);
  // The leaf containing x = 0.9 sits in the no-variation region; its theta is
  // inherited from an ancestor, hence finite.
  VectorXd probe(1);
  probe << 0.9;
  const auto& leaf = tree.nodes[static_cast<std::size_t>(tree.find_leaf_node(probe))];
  EXPECT_EQ(leaf.feature, -1);
  EXPECT_TRUE(std::isfinite(leaf.theta));
}

}  // namespace
