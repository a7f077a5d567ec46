#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <vector>

#include "orthoforest/errors.hpp"
#include "orthoforest/nuisance.hpp"
#include "orthoforest/synthetic.hpp"

namespace {

using orf::Dataset;
using orf::LearnerSpec;
using orf::VectorXd;

std::shared_ptr<const Dataset> linear_world(int n, std::uint64_t seed) {
  orf::DgpSpec spec;
  spec.n = n;
  spec.d = 1;
  spec.p1 = 2;
  spec.p2 = 2;
  spec.theta = {orf::ThetaFamily::Constant, 1.0, 0.0};
  // Column indexes run over [x | wp | wn]: 0 = x1, 1..2 = wp, 3..4 = wn.
  spec.f0.intercept = 0.5;
  spec.f0.terms = {{orf::TermKind::Linear, 0, 2.0, 1.0}, {orf::TermKind::Linear, 2, -1.0, 1.0}};
  spec.g0.terms = {{orf::TermKind::Linear, 2, 1.5, 1.0}};
  spec.sigma_y = 0.1;
  spec.sigma_t = 0.1;
  spec.seed = seed;
  return orf::generate(spec).data;
}

std::vector<int> all_rows(int n) {
  std::vector<int> rows(static_cast<std::size_t>(n));
  std::iota(rows.begin(), rows.end(), 0);
  return rows;
}

TEST(LearnerSpec, ParsingAndValidation) {
  EXPECT_EQ(orf::parse_learner("mean", "k"), orf::LearnerKind::Mean);
  EXPECT_EQ(orf::parse_learner("lasso", "k"), orf::LearnerKind::Lasso);
  EXPECT_EQ(orf::parse_learner("dnn", "k"), orf::LearnerKind::Dnn);
  EXPECT_EQ(orf::parse_learner("sdnn", "k"), orf::LearnerKind::Sdnn);
  EXPECT_THROW(orf::parse_learner("forest", "k"), orf::ConfigError);

  LearnerSpec bad = LearnerSpec::lasso(-1.0);
  EXPECT_THROW(bad.validate(), orf::ConfigError);
  LearnerSpec net = LearnerSpec::sdnn({8});
  net.resample_factor = 0.0;
  EXPECT_THROW(net.validate(), orf::ConfigError);
}

TEST(DefaultHidden, TracksInputWidth) {
  auto h = orf::default_hidden(3);
  ASSERT_EQ(h.size(), 2u);
  EXPECT_EQ(h[0], 12);
  EXPECT_EQ(h[1], 12);
  EXPECT_EQ(orf::default_hidden(0)[0], 2);    // floor of 2 units
  EXPECT_EQ(orf::default_hidden(60)[0], 100); // capped at 100
}

TEST(ResampleByWeights, DrawsProportionallyAndSkipsZeros) {
  std::vector<int> rows{10, 11, 12, 13};
  VectorXd w(4);
  w << 0.0, 1.0, 3.0, 0.0;
  auto draw = orf::resample_by_weights(rows, w, 2.0, 99);
  EXPECT_EQ(draw.size(), 8u);  // ceil(2.0 * 4)
  int count11 = 0, count12 = 0;
  for (int r : draw) {
    EXPECT_TRUE(r == 11 || r == 12) << "zero-weight row drawn: " << r;
    count11 += r == 11;
    count12 += r == 12;
  }
  EXPECT_EQ(count11 + count12, 8);
  // Deterministic in the seed.
  EXPECT_EQ(orf::resample_by_weights(rows, w, 2.0, 99), draw);
  EXPECT_NE(orf::resample_by_weights(rows, w, 2.0, 100), draw);

  // Long-run frequencies follow the weights.
  VectorXd w2(4);
  w2 << 1.0, 1.0, 2.0, 0.0;
  auto big = orf::resample_by_weights(rows, w2, 2500.0, 7);
  double c12 = 0;
  for (int r : big) c12 += r == 12;
  EXPECT_NEAR(c12 / static_cast<double>(big.size()), 0.5, 0.02);
}

TEST(Nuisance, MeanLearnerReturnsWeightedMeans) {
  auto data = linear_world(50, 3);
  auto rows = all_rows(50);
  VectorXd w = VectorXd::Ones(50);
  w(0) = 5.0;
  auto pair = orf::fit_nuisance_pair(*data, rows, w, LearnerSpec::mean(), 123);
  double wy = 0, wt = 0, tot = 0;
  for (int i = 0; i < 50; ++i) {
    wy += w(i) * data->y()(i);
    wt += w(i) * data->t()(i);
    tot += w(i);
  }
  const VectorXd x0 = data->x().row(0).transpose();
  const VectorXd wp0 = data->wp().row(0).transpose();
  const VectorXd wn0 = data->wn().row(0).transpose();
  EXPECT_NEAR(pair.outcome.predict(x0, wp0, wn0), wy / tot, 1e-12);
  EXPECT_NEAR(pair.treatment.predict(x0, wp0, wn0), wt / tot, 1e-12);
}

TEST(Nuisance, LassoLearnerRecoversLinearNuisances) {
  auto data = linear_world(2000, 5);
  auto rows = all_rows(2000);
  VectorXd w = VectorXd::Ones(2000);
  auto pair = orf::fit_nuisance_pair(*data, rows, w, LearnerSpec::lasso(1e-3), 7);
  // Treatment nuisance is 1.5 * wp2 (plus noise); check fitted values track it.
  double err_t = 0.0, err_y = 0.0;
  for (int i = 0; i < 200; ++i) {
    const VectorXd x = data->x().row(i).transpose();
    const VectorXd wp = data->wp().row(i).transpose();
    const VectorXd wn = data->wn().row(i).transpose();
    const double g0 = 1.5 * wp(1);
    err_t += std::abs(pair.treatment.predict(x, wp, wn) - g0);
    // Outcome regression q0 = f0 + theta * g0 with theta = 1.
    const double q0 = 0.5 + 2.0 * x(0) - 1.0 * wp(1) + 1.0 * g0;
    err_y += std::abs(pair.outcome.predict(x, wp, wn) - q0);
  }
  EXPECT_LT(err_t / 200, 0.05);
  EXPECT_LT(err_y / 200, 0.08);
}

TEST(Nuisance, PredictRowsMatchesScalarPredict) {
  auto data = linear_world(100, 11);
  auto rows = all_rows(100);
  VectorXd w = VectorXd::Ones(100);
  auto pair = orf::fit_nuisance_pair(*data, rows, w, LearnerSpec::lasso(0.01), 3);
  std::vector<int> probe{0, 7, 93};
  VectorXd batch = pair.outcome.predict_rows(*data, probe);
  for (std::size_t k = 0; k < probe.size(); ++k) {
    const int i = probe[k];
    EXPECT_DOUBLE_EQ(batch(static_cast<Eigen::Index>(k)),
                     pair.outcome.predict(data->x().row(i).transpose(),
                                          data->wp().row(i).transpose(),
                                          data->wn().row(i).transpose()));
  }
}

TEST(Nuisance, FixedLearnerUsesInjectedFunctions) {
  auto data = linear_world(30, 13);
  auto rows = all_rows(30);
  VectorXd w = VectorXd::Ones(30);
  auto spec = LearnerSpec::fixed(
      [](const VectorXd& x, const VectorXd&, const VectorXd&) { return 2.0 * x(0); },
      [](const VectorXd&, const VectorXd& wp, const VectorXd&) { return wp(0) - 1.0; });
  auto pair = orf::fit_nuisance_pair(*data, rows, w, spec, 1);
  const VectorXd x = data->x().row(4).transpose();
  const VectorXd wp = data->wp().row(4).transpose();
  const VectorXd wn = data->wn().row(4).transpose();
  EXPECT_DOUBLE_EQ(pair.outcome.predict(x, wp, wn), 2.0 * x(0));
  EXPECT_DOUBLE_EQ(pair.treatment.predict(x, wp, wn), wp(0) - 1.0);
}

TEST(Nuisance, NetworkLearnersAreDeterministicAndFinite) {
  auto data = linear_world(300, 17);
  auto rows = all_rows(300);
  VectorXd w = VectorXd::Ones(300);
  LearnerSpec spec = LearnerSpec::sdnn({8});
  spec.train.epochs = 10;
  auto a = orf::fit_single_nuisance(*data, rows, w, spec, data->y(), nullptr, "outcome", 5);
  auto b = orf::fit_single_nuisance(*data, rows, w, spec, data->y(), nullptr, "outcome", 5);
  VectorXd pa = a.predict_rows(*data, rows);
  VectorXd pb = b.predict_rows(*data, rows);
  EXPECT_EQ((pa - pb).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_TRUE(pa.allFinite());

  LearnerSpec dnn = LearnerSpec::dnn({8});
  dnn.train.epochs = 10;
  auto c = orf::fit_single_nuisance(*data, rows, w, dnn, data->y(), nullptr, "outcome", 5);
  EXPECT_TRUE(c.predict_rows(*data, rows).allFinite());
}

TEST(Nuisance, WeightsShiftNetworkFitsThroughResampling) {
  auto data = linear_world(400, 19);
  auto rows = all_rows(400);
  // All weight on the first 200 rows versus the last 200: fits must differ.
  VectorXd w1 = VectorXd::Zero(400), w2 = VectorXd::Zero(400);
  w1.head(200).setOnes();
  w2.tail(200).setOnes();
  LearnerSpec spec = LearnerSpec::sdnn({8});
  spec.train.epochs = 15;
  auto a = orf::fit_single_nuisance(*data, rows, w1, spec, data->y(), nullptr, "outcome", 5);
  auto b = orf::fit_single_nuisance(*data, rows, w2, spec, data->y(), nullptr, "outcome", 5);
  VectorXd pa = a.predict_rows(*data, rows);
  VectorXd pb = b.predict_rows(*data, rows);
  EXPECT_GT((pa - pb).cwiseAbs().maxCoeff(), 1e-6);
}

}  // namespace
