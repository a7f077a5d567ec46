#include <gtest/gtest.h>

#include <cmath>
#include <set>
#include <vector>

#include "orthoforest/dml.hpp"
#include "orthoforest/errors.hpp"
#include "orthoforest/synthetic.hpp"

namespace {

using orf::CrossFitPlan;
using orf::Dataset;
using orf::MatrixXd;
using orf::VectorXd;

TEST(NormalQuantile, MatchesReferenceValues) {
  EXPECT_NEAR(orf::normal_quantile(0.5), 0.0, 1e-12);
  EXPECT_NEAR(orf::normal_quantile(0.975), 1.959963984540054, 1e-9);
  EXPECT_NEAR(orf::normal_quantile(0.025), -1.959963984540054, 1e-9);
  EXPECT_NEAR(orf::normal_quantile(0.9), 1.2815515655446004, 1e-9);
  EXPECT_NEAR(orf::normal_quantile(0.0001), -3.719016485455709, 1e-7);
  EXPECT_THROW(orf::normal_quantile(0.0), orf::DomainError);
  EXPECT_THROW(orf::normal_quantile(1.0), orf::DomainError);
}

TEST(CrossFitPlan, BalancedDisjointFolds) {
  const auto plan = CrossFitPlan::make(103, 4, 9);
  EXPECT_EQ(plan.k_folds, 4);
  std::vector<int> counts(4, 0);
  for (int f : plan.fold_of) {
    ASSERT_GE(f, 0);
    ASSERT_LT(f, 4);
    counts[static_cast<std::size_t>(f)]++;
  }
  int lo = 1000, hi = 0;
  for (int c : counts) {
    lo = std::min(lo, c);
    hi = std::max(hi, c);
  }
  EXPECT_LE(hi - lo, 1);

  for (int f = 0; f < 4; ++f) {
    const auto held = plan.rows_in(f, false);
    const auto rest = plan.rows_in(f, true);
    EXPECT_EQ(held.size() + rest.size(), 103u);
    std::set<int> all(held.begin(), held.end());
    for (int r : rest) EXPECT_TRUE(all.insert(r).second);
    EXPECT_EQ(all.size(), 103u);
  }

  EXPECT_EQ(CrossFitPlan::make(103, 4, 9).fold_of, plan.fold_of);
  EXPECT_NE(CrossFitPlan::make(103, 4, 10).fold_of, plan.fold_of);
  EXPECT_THROW(CrossFitPlan::make(100, 1, 0), orf::ConfigError);
  EXPECT_THROW(CrossFitPlan::make(100, 11, 0), orf::ConfigError);  // k > n/10
  EXPECT_THROW(CrossFitPlan::make(15, 2, 0), orf::ConfigError);
}

orf::DgpSpec plain_spec(int n, std::uint64_t seed) {
  orf::DgpSpec spec;
  spec.n = n;
  spec.d = 1;
  spec.p1 = 2;
  spec.p2 = 2;
  spec.theta = {orf::ThetaFamily::Constant, 1.5, 0.0};
  spec.f0.terms = {{orf::TermKind::Linear, 1, 1.0, 1.0}, {orf::TermKind::Tanh, 3, 0.5, 1.0}};
  spec.g0.terms = {{orf::TermKind::Linear, 2, 0.8, 1.0}};
  spec.sigma_y = 0.5;
  spec.sigma_t = 1.0;
  spec.seed = seed;
  return spec;
}

TEST(Dml, RecoversTheAverageEffectWithSaneDiagnostics) {
  auto gen = orf::generate(plain_spec(3000, 42));
  const auto plan = CrossFitPlan::make(3000, 5, 7);
  const auto est = orf::fit_dml(*gen.data, orf::LearnerSpec::lasso(1e-3), plan);
  EXPECT_NEAR(est.theta, 1.5, 4 * est.std_error);
  EXPECT_GT(est.std_error, 0.0);
  EXPECT_LT(est.std_error, 0.2);
  EXPECT_LT(est.ci_low, est.theta);
  EXPECT_GT(est.ci_high, est.theta);
  EXPECT_DOUBLE_EQ(est.level, 0.95);
  ASSERT_EQ(est.folds.size(), 5u);
  std::size_t held_total = 0;
  for (const auto& f : est.folds) {
    held_total += f.held_out_rows;
    EXPECT_TRUE(std::isfinite(f.outcome_residual_mse));
    EXPECT_TRUE(std::isfinite(f.treatment_residual_mse));
    EXPECT_GT(f.outcome_residual_mse, 0.0);
    EXPECT_TRUE(std::isnan(f.instrument_residual_mse));
  }
  EXPECT_EQ(held_total, 3000u);

  // The normal-quantile interval matches the reported level.
  const double z = orf::normal_quantile(0.975);
  EXPECT_NEAR(est.ci_high - est.theta, z * est.std_error, 1e-12);
  EXPECT_NEAR(est.theta - est.ci_low, z * est.std_error, 1e-12);
}

TEST(Dml, MeanNuisancesLeaveConfoundingBias) {
  // With nuisances that cannot absorb f0/g0, the estimate picks up the
  // correlation between T and Y through the shared covariates.
  auto spec = plain_spec(3000, 43);
  spec.f0.terms = {{orf::TermKind::Linear, 2, 2.0, 1.0}};
  spec.g0.terms = {{orf::TermKind::Linear, 2, 2.0, 1.0}};
  auto gen = orf::generate(spec);
  const auto plan = CrossFitPlan::make(3000, 2, 7);
  const auto poor = orf::fit_dml(*gen.data, orf::LearnerSpec::mean(), plan);
  const auto rich = orf::fit_dml(*gen.data, orf::LearnerSpec::lasso(1e-3), plan);
  EXPECT_GT(std::abs(poor.theta - 1.5), 3 * poor.std_error);
  EXPECT_LT(std::abs(rich.theta - 1.5), 4 * rich.std_error);
}

orf::DgpSpec iv_spec(int n, std::uint64_t seed) {
  orf::DgpSpec spec;
  spec.n = n;
  spec.d = 1;
  spec.p1 = 1;
  spec.p2 = 1;
  spec.theta = {orf::ThetaFamily::Constant, 1.0, 0.0};
  spec.g0.terms = {{orf::TermKind::Linear, 1, 0.5, 1.0}};
  spec.sigma_y = 0.5;
  spec.sigma_t = 0.5;
  spec.n_instruments = 2;
  spec.instrument_strength = 1.0;
  spec.confounder_on_t = 1.0;
  spec.confounder_on_y = 1.0;
  spec.seed = seed;
  return spec;
}

TEST(Dmliv, InstrumentCorrectsUnobservedConfounding) {
  auto gen = orf::generate(iv_spec(4000, 5));
  const auto plan = CrossFitPlan::make(4000, 2, 11);
  const auto naive = orf::fit_dml(*gen.data, orf::LearnerSpec::lasso(1e-3), plan);
  EXPECT_GT(naive.theta, 1.15);  // confounded upward

  orf::DmlivOptions opt;
  const auto iv = orf::fit_dmliv(*gen.data, orf::LearnerSpec::lasso(1e-3), plan, opt);
  EXPECT_NEAR(iv.theta, 1.0, 0.1);
  for (const auto& f : iv.folds) EXPECT_TRUE(std::isfinite(f.instrument_residual_mse));

  orf::DmlivOptions both;
  both.combine_instruments = true;
  const auto iv2 = orf::fit_dmliv(*gen.data, orf::LearnerSpec::lasso(1e-3), plan, both);
  EXPECT_NEAR(iv2.theta, 1.0, 0.1);
  // The combined instrument can only improve first-stage strength, so the
  // standard error should not blow up.
  EXPECT_LT(iv2.std_error, 2 * iv.std_error);

  orf::DmlivOptions second;
  second.instrument = 1;
  const auto iv3 = orf::fit_dmliv(*gen.data, orf::LearnerSpec::lasso(1e-3), plan, second);
  EXPECT_NEAR(iv3.theta, 1.0, 0.12);

  orf::DmlivOptions bad;
  bad.instrument = 5;
  EXPECT_THROW(orf::fit_dmliv(*gen.data, orf::LearnerSpec::lasso(1e-3), plan, bad),
               orf::ConfigError);
  EXPECT_THROW(orf::fit_dmliv(*gen.data, orf::LearnerSpec::lasso(1e-3),
                              CrossFitPlan::make(4000, 2, 11), orf::DmlivOptions{}, 1.5),
               orf::ConfigError);
}

TEST(Dmliv, ConstantInstrumentIsRejectedAsWeak) {
  auto gen = orf::generate(iv_spec(500, 6));
  MatrixXd z = gen.data->z();
  z.col(0).setConstant(3.0);
  Dataset flat(gen.data->schema(), gen.data->y(), gen.data->t(), gen.data->x(), gen.data->wp(),
               gen.data->wn(), z);
  const auto plan = CrossFitPlan::make(500, 2, 3);
  orf::DmlivOptions opt;
  EXPECT_THROW(orf::fit_dmliv(flat, orf::LearnerSpec::mean(), plan, opt),
               orf::WeakInstrumentError);
}

TEST(FirstStageF, MatchesAnExplicitLeastSquaresComputation) {
  auto gen = orf::generate(iv_spec(800, 9));
  const Dataset& ds = *gen.data;
  const double f = orf::first_stage_f(ds);
  EXPECT_GT(f, 10.0);  // strong by construction

  // Independent computation with Eigen directly.
  const int n = ds.n();
  const int base_cols = 1 + ds.d() + ds.p1() + ds.p2();
  MatrixXd restricted(n, base_cols);
  restricted.col(0).setOnes();
  restricted.block(0, 1, n, ds.d()) = ds.x();
  restricted.block(0, 1 + ds.d(), n, ds.p1()) = ds.wp();
  restricted.block(0, 1 + ds.d() + ds.p1(), n, ds.p2()) = ds.wn();
  MatrixXd unrestricted(n, base_cols + ds.n_instruments());
  unrestricted.leftCols(base_cols) = restricted;
  unrestricted.rightCols(ds.n_instruments()) = ds.z();
  auto rss = [&](const MatrixXd& design) {
    const VectorXd beta = design.colPivHouseholderQr().solve(ds.t());
    const VectorXd resid = ds.t() - design * beta;
    return resid.squaredNorm();
  };
  const double rss_r = rss(restricted);
  const double rss_u = rss(unrestricted);
  const int q = ds.n_instruments();
  const int k_u = base_cols + q;
  const double expected = ((rss_r - rss_u) / q) / (rss_u / (n - k_u));
  EXPECT_NEAR(f, expected, 1e-6 * std::max(1.0, expected));

  // Weak instruments produce a small F.
  auto weak_spec = iv_spec(800, 10);
  weak_spec.instrument_strength = 0.01;
  auto weak = orf::generate(weak_spec);
  EXPECT_LT(orf::first_stage_f(*weak.data), orf::first_stage_f(ds));
}

TEST(FirstStageF, PerfectFitYieldsInfinity) {
  // T exactly linear in Z: unrestricted RSS is ~0.
  auto spec = iv_spec(200, 11);
  auto gen = orf::generate(spec);
  VectorXd t = gen.data->z().col(0) * 2.0;
  Dataset exact(gen.data->schema(), gen.data->y(), t, gen.data->x(), gen.data->wp(),
                gen.data->wn(), gen.data->z());
  EXPECT_TRUE(std::isinf(orf::first_stage_f(exact)));

  // No instruments at all is a usage error.
  auto no_z = orf::generate(plain_spec(200, 12));
  EXPECT_THROW(orf::first_stage_f(*no_z.data), orf::ConfigError);
}

}  // namespace
