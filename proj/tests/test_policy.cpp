#include <gtest/gtest.h>

#include <cmath>

#include "orthoforest/errors.hpp"
#include "orthoforest/policy.hpp"

namespace {

using orf::PolicyInputs;
using orf::VectorXd;

TEST(Revenue, MatchesHandComputedTwoPeriodExample) {
  // Two periods, slope -1 each, outcome levels 10 and 6, treatment level 0:
  // revenue(T) = (10 + 6) T - 2 T^2; revenue(4) = 64 - 32 = 32.
  PolicyInputs in = PolicyInputs::uniform(2, -1.0, 0.0, 0.0, 0.0, 10.0);
  in.outcome_level << 10.0, 6.0;
  EXPECT_DOUBLE_EQ(orf::revenue(in, 4.0), 32.0);
  EXPECT_DOUBLE_EQ(orf::revenue(in, 0.0), 0.0);
  // Optimal price: 16 / (2 * 2) = 4.
  EXPECT_DOUBLE_EQ(orf::optimal_price(in), 4.0);
}

TEST(Revenue, BaselineTreatmentLevelShiftsTheLinearTerm) {
  // One period: q = 10, slope = -1, baseline treatment g = 2.
  // revenue(T) = (q - slope * g) T + slope T^2 = 12 T - T^2; optimum at 6.
  PolicyInputs in = PolicyInputs::uniform(1, -1.0, 10.0, 2.0, 0.0, 20.0);
  EXPECT_DOUBLE_EQ(orf::revenue(in, 1.0), 11.0);
  EXPECT_DOUBLE_EQ(orf::optimal_price(in), 6.0);

  // Without the baseline the optimum is at 5.
  PolicyInputs plain = PolicyInputs::uniform(1, -1.0, 10.0, 0.0, 0.0, 20.0);
  EXPECT_DOUBLE_EQ(orf::optimal_price(plain), 5.0);
}

TEST(OptimalPrice, ClampsToTheAllowedRange) {
  PolicyInputs in = PolicyInputs::uniform(1, -1.0, 10.0, 0.0, 0.0, 3.0);
  EXPECT_DOUBLE_EQ(orf::optimal_price(in), 3.0);  // stationary point 5 clamped
  PolicyInputs lo = PolicyInputs::uniform(1, -1.0, -10.0, 0.0, 2.0, 8.0);
  EXPECT_DOUBLE_EQ(orf::optimal_price(lo), 2.0);  // stationary point negative
}

TEST(OptimalPrice, RejectsNonConcaveAndMalformedInputs) {
  PolicyInputs convex = PolicyInputs::uniform(2, 0.5, 1.0, 0.0, 0.0, 1.0);
  EXPECT_THROW(orf::optimal_price(convex), orf::NonConcaveError);
  PolicyInputs zero = PolicyInputs::uniform(1, 0.0, 1.0, 0.0, 0.0, 1.0);
  EXPECT_THROW(orf::optimal_price(zero), orf::NonConcaveError);

  PolicyInputs bad = PolicyInputs::uniform(2, -1.0, 1.0, 0.0, 0.0, 1.0);
  bad.outcome_level.resize(1);
  EXPECT_THROW(bad.validate(), orf::ShapeError);
  EXPECT_THROW(PolicyInputs::uniform(1, -1.0, 1.0, 0.0, 5.0, 1.0), orf::DomainError);
  EXPECT_THROW(PolicyInputs::uniform(0, -1.0, 1.0, 0.0, 0.0, 1.0), orf::SizeError);
}

TEST(Revenue, EnforcesPriceBounds) {
  PolicyInputs in = PolicyInputs::uniform(1, -1.0, 10.0, 0.0, 1.0, 4.0);
  EXPECT_NO_THROW(orf::revenue(in, 1.0));
  EXPECT_NO_THROW(orf::revenue(in, 4.0));
  EXPECT_THROW(orf::revenue(in, 0.99), orf::DomainError);
  EXPECT_THROW(orf::revenue(in, 4.01), orf::DomainError);
}

TEST(GridSearch, AgreesWithTheClosedFormOptimum) {
  PolicyInputs in = PolicyInputs::uniform(3, -0.7, 8.0, 1.0, 0.0, 12.0);
  in.outcome_level << 8.0, 6.5, 9.0;
  in.slope << -0.7, -0.3, -1.1;
  const double exact = orf::optimal_price(in);
  const double grid = orf::grid_search_price(in, 1e-4);
  EXPECT_NEAR(grid, exact, 1e-4 + 1e-12);
  EXPECT_LE(std::abs(orf::revenue(in, grid) - orf::revenue(in, exact)), 1e-6);
}

TEST(GridSearch, TiesResolveToTheLowestPriceAndEndpointIsEvaluated) {
  // Optimum at 2.5 with a unit grid: revenue(2) == revenue(3); expect 2.
  PolicyInputs in = PolicyInputs::uniform(1, -1.0, 5.0, 0.0, 0.0, 5.0);
  EXPECT_DOUBLE_EQ(orf::grid_search_price(in, 1.0), 2.0);
  // Maximum on the right edge, not on a grid multiple.
  PolicyInputs edge = PolicyInputs::uniform(1, -1.0, 10.0, 0.0, 0.0, 4.5);
  EXPECT_DOUBLE_EQ(orf::grid_search_price(edge, 2.0), 4.5);
  EXPECT_THROW(orf::grid_search_price(in, 0.0), orf::DomainError);
}

}  // namespace
