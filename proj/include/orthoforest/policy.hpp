#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>

#include "orthoforest/dataset.hpp"
#include "orthoforest/errors.hpp"

namespace orf {

// Per-period ingredients of the quadratic revenue proxy.  Entry d of each
// vector belongs to one period of the planning window: `slope` is the
// estimated effect of the (log) price on the (log) outcome, `outcome_level`
// and `treatment_level` are the predicted outcome and price levels around
// which the proxy is anchored.
struct PolicyInputs {
  VectorXd slope;
  VectorXd outcome_level;
  VectorXd treatment_level;
  double price_low = 0.0;
  double price_high = 0.0;

  void validate() const {
    const auto days = slope.size();
    if (days < 1) throw SizeError("policy window must contain at least one period");
    if (outcome_level.size() != days || treatment_level.size() != days) {
      throw ShapeError("policy inputs must have one entry per period (" + std::to_string(days) +
                       " slopes, " + std::to_string(outcome_level.size()) + " outcome levels, " +
                       std::to_string(treatment_level.size()) + " treatment levels)");
    }
    if (!slope.allFinite() || !outcome_level.allFinite() || !treatment_level.allFinite() ||
        !std::isfinite(price_low) || !std::isfinite(price_high)) {
      throw DomainError("policy inputs must be finite");
    }
    if (!(price_low < price_high)) {
      throw DomainError("price bounds must satisfy low < high");
    }
  }

  // Same slope/levels replicated over a window of `periods` entries.
  static PolicyInputs uniform(int periods, double slope_value, double outcome,
                              double treatment, double low, double high) {
    if (periods < 1) throw SizeError("policy window must contain at least one period");
    PolicyInputs p;
    p.slope = VectorXd::Constant(periods, slope_value);
    p.outcome_level = VectorXd::Constant(periods, outcome);
    p.treatment_level = VectorXd::Constant(periods, treatment);
    p.price_low = low;
    p.price_high = high;
    p.validate();
    return p;
  }
};

// Window revenue proxy at a common price T:
//   Pi(T) = sum_d [ (outcome_d - slope_d * treatment_d) * T + slope_d * T^2 ].
inline double revenue(const PolicyInputs& inputs, double price) {
  inputs.validate();
  if (price < inputs.price_low || price > inputs.price_high) {
    throw DomainError("price " + format_double(price) + " outside bounds [" +
                      format_double(inputs.price_low) + ", " + format_double(inputs.price_high) +
                      "]");
  }
  const double linear =
      (inputs.outcome_level - inputs.slope.cwiseProduct(inputs.treatment_level)).sum();
  const double quad = inputs.slope.sum();
  return linear * price + quad * price * price;
}

// Closed-form maximizer of the revenue proxy, clamped to the price bounds.
// Requires a strictly concave proxy (sum of slopes < 0); otherwise the
// first-order condition picks a minimum or nothing, and NonConcaveError is
// raised.
inline double optimal_price(const PolicyInputs& inputs) {
  inputs.validate();
  const double quad = inputs.slope.sum();
  if (!(quad < 0.0)) {
    throw NonConcaveError("revenue proxy is not strictly concave (slope sum " +
                          format_double(quad) + " >= 0); no interior maximum");
  }
  const double linear =
      (inputs.outcome_level - inputs.slope.cwiseProduct(inputs.treatment_level)).sum();
  const double stationary = -linear / (2.0 * quad);
  if (stationary < inputs.price_low) return inputs.price_low;
  if (stationary > inputs.price_high) return inputs.price_high;
  return stationary;
}

// Brute-force maximizer over the grid low, low+step, ..., high (the upper
// bound is always evaluated).  Ties keep the lowest price.
inline double grid_search_price(const PolicyInputs& inputs, double step) {
  inputs.validate();
  if (!(step > 0.0)) throw DomainError("grid step must be positive");
  double best_price = inputs.price_low;
  double best_value = revenue(inputs, best_price);
  for (double p = inputs.price_low + step;; p += step) {
    if (p > inputs.price_high) p = inputs.price_high;
    const double v = revenue(inputs, p);
    if (v > best_value) {
      best_value = v;
      best_price = p;
    }
    if (p >= inputs.price_high) break;
  }
  return best_price;
}

}  // namespace orf
