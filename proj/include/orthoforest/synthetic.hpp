#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "orthoforest/dataset.hpp"
#include "orthoforest/errors.hpp"
#include "orthoforest/forest.hpp"
#include "orthoforest/rng.hpp"

namespace orf {

// Built-in shapes for the true effect function of the first target feature.
enum class ThetaFamily { Constant, Affine, Step, Sine };

inline std::string theta_family_name(ThetaFamily f) {
  switch (f) {
    case ThetaFamily::Constant: return "constant";
    case ThetaFamily::Affine: return "affine";
    case ThetaFamily::Step: return "step";
    case ThetaFamily::Sine: return "sine";
  }
  return "?";
}

inline ThetaFamily parse_theta_family(const std::string& s, const std::string& where) {
  if (s == "constant") return ThetaFamily::Constant;
  if (s == "affine") return ThetaFamily::Affine;
  if (s == "step") return ThetaFamily::Step;
  if (s == "sine") return ThetaFamily::Sine;
  throw ConfigError(where + ": unknown effect family '" + s + "'");
}

// True effect function theta0(x):
//   constant: a
//   affine:   a + b * x1
//   step:     a for x1 < 0, b for x1 >= 0
//   sine:     a * sin(b * pi * x1)
struct ThetaSpec {
  ThetaFamily family = ThetaFamily::Constant;
  double a = 1.0;
  double b = 1.0;

  double operator()(const VectorXd& x) const {
    if (x.size() < 1) throw ShapeError("effect function needs at least one coordinate");
    switch (family) {
      case ThetaFamily::Constant: return a;
      case ThetaFamily::Affine: return a + b * x(0);
      case ThetaFamily::Step: return x(0) < 0.0 ? a : b;
      case ThetaFamily::Sine: return a * std::sin(b * 3.14159265358979323846 * x(0));
    }
    return 0.0;
  }
};

enum class TermKind { Linear, Sine, Square, Tanh };

// One additive term coef * h(scale * v) of a nuisance function, where v is
// one column of the concatenated covariates [x | wp | wn].
struct CovariateTerm {
  TermKind kind = TermKind::Linear;
  int column = 0;
  double coef = 1.0;
  double scale = 1.0;

  double eval(double v) const {
    const double u = scale * v;
    switch (kind) {
      case TermKind::Linear: return coef * u;
      case TermKind::Sine: return coef * std::sin(u);
      case TermKind::Square: return coef * u * u;
      case TermKind::Tanh: return coef * std::tanh(u);
    }
    return 0.0;
  }
};

// Additive ground-truth nuisance function over [x | wp | wn].
struct NuisanceFunctionSpec {
  double intercept = 0.0;
  std::vector<CovariateTerm> terms;

  void validate(int total_columns) const {
    for (const auto& t : terms) {
      if (t.column < 0 || t.column >= total_columns) {
        throw ConfigError("nuisance term column " + std::to_string(t.column) +
                          " out of range [0, " + std::to_string(total_columns) + ")");
      }
    }
  }

  double eval(const VectorXd& x, const VectorXd& wp, const VectorXd& wn) const {
    double out = intercept;
    for (const auto& t : terms) {
      const int c = t.column;
      double v;
      if (c < x.size()) {
        v = x(c);
      } else if (c < x.size() + wp.size()) {
        v = wp(c - x.size());
      } else {
        v = wn(c - x.size() - wp.size());
      }
      out += t.eval(v);
    }
    return out;
  }
};

enum class CovariateDistribution { Normal, Uniform };  // N(0,1) or U(-1,1)

// Synthetic design:
//   T = g0(X,Wp,Wn) + instrument_strength * sum(Z) + confounder_on_t * U + eta
//   Y = theta0(X) * T + f0(X,Wp,Wn) + confounder_on_y * U + eps
// with eta ~ N(0, sigma_t^2), eps ~ N(0, sigma_y^2), Z and the unobserved
// confounder U standard normal.  Z and U only enter when requested.
struct DgpSpec {
  int n = 1000;
  int d = 1;
  int p1 = 0;
  int p2 = 0;
  ThetaSpec theta;
  NuisanceFunctionSpec f0;
  NuisanceFunctionSpec g0;
  double sigma_y = 1.0;
  double sigma_t = 1.0;
  CovariateDistribution covariates = CovariateDistribution::Normal;
  int n_instruments = 0;
  double instrument_strength = 0.0;
  double confounder_on_t = 0.0;
  double confounder_on_y = 0.0;
  std::uint64_t seed = 0;

  void validate() const {
    if (n < 1) throw ConfigError("dgp n: must be >= 1");
    if (d < 1) throw ConfigError("dgp d: must be >= 1");
    if (p1 < 0 || p2 < 0) throw ConfigError("dgp control counts must be >= 0");
    if (n_instruments < 0) throw ConfigError("dgp instruments: must be >= 0");
    if (n_instruments == 0 && instrument_strength != 0.0) {
      throw ConfigError("dgp instrument_strength set without any instruments");
    }
    if (sigma_y < 0.0 || sigma_t < 0.0) throw ConfigError("dgp noise scales must be >= 0");
    f0.validate(d + p1 + p2);
    g0.validate(d + p1 + p2);
  }
};

// A generated dataset together with its ground truth.
struct GeneratedData {
  std::shared_ptr<const Dataset> data;
  DgpSpec spec;

  double theta_at(const VectorXd& x) const { return spec.theta(x); }
  std::function<double(const VectorXd&)> truth() const {
    DgpSpec s = spec;
    return [s](const VectorXd& x) { return s.theta(x); };
  }
};

inline GeneratedData generate(const DgpSpec& spec) {
  spec.validate();
  const int n = spec.n;

  auto draw_covariate = [&](RandomStream& rng) {
    return spec.covariates == CovariateDistribution::Normal ? rng.next_normal()
                                                            : 2.0 * rng.next_double() - 1.0;
  };

  MatrixXd x(n, spec.d), wp(n, spec.p1), wn(n, spec.p2), z(n, spec.n_instruments);
  {
    RandomStream rng = derive_stream(spec.seed, "dgp-x");
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < spec.d; ++j) x(i, j) = draw_covariate(rng);
    }
  }
  {
    RandomStream rng = derive_stream(spec.seed, "dgp-wp");
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < spec.p1; ++j) wp(i, j) = draw_covariate(rng);
    }
  }
  {
    RandomStream rng = derive_stream(spec.seed, "dgp-wn");
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < spec.p2; ++j) wn(i, j) = draw_covariate(rng);
    }
  }
  {
    RandomStream rng = derive_stream(spec.seed, "dgp-z");
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < spec.n_instruments; ++j) z(i, j) = rng.next_normal();
    }
  }

  RandomStream noise_t = derive_stream(spec.seed, "dgp-noise-t");
  RandomStream noise_y = derive_stream(spec.seed, "dgp-noise-y");
  RandomStream conf = derive_stream(spec.seed, "dgp-confounder");
  VectorXd y(n), t(n);
  for (int i = 0; i < n; ++i) {
    const VectorXd xi = x.row(i);
    const VectorXd wpi = wp.row(i);
    const VectorXd wni = wn.row(i);
    const double u =
        (spec.confounder_on_t != 0.0 || spec.confounder_on_y != 0.0) ? conf.next_normal() : 0.0;
    double ti = spec.g0.eval(xi, wpi, wni) + spec.sigma_t * noise_t.next_normal() +
                spec.confounder_on_t * u;
    for (int j = 0; j < spec.n_instruments; ++j) ti += spec.instrument_strength * z(i, j);
    t(i) = ti;
    y(i) = spec.theta(xi) * ti + spec.f0.eval(xi, wpi, wni) + spec.sigma_y * noise_y.next_normal() +
           spec.confounder_on_y * u;
  }

  DatasetSchema schema;
  schema.add("y", ColumnRole::Outcome);
  schema.add("t", ColumnRole::Treatment);
  for (int j = 0; j < spec.d; ++j) schema.add("x" + std::to_string(j + 1), ColumnRole::Target);
  for (int j = 0; j < spec.p1; ++j) {
    schema.add("wp" + std::to_string(j + 1), ColumnRole::Parametric);
  }
  for (int j = 0; j < spec.p2; ++j) {
    schema.add("wn" + std::to_string(j + 1), ColumnRole::Nonparametric);
  }
  for (int j = 0; j < spec.n_instruments; ++j) {
    schema.add("z" + std::to_string(j + 1), ColumnRole::Instrument);
  }

  GeneratedData out;
  out.spec = spec;
  out.data = std::make_shared<const Dataset>(schema, std::move(y), std::move(t), std::move(x),
                                             std::move(wp), std::move(wn), std::move(z));
  return out;
}

// Accuracy of point estimates against a known effect function.  Coverage is
// the share of intervals containing the truth, over estimates that carry an
// interval (NaN when none do).
struct ScoreMetrics {
  double rmse = 0.0;
  double bias = 0.0;
  double coverage = std::numeric_limits<double>::quiet_NaN();
  int interval_points = 0;
};

inline ScoreMetrics score(const std::vector<EffectEstimate>& estimates,
                          const std::function<double(const VectorXd&)>& truth) {
  if (estimates.empty()) throw SizeError("score: no estimates");
  ScoreMetrics m;
  double se = 0.0, bias = 0.0;
  int covered = 0, with_interval = 0;
  for (const auto& est : estimates) {
    const double t0 = truth(est.x);
    const double err = est.theta - t0;
    se += err * err;
    bias += err;
    if (est.has_interval) {
      ++with_interval;
      covered += est.ci_low <= t0 && t0 <= est.ci_high;
    }
  }
  const double count = static_cast<double>(estimates.size());
  m.rmse = std::sqrt(se / count);
  m.bias = bias / count;
  m.interval_points = with_interval;
  if (with_interval > 0) {
    m.coverage = static_cast<double>(covered) / static_cast<double>(with_interval);
  }
  return m;
}

}  // namespace orf
