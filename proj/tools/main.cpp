// Command-line front end: fit/effects/bootstrap answer heterogeneous-effect
// questions about one dataset; dml/dmliv estimate average effects; policy
// turns per-period effect estimates into a price recommendation; benchmark
// scores estimators on synthetic data with known truth; plot-data renders an
// estimate series as CSV + SVG.

#include <CLI11.hpp>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "orthoforest/orthoforest.hpp"

namespace fs = std::filesystem;

namespace {

using orf::ConfigDoc;
using orf::ConfigError;
using orf::Dataset;
using orf::MatrixXd;
using orf::VectorXd;

struct CommonOpts {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string out_dir;   // overrides [run] output_dir
  std::string model_path;
  std::string from_csv;
  std::int64_t seed = -1;  // overrides [run] seed when >= 0
  int threads = -1;        // overrides [run] threads when >= 0
  bool extrapolate = false;
};

// Walltime clock for manifests.
struct Stopwatch {
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
};

ConfigDoc load_config(const CommonOpts& opts) {
  if (opts.config_path.empty()) throw ConfigError("no config file given");
  ConfigDoc doc = ConfigDoc::parse_file(opts.config_path);
  for (const auto& assignment : opts.overrides) doc.set_flat(assignment);
  return doc;
}

std::uint64_t run_seed(const ConfigDoc& doc, const CommonOpts& opts) {
  if (opts.seed >= 0) return static_cast<std::uint64_t>(opts.seed);
  return static_cast<std::uint64_t>(doc.get_int("run", "seed", 0));
}

int run_threads(const ConfigDoc& doc, const CommonOpts& opts) {
  const int t = opts.threads >= 0 ? opts.threads
                                  : static_cast<int>(doc.get_int("run", "threads", 0));
  return t;
}

fs::path output_dir(const ConfigDoc& doc, const CommonOpts& opts) {
  const std::string dir =
      !opts.out_dir.empty() ? opts.out_dir : doc.get_string("run", "output_dir", ".");
  fs::create_directories(dir);
  return dir;
}

// ---- config -> library structs ----

orf::LearnerSpec learner_from_config(const ConfigDoc& doc, const std::string& section,
                                     const orf::LearnerSpec& fallback) {
  if (!doc.has_section(section)) return fallback;
  orf::LearnerSpec spec;
  spec.kind = orf::parse_learner(doc.get_string(section, "kind", "lasso"),
                                 "[" + section + "] kind");
  spec.lasso_lambda = doc.get_double(section, "lambda", spec.lasso_lambda);
  for (long long h : doc.get_ints(section, "hidden")) spec.hidden.push_back(static_cast<int>(h));
  spec.activation = orf::parse_activation(doc.get_string(section, "activation", "relu"),
                                          "[" + section + "] activation");
  spec.resample_factor = doc.get_double(section, "resample_factor", spec.resample_factor);
  spec.train.epochs = static_cast<int>(doc.get_int(section, "epochs", spec.train.epochs));
  spec.train.batch_size =
      static_cast<int>(doc.get_int(section, "batch_size", spec.train.batch_size));
  spec.train.learning_rate =
      doc.get_double(section, "learning_rate", spec.train.learning_rate);
  spec.train.lr_decay = doc.get_double(section, "lr_decay", spec.train.lr_decay);
  spec.train.weight_decay = doc.get_double(section, "weight_decay", spec.train.weight_decay);
  spec.train.patience = static_cast<int>(doc.get_int(section, "patience", spec.train.patience));
  spec.train.holdout_fraction =
      doc.get_double(section, "holdout_fraction", spec.train.holdout_fraction);
  spec.validate();
  return spec;
}

orf::ForestConfig forest_from_config(const ConfigDoc& doc, std::uint64_t seed, int threads) {
  orf::ForestConfig cfg;
  cfg.n_trees = static_cast<int>(doc.get_int("forest", "trees", cfg.n_trees));
  cfg.subsample_size =
      static_cast<int>(doc.get_int("forest", "subsample_size", cfg.subsample_size));
  cfg.min_leaf = static_cast<int>(doc.get_int("forest", "min_leaf", cfg.min_leaf));
  cfg.min_split_ratio = doc.get_double("forest", "min_split_ratio", cfg.min_split_ratio);
  cfg.max_splits = static_cast<int>(doc.get_int("forest", "max_splits", cfg.max_splits));
  cfg.features_per_split =
      static_cast<int>(doc.get_int("forest", "features_per_split", cfg.features_per_split));
  cfg.split_points = static_cast<int>(doc.get_int("forest", "split_points", cfg.split_points));
  cfg.node_learner = learner_from_config(doc, "node_learner", orf::LearnerSpec::lasso(1e-3));
  cfg.seed = seed;
  cfg.threads = threads;
  return cfg;
}

// Term syntax: kind:column:coef[:scale], columns 1-based over [x | wp | wn].
orf::NuisanceFunctionSpec nuisance_fn_from_config(const ConfigDoc& doc, const std::string& key) {
  orf::NuisanceFunctionSpec fn;
  fn.intercept = doc.get_double("dgp", key + "_intercept", 0.0);
  for (const std::string& token : doc.get_strings("dgp", key)) {
    std::vector<std::string> parts;
    std::string cur;
    for (char c : token) {
      if (c == ':') {
        parts.push_back(cur);
        cur.clear();
      } else {
        cur.push_back(c);
      }
    }
    parts.push_back(cur);
    const std::string where = "[dgp] " + key;
    if (parts.size() < 3 || parts.size() > 4) {
      throw ConfigError(where + ": expected kind:column:coef[:scale], got '" + token + "'");
    }
    orf::CovariateTerm term;
    if (parts[0] == "linear") {
      term.kind = orf::TermKind::Linear;
    } else if (parts[0] == "sine") {
      term.kind = orf::TermKind::Sine;
    } else if (parts[0] == "square") {
      term.kind = orf::TermKind::Square;
    } else if (parts[0] == "tanh") {
      term.kind = orf::TermKind::Tanh;
    } else {
      throw ConfigError(where + ": unknown term kind '" + parts[0] + "'");
    }
    term.column = static_cast<int>(orf::parse_int(parts[1], where)) - 1;
    term.coef = orf::parse_double(parts[2], where);
    if (parts.size() == 4) term.scale = orf::parse_double(parts[3], where);
    fn.terms.push_back(term);
  }
  return fn;
}

orf::ThetaSpec theta_from_config(const ConfigDoc& doc, const std::string& section) {
  const auto tokens = doc.get_strings(section, "effect");
  if (tokens.empty()) throw ConfigError("[" + section + "] effect: required key is missing");
  orf::ThetaSpec theta;
  theta.family = orf::parse_theta_family(tokens[0], "[" + section + "] effect");
  if (tokens.size() > 1) theta.a = orf::parse_double(tokens[1], "[" + section + "] effect");
  if (tokens.size() > 2) theta.b = orf::parse_double(tokens[2], "[" + section + "] effect");
  if (tokens.size() > 3) throw ConfigError("[" + section + "] effect: too many values");
  return theta;
}

orf::DgpSpec dgp_from_config(const ConfigDoc& doc, std::uint64_t fallback_seed) {
  if (!doc.has_section("dgp")) throw ConfigError("config has no [dgp] section");
  orf::DgpSpec spec;
  spec.n = static_cast<int>(doc.get_int("dgp", "n", spec.n));
  spec.d = static_cast<int>(doc.get_int("dgp", "d", spec.d));
  spec.p1 = static_cast<int>(doc.get_int("dgp", "p1", spec.p1));
  spec.p2 = static_cast<int>(doc.get_int("dgp", "p2", spec.p2));
  spec.theta = theta_from_config(doc, "dgp");
  spec.f0 = nuisance_fn_from_config(doc, "f0");
  spec.g0 = nuisance_fn_from_config(doc, "g0");
  spec.sigma_y = doc.get_double("dgp", "sigma_y", spec.sigma_y);
  spec.sigma_t = doc.get_double("dgp", "sigma_t", spec.sigma_t);
  const std::string dist = doc.get_string("dgp", "covariates", "normal");
  if (dist == "normal") {
    spec.covariates = orf::CovariateDistribution::Normal;
  } else if (dist == "uniform") {
    spec.covariates = orf::CovariateDistribution::Uniform;
  } else {
    throw ConfigError("[dgp] covariates: expected normal or uniform, got '" + dist + "'");
  }
  spec.n_instruments = static_cast<int>(doc.get_int("dgp", "instruments", spec.n_instruments));
  spec.instrument_strength =
      doc.get_double("dgp", "instrument_strength", spec.instrument_strength);
  spec.confounder_on_t = doc.get_double("dgp", "confounder_t", spec.confounder_on_t);
  spec.confounder_on_y = doc.get_double("dgp", "confounder_y", spec.confounder_on_y);
  spec.seed = static_cast<std::uint64_t>(doc.get_int("dgp", "seed",
                                                     static_cast<long long>(fallback_seed)));
  spec.validate();
  return spec;
}

// Datasets come from a CSV + schema, or from the [dgp] section.
std::shared_ptr<const Dataset> load_data(const ConfigDoc& doc, std::uint64_t seed) {
  const bool has_csv = doc.has("data", "csv");
  if (has_csv && doc.has_section("dgp")) {
    throw ConfigError("config declares both [data] csv and a [dgp] section; pick one");
  }
  if (has_csv) {
    const std::string path = doc.require_string("data", "csv");
    if (!fs::exists(path)) throw ConfigError("[data] csv: file '" + path + "' does not exist");
    return std::make_shared<const Dataset>(
        orf::load_dataset(path, orf::DatasetSchema::from_config(doc)));
  }
  if (doc.has_section("dgp")) {
    return orf::generate(dgp_from_config(doc, seed)).data;
  }
  throw ConfigError("config needs either [data] csv (with a [schema]) or a [dgp] section");
}

// Plain numeric CSV/whitespace table of test points: one header line, then
// one row per point.
MatrixXd points_from_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw orf::IngestError("cannot open test-point file '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw orf::IngestError(path + ": empty file");
  std::vector<std::vector<double>> rows;
  int line_no = 1;
  int cols = -1;
  while (std::getline(in, line)) {
    ++line_no;
    if (orf::trim(line).empty()) continue;
    std::vector<double> row;
    for (const auto& tok : orf::split_tokens(line)) {
      row.push_back(orf::parse_double(tok, path + ": line " + std::to_string(line_no)));
    }
    if (cols < 0) cols = static_cast<int>(row.size());
    if (static_cast<int>(row.size()) != cols) {
      throw orf::IngestError(path + ": line " + std::to_string(line_no) +
                             " has inconsistent field count");
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw orf::IngestError(path + ": no test points");
  MatrixXd pts(static_cast<int>(rows.size()), cols);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (int j = 0; j < cols; ++j) pts(static_cast<int>(i), j) = rows[i][static_cast<std::size_t>(j)];
  }
  return pts;
}

// Test points from [test_points]: list = v1 v2 ... (d = 1), range = lo hi
// count (d = 1), or file = points.csv (any d).  Points must fall inside the
// observed range of every target feature unless --extrapolate is set.
MatrixXd test_points(const ConfigDoc& doc, const Dataset& ds, bool extrapolate) {
  MatrixXd pts;
  const bool has_list = doc.has("test_points", "list");
  const bool has_range = doc.has("test_points", "range");
  const bool has_file = doc.has("test_points", "file");
  if (has_list + has_range + has_file != 1) {
    throw ConfigError("[test_points] needs exactly one of: list, range, file");
  }
  if (has_file) {
    pts = points_from_csv(doc.require_string("test_points", "file"));
    if (pts.cols() != ds.d()) {
      throw ConfigError("[test_points] file: points have " + std::to_string(pts.cols()) +
                        " coordinates, dataset targets have " + std::to_string(ds.d()));
    }
  } else {
    if (ds.d() != 1) {
      throw ConfigError("[test_points] list/range only applies to one target feature; use file");
    }
    std::vector<double> values;
    if (has_list) {
      values = doc.get_doubles("test_points", "list");
      if (values.empty()) throw ConfigError("[test_points] list: no values");
    } else {
      const auto spec = doc.get_doubles("test_points", "range");
      if (spec.size() != 3) throw ConfigError("[test_points] range: expected 'lo hi count'");
      const double lo = spec[0], hi = spec[1];
      const int count = static_cast<int>(spec[2]);
      if (count < 2 || hi <= lo) {
        throw ConfigError("[test_points] range: need lo < hi and count >= 2");
      }
      for (int i = 0; i < count; ++i) {
        values.push_back(lo + (hi - lo) * static_cast<double>(i) / (count - 1));
      }
    }
    pts.resize(static_cast<int>(values.size()), 1);
    for (std::size_t i = 0; i < values.size(); ++i) pts(static_cast<int>(i), 0) = values[i];
  }

  if (!extrapolate) {
    const VectorXd lo = ds.x_min(), hi = ds.x_max();
    for (int i = 0; i < pts.rows(); ++i) {
      for (int j = 0; j < pts.cols(); ++j) {
        if (pts(i, j) < lo(j) || pts(i, j) > hi(j)) {
          throw ConfigError("test point " + std::to_string(i + 1) + " coordinate " +
                            std::to_string(j + 1) + " = " + orf::format_double(pts(i, j)) +
                            " lies outside the observed range [" + orf::format_double(lo(j)) +
                            ", " + orf::format_double(hi(j)) + "]; pass --extrapolate to allow");
        }
      }
    }
  }
  return pts;
}

void write_manifest(const fs::path& dir, const std::string& command, const ConfigDoc& doc,
                    std::uint64_t seed, const std::vector<std::string>& outputs,
                    const Stopwatch& watch) {
  orf::write_text_file((dir / ("manifest-" + command + ".json")).string(),
                       orf::make_manifest(command, doc.content_hash(), seed, outputs,
                                          watch.seconds())
                               .dump(1) +
                           "\n");
}

orf::CrossFitPlan plan_from_config(const ConfigDoc& doc, int n, std::uint64_t seed) {
  const int folds = static_cast<int>(doc.get_int("estimator", "folds", 2));
  return orf::CrossFitPlan::make(n, folds, orf::derive_key(seed, "cross-fit"));
}

// ---- subcommand bodies ----

int cmd_fit(const CommonOpts& opts) {
  Stopwatch watch;
  ConfigDoc doc = load_config(opts);
  const std::uint64_t seed = run_seed(doc, opts);
  const fs::path dir = output_dir(doc, opts);
  auto data = load_data(doc, seed);
  orf::ForestConfig cfg = forest_from_config(doc, seed, run_threads(doc, opts));
  orf::LearnerSpec final_learner =
      learner_from_config(doc, "final_learner", orf::LearnerSpec::lasso(1e-3));
  orf::OrfModel model = orf::fit_orf(data, cfg, final_learner, seed);
  const std::string model_path = (dir / "model.json").string();
  orf::save_model(model, model_path);
  write_manifest(dir, "fit", doc, seed, {model_path}, watch);
  std::cout << "fitted " << cfg.n_trees << "+" << cfg.n_trees << " trees on " << data->n()
            << " rows (" << model.d1.size() << "/" << model.d2.size() << " split); model -> "
            << model_path << "\n";
  return 0;
}

int cmd_effects(const CommonOpts& opts) {
  Stopwatch watch;
  ConfigDoc doc = load_config(opts);
  const std::uint64_t seed = run_seed(doc, opts);
  const fs::path dir = output_dir(doc, opts);
  auto data = load_data(doc, seed);
  const std::string model_path =
      !opts.model_path.empty() ? opts.model_path : (dir / "model.json").string();
  if (!fs::exists(model_path)) {
    throw ConfigError("model file '" + model_path + "' does not exist; run fit first");
  }
  orf::OrfModel model = orf::load_model(model_path, data);
  model.cfg.threads = run_threads(doc, opts);
  MatrixXd pts = test_points(doc, *data, opts.extrapolate);
  auto estimates = orf::estimate_effects(model, pts);
  const std::string csv_path = (dir / "effects.csv").string();
  const std::string json_path = (dir / "effects.json").string();
  orf::write_text_file(csv_path, orf::effects_to_csv(estimates));
  orf::write_text_file(json_path, orf::effects_to_json(estimates).dump(1) + "\n");
  write_manifest(dir, "effects", doc, seed, {csv_path, json_path}, watch);
  std::cout << "estimated effects at " << estimates.size() << " points -> " << csv_path << "\n";
  return 0;
}

int cmd_bootstrap(const CommonOpts& opts) {
  Stopwatch watch;
  ConfigDoc doc = load_config(opts);
  const std::uint64_t seed = run_seed(doc, opts);
  const fs::path dir = output_dir(doc, opts);
  auto data = load_data(doc, seed);
  orf::ForestConfig cfg = forest_from_config(doc, seed, run_threads(doc, opts));
  orf::LearnerSpec final_learner =
      learner_from_config(doc, "final_learner", orf::LearnerSpec::lasso(1e-3));
  MatrixXd pts = test_points(doc, *data, opts.extrapolate);
  orf::BootstrapOptions boot;
  boot.cluster_column = doc.get_string("bootstrap", "cluster", "");
  const int replicates = static_cast<int>(doc.get_int("bootstrap", "replicates", 100));
  const double level = doc.get_double("bootstrap", "level", 0.95);
  auto estimates =
      orf::bootstrap_ci(data, cfg, final_learner, pts, replicates, level, seed, boot);
  const std::string csv_path = (dir / "effects_ci.csv").string();
  const std::string json_path = (dir / "effects_ci.json").string();
  orf::write_text_file(csv_path, orf::effects_to_csv(estimates));
  orf::write_text_file(json_path, orf::effects_to_json(estimates).dump(1) + "\n");
  write_manifest(dir, "bootstrap", doc, seed, {csv_path, json_path}, watch);
  std::cout << "bootstrap (" << replicates << " replicates, level " << level << ") at "
            << estimates.size() << " points -> " << csv_path << "\n";
  return 0;
}

int cmd_dml(const CommonOpts& opts, bool instrumental) {
  Stopwatch watch;
  ConfigDoc doc = load_config(opts);
  const std::uint64_t seed = run_seed(doc, opts);
  const fs::path dir = output_dir(doc, opts);
  auto data = load_data(doc, seed);
  orf::LearnerSpec spec = learner_from_config(doc, "nuisance", orf::LearnerSpec::lasso(1e-3));
  orf::CrossFitPlan plan = plan_from_config(doc, data->n(), seed);
  const double level = doc.get_double("estimator", "level", 0.95);

  orf::AteEstimate est;
  orf::Json j;
  std::string name;
  if (instrumental) {
    orf::DmlivOptions iv;
    iv.instrument = static_cast<int>(doc.get_int("estimator", "instrument", 0));
    iv.combine_instruments = doc.get_bool("estimator", "combine_instruments", false);
    est = orf::fit_dmliv(*data, spec, plan, iv, level);
    name = "dmliv";
    j = orf::ate_to_json(est, name);
    j["first_stage_f"] = orf::first_stage_f(*data);
  } else {
    est = orf::fit_dml(*data, spec, plan, level);
    name = "dml";
    j = orf::ate_to_json(est, name);
  }
  const std::string json_path = (dir / (name + ".json")).string();
  orf::write_text_file(json_path, j.dump(1) + "\n");
  write_manifest(dir, name, doc, seed, {json_path}, watch);
  std::cout << name << ": theta = " << orf::format_double(est.theta)
            << ", se = " << orf::format_double(est.std_error) << ", " << est.level * 100
            << "% ci = [" << orf::format_double(est.ci_low) << ", "
            << orf::format_double(est.ci_high) << "]";
  if (instrumental) std::cout << ", first-stage F = " << orf::format_double(j["first_stage_f"]);
  std::cout << "\n";
  return 0;
}

int cmd_policy(const CommonOpts& opts) {
  Stopwatch watch;
  ConfigDoc doc = load_config(opts);
  const std::uint64_t seed = run_seed(doc, opts);
  const fs::path dir = output_dir(doc, opts);
  if (!doc.has_section("policy")) throw ConfigError("config has no [policy] section");

  const int periods = static_cast<int>(doc.get_int("policy", "periods", 0));
  auto vec = [&](const char* key) {
    std::vector<double> v = doc.get_doubles("policy", key);
    if (v.empty()) throw ConfigError(std::string("[policy] ") + key + ": required key is missing");
    if (periods > 0 && v.size() == 1) v.assign(static_cast<std::size_t>(periods), v[0]);
    return VectorXd(Eigen::Map<const VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())));
  };
  orf::PolicyInputs inputs;
  inputs.slope = vec("slope");
  inputs.outcome_level = vec("outcome_level");
  inputs.treatment_level = vec("treatment_level");
  inputs.price_low = doc.get_double("policy", "price_low", 0.0);
  inputs.price_high = doc.get_double("policy", "price_high", 0.0);
  inputs.validate();

  const double best = orf::optimal_price(inputs);
  const double value = orf::revenue(inputs, best);
  const double step =
      doc.get_double("policy", "grid_step", (inputs.price_high - inputs.price_low) / 100.0);
  if (!(step > 0.0)) throw ConfigError("[policy] grid_step: must be positive");

  std::ostringstream curve;
  curve << "price,revenue\n";
  for (double p = inputs.price_low;; p += step) {
    if (p > inputs.price_high) p = inputs.price_high;
    curve << orf::format_double(p) << ',' << orf::format_double(orf::revenue(inputs, p)) << '\n';
    if (p >= inputs.price_high) break;
  }
  const std::string curve_path = (dir / "revenue_curve.csv").string();
  orf::write_text_file(curve_path, curve.str());

  orf::Json j{{"optimal_price", best},
              {"revenue_at_optimum", value},
              {"price_low", inputs.price_low},
              {"price_high", inputs.price_high},
              {"periods", inputs.slope.size()}};
  const std::string json_path = (dir / "policy.json").string();
  orf::write_text_file(json_path, j.dump(1) + "\n");
  write_manifest(dir, "policy", doc, seed, {json_path, curve_path}, watch);
  std::cout << "optimal price " << orf::format_double(best) << " with revenue proxy "
            << orf::format_double(value) << " -> " << json_path << "\n";
  return 0;
}

orf::ThetaSpec scenario_theta(const std::string& name) {
  if (name == "constant") return {orf::ThetaFamily::Constant, 1.5, 0.0};
  if (name == "affine") return {orf::ThetaFamily::Affine, 1.0, 0.5};
  if (name == "step") return {orf::ThetaFamily::Step, -1.0, 1.0};
  if (name == "sine") return {orf::ThetaFamily::Sine, 1.0, 1.0};
  throw ConfigError("[benchmark] scenarios: unknown scenario '" + name + "'");
}

int cmd_benchmark(const CommonOpts& opts) {
  Stopwatch watch;
  ConfigDoc doc = load_config(opts);
  const std::uint64_t seed = run_seed(doc, opts);
  const fs::path dir = output_dir(doc, opts);
  const auto scenarios = doc.get_strings("benchmark", "scenarios");
  const auto estimators = doc.get_strings("benchmark", "estimators");
  if (scenarios.empty()) throw ConfigError("[benchmark] scenarios: required key is missing");
  if (estimators.empty()) throw ConfigError("[benchmark] estimators: required key is missing");
  const int runs = static_cast<int>(doc.get_int("benchmark", "seeds", 1));
  if (runs < 1) throw ConfigError("[benchmark] seeds: must be >= 1");
  const int threads = run_threads(doc, opts);

  std::vector<orf::BenchmarkRow> rows;
  for (std::size_t s = 0; s < scenarios.size(); ++s) {
    for (int r = 0; r < runs; ++r) {
      orf::DgpSpec dgp = dgp_from_config(doc, seed);
      if (doc.has("benchmark", "n")) {
        dgp.n = static_cast<int>(doc.get_int("benchmark", "n", dgp.n));
      }
      dgp.theta = scenario_theta(scenarios[s]);
      dgp.seed = orf::derive_key(seed, "benchmark-data",
                                 static_cast<std::uint64_t>(s) * static_cast<std::uint64_t>(runs) +
                                     static_cast<std::uint64_t>(r));
      orf::GeneratedData gen = orf::generate(dgp);
      const auto truth = gen.truth();

      for (const std::string& estimator : estimators) {
        Stopwatch run_watch;
        orf::BenchmarkRow row;
        row.scenario = scenarios[s];
        row.estimator = estimator;
        row.n = gen.data->n();
        row.seed = dgp.seed;
        if (estimator == "orf") {
          orf::ForestConfig cfg = forest_from_config(doc, dgp.seed, threads);
          orf::LearnerSpec final_learner =
              learner_from_config(doc, "final_learner", orf::LearnerSpec::lasso(1e-3));
          orf::OrfModel model = orf::fit_orf(gen.data, cfg, final_learner, dgp.seed);
          MatrixXd pts = test_points(doc, *gen.data, opts.extrapolate);
          const auto estimates = orf::estimate_effects(model, pts);
          const orf::ScoreMetrics m = orf::score(estimates, truth);
          row.rmse = m.rmse;
          row.bias = m.bias;
          row.coverage = m.coverage;
        } else if (estimator == "dml" || estimator == "dmliv") {
          orf::LearnerSpec spec =
              learner_from_config(doc, "nuisance", orf::LearnerSpec::lasso(1e-3));
          orf::CrossFitPlan plan = plan_from_config(doc, gen.data->n(), dgp.seed);
          orf::AteEstimate est;
          if (estimator == "dml") {
            est = orf::fit_dml(*gen.data, spec, plan);
          } else {
            orf::DmlivOptions iv;
            iv.instrument = static_cast<int>(doc.get_int("estimator", "instrument", 0));
            est = orf::fit_dmliv(*gen.data, spec, plan, iv);
          }
          // The estimand is the average of the true effect over the sample.
          double ate = 0.0;
          for (int i = 0; i < gen.data->n(); ++i) {
            ate += truth(gen.data->x().row(i).transpose());
          }
          ate /= gen.data->n();
          row.bias = est.theta - ate;
          row.rmse = std::abs(row.bias);
          row.coverage = est.ci_low <= ate && ate <= est.ci_high ? 1.0 : 0.0;
        } else {
          throw ConfigError("[benchmark] estimators: unknown estimator '" + estimator + "'");
        }
        row.wall_time_s = run_watch.seconds();
        rows.push_back(row);
      }
    }
  }
  const std::string csv_path = (dir / "benchmark.csv").string();
  orf::write_text_file(csv_path, orf::benchmark_to_csv(rows));
  write_manifest(dir, "benchmark", doc, seed, {csv_path}, watch);
  std::cout << "benchmark wrote " << rows.size() << " rows -> " << csv_path << "\n";
  return 0;
}

std::vector<orf::EffectEstimate> effects_from_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw orf::IngestError("cannot open estimates file '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw orf::IngestError(path + ": empty file");
  const auto header = orf::detail::split_csv_line(line);
  int d = 0;
  while (d < static_cast<int>(header.size()) && header[static_cast<std::size_t>(d)] ==
                                                    "x" + std::to_string(d + 1)) {
    ++d;
  }
  if (d == 0 || static_cast<int>(header.size()) != d + 4) {
    throw orf::IngestError(path + ": expected header x1..xd,theta,ci_low,ci_high,n_effective");
  }
  std::vector<orf::EffectEstimate> out;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (orf::trim(line).empty()) continue;
    const auto fields = orf::detail::split_csv_line(line);
    if (static_cast<int>(fields.size()) != d + 4) {
      throw orf::IngestError(path + ": line " + std::to_string(line_no) + " has " +
                             std::to_string(fields.size()) + " fields, expected " +
                             std::to_string(d + 4));
    }
    const std::string where = path + ": line " + std::to_string(line_no);
    orf::EffectEstimate est;
    est.x.resize(d);
    for (int j = 0; j < d; ++j) {
      est.x(j) = orf::parse_double(fields[static_cast<std::size_t>(j)], where);
    }
    est.theta = orf::parse_double(fields[static_cast<std::size_t>(d)], where);
    const std::string& lo = fields[static_cast<std::size_t>(d + 1)];
    const std::string& hi = fields[static_cast<std::size_t>(d + 2)];
    if (!lo.empty() && !hi.empty()) {
      est.has_interval = true;
      est.ci_low = orf::parse_double(lo, where);
      est.ci_high = orf::parse_double(hi, where);
    }
    est.n_effective = orf::parse_double(fields[static_cast<std::size_t>(d + 3)], where);
    out.push_back(std::move(est));
  }
  if (out.empty()) throw orf::IngestError(path + ": no estimate rows");
  return out;
}

int cmd_plot_data(const CommonOpts& opts) {
  Stopwatch watch;
  ConfigDoc doc = load_config(opts);
  const std::uint64_t seed = run_seed(doc, opts);
  const fs::path dir = output_dir(doc, opts);

  std::vector<orf::EffectEstimate> estimates;
  if (!opts.from_csv.empty()) {
    estimates = effects_from_csv(opts.from_csv);
  } else {
    auto data = load_data(doc, seed);
    const std::string model_path =
        !opts.model_path.empty() ? opts.model_path : (dir / "model.json").string();
    if (!fs::exists(model_path)) {
      throw ConfigError("model file '" + model_path +
                        "' does not exist; run fit first or pass --from estimates.csv");
    }
    orf::OrfModel model = orf::load_model(model_path, data);
    model.cfg.threads = run_threads(doc, opts);
    estimates = orf::estimate_effects(model, test_points(doc, *data, opts.extrapolate));
  }

  const std::string csv_path = (dir / "plot_data.csv").string();
  const std::string svg_path = (dir / "chart.svg").string();
  orf::write_text_file(csv_path, orf::effects_to_csv(estimates));
  orf::write_text_file(svg_path, orf::effects_to_svg(estimates));
  write_manifest(dir, "plot-data", doc, seed, {csv_path, svg_path}, watch);
  std::cout << "plot data for " << estimates.size() << " points -> " << csv_path << ", "
            << svg_path << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"orthoforest: heterogeneous treatment-effect estimation"};
  app.set_version_flag("--version", std::string(orf::kVersion));
  app.require_subcommand(1);

  CommonOpts opts;
  auto add_common = [&](CLI::App* sub, bool with_points) {
    sub->add_option("config", opts.config_path, "run configuration file")->required();
    sub->add_option("--set", opts.overrides,
                    "override a config entry as section.key=value (repeatable)");
    sub->add_option("--out", opts.out_dir, "output directory (default: [run] output_dir)");
    sub->add_option("--seed", opts.seed, "override [run] seed");
    sub->add_option("--threads", opts.threads, "override [run] threads (0 = all cores)");
    if (with_points) {
      sub->add_flag("--extrapolate", opts.extrapolate,
                    "allow test points outside the observed feature range");
    }
  };

  auto* fit = app.add_subcommand("fit", "fit the two-forest effect model");
  add_common(fit, false);
  auto* effects = app.add_subcommand("effects", "estimate effects at test points");
  add_common(effects, true);
  effects->add_option("--model", opts.model_path, "model file (default: <out>/model.json)");
  auto* bootstrap =
      app.add_subcommand("bootstrap", "effects with percentile-bootstrap intervals");
  add_common(bootstrap, true);
  auto* dml = app.add_subcommand("dml", "cross-fitted average effect");
  add_common(dml, false);
  auto* dmliv = app.add_subcommand("dmliv", "instrumental-variable average effect");
  add_common(dmliv, false);
  auto* policy = app.add_subcommand("policy", "optimal price from per-period estimates");
  add_common(policy, false);
  auto* benchmark = app.add_subcommand("benchmark", "score estimators on synthetic data");
  add_common(benchmark, true);
  auto* plot = app.add_subcommand("plot-data", "estimate series as CSV + SVG chart");
  add_common(plot, true);
  plot->add_option("--model", opts.model_path, "model file (default: <out>/model.json)");
  plot->add_option("--from", opts.from_csv, "reuse an existing estimates CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // Normalize CLI11's per-error exit codes: 0 for --help/--version, 2 for
    // any actual usage error.
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (fit->parsed()) return cmd_fit(opts);
    if (effects->parsed()) return cmd_effects(opts);
    if (bootstrap->parsed()) return cmd_bootstrap(opts);
    if (dml->parsed()) return cmd_dml(opts, false);
    if (dmliv->parsed()) return cmd_dml(opts, true);
    if (policy->parsed()) return cmd_policy(opts);
    if (benchmark->parsed()) return cmd_benchmark(opts);
    if (plot->parsed()) return cmd_plot_data(opts);
  } catch (const orf::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
