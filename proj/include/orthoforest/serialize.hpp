#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <json.hpp>
#include <limits>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "orthoforest/dataset.hpp"
#include "orthoforest/dml.hpp"
#include "orthoforest/errors.hpp"
#include "orthoforest/forest.hpp"
#include "orthoforest/nuisance.hpp"
#include "orthoforest/synthetic.hpp"
#include "orthoforest/version.hpp"

namespace orf {

using Json = nlohmann::ordered_json;

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw IngestError("cannot open '" + path + "' for writing");
  out << text;
  if (!out) throw IngestError("failed writing '" + path + "'");
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IngestError("cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// Content hash covering every stored value and the row count; used to verify
// that a reloaded model is paired with the dataset it was fitted on.
inline std::string dataset_content_hash(const Dataset& ds) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto fold = [&h](const double* data, Eigen::Index size) {
    h = fnv1a_bytes(data, static_cast<std::size_t>(size) * sizeof(double), h);
  };
  const std::int64_t n = ds.n();
  h = fnv1a_bytes(&n, sizeof(n), h);
  fold(ds.y().data(), ds.y().size());
  fold(ds.t().data(), ds.t().size());
  fold(ds.x().data(), ds.x().size());
  fold(ds.wp().data(), ds.wp().size());
  fold(ds.wn().data(), ds.wn().size());
  fold(ds.z().data(), ds.z().size());
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = digits[h & 0xf];
    h >>= 4;
  }
  return out;
}

inline Json train_config_to_json(const TrainConfig& cfg) {
  return Json{{"epochs", cfg.epochs},
              {"batch_size", cfg.batch_size},
              {"learning_rate", cfg.learning_rate},
              {"lr_decay", cfg.lr_decay},
              {"weight_decay", cfg.weight_decay},
              {"patience", cfg.patience},
              {"holdout_fraction", cfg.holdout_fraction}};
}

inline TrainConfig train_config_from_json(const Json& j) {
  TrainConfig cfg;
  cfg.epochs = j.at("epochs").get<int>();
  cfg.batch_size = j.at("batch_size").get<int>();
  cfg.learning_rate = j.at("learning_rate").get<double>();
  cfg.lr_decay = j.at("lr_decay").get<double>();
  cfg.weight_decay = j.at("weight_decay").get<double>();
  cfg.patience = j.at("patience").get<int>();
  cfg.holdout_fraction = j.at("holdout_fraction").get<double>();
  return cfg;
}

inline Json learner_to_json(const LearnerSpec& spec) {
  if (spec.kind == LearnerKind::Fixed) {
    throw ConfigError("cannot serialize a learner built from in-process functions");
  }
  Json j{{"kind", learner_name(spec.kind)}};
  if (spec.kind == LearnerKind::Lasso) j["lambda"] = spec.lasso_lambda;
  if (spec.kind == LearnerKind::Dnn || spec.kind == LearnerKind::Sdnn) {
    j["hidden"] = spec.hidden;
    j["activation"] = activation_name(spec.activation);
    j["resample_factor"] = spec.resample_factor;
    j["train"] = train_config_to_json(spec.train);
  }
  return j;
}

inline LearnerSpec learner_from_json(const Json& j) {
  LearnerSpec spec;
  spec.kind = parse_learner(j.at("kind").get<std::string>(), "learner kind");
  if (j.contains("lambda")) spec.lasso_lambda = j.at("lambda").get<double>();
  if (j.contains("hidden")) spec.hidden = j.at("hidden").get<std::vector<int>>();
  if (j.contains("activation")) {
    spec.activation = parse_activation(j.at("activation").get<std::string>(), "activation");
  }
  if (j.contains("resample_factor")) {
    spec.resample_factor = j.at("resample_factor").get<double>();
  }
  if (j.contains("train")) spec.train = train_config_from_json(j.at("train"));
  return spec;
}

inline Json forest_config_to_json(const ForestConfig& cfg) {
  return Json{{"trees", cfg.n_trees},
              {"subsample_size", cfg.subsample_size},
              {"min_leaf", cfg.min_leaf},
              {"min_split_ratio", cfg.min_split_ratio},
              {"max_splits", cfg.max_splits},
              {"features_per_split", cfg.features_per_split},
              {"split_points", cfg.split_points},
              {"node_learner", learner_to_json(cfg.node_learner)}};
}

inline ForestConfig forest_config_from_json(const Json& j) {
  ForestConfig cfg;
  cfg.n_trees = j.at("trees").get<int>();
  cfg.subsample_size = j.at("subsample_size").get<int>();
  cfg.min_leaf = j.at("min_leaf").get<int>();
  cfg.min_split_ratio = j.at("min_split_ratio").get<double>();
  cfg.max_splits = j.at("max_splits").get<int>();
  cfg.features_per_split = j.at("features_per_split").get<int>();
  cfg.split_points = j.at("split_points").get<int>();
  cfg.node_learner = learner_from_json(j.at("node_learner"));
  return cfg;
}

namespace detail {

inline Json tree_to_json(const GradientTree& tree) {
  Json nodes = Json::array();
  for (const auto& n : tree.nodes) {
    nodes.push_back(Json::array(
        {n.feature, n.threshold, n.left, n.right, n.theta, n.hessian, n.leaf_id, n.n_split,
         n.n_estimate}));
  }
  return Json{{"nodes", nodes}, {"leaf_rows", tree.leaf_rows}};
}

inline GradientTree tree_from_json(const Json& j) {
  GradientTree tree;
  for (const auto& row : j.at("nodes")) {
    TreeNode n;
    n.feature = row.at(0).get<int>();
    n.threshold = row.at(1).get<double>();
    n.left = row.at(2).get<int>();
    n.right = row.at(3).get<int>();
    n.theta = row.at(4).get<double>();
    n.hessian = row.at(5).get<double>();
    n.leaf_id = row.at(6).get<int>();
    n.n_split = row.at(7).get<int>();
    n.n_estimate = row.at(8).get<int>();
    tree.nodes.push_back(n);
  }
  tree.leaf_rows = j.at("leaf_rows").get<std::vector<std::vector<int>>>();
  return tree;
}

inline Json forest_to_json(const KernelForest& forest) {
  Json trees = Json::array();
  for (const auto& t : forest.trees) trees.push_back(tree_to_json(t));
  return Json{{"source_rows", forest.source_rows}, {"trees", trees}};
}

inline KernelForest forest_from_json(const Json& j, int n_total) {
  KernelForest forest;
  forest.source_rows = j.at("source_rows").get<std::vector<int>>();
  forest.n_total = n_total;
  for (const auto& t : j.at("trees")) forest.trees.push_back(tree_from_json(t));
  return forest;
}

}  // namespace detail

inline Json model_to_json(const OrfModel& model) {
  Json j;
  j["format"] = "orthoforest-model";
  j["library_version"] = kVersion;
  j["seed"] = model.seed;
  j["dataset"] = Json{{"rows", model.data->n()},
                      {"content_hash", dataset_content_hash(*model.data)}};
  j["forest_config"] = forest_config_to_json(model.cfg);
  j["final_learner"] = learner_to_json(model.final_learner);
  j["d1"] = model.d1;
  j["d2"] = model.d2;
  j["forest_d1"] = detail::forest_to_json(model.forest_d1);
  j["forest_d2"] = detail::forest_to_json(model.forest_d2);
  return j;
}

// Rebuilds a model against the dataset it was fitted on; the stored content
// hash must match.
inline OrfModel model_from_json(const Json& j, std::shared_ptr<const Dataset> data) {
  if (!data) throw SizeError("model_from_json: null dataset");
  if (j.value("format", "") != std::string("orthoforest-model")) {
    throw IngestError("not a model document (missing format marker)");
  }
  const auto& meta = j.at("dataset");
  if (meta.at("rows").get<int>() != data->n()) {
    throw IngestError("model was fitted on " + std::to_string(meta.at("rows").get<int>()) +
                      " rows, dataset has " + std::to_string(data->n()));
  }
  const std::string hash = dataset_content_hash(*data);
  if (meta.at("content_hash").get<std::string>() != hash) {
    throw IngestError("dataset content hash mismatch: model was fitted on different data");
  }
  OrfModel model;
  model.data = std::move(data);
  model.seed = j.at("seed").get<std::uint64_t>();
  model.cfg = forest_config_from_json(j.at("forest_config"));
  model.final_learner = learner_from_json(j.at("final_learner"));
  model.d1 = j.at("d1").get<std::vector<int>>();
  model.d2 = j.at("d2").get<std::vector<int>>();
  model.forest_d1 = detail::forest_from_json(j.at("forest_d1"), model.data->n());
  model.forest_d2 = detail::forest_from_json(j.at("forest_d2"), model.data->n());
  return model;
}

inline void save_model(const OrfModel& model, const std::string& path) {
  write_text_file(path, model_to_json(model).dump(1) + "\n");
}

inline OrfModel load_model(const std::string& path, std::shared_ptr<const Dataset> data) {
  Json j;
  try {
    j = Json::parse(read_text_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw IngestError(path + ": invalid JSON: " + e.what());
  }
  try {
    return model_from_json(j, std::move(data));
  } catch (const nlohmann::json::exception& e) {
    throw IngestError(path + ": malformed model document: " + e.what());
  }
}

// ---- estimate tables ----

// CSV with one row per test point: x1..xd, theta, ci_low, ci_high,
// n_effective.  Interval cells stay empty when no interval was computed.
inline std::string effects_to_csv(const std::vector<EffectEstimate>& estimates) {
  if (estimates.empty()) throw SizeError("effects_to_csv: no estimates");
  const Eigen::Index d = estimates.front().x.size();
  std::ostringstream out;
  for (Eigen::Index j = 0; j < d; ++j) out << 'x' << (j + 1) << ',';
  out << "theta,ci_low,ci_high,n_effective\n";
  for (const auto& est : estimates) {
    if (est.x.size() != d) throw ShapeError("effects_to_csv: mixed test-point dimensions");
    for (Eigen::Index j = 0; j < d; ++j) out << format_double(est.x(j)) << ',';
    out << format_double(est.theta) << ',';
    if (est.has_interval) {
      out << format_double(est.ci_low) << ',' << format_double(est.ci_high);
    } else {
      out << ',';
    }
    out << ',' << format_double(est.n_effective) << '\n';
  }
  return out.str();
}

// JSON mirror of the CSV, with explicit nulls for absent intervals.
inline Json effects_to_json(const std::vector<EffectEstimate>& estimates) {
  Json rows = Json::array();
  for (const auto& est : estimates) {
    Json row;
    row["x"] = std::vector<double>(est.x.data(), est.x.data() + est.x.size());
    row["theta"] = est.theta;
    if (est.has_interval) {
      row["ci_low"] = est.ci_low;
      row["ci_high"] = est.ci_high;
    } else {
      row["ci_low"] = nullptr;
      row["ci_high"] = nullptr;
    }
    row["n_effective"] = est.n_effective;
    rows.push_back(row);
  }
  return Json{{"estimates", rows}};
}

inline Json ate_to_json(const AteEstimate& est, const std::string& estimator) {
  Json folds = Json::array();
  for (const auto& f : est.folds) {
    Json fj{{"fold", f.fold},
            {"held_out_rows", f.held_out_rows},
            {"outcome_residual_mse", f.outcome_residual_mse},
            {"treatment_residual_mse", f.treatment_residual_mse}};
    if (std::isfinite(f.instrument_residual_mse)) {
      fj["instrument_residual_mse"] = f.instrument_residual_mse;
    }
    folds.push_back(fj);
  }
  return Json{{"estimator", estimator}, {"theta", est.theta},
              {"std_error", est.std_error}, {"ci_low", est.ci_low},
              {"ci_high", est.ci_high},    {"level", est.level},
              {"folds", folds}};
}

// ---- benchmark table ----

struct BenchmarkRow {
  std::string scenario;
  std::string estimator;
  int n = 0;
  std::uint64_t seed = 0;
  double rmse = 0.0;
  double bias = 0.0;
  double coverage = std::numeric_limits<double>::quiet_NaN();
  double wall_time_s = 0.0;
};

inline std::string benchmark_to_csv(const std::vector<BenchmarkRow>& rows) {
  std::ostringstream out;
  out << "scenario,estimator,n,seed,rmse,bias,coverage,wall_time_s\n";
  for (const auto& r : rows) {
    out << r.scenario << ',' << r.estimator << ',' << r.n << ',' << r.seed << ','
        << format_double(r.rmse) << ',' << format_double(r.bias) << ',';
    if (std::isfinite(r.coverage)) out << format_double(r.coverage);
    out << ',' << format_double(r.wall_time_s) << '\n';
  }
  return out.str();
}

// ---- run manifest ----

// One manifest per run: what ran, against which config (by content hash),
// with which seed, and what it wrote.  wall_time_s is the only
// non-reproducible field.
inline Json make_manifest(const std::string& command, const std::string& config_hash,
                          std::uint64_t seed, const std::vector<std::string>& outputs,
                          double wall_time_s) {
  return Json{{"command", command},
              {"library_version", kVersion},
              {"config_hash", config_hash},
              {"seed", seed},
              {"outputs", outputs},
              {"wall_time_s", wall_time_s}};
}

// ---- minimal SVG chart ----

// Self-contained line chart of theta over the first test-point coordinate,
// with a shaded interval band when every estimate carries one.
inline std::string effects_to_svg(const std::vector<EffectEstimate>& estimates,
                                  const std::string& title = "estimated effect") {
  if (estimates.size() < 2) throw SizeError("effects_to_svg: need at least 2 points");
  std::vector<std::size_t> order(estimates.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return estimates[a].x(0) < estimates[b].x(0);
  });

  bool all_intervals = true;
  double x_lo = estimates[order.front()].x(0), x_hi = estimates[order.back()].x(0);
  double y_lo = estimates.front().theta, y_hi = y_lo;
  for (const auto& e : estimates) {
    all_intervals = all_intervals && e.has_interval;
    y_lo = std::min(y_lo, e.theta);
    y_hi = std::max(y_hi, e.theta);
    if (e.has_interval) {
      y_lo = std::min(y_lo, e.ci_low);
      y_hi = std::max(y_hi, e.ci_high);
    }
  }
  if (x_hi <= x_lo) x_hi = x_lo + 1.0;
  if (y_hi <= y_lo) y_hi = y_lo + 1.0;
  const double pad_y = 0.05 * (y_hi - y_lo);
  y_lo -= pad_y;
  y_hi += pad_y;

  const double width = 640, height = 400, ml = 60, mr = 20, mt = 40, mb = 50;
  auto sx = [&](double x) { return ml + (x - x_lo) / (x_hi - x_lo) * (width - ml - mr); };
  auto sy = [&](double y) { return height - mb - (y - y_lo) / (y_hi - y_lo) * (height - mt - mb); };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" viewBox=\"0 0 " << width << ' ' << height << "\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<text x=\"" << width / 2 << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\""
      << " font-size=\"16\">" << title << "</text>\n";

  if (all_intervals) {
    svg << "<path fill=\"#9ecae1\" fill-opacity=\"0.5\" stroke=\"none\" d=\"M";
    for (std::size_t k = 0; k < order.size(); ++k) {
      const auto& e = estimates[order[k]];
      svg << (k ? " L" : "") << format_double(sx(e.x(0))) << ' ' << format_double(sy(e.ci_high));
    }
    for (std::size_t k = order.size(); k-- > 0;) {
      const auto& e = estimates[order[k]];
      svg << " L" << format_double(sx(e.x(0))) << ' ' << format_double(sy(e.ci_low));
    }
    svg << " Z\"/>\n";
  }

  svg << "<polyline fill=\"none\" stroke=\"#08519c\" stroke-width=\"2\" points=\"";
  for (std::size_t k = 0; k < order.size(); ++k) {
    const auto& e = estimates[order[k]];
    if (k) svg << ' ';
    svg << format_double(sx(e.x(0))) << ',' << format_double(sy(e.theta));
  }
  svg << "\"/>\n";

  // Axes with end labels.
  svg << "<line x1=\"" << ml << "\" y1=\"" << height - mb << "\" x2=\"" << width - mr << "\" y2=\""
      << height - mb << "\" stroke=\"black\"/>\n";
  svg << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << height - mb
      << "\" stroke=\"black\"/>\n";
  svg << "<text x=\"" << ml << "\" y=\"" << height - mb + 20
      << "\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">"
      << format_double(x_lo) << "</text>\n";
  svg << "<text x=\"" << width - mr << "\" y=\"" << height - mb + 20
      << "\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">"
      << format_double(x_hi) << "</text>\n";
  svg << "<text x=\"" << ml - 8 << "\" y=\"" << height - mb
      << "\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"end\">"
      << format_double(y_lo) << "</text>\n";
  svg << "<text x=\"" << ml - 8 << "\" y=\"" << mt + 4
      << "\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"end\">"
      << format_double(y_hi) << "</text>\n";
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace orf
