#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "orthoforest/config.hpp"
#include "orthoforest/errors.hpp"
#include "orthoforest/rng.hpp"

namespace orf {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Shortest decimal string that round-trips to the exact same double.
inline std::string format_double(double v) {
  char buf[32];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, p);
}

enum class ColumnRole { Outcome, Treatment, Target, Parametric, Nonparametric, Instrument };
enum class Transform { None, Log1p, Standardize };

inline std::string role_name(ColumnRole r) {
  switch (r) {
    case ColumnRole::Outcome: return "outcome";
    case ColumnRole::Treatment: return "treatment";
    case ColumnRole::Target: return "target";
    case ColumnRole::Parametric: return "parametric";
    case ColumnRole::Nonparametric: return "nonparametric";
    case ColumnRole::Instrument: return "instrument";
  }
  return "?";
}

inline ColumnRole parse_role(const std::string& s, const std::string& where) {
  if (s == "outcome") return ColumnRole::Outcome;
  if (s == "treatment") return ColumnRole::Treatment;
  if (s == "target") return ColumnRole::Target;
  if (s == "parametric") return ColumnRole::Parametric;
  if (s == "nonparametric") return ColumnRole::Nonparametric;
  if (s == "instrument") return ColumnRole::Instrument;
  throw SchemaError(where + ": unknown column role '" + s + "'");
}

inline std::string transform_name(Transform t) {
  switch (t) {
    case Transform::None: return "none";
    case Transform::Log1p: return "log1p";
    case Transform::Standardize: return "standardize";
  }
  return "?";
}

inline Transform parse_transform(const std::string& s, const std::string& where) {
  if (s == "none") return Transform::None;
  if (s == "log1p") return Transform::Log1p;
  if (s == "standardize") return Transform::Standardize;
  throw SchemaError(where + ": unknown transform '" + s + "'");
}

// Ordered list of (column name, role, transform).  Column order inside each
// role follows schema order and fixes the layout of the feature matrices.
class DatasetSchema {
 public:
  struct Column {
    std::string name;
    ColumnRole role = ColumnRole::Target;
    Transform transform = Transform::None;
  };

  void add(const std::string& name, ColumnRole role, Transform transform = Transform::None) {
    for (const auto& c : columns_) {
      if (c.name == name) throw SchemaError("duplicate column '" + name + "' in schema");
    }
    columns_.push_back({name, role, transform});
  }

  // Requires exactly one outcome, exactly one treatment and at least one
  // target column; instrument/parametric/nonparametric columns are optional.
  void validate() const {
    int outcomes = 0, treatments = 0, targets = 0;
    for (const auto& c : columns_) {
      outcomes += c.role == ColumnRole::Outcome;
      treatments += c.role == ColumnRole::Treatment;
      targets += c.role == ColumnRole::Target;
    }
    if (outcomes != 1) {
      throw SchemaError("schema must declare exactly one outcome column (found " +
                        std::to_string(outcomes) + ")");
    }
    if (treatments != 1) {
      throw SchemaError("schema must declare exactly one treatment column (found " +
                        std::to_string(treatments) + ")");
    }
    if (targets < 1) throw SchemaError("schema must declare at least one target column");
  }

  int count(ColumnRole role) const {
    int n = 0;
    for (const auto& c : columns_) n += c.role == role;
    return n;
  }

  std::vector<std::string> names(ColumnRole role) const {
    std::vector<std::string> out;
    for (const auto& c : columns_) {
      if (c.role == role) out.push_back(c.name);
    }
    return out;
  }

  const std::vector<Column>& columns() const { return columns_; }

  const Column* find(const std::string& name) const {
    for (const auto& c : columns_) {
      if (c.name == name) return &c;
    }
    return nullptr;
  }

  // Reads the [schema] section of a config document: one entry per column,
  //   <name> = <role> [transform]
  static DatasetSchema from_config(const ConfigDoc& doc, const std::string& section = "schema") {
    if (!doc.has_section(section)) {
      throw SchemaError("config has no [" + section + "] section");
    }
    DatasetSchema schema;
    for (const auto& [name, value] : doc.entries(section)) {
      auto toks = split_tokens(value);
      const std::string where = "[" + section + "] " + name;
      if (toks.empty() || toks.size() > 2) {
        throw SchemaError(where + ": expected '<role> [transform]', got '" + value + "'");
      }
      ColumnRole role = parse_role(toks[0], where);
      Transform tr = toks.size() == 2 ? parse_transform(toks[1], where) : Transform::None;
      schema.add(name, role, tr);
    }
    schema.validate();
    return schema;
  }

  static DatasetSchema from_file(const std::string& path) {
    return from_config(ConfigDoc::parse_file(path));
  }

  std::string to_config_text() const {
    std::ostringstream out;
    out << "[schema]\n";
    for (const auto& c : columns_) {
      out << c.name << " = " << role_name(c.role);
      if (c.transform != Transform::None) out << ' ' << transform_name(c.transform);
      out << '\n';
    }
    return out.str();
  }

 private:
  std::vector<Column> columns_;
};

// One row of a dataset, with features grouped by role.
struct Observation {
  double y = 0.0;
  double t = 0.0;
  VectorXd x;   // effect-modifying target features
  VectorXd wp;  // parametric controls
  VectorXd wn;  // nonparametric controls
  VectorXd z;   // instruments
};

// Column-major in-memory dataset.  Values are stored post-transform; all
// stored values are finite by construction.
class Dataset {
 public:
  Dataset() = default;

  Dataset(DatasetSchema schema, VectorXd y, VectorXd t, MatrixXd x, MatrixXd wp, MatrixXd wn,
          MatrixXd z)
      : schema_(std::move(schema)),
        y_(std::move(y)),
        t_(std::move(t)),
        x_(std::move(x)),
        wp_(std::move(wp)),
        wn_(std::move(wn)),
        z_(std::move(z)) {
    schema_.validate();
    const Eigen::Index n = y_.size();
    if (n < 1) throw SizeError("dataset must contain at least one row");
    auto check_rows = [n](Eigen::Index rows, const char* what) {
      if (rows != n) {
        throw ShapeError(std::string(what) + ": expected " + std::to_string(n) + " rows, got " +
                         std::to_string(rows));
      }
    };
    check_rows(t_.size(), "treatment");
    check_rows(x_.rows(), "target features");
    check_rows(wp_.rows(), "parametric controls");
    check_rows(wn_.rows(), "nonparametric controls");
    check_rows(z_.rows(), "instruments");
    auto check_cols = [this](Eigen::Index cols, ColumnRole role) {
      int want = schema_.count(role);
      if (cols != want) {
        throw ShapeError(role_name(role) + " columns: schema declares " + std::to_string(want) +
                         ", data has " + std::to_string(cols));
      }
    };
    check_cols(x_.cols(), ColumnRole::Target);
    check_cols(wp_.cols(), ColumnRole::Parametric);
    check_cols(wn_.cols(), ColumnRole::Nonparametric);
    check_cols(z_.cols(), ColumnRole::Instrument);
    if (!y_.allFinite() || !t_.allFinite() || !x_.allFinite() || !wp_.allFinite() ||
        !wn_.allFinite() || !z_.allFinite()) {
      throw IngestError("dataset contains non-finite values");
    }
  }

  int n() const { return static_cast<int>(y_.size()); }
  int d() const { return static_cast<int>(x_.cols()); }
  int p1() const { return static_cast<int>(wp_.cols()); }
  int p2() const { return static_cast<int>(wn_.cols()); }
  int n_instruments() const { return static_cast<int>(z_.cols()); }

  const DatasetSchema& schema() const { return schema_; }
  const VectorXd& y() const { return y_; }
  const VectorXd& t() const { return t_; }
  const MatrixXd& x() const { return x_; }
  const MatrixXd& wp() const { return wp_; }
  const MatrixXd& wn() const { return wn_; }
  const MatrixXd& z() const { return z_; }

  Observation row(int i) const {
    check_row(i);
    Observation o;
    o.y = y_(i);
    o.t = t_(i);
    o.x = x_.row(i);
    o.wp = wp_.row(i);
    o.wn = wn_.row(i);
    o.z = z_.row(i);
    return o;
  }

  // New dataset holding the given rows (duplicates allowed; bootstrap use).
  Dataset subset(const std::vector<int>& rows) const {
    if (rows.empty()) throw SizeError("dataset subset must contain at least one row");
    const int m = static_cast<int>(rows.size());
    VectorXd y(m), t(m);
    MatrixXd x(m, x_.cols()), wp(m, wp_.cols()), wn(m, wn_.cols()), z(m, z_.cols());
    for (int i = 0; i < m; ++i) {
      check_row(rows[static_cast<std::size_t>(i)]);
      const int r = rows[static_cast<std::size_t>(i)];
      y(i) = y_(r);
      t(i) = t_(r);
      x.row(i) = x_.row(r);
      wp.row(i) = wp_.row(r);
      wn.row(i) = wn_.row(r);
      z.row(i) = z_.row(r);
    }
    return Dataset(schema_, std::move(y), std::move(t), std::move(x), std::move(wp), std::move(wn),
                   std::move(z));
  }

  // Stored values of a named column.
  VectorXd column_values(const std::string& name) const {
    const auto* col = schema_.find(name);
    if (!col) throw SchemaError("no column named '" + name + "' in schema");
    int index = 0;
    for (const auto& c : schema_.columns()) {
      if (c.name == name) break;
      if (c.role == col->role) ++index;
    }
    switch (col->role) {
      case ColumnRole::Outcome: return y_;
      case ColumnRole::Treatment: return t_;
      case ColumnRole::Target: return x_.col(index);
      case ColumnRole::Parametric: return wp_.col(index);
      case ColumnRole::Nonparametric: return wn_.col(index);
      case ColumnRole::Instrument: return z_.col(index);
    }
    throw SchemaError("unreachable");
  }

  VectorXd x_min() const { return x_.colwise().minCoeff(); }
  VectorXd x_max() const { return x_.colwise().maxCoeff(); }

 private:
  void check_row(int i) const {
    if (i < 0 || i >= n()) {
      throw SizeError("row index " + std::to_string(i) + " out of range [0, " +
                      std::to_string(n()) + ")");
    }
  }

  DatasetSchema schema_;
  VectorXd y_, t_;
  MatrixXd x_, wp_, wn_, z_;
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(trim(cur));
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(trim(cur));
  return out;
}

}  // namespace detail

// Loads a comma-separated file against a schema.  The header must contain
// every schema column (extra file columns are ignored); every used cell must
// parse as a finite number.  log1p transforms are applied per cell;
// standardize transforms center each column and scale it to unit sample
// standard deviation (constant columns are only centered).
inline Dataset load_dataset(const std::string& path, const DatasetSchema& schema) {
  schema.validate();
  std::ifstream in(path);
  if (!in) throw IngestError("cannot open data file '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw IngestError(path + ": empty file");
  const auto header = detail::split_csv_line(line);

  const auto& cols = schema.columns();
  std::vector<int> source(cols.size(), -1);
  for (std::size_t c = 0; c < cols.size(); ++c) {
    for (std::size_t h = 0; h < header.size(); ++h) {
      if (header[h] == cols[c].name) {
        source[c] = static_cast<int>(h);
        break;
      }
    }
    if (source[c] < 0) {
      throw SchemaError(path + ": header is missing schema column '" + cols[c].name + "'");
    }
  }

  std::vector<std::vector<double>> raw(cols.size());
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = detail::split_csv_line(line);
    if (fields.size() != header.size()) {
      throw IngestError(path + ": line " + std::to_string(line_no) + " has " +
                        std::to_string(fields.size()) + " fields, header has " +
                        std::to_string(header.size()));
    }
    for (std::size_t c = 0; c < cols.size(); ++c) {
      const std::string& cell = fields[static_cast<std::size_t>(source[c])];
      double v = 0.0;
      auto [p, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (ec != std::errc() || p != cell.data() + cell.size() || !std::isfinite(v)) {
        throw IngestError(path + ": line " + std::to_string(line_no) + ", column '" +
                          cols[c].name + "': cannot parse '" + cell + "' as a finite number");
      }
      if (cols[c].transform == Transform::Log1p) {
        if (v <= -1.0) {
          throw IngestError(path + ": line " + std::to_string(line_no) + ", column '" +
                            cols[c].name + "': log1p undefined for value " + format_double(v));
        }
        v = std::log1p(v);
      }
      raw[c].push_back(v);
    }
  }
  const int n = raw.empty() ? 0 : static_cast<int>(raw[0].size());
  if (n < 1) throw IngestError(path + ": no data rows");

  // Column standardization happens after the full pass so mean/sd use all rows.
  for (std::size_t c = 0; c < cols.size(); ++c) {
    if (cols[c].transform != Transform::Standardize) continue;
    auto& v = raw[c];
    double mean = 0.0;
    for (double a : v) mean += a;
    mean /= n;
    double ss = 0.0;
    for (double a : v) ss += (a - mean) * (a - mean);
    const double sd = n > 1 ? std::sqrt(ss / (n - 1)) : 0.0;
    for (double& a : v) {
      a -= mean;
      if (sd > 1e-300) a /= sd;
    }
  }

  VectorXd y(n), t(n);
  MatrixXd x(n, schema.count(ColumnRole::Target));
  MatrixXd wp(n, schema.count(ColumnRole::Parametric));
  MatrixXd wn(n, schema.count(ColumnRole::Nonparametric));
  MatrixXd z(n, schema.count(ColumnRole::Instrument));
  int xi = 0, wpi = 0, wni = 0, zi = 0;
  for (std::size_t c = 0; c < cols.size(); ++c) {
    Eigen::Map<const VectorXd> col(raw[c].data(), n);
    switch (cols[c].role) {
      case ColumnRole::Outcome: y = col; break;
      case ColumnRole::Treatment: t = col; break;
      case ColumnRole::Target: x.col(xi++) = col; break;
      case ColumnRole::Parametric: wp.col(wpi++) = col; break;
      case ColumnRole::Nonparametric: wn.col(wni++) = col; break;
      case ColumnRole::Instrument: z.col(zi++) = col; break;
    }
  }
  return Dataset(schema, std::move(y), std::move(t), std::move(x), std::move(wp), std::move(wn),
                 std::move(z));
}

// Writes the stored (post-transform) values in schema column order, using
// shortest round-trip decimal formatting so that a reload with an all-`none`
// transform schema reproduces the stored values bit for bit.
inline void save_dataset(const Dataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IngestError("cannot open '" + path + "' for writing");
  const auto& cols = ds.schema().columns();
  for (std::size_t c = 0; c < cols.size(); ++c) {
    if (c) out << ',';
    out << cols[c].name;
  }
  out << '\n';
  std::vector<VectorXd> values;
  values.reserve(cols.size());
  for (const auto& c : cols) values.push_back(ds.column_values(c.name));
  for (int i = 0; i < ds.n(); ++i) {
    for (std::size_t c = 0; c < cols.size(); ++c) {
      if (c) out << ',';
      out << format_double(values[c](i));
    }
    out << '\n';
  }
  if (!out) throw IngestError("failed writing '" + path + "'");
}

// A disjoint pair of index sets.
struct IndexSplit {
  std::vector<int> first;
  std::vector<int> second;
};

// Randomly partitions {0, ..., n-1} into halves whose sizes differ by at most
// one (the first half gets the extra element when n is odd).
inline IndexSplit split_halves(int n, std::uint64_t seed) {
  if (n < 2) throw SizeError("split_halves requires at least 2 rows, got " + std::to_string(n));
  RandomStream rng = derive_stream(seed, "split-halves");
  std::vector<int> order(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
  rng.shuffle(order);
  const int half = (n + 1) / 2;
  IndexSplit split;
  split.first.assign(order.begin(), order.begin() + half);
  split.second.assign(order.begin() + half, order.end());
  std::sort(split.first.begin(), split.first.end());
  std::sort(split.second.begin(), split.second.end());
  return split;
}

// Draws s of {0, ..., n-1} without replacement and splits the draw into two
// halves (sizes differ by at most one; the first half gets the extra element).
inline IndexSplit subsample_halves(int n, int s, std::uint64_t seed) {
  if (s < 2 || s > n) {
    throw SizeError("subsample size " + std::to_string(s) + " out of range [2, " +
                    std::to_string(n) + "]");
  }
  RandomStream rng = derive_stream(seed, "subsample");
  std::vector<int> draw = rng.sample_without_replacement(n, s);
  const int half = (s + 1) / 2;
  IndexSplit split;
  split.first.assign(draw.begin(), draw.begin() + half);
  split.second.assign(draw.begin() + half, draw.end());
  std::sort(split.first.begin(), split.first.end());
  std::sort(split.second.begin(), split.second.end());
  return split;
}

}  // namespace orf
