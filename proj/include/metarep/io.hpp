#pragma once

#include <charconv>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "metarep/datagen.hpp"
#include "metarep/linalg.hpp"
#include "metarep/risk.hpp"

namespace metarep {

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.push_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline double parse_double(std::string_view text, std::string_view what) {
  const std::string t = trim(text);
  double v = 0.0;
  const auto res = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || res.ec != std::errc() || res.ptr != t.data() + t.size())
    throw ValidationError(std::string(what) + ": '" + t + "' is not a number");
  return v;
}

inline std::int64_t parse_int(std::string_view text, std::string_view what) {
  const std::string t = trim(text);
  std::int64_t v = 0;
  const auto res = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || res.ec != std::errc() || res.ptr != t.data() + t.size())
    throw ValidationError(std::string(what) + ": '" + t + "' is not an integer");
  return v;
}

inline std::uint64_t parse_u64(std::string_view text, std::string_view what) {
  const std::string t = trim(text);
  std::uint64_t v = 0;
  const auto res = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || res.ec != std::errc() || res.ptr != t.data() + t.size())
    throw ValidationError(std::string(what) + ": '" + t + "' is not an unsigned integer");
  return v;
}

}  // namespace detail

/// Shortest round-trip decimal form ('.' separator, locale independent).
inline std::string format_number(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

/// Value list: "a, b, c" or an inclusive range "start:stop:step".
inline std::vector<double> parse_value_list(std::string_view text, std::string_view what) {
  const std::string t = detail::trim(text);
  std::vector<double> out;
  if (t.find(':') != std::string::npos) {
    const auto parts = detail::split(t, ':');
    detail::require(parts.size() == 3, std::string(what) + ": range must be start:stop:step");
    const double a = detail::parse_double(parts[0], what);
    const double b = detail::parse_double(parts[1], what);
    const double step = detail::parse_double(parts[2], what);
    detail::require(step > 0.0 && b >= a, std::string(what) + ": range needs step > 0 and stop >= start");
    const auto count = static_cast<std::int64_t>(std::floor((b - a) / step + 1e-9));
    for (std::int64_t k = 0; k <= count; ++k) out.push_back(a + static_cast<double>(k) * step);
  } else {
    for (const auto& p : detail::split(t, ',')) out.push_back(detail::parse_double(p, what));
  }
  detail::require(!out.empty(), std::string(what) + ": empty value list");
  return out;
}

/// Diagonal spectrum descriptor:
///   identity | constant(v) | bilevel(count_high, value_high, count_low, value_low) | list(v1, ..., vd)
struct SpectrumDescriptor {
  std::string kind = "identity";
  std::vector<double> args;

  static SpectrumDescriptor parse(std::string_view text) {
    const std::string t = detail::trim(text);
    SpectrumDescriptor s;
    const auto open = t.find('(');
    if (open == std::string::npos) {
      s.kind = t;
    } else {
      detail::require(t.back() == ')', "spectrum '" + t + "': missing ')'");
      s.kind = detail::trim(std::string_view(t).substr(0, open));
      const std::string inner = t.substr(open + 1, t.size() - open - 2);
      if (!detail::trim(inner).empty())
        for (const auto& p : detail::split(inner, ',')) s.args.push_back(detail::parse_double(p, "spectrum"));
    }
    s.check();
    return s;
  }

  static SpectrumDescriptor bilevel(Index high, double value_high, Index low, double value_low) {
    SpectrumDescriptor s;
    s.kind = "bilevel";
    s.args = {static_cast<double>(high), value_high, static_cast<double>(low), value_low};
    s.check();
    return s;
  }

  void check() const {
    if (kind == "identity") {
      detail::require(args.empty(), "spectrum identity takes no arguments");
    } else if (kind == "constant") {
      detail::require(args.size() == 1 && args[0] >= 0.0, "spectrum constant(v) needs one value >= 0");
    } else if (kind == "bilevel") {
      detail::require(args.size() == 4, "spectrum bilevel needs (count_high, value_high, count_low, value_low)");
      for (int i : {0, 2})
        detail::require(args[i] >= 0.0 && args[i] == std::floor(args[i]), "spectrum bilevel: counts must be integers >= 0");
      detail::require(args[1] >= 0.0 && args[3] >= 0.0, "spectrum bilevel: values must be >= 0");
    } else if (kind == "list") {
      detail::require(!args.empty(), "spectrum list needs at least one value");
      for (double a : args) detail::require(a >= 0.0, "spectrum list: values must be >= 0");
    } else {
      throw ValidationError("unknown spectrum kind '" + kind + "'");
    }
  }

  /// Same descriptor with the low level of a bilevel spectrum replaced.
  SpectrumDescriptor with_low_value(double v) const {
    detail::require(kind == "bilevel", "spectrum: only bilevel spectra have a low level");
    SpectrumDescriptor s = *this;
    s.args[3] = v;
    s.check();
    return s;
  }

  Vector values(Index d) const {
    if (kind == "identity") return Vector::Ones(d);
    if (kind == "constant") return Vector::Constant(d, args[0]);
    if (kind == "bilevel") {
      const auto hi = static_cast<Index>(args[0]);
      const auto lo = static_cast<Index>(args[2]);
      detail::require(hi + lo == d, "spectrum bilevel: counts sum to " + std::to_string(hi + lo) + ", expected d = " +
                                        std::to_string(d));
      Vector v(d);
      v.head(hi).setConstant(args[1]);
      v.tail(lo).setConstant(args[3]);
      return v;
    }
    detail::require(static_cast<Index>(args.size()) == d,
                    "spectrum list has " + std::to_string(args.size()) + " values, expected d = " + std::to_string(d));
    return Eigen::Map<const Vector>(args.data(), d);
  }

  CovarianceModel covariance(Index d) const { return CovarianceModel::diagonal(values(d)); }

  std::string to_string() const {
    if (kind == "identity") return kind;
    std::string out = kind + "(";
    for (std::size_t i = 0; i < args.size(); ++i) out += (i ? ", " : "") + format_number(args[i]);
    return out + ")";
  }
};

/// Flat key = value configuration. Lines starting with '#' are comments.
/// Recognized keys: name, d, feature_spectrum, task_spectrum, sigma, n2,
/// trials, seed, output, variant, and sweep.<param> = <value list>. Any
/// other key is kept in `params` and read by the individual experiment.
struct ExperimentConfig {
  std::string name;
  Index d = 100;
  SpectrumDescriptor feature_spectrum;
  SpectrumDescriptor task_spectrum;
  double sigma = 0.5;
  Index n2 = 40;
  Index trials = 500;
  std::uint64_t seed = 1;
  std::string output_path;
  RiskVariant variant = RiskVariant::exact;
  std::vector<std::pair<std::string, std::vector<double>>> sweeps;
  std::map<std::string, std::string> params;

  ProblemSpec problem() const { return ProblemSpec(feature_spectrum.covariance(d), task_spectrum.covariance(d), sigma); }

  bool has_sweep(std::string_view key) const {
    for (const auto& [k, v] : sweeps)
      if (k == key) return true;
    return false;
  }

  const std::vector<double>& sweep(std::string_view key) const {
    for (const auto& [k, v] : sweeps)
      if (k == key) return v;
    throw ValidationError("config '" + name + "': missing sweep." + std::string(key));
  }

  void set_sweep(const std::string& key, std::vector<double> values) {
    detail::require(!values.empty(), "sweep." + key + ": values must be nonempty");
    for (auto& [k, v] : sweeps)
      if (k == key) {
        v = std::move(values);
        return;
      }
    sweeps.emplace_back(key, std::move(values));
  }

  /// Sweep values that must be whole numbers (ranks, sample sizes).
  std::vector<Index> int_sweep(std::string_view key) const {
    std::vector<Index> out;
    for (double v : sweep(key)) {
      detail::require(v == std::floor(v), "sweep." + std::string(key) + ": values must be integers");
      out.push_back(static_cast<Index>(v));
    }
    return out;
  }

  double param_double(const std::string& key, double fallback) const {
    const auto it = params.find(key);
    return it == params.end() ? fallback : detail::parse_double(it->second, key);
  }

  Index param_int(const std::string& key, Index fallback) const {
    const auto it = params.find(key);
    return it == params.end() ? fallback : static_cast<Index>(detail::parse_int(it->second, key));
  }

  void set(const std::string& key, const std::string& value) {
    if (key == "name") name = value;
    else if (key == "d") d = static_cast<Index>(detail::parse_int(value, key));
    else if (key == "feature_spectrum") feature_spectrum = SpectrumDescriptor::parse(value);
    else if (key == "task_spectrum") task_spectrum = SpectrumDescriptor::parse(value);
    else if (key == "sigma") sigma = detail::parse_double(value, key);
    else if (key == "n2") n2 = static_cast<Index>(detail::parse_int(value, key));
    else if (key == "trials") trials = static_cast<Index>(detail::parse_int(value, key));
    else if (key == "seed") seed = detail::parse_u64(value, key);
    else if (key == "output") output_path = value;
    else if (key == "variant") variant = parse_risk_variant(value);
    else if (key.rfind("sweep.", 0) == 0) set_sweep(key.substr(6), parse_value_list(value, key));
    else params[key] = value;
  }

  void validate() const {
    detail::require(!name.empty(), "config: name is required");
    detail::require(d >= 1, "config: d must be >= 1");
    detail::require(n2 >= 1, "config: n2 must be >= 1");
    detail::require(sigma >= 0.0 && std::isfinite(sigma), "config: sigma must be >= 0");
    detail::require(trials >= 2, "config: trials must be >= 2");
    feature_spectrum.values(d);
    task_spectrum.values(d);
    for (const auto& [k, v] : sweeps) detail::require(!v.empty(), "config: sweep." + k + " is empty");
  }

  static ExperimentConfig parse(std::istream& in) {
    ExperimentConfig cfg;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const std::string t = detail::trim(line);
      if (t.empty() || t[0] == '#') continue;
      const auto eq = t.find('=');
      if (eq == std::string::npos)
        throw ValidationError("config line " + std::to_string(lineno) + ": expected 'key = value'");
      const std::string key = detail::trim(std::string_view(t).substr(0, eq));
      const std::string value = detail::trim(std::string_view(t).substr(eq + 1));
      detail::require(!key.empty(), "config line " + std::to_string(lineno) + ": empty key");
      try {
        cfg.set(key, value);
      } catch (const ValidationError& e) {
        throw ValidationError("config line " + std::to_string(lineno) + ": " + e.what());
      }
    }
    return cfg;
  }

  static ExperimentConfig load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open config file '" + path + "'");
    return parse(in);
  }

  /// Resolved configuration as key/value pairs, in a stable order.
  std::vector<std::pair<std::string, std::string>> entries() const {
    std::vector<std::pair<std::string, std::string>> out = {
        {"name", name},
        {"d", std::to_string(d)},
        {"feature_spectrum", feature_spectrum.to_string()},
        {"task_spectrum", task_spectrum.to_string()},
        {"sigma", format_number(sigma)},
        {"n2", std::to_string(n2)},
        {"trials", std::to_string(trials)},
        {"seed", std::to_string(seed)},
        {"variant", std::string(to_string(variant))},
    };
    if (!output_path.empty()) out.emplace_back("output", output_path);
    for (const auto& [k, v] : sweeps) {
      std::string joined;
      for (std::size_t i = 0; i < v.size(); ++i) joined += (i ? "," : "") + format_number(v[i]);
      out.emplace_back("sweep." + k, joined);
    }
    for (const auto& [k, v] : params) out.emplace_back(k, v);
    return out;
  }
};

/// A CSV table with optional leading "# key=value" metadata lines.
struct ResultTable {
  std::vector<std::pair<std::string, std::string>> metadata;
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  void add_row(std::vector<std::string> row) {
    detail::require(row.size() == columns.size(), "ResultTable: row width differs from header");
    rows.push_back(std::move(row));
  }

  Index column_index(std::string_view name) const {
    for (std::size_t i = 0; i < columns.size(); ++i)
      if (columns[i] == name) return static_cast<Index>(i);
    throw ValidationError("ResultTable: no column '" + std::string(name) + "'");
  }

  void write(std::ostream& out) const {
    for (const auto& [k, v] : metadata) out << "# " << k << '=' << v << '\n';
    for (std::size_t i = 0; i < columns.size(); ++i) out << (i ? "," : "") << columns[i];
    out << '\n';
    for (const auto& r : rows) {
      for (std::size_t i = 0; i < r.size(); ++i) out << (i ? "," : "") << r[i];
      out << '\n';
    }
  }

  std::string to_string() const {
    std::ostringstream os;
    write(os);
    return os.str();
  }

  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
    write(out);
    if (!out) throw std::runtime_error("write to '" + path + "' failed");
  }

  static ResultTable read(std::istream& in) {
    ResultTable t;
    std::string line;
    bool header = false;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      if (!header && line.rfind("# ", 0) == 0) {
        const auto eq = line.find('=');
        if (eq != std::string::npos) t.metadata.emplace_back(line.substr(2, eq - 2), line.substr(eq + 1));
        continue;
      }
      auto cells = detail::split(line, ',');
      if (!header) {
        t.columns = std::move(cells);
        header = true;
      } else {
        t.add_row(std::move(cells));
      }
    }
    detail::require(header, "CSV: missing header row");
    return t;
  }

  static ResultTable load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open '" + path + "'");
    return read(in);
  }
};

/// Matrix as CSV: header c0..c{k-1}, one row per matrix row.
inline ResultTable matrix_table(const Matrix& m) {
  ResultTable t;
  for (Index j = 0; j < m.cols(); ++j) t.columns.push_back("c" + std::to_string(j));
  for (Index i = 0; i < m.rows(); ++i) {
    std::vector<std::string> row;
    for (Index j = 0; j < m.cols(); ++j) row.push_back(format_number(m(i, j)));
    t.add_row(std::move(row));
  }
  return t;
}

inline Matrix table_matrix(const ResultTable& t) {
  Matrix m(static_cast<Index>(t.rows.size()), static_cast<Index>(t.columns.size()));
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j) m(i, j) = detail::parse_double(t.rows[i][j], "matrix CSV");
  return m;
}

/// Meta-training data as CSV. Columns record, task, sample, y, v0..v{d-1};
/// "beta" rows carry the task vector (y blank), "x" rows one labelled sample.
inline ResultTable dataset_table(const MetaTrainSet& data) {
  ResultTable t;
  t.metadata = {{"tasks", std::to_string(data.num_tasks())},
                {"n1", std::to_string(data.samples_per_task())},
                {"d", std::to_string(data.dim())},
                {"noise_sd", format_number(data.noise_sd)},
                {"seed", std::to_string(data.seed)}};
  t.columns = {"record", "task", "sample", "y"};
  for (Index j = 0; j < data.dim(); ++j) t.columns.push_back("v" + std::to_string(j));
  for (Index i = 0; i < data.num_tasks(); ++i) {
    std::vector<std::string> row = {"beta", std::to_string(i), "", ""};
    for (Index j = 0; j < data.dim(); ++j) row.push_back(format_number(data.tasks(i, j)));
    t.add_row(std::move(row));
    for (Index k = 0; k < data.samples_per_task(); ++k) {
      std::vector<std::string> xr = {"x", std::to_string(i), std::to_string(k), format_number(data.labels(i, k))};
      for (Index j = 0; j < data.dim(); ++j) xr.push_back(format_number(data.features[i](k, j)));
      t.add_row(std::move(xr));
    }
  }
  return t;
}

inline MetaTrainSet table_dataset(const ResultTable& t) {
  detail::require(t.columns.size() >= 5 && t.columns[0] == "record", "dataset CSV: unexpected header");
  std::map<std::string, std::string> meta(t.metadata.begin(), t.metadata.end());
  auto need = [&](const std::string& k) -> const std::string& {
    const auto it = meta.find(k);
    detail::require(it != meta.end(), "dataset CSV: missing metadata '" + k + "'");
    return it->second;
  };
  const auto tasks = static_cast<Index>(detail::parse_int(need("tasks"), "tasks"));
  const auto n1 = static_cast<Index>(detail::parse_int(need("n1"), "n1"));
  const Index d = static_cast<Index>(t.columns.size()) - 4;
  detail::require(tasks >= 1 && n1 >= 1, "dataset CSV: tasks and n1 must be >= 1");
  MetaTrainSet out;
  out.noise_sd = detail::parse_double(need("noise_sd"), "noise_sd");
  out.seed = detail::parse_u64(need("seed"), "seed");
  out.tasks = Matrix::Zero(tasks, d);
  out.labels = Matrix::Zero(tasks, n1);
  out.features.assign(static_cast<std::size_t>(tasks), Matrix::Zero(n1, d));
  std::vector<Index> seen(static_cast<std::size_t>(tasks), 0);
  for (const auto& r : t.rows) {
    const auto i = static_cast<Index>(detail::parse_int(r[1], "task"));
    detail::require(i >= 0 && i < tasks, "dataset CSV: task index out of range");
    if (r[0] == "beta") {
      for (Index j = 0; j < d; ++j) out.tasks(i, j) = detail::parse_double(r[4 + j], "beta");
    } else if (r[0] == "x") {
      const auto k = static_cast<Index>(detail::parse_int(r[2], "sample"));
      detail::require(k >= 0 && k < n1, "dataset CSV: sample index out of range");
      out.labels(i, k) = detail::parse_double(r[3], "y");
      for (Index j = 0; j < d; ++j) out.features[i](k, j) = detail::parse_double(r[4 + j], "x");
      ++seen[i];
    } else {
      throw ValidationError("dataset CSV: unknown record type '" + r[0] + "'");
    }
  }
  for (Index i = 0; i < tasks; ++i)
    detail::require(seen[i] == n1, "dataset CSV: task " + std::to_string(i) + " has the wrong sample count");
  return out;
}

}  // namespace metarep
