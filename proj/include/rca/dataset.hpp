#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "rca/error.hpp"
#include "rca/log.hpp"

namespace rca {

using VarId = std::size_t;

enum class Role { ManipulableOption, NonManipulableMetric, PerformanceObjective };
enum class Kind { Continuous, Discrete, Boolean, Categorical };

inline std::string_view to_string(Role role) {
  switch (role) {
    case Role::ManipulableOption: return "option";
    case Role::NonManipulableMetric: return "metric";
    case Role::PerformanceObjective: return "objective";
  }
  return "?";
}

inline std::string_view to_string(Kind kind) {
  switch (kind) {
    case Kind::Continuous: return "continuous";
    case Kind::Discrete: return "discrete";
    case Kind::Boolean: return "boolean";
    case Kind::Categorical: return "categorical";
  }
  return "?";
}

inline std::optional<Role> parse_role(std::string_view text) {
  if (text == "option") return Role::ManipulableOption;
  if (text == "metric") return Role::NonManipulableMetric;
  if (text == "objective") return Role::PerformanceObjective;
  return std::nullopt;
}

inline std::optional<Kind> parse_kind(std::string_view text) {
  if (text == "continuous") return Kind::Continuous;
  if (text == "discrete") return Kind::Discrete;
  if (text == "boolean") return Kind::Boolean;
  if (text == "categorical") return Kind::Categorical;
  return std::nullopt;
}

struct VariableMeta {
  std::string name;
  Role role = Role::NonManipulableMetric;
  Kind kind = Kind::Continuous;
  // Admissible values of Boolean/Categorical variables, indexed by code.
  std::vector<std::string> levels;
  std::optional<std::pair<double, double>> range;
  std::string unit;
  // Filled in by discretize(); empty for columns that were never binned.
  std::vector<double> bin_edges;

  bool is_discrete() const { return kind != Kind::Continuous; }

  friend bool operator==(const VariableMeta&, const VariableMeta&) = default;
};

// Immutable column-oriented sample table. Categorical and boolean cells are
// stored as their integer codes.
class Dataset {
 public:
  Dataset() = default;

  Dataset(std::vector<VariableMeta> variables, std::vector<std::vector<double>> columns,
          std::size_t dropped_rows = 0)
      : variables_(std::move(variables)), columns_(std::move(columns)), dropped_rows_(dropped_rows) {
    if (variables_.size() != columns_.size()) {
      throw Error(ErrorCode::InvalidArgument, "column count does not match variable count");
    }
    std::unordered_set<std::string> seen;
    for (const auto& v : variables_) {
      if (!seen.insert(v.name).second) {
        throw Error(ErrorCode::DuplicateName, "duplicate variable '" + v.name + "'", v.name);
      }
    }
    sample_count_ = columns_.empty() ? 0 : columns_.front().size();
    for (std::size_t i = 0; i < columns_.size(); ++i) {
      if (columns_[i].size() != sample_count_) {
        throw Error(ErrorCode::InvalidArgument, "ragged column '" + variables_[i].name + "'",
                    variables_[i].name);
      }
    }
  }

  const std::vector<VariableMeta>& variables() const { return variables_; }
  std::size_t variable_count() const { return variables_.size(); }
  std::size_t sample_count() const { return sample_count_; }
  std::size_t dropped_rows() const { return dropped_rows_; }

  const VariableMeta& meta(VarId id) const { return variables_.at(id); }
  std::span<const double> column(VarId id) const { return columns_.at(id); }
  double at(std::size_t row, VarId id) const { return columns_[id][row]; }

  std::optional<VarId> find(std::string_view name) const {
    for (VarId i = 0; i < variables_.size(); ++i) {
      if (variables_[i].name == name) return i;
    }
    return std::nullopt;
  }

  VarId index_of(std::string_view name) const {
    if (auto id = find(name)) return *id;
    throw Error(ErrorCode::UnknownVariable, "no variable named '" + std::string(name) + "'",
                std::string(name));
  }

  std::vector<VarId> with_role(Role role) const {
    std::vector<VarId> out;
    for (VarId i = 0; i < variables_.size(); ++i) {
      if (variables_[i].role == role) out.push_back(i);
    }
    return out;
  }

  bool has_every_role() const {
    return !with_role(Role::ManipulableOption).empty() &&
           !with_role(Role::NonManipulableMetric).empty() &&
           !with_role(Role::PerformanceObjective).empty();
  }

  Dataset select_rows(std::span<const std::size_t> rows) const {
    std::vector<std::vector<double>> cols(columns_.size());
    for (std::size_t c = 0; c < columns_.size(); ++c) {
      cols[c].reserve(rows.size());
      for (auto r : rows) cols[c].push_back(columns_[c].at(r));
    }
    return Dataset(variables_, std::move(cols));
  }

  Dataset with_column(VarId id, VariableMeta meta, std::vector<double> values) const {
    auto vars = variables_;
    auto cols = columns_;
    vars.at(id) = std::move(meta);
    cols.at(id) = std::move(values);
    return Dataset(std::move(vars), std::move(cols), dropped_rows_);
  }

  friend bool operator==(const Dataset& a, const Dataset& b) {
    return a.variables_ == b.variables_ && a.columns_ == b.columns_;
  }

 private:
  std::vector<VariableMeta> variables_;
  std::vector<std::vector<double>> columns_;
  std::size_t sample_count_ = 0;
  std::size_t dropped_rows_ = 0;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    auto pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      out.push_back(trim(line.substr(start)));
      break;
    }
    out.push_back(trim(line.substr(start, pos - start)));
    start = pos + 1;
  }
  return out;
}

inline std::optional<double> parse_number(std::string_view s) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(value)) return std::nullopt;
  return value;
}

inline std::optional<bool> parse_bool(std::string_view s) {
  std::string lower(s);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (lower == "true" || lower == "1" || lower == "yes") return true;
  if (lower == "false" || lower == "0" || lower == "no") return false;
  return std::nullopt;
}

inline bool is_missing(std::string_view s) {
  return s.empty() || s == "NA" || s == "NaN" || s == "nan" || s == "null";
}

inline std::string format_number(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace detail

// Parses the roles document: {"<name>": {"role": ..., "kind": ..., "levels": [...]}}.
inline std::vector<VariableMeta> parse_roles(const nlohmann::json& doc) {
  if (!doc.is_object()) throw Error(ErrorCode::InvalidRoles, "roles document must be a JSON object");
  std::vector<VariableMeta> out;
  for (const auto& [name, entry] : doc.items()) {
    if (!entry.is_object() || !entry.contains("role") || !entry.contains("kind") ||
        !entry["role"].is_string() || !entry["kind"].is_string()) {
      throw Error(ErrorCode::InvalidRoles, "entry '" + name + "' needs string 'role' and 'kind'", name);
    }
    VariableMeta meta;
    meta.name = name;
    auto role = parse_role(entry["role"].get<std::string>());
    auto kind = parse_kind(entry["kind"].get<std::string>());
    if (!role) throw Error(ErrorCode::InvalidRoles, "entry '" + name + "' has an unknown role", name);
    if (!kind) throw Error(ErrorCode::InvalidRoles, "entry '" + name + "' has an unknown kind", name);
    meta.role = *role;
    meta.kind = *kind;
    if (entry.contains("levels")) {
      if (!entry["levels"].is_array()) {
        throw Error(ErrorCode::InvalidRoles, "entry '" + name + "' levels must be an array", name);
      }
      for (const auto& lv : entry["levels"]) {
        meta.levels.push_back(lv.is_string() ? lv.get<std::string>() : lv.dump());
      }
    }
    if (entry.contains("range")) {
      const auto& r = entry["range"];
      if (!r.is_array() || r.size() != 2 || !r[0].is_number() || !r[1].is_number()) {
        throw Error(ErrorCode::InvalidRoles, "entry '" + name + "' range must be [lo, hi]", name);
      }
      meta.range = std::make_pair(r[0].get<double>(), r[1].get<double>());
    }
    if (entry.contains("unit") && entry["unit"].is_string()) meta.unit = entry["unit"].get<std::string>();
    if (meta.kind == Kind::Boolean && meta.levels.empty()) meta.levels = {"false", "true"};
    out.push_back(std::move(meta));
  }
  return out;
}

inline nlohmann::json roles_to_json(std::span<const VariableMeta> vars) {
  nlohmann::json doc = nlohmann::json::object();
  for (const auto& v : vars) {
    nlohmann::json entry{{"role", to_string(v.role)}, {"kind", to_string(v.kind)}};
    if (!v.levels.empty()) entry["levels"] = v.levels;
    if (v.range) entry["range"] = {v.range->first, v.range->second};
    if (!v.unit.empty()) entry["unit"] = v.unit;
    doc[v.name] = std::move(entry);
  }
  return doc;
}

// Reads a comma-delimited table with a header row plus a roles document.
// Rows with a missing cell are dropped and counted.
inline Dataset load_dataset(std::istream& table, std::istream& roles_source) {
  nlohmann::json roles_doc;
  try {
    roles_source >> roles_doc;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidRoles, std::string("roles file is not valid JSON: ") + e.what());
  }
  auto roles = parse_roles(roles_doc);
  std::unordered_map<std::string, VariableMeta> by_name;
  for (auto& r : roles) by_name.emplace(r.name, r);

  std::string line;
  if (!std::getline(table, line)) throw Error(ErrorCode::EmptyDataset, "table has no header row");
  auto header = detail::split_commas(line);
  std::vector<VariableMeta> vars;
  std::unordered_set<std::string> seen;
  for (auto h : header) {
    std::string name(h);
    if (!seen.insert(name).second) {
      throw Error(ErrorCode::DuplicateName, "duplicate column '" + name + "'", name);
    }
    auto it = by_name.find(name);
    if (it == by_name.end()) throw Error(ErrorCode::MissingRole, "column '" + name + "' has no role", name);
    vars.push_back(it->second);
  }
  for (const auto& r : roles) {
    if (!seen.contains(r.name)) {
      throw Error(ErrorCode::UnknownVariable, "roles file names absent column '" + r.name + "'", r.name);
    }
  }

  std::vector<std::unordered_map<std::string, std::size_t>> codes(vars.size());
  std::vector<bool> levels_declared(vars.size());
  for (std::size_t c = 0; c < vars.size(); ++c) {
    levels_declared[c] = vars[c].kind == Kind::Categorical && !vars[c].levels.empty();
    for (std::size_t k = 0; k < vars[c].levels.size(); ++k) codes[c].emplace(vars[c].levels[k], k);
  }

  std::vector<std::vector<double>> columns(vars.size());
  std::size_t dropped = 0;
  std::size_t line_no = 1;
  std::vector<double> row(vars.size());
  while (std::getline(table, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    auto cells = detail::split_commas(line);
    if (cells.size() != vars.size()) {
      throw Error(ErrorCode::InvalidArgument,
                  "line " + std::to_string(line_no) + " has " + std::to_string(cells.size()) +
                      " cells, expected " + std::to_string(vars.size()));
    }
    bool missing = false;
    for (std::size_t c = 0; c < vars.size() && !missing; ++c) {
      auto cell = cells[c];
      if (detail::is_missing(cell)) {
        missing = true;
        break;
      }
      auto& meta = vars[c];
      switch (meta.kind) {
        case Kind::Continuous:
        case Kind::Discrete: {
          auto v = detail::parse_number(cell);
          if (!v) {
            throw Error(ErrorCode::NonNumericCell,
                        "non-numeric cell '" + std::string(cell) + "' in column '" + meta.name +
                            "' at line " + std::to_string(line_no),
                        meta.name);
          }
          row[c] = *v;
          break;
        }
        case Kind::Boolean: {
          auto b = detail::parse_bool(cell);
          if (!b) {
            throw Error(ErrorCode::NonNumericCell,
                        "cell '" + std::string(cell) + "' is not boolean in column '" + meta.name + "'",
                        meta.name);
          }
          row[c] = *b ? 1.0 : 0.0;
          break;
        }
        case Kind::Categorical: {
          std::string key(cell);
          auto it = codes[c].find(key);
          if (it == codes[c].end()) {
            if (levels_declared[c]) {
              throw Error(ErrorCode::InvalidArgument,
                          "value '" + key + "' is not an admissible level of '" + meta.name + "'",
                          meta.name);
            }
            it = codes[c].emplace(key, meta.levels.size()).first;
            meta.levels.push_back(key);
          }
          row[c] = static_cast<double>(it->second);
          break;
        }
      }
    }
    if (missing) {
      ++dropped;
      continue;
    }
    for (std::size_t c = 0; c < vars.size(); ++c) columns[c].push_back(row[c]);
  }
  if (dropped > 0) logger().info("dropped {} rows with missing cells", dropped);
  if (columns.empty() || columns.front().empty()) {
    throw Error(ErrorCode::EmptyDataset, "table has no complete rows");
  }
  return Dataset(std::move(vars), std::move(columns), dropped);
}

inline Dataset load_dataset(const std::string& table_path, const std::string& roles_path) {
  std::ifstream table(table_path);
  if (!table) throw Error(ErrorCode::Io, "cannot open " + table_path, table_path);
  std::ifstream roles(roles_path);
  if (!roles) throw Error(ErrorCode::Io, "cannot open " + roles_path, roles_path);
  return load_dataset(table, roles);
}

inline std::string format_cell(const VariableMeta& meta, double value) {
  if ((meta.kind == Kind::Categorical || meta.kind == Kind::Boolean) && meta.bin_edges.empty()) {
    auto code = static_cast<std::size_t>(value);
    if (code < meta.levels.size()) return meta.levels[code];
  }
  return detail::format_number(value);
}

inline void write_table(std::ostream& os, const Dataset& ds) {
  const auto& vars = ds.variables();
  for (std::size_t c = 0; c < vars.size(); ++c) os << (c ? "," : "") << vars[c].name;
  os << '\n';
  for (std::size_t r = 0; r < ds.sample_count(); ++r) {
    for (std::size_t c = 0; c < vars.size(); ++c) os << (c ? "," : "") << format_cell(vars[c], ds.at(r, c));
    os << '\n';
  }
}

inline void write_roles(std::ostream& os, const Dataset& ds) { os << roles_to_json(ds.variables()).dump(2) << '\n'; }

// Appends the rows of `extra` to `base`. Both must carry the same schema.
inline Dataset concat(const Dataset& base, const Dataset& extra) {
  if (extra.sample_count() == 0) return base;
  if (base.variable_count() != extra.variable_count()) {
    throw Error(ErrorCode::SchemaMismatch, "datasets have different variable counts");
  }
  std::vector<std::vector<double>> cols(base.variable_count());
  for (VarId c = 0; c < base.variable_count(); ++c) {
    const auto& a = base.meta(c);
    const auto& b = extra.meta(c);
    if (a.name != b.name || a.role != b.role || a.kind != b.kind) {
      throw Error(ErrorCode::SchemaMismatch, "variable '" + a.name + "' differs between datasets", a.name);
    }
    if (a.kind == Kind::Categorical && a.levels != b.levels) {
      throw Error(ErrorCode::SchemaMismatch, "levels of '" + a.name + "' differ between datasets", a.name);
    }
    auto ca = base.column(c);
    auto cb = extra.column(c);
    cols[c].assign(ca.begin(), ca.end());
    cols[c].insert(cols[c].end(), cb.begin(), cb.end());
  }
  return Dataset(base.variables(), std::move(cols), base.dropped_rows() + extra.dropped_rows());
}

// ---------------------------------------------------------------------------
// Discretization

enum class BinStrategy { EqualWidth, EqualFrequency, PassThrough };

struct Discretization {
  std::string variable;
  BinStrategy strategy = BinStrategy::EqualFrequency;
  std::size_t bin_count = 5;
  std::vector<double> bin_edges;  // filled by fit_discretization

  // Bin of `x`: the number of interior edges strictly below x. The lowest bin
  // is closed on both sides, the others are right-closed.
  std::size_t bin_of(double x) const {
    if (bin_edges.size() < 3) return 0;
    auto first = bin_edges.begin() + 1;
    auto last = bin_edges.end() - 1;
    return static_cast<std::size_t>(std::lower_bound(first, last, x) - first);
  }
};

namespace detail {

inline std::vector<double> strictly_ascending_edges(double lo, double hi, const std::vector<double>& interior) {
  std::vector<double> edges{lo};
  if (lo == hi) {
    edges.push_back(hi);
    return edges;
  }
  for (double e : interior) {
    if (e > edges.back() && e < hi) edges.push_back(e);
  }
  edges.push_back(hi);
  return edges;
}

}  // namespace detail

// Computes bin edges for one column. A constant column yields a single bin.
inline Discretization fit_discretization(std::span<const double> values, std::string variable,
                                         BinStrategy strategy, std::size_t bins) {
  Discretization d{std::move(variable), strategy, bins, {}};
  if (strategy == BinStrategy::PassThrough) return d;
  if (bins < 2) {
    throw Error(ErrorCode::BadBinCount, "bin count must be at least 2 for '" + d.variable + "'", d.variable);
  }
  if (values.empty()) throw Error(ErrorCode::EmptyDataset, "cannot bin an empty column", d.variable);
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const double lo = sorted.front();
  const double hi = sorted.back();
  std::vector<double> interior;
  if (strategy == BinStrategy::EqualWidth) {
    for (std::size_t k = 1; k < bins; ++k) {
      interior.push_back(lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(bins));
    }
  } else {
    const std::size_t n = sorted.size();
    for (std::size_t k = 1; k < bins; ++k) {
      std::size_t cut = k * n / bins;
      if (cut >= 1) interior.push_back(sorted[cut - 1]);
    }
  }
  d.bin_edges = detail::strictly_ascending_edges(lo, hi, interior);
  d.bin_count = d.bin_edges.size() - 1;
  return d;
}

// Returns a copy of `ds` whose targeted columns hold bin indices.
inline Dataset discretize(const Dataset& ds, std::span<const Discretization> specs) {
  std::vector<VariableMeta> vars = ds.variables();
  std::vector<std::vector<double>> cols;
  cols.reserve(ds.variable_count());
  for (VarId c = 0; c < ds.variable_count(); ++c) {
    auto col = ds.column(c);
    cols.emplace_back(col.begin(), col.end());
  }
  for (const auto& spec : specs) {
    VarId id = ds.index_of(spec.variable);
    auto& meta = vars[id];
    if (spec.strategy == BinStrategy::PassThrough) {
      if (meta.kind == Kind::Continuous) {
        throw Error(ErrorCode::BadDiscretization, "PassThrough is not allowed for continuous '" + meta.name + "'",
                    meta.name);
      }
      continue;
    }
    if (meta.kind != Kind::Continuous && meta.kind != Kind::Discrete) {
      throw Error(ErrorCode::BadDiscretization, "only numeric columns can be binned: '" + meta.name + "'",
                  meta.name);
    }
    auto fitted = spec.bin_edges.empty() ? fit_discretization(ds.column(id), spec.variable, spec.strategy,
                                                              spec.bin_count)
                                         : spec;
    for (auto& v : cols[id]) v = static_cast<double>(fitted.bin_of(v));
    meta.kind = Kind::Discrete;
    meta.bin_edges = fitted.bin_edges;
    meta.levels.clear();
  }
  return Dataset(std::move(vars), std::move(cols), ds.dropped_rows());
}

// EqualFrequency binning for every continuous column; other columns untouched.
inline std::vector<Discretization> default_discretization(const Dataset& ds, std::size_t bins = 5) {
  std::vector<Discretization> specs;
  for (VarId c = 0; c < ds.variable_count(); ++c) {
    if (ds.meta(c).kind == Kind::Continuous) {
      specs.push_back({ds.meta(c).name, BinStrategy::EqualFrequency, bins, {}});
    }
  }
  return specs;
}

inline Dataset discretize_default(const Dataset& ds, std::size_t bins = 5) {
  auto specs = default_discretization(ds, bins);
  return discretize(ds, specs);
}

}  // namespace rca
