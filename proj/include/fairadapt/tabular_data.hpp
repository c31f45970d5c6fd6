#pragma once

// Column-typed tabular data, the metadata sidecar, CSV ingestion and
// emission, and seeded train/test splitting.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "fairadapt/causal_graph.hpp"
#include "fairadapt/error.hpp"
#include "fairadapt/random.hpp"

namespace fairadapt {

enum class ColumnKind { continuous, discrete_ordered, categorical_unordered };
enum class Role { attribute, feature, outcome };

inline std::string to_string(ColumnKind k) {
  switch (k) {
    case ColumnKind::continuous: return "continuous";
    case ColumnKind::discrete_ordered: return "discrete_ordered";
    case ColumnKind::categorical_unordered: return "categorical_unordered";
  }
  return "?";
}

inline std::string to_string(Role r) {
  switch (r) {
    case Role::attribute: return "attribute";
    case Role::feature: return "feature";
    case Role::outcome: return "outcome";
  }
  return "?";
}

inline bool is_discrete(ColumnKind k) { return k != ColumnKind::continuous; }

/// Shortest decimal text that parses back to exactly `v`.
inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

/// Strict full-field parse; rejects trailing garbage and leading '+'.
inline std::optional<double> parse_double(std::string_view s) {
  if (s.empty()) return std::nullopt;
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

struct ColumnSpec {
  std::string name;
  ColumnKind kind = ColumnKind::continuous;
  std::vector<std::string> levels;  // discrete kinds only
  Role role = Role::feature;

  /// Index of `label` among the levels. Falls back to numeric equality so
  /// that "1.0" matches a level declared as 1.
  std::optional<std::size_t> level_index(std::string_view label) const {
    for (std::size_t i = 0; i < levels.size(); ++i)
      if (levels[i] == label) return i;
    if (auto v = parse_double(label)) {
      for (std::size_t i = 0; i < levels.size(); ++i) {
        auto lv = parse_double(levels[i]);
        if (lv && *lv == *v) return i;
      }
    }
    return std::nullopt;
  }

  friend bool operator==(const ColumnSpec&, const ColumnSpec&) = default;
};

namespace detail {

inline std::string level_label(const nlohmann::json& v, const std::string& column) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_integer()) return std::to_string(v.get<long long>());
  if (v.is_number_unsigned()) return std::to_string(v.get<unsigned long long>());
  if (v.is_number_float()) {
    const double d = v.get<double>();
    if (std::floor(d) == d && std::abs(d) < 1e15) return std::to_string(static_cast<long long>(d));
    return format_double(d);
  }
  if (v.is_boolean()) return v.get<bool>() ? "1" : "0";
  throw ValidationError("metadata: level of column '" + column + "' must be a string or number");
}

}  // namespace detail

struct Metadata {
  std::vector<ColumnSpec> columns;
  std::optional<std::string> baseline;

  const ColumnSpec* find(std::string_view name) const {
    for (const auto& c : columns)
      if (c.name == name) return &c;
    return nullptr;
  }

  static Metadata from_json(const nlohmann::ordered_json& doc) {
    if (!doc.is_object() || !doc.contains("columns") || !doc.at("columns").is_object())
      throw ValidationError("metadata: expected an object with a 'columns' object");
    Metadata meta;
    for (const auto& [name, spec] : doc.at("columns").items()) {
      ColumnSpec c;
      c.name = name;
      if (!spec.is_object() || !spec.contains("kind") || !spec.at("kind").is_string())
        throw ValidationError("metadata: column '" + name + "' needs a 'kind'");
      const auto kind = spec.at("kind").get<std::string>();
      if (kind == "continuous")
        c.kind = ColumnKind::continuous;
      else if (kind == "discrete_ordered")
        c.kind = ColumnKind::discrete_ordered;
      else if (kind == "categorical_unordered")
        c.kind = ColumnKind::categorical_unordered;
      else
        throw ValidationError("metadata: column '" + name + "' has unknown kind '" + kind + "'");

      const auto role = spec.value("role", std::string("feature"));
      if (role == "attribute")
        c.role = Role::attribute;
      else if (role == "feature")
        c.role = Role::feature;
      else if (role == "outcome")
        c.role = Role::outcome;
      else
        throw ValidationError("metadata: column '" + name + "' has unknown role '" + role + "'");

      if (is_discrete(c.kind)) {
        if (!spec.contains("levels") || !spec.at("levels").is_array() || spec.at("levels").empty())
          throw ValidationError("metadata: discrete column '" + name + "' needs a non-empty 'levels' list");
        std::set<std::string> seen;
        for (const auto& v : spec.at("levels")) {
          auto label = detail::level_label(v, name);
          if (!seen.insert(label).second)
            throw ValidationError("metadata: duplicate level '" + label + "' in column '" + name + "'");
          c.levels.push_back(std::move(label));
        }
      } else if (spec.contains("levels")) {
        throw ValidationError("metadata: continuous column '" + name + "' must not declare levels");
      }
      meta.columns.push_back(std::move(c));
    }
    if (doc.contains("baseline") && !doc.at("baseline").is_null())
      meta.baseline = detail::level_label(doc.at("baseline"), "baseline");
    return meta;
  }

  static Metadata parse(std::string_view text) {
    nlohmann::ordered_json doc;
    try {
      doc = nlohmann::ordered_json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
      throw ValidationError(std::string("metadata: malformed JSON: ") + e.what());
    }
    return from_json(doc);
  }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json doc;
    doc["columns"] = nlohmann::ordered_json::object();
    for (const auto& c : columns) {
      nlohmann::ordered_json spec;
      spec["kind"] = to_string(c.kind);
      if (is_discrete(c.kind)) spec["levels"] = c.levels;
      spec["role"] = to_string(c.role);
      doc["columns"][c.name] = std::move(spec);
    }
    if (baseline) doc["baseline"] = *baseline;
    return doc;
  }

  std::string serialize() const { return to_json().dump(2); }
};

/// One typed column. Discrete columns hold level indices (as doubles).
struct Column {
  ColumnSpec spec;
  std::vector<double> values;

  const std::string& name() const { return spec.name; }
  ColumnKind kind() const { return spec.kind; }
  std::size_t level(std::size_t row) const { return static_cast<std::size_t>(values[row]); }
  const std::string& label(std::size_t row) const { return spec.levels.at(level(row)); }

  friend bool operator==(const Column&, const Column&) = default;
};

/// Column-major table. Rows are aligned across columns.
class Dataset {
 public:
  Dataset() = default;
  Dataset(std::vector<Column> columns, std::optional<std::string> baseline = std::nullopt, bool is_test = false)
      : columns_(std::move(columns)), baseline_(std::move(baseline)), is_test_(is_test) {
    for (const auto& c : columns_) {
      if (c.values.size() != columns_.front().values.size())
        throw ValidationError("column '" + c.name() + "' has a different row count");
    }
  }

  std::size_t rows() const { return columns_.empty() ? 0 : columns_.front().values.size(); }
  std::size_t cols() const { return columns_.size(); }
  const std::vector<Column>& columns() const { return columns_; }
  std::vector<Column>& columns() { return columns_; }

  bool has(std::string_view name) const { return find(name) != nullptr; }

  const Column& column(std::string_view name) const {
    if (auto* c = find(name)) return *c;
    throw ValidationError("no column '" + std::string(name) + "'");
  }
  Column& column(std::string_view name) {
    return const_cast<Column&>(static_cast<const Dataset&>(*this).column(name));
  }

  const std::optional<std::string>& baseline() const { return baseline_; }
  void set_baseline(std::optional<std::string> b) { baseline_ = std::move(b); }
  bool is_test() const { return is_test_; }
  void set_test(bool t) { is_test_ = t; }

  Metadata metadata() const {
    Metadata m;
    for (const auto& c : columns_) m.columns.push_back(c.spec);
    m.baseline = baseline_;
    return m;
  }

  /// Rows at `indices`, in that order.
  Dataset select(const std::vector<std::size_t>& indices) const {
    std::vector<Column> out;
    out.reserve(columns_.size());
    for (const auto& c : columns_) {
      Column nc{c.spec, {}};
      nc.values.reserve(indices.size());
      for (auto i : indices) nc.values.push_back(c.values.at(i));
      out.push_back(std::move(nc));
    }
    return Dataset(std::move(out), baseline_, is_test_);
  }

  Dataset without(std::string_view name) const {
    std::vector<Column> out;
    for (const auto& c : columns_)
      if (c.name() != name) out.push_back(c);
    return Dataset(std::move(out), baseline_, is_test_);
  }

  void add_column(Column c) {
    if (!columns_.empty() && c.values.size() != rows())
      throw ValidationError("column '" + c.name() + "' has a different row count");
    if (has(c.name())) throw ValidationError("duplicate column '" + c.name() + "'");
    columns_.push_back(std::move(c));
  }

  friend bool operator==(const Dataset& a, const Dataset& b) {
    return a.columns_ == b.columns_ && a.baseline_ == b.baseline_;
  }

 private:
  const Column* find(std::string_view name) const {
    for (const auto& c : columns_)
      if (c.name() == name) return &c;
    return nullptr;
  }

  std::vector<Column> columns_;
  std::optional<std::string> baseline_;
  bool is_test_ = false;
};

namespace csv {

/// Splits one CSV record. Double-quoted fields may contain commas and "" escapes.
inline std::vector<std::string> split_record(std::string_view line) {
  std::vector<std::string> out;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(ch);
      }
    } else if (ch == '"' && field.empty()) {
      quoted = true;
    } else if (ch == ',') {
      out.push_back(std::move(field));
      field.clear();
    } else {
      field.push_back(ch);
    }
  }
  out.push_back(std::move(field));
  return out;
}

inline std::string quote_if_needed(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out.push_back('"');
    out.push_back(ch);
  }
  out.push_back('"');
  return out;
}

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

/// Parses header plus records. Blank lines are skipped; ragged rows are errors.
inline Table read(std::string_view text) {
  Table t;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos <= text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    auto line = text.substr(pos, end - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    pos = end + 1;
    ++line_no;
    if (line.empty()) {
      if (end == text.size()) break;
      continue;
    }
    auto fields = split_record(line);
    if (t.header.empty()) {
      t.header = std::move(fields);
      if (!t.header.empty() && t.header[0].rfind("\xEF\xBB\xBF", 0) == 0) t.header[0].erase(0, 3);
    } else {
      if (fields.size() != t.header.size())
        throw ValidationError("CSV row " + std::to_string(t.rows.size() + 1) + " (line " + std::to_string(line_no) +
                              ") has " + std::to_string(fields.size()) + " fields, header has " +
                              std::to_string(t.header.size()));
      t.rows.push_back(std::move(fields));
    }
    if (end == text.size()) break;
  }
  if (t.header.empty()) throw ValidationError("CSV has no header row");
  return t;
}

inline std::string write(const Table& t) {
  std::string out;
  auto emit = [&](const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (i) out.push_back(',');
      out += quote_if_needed(fields[i]);
    }
    out.push_back('\n');
  };
  emit(t.header);
  for (const auto& r : t.rows) emit(r);
  return out;
}

}  // namespace csv

/// Parses CSV text against the metadata and graph. Every graph node needs a
/// column, except the outcome when `allow_missing_outcome` is set (test data).
/// Errors name the row (1-based, excluding the header) and column.
inline Dataset ingest(std::string_view csv_text, const Metadata& meta, const CausalGraph& graph,
                      bool allow_missing_outcome = false) {
  const auto table = csv::read(csv_text);
  std::set<std::string> header_names;
  for (const auto& h : table.header) {
    if (!header_names.insert(h).second) throw ValidationError("duplicate CSV column '" + h + "'");
    if (!meta.find(h)) throw ValidationError("CSV column '" + h + "' is not declared in the metadata");
    if (!graph.contains(h)) throw ValidationError("CSV column '" + h + "' is not a node of the graph");
  }
  bool outcome_present = true;
  for (const auto& node : graph.nodes()) {
    if (header_names.count(node)) continue;
    if (node == graph.outcome() && allow_missing_outcome) {
      outcome_present = false;
      continue;
    }
    throw ValidationError("missing column for graph node '" + node + "'");
  }

  std::vector<Column> columns;
  for (std::size_t j = 0; j < table.header.size(); ++j) {
    const auto& spec = *meta.find(table.header[j]);
    if (spec.name == graph.protected_attribute()) {
      if (spec.role != Role::attribute)
        throw ValidationError("protected column '" + spec.name + "' must have role 'attribute'");
      if (!is_discrete(spec.kind))
        throw ValidationError("protected column '" + spec.name + "' must be discrete");
    } else if (spec.name == graph.outcome()) {
      if (spec.role != Role::outcome)
        throw ValidationError("outcome column '" + spec.name + "' must have role 'outcome'");
    } else if (spec.role != Role::feature) {
      throw ValidationError("column '" + spec.name + "' has role '" + to_string(spec.role) +
                            "' but is neither the protected attribute nor the outcome");
    }

    Column col{spec, {}};
    col.values.reserve(table.rows.size());
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
      const auto& cell = table.rows[i][j];
      const auto where = "row " + std::to_string(i + 1) + ", column '" + spec.name + "'";
      if (cell.empty()) throw ValidationError("missing value at " + where);
      if (spec.kind == ColumnKind::continuous) {
        auto v = parse_double(cell);
        if (!v) throw ValidationError("non-numeric value '" + cell + "' at " + where);
        if (!std::isfinite(*v)) throw ValidationError("non-finite value '" + cell + "' at " + where);
        col.values.push_back(*v);
      } else {
        auto idx = spec.level_index(cell);
        if (!idx) throw ValidationError("value '" + cell + "' outside declared levels at " + where);
        col.values.push_back(static_cast<double>(*idx));
      }
    }
    columns.push_back(std::move(col));
  }

  if (meta.baseline) {
    const auto* a = meta.find(graph.protected_attribute());
    if (!a->level_index(*meta.baseline))
      throw ValidationError("baseline '" + *meta.baseline + "' is not a level of '" + a->name + "'");
  }
  return Dataset(std::move(columns), meta.baseline, !outcome_present);
}

inline std::string emit_csv(const Dataset& data) {
  csv::Table t;
  for (const auto& c : data.columns()) t.header.push_back(c.name());
  t.rows.resize(data.rows());
  for (std::size_t i = 0; i < data.rows(); ++i) {
    auto& row = t.rows[i];
    row.reserve(data.cols());
    for (const auto& c : data.columns())
      row.push_back(is_discrete(c.kind()) ? c.label(i) : format_double(c.values[i]));
  }
  return csv::write(t);
}

inline std::string emit_metadata(const Dataset& data) { return data.metadata().serialize(); }

/// Seeded shuffle; round(n * fraction) rows go to train. Both parts keep the
/// original row order.
inline std::pair<Dataset, Dataset> split(const Dataset& data, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw ValidationError("train fraction must lie strictly between 0 and 1");
  const std::size_t n = data.rows();
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  auto eng = rng::engine(seed, {rng::tag(rng::Purpose::split)});
  // Fisher-Yates with our own index draws so the result does not depend on
  // the standard library's shuffle implementation.
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(eng() % i);
    std::swap(perm[i - 1], perm[j]);
  }
  const auto n_train = static_cast<std::size_t>(std::llround(static_cast<double>(n) * train_fraction));
  std::vector<std::size_t> train(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_train));
  std::vector<std::size_t> test(perm.begin() + static_cast<std::ptrdiff_t>(n_train), perm.end());
  std::sort(train.begin(), train.end());
  std::sort(test.begin(), test.end());
  return {data.select(train), data.select(test)};
}

}  // namespace fairadapt
