#pragma once

// Raw-table transforms applied before ingestion, driven by a JSON recipe:
//
//   {
//     "trim": true,
//     "filter": [{"column": "race", "keep": ["White"]}],
//     "drop": ["fnlwgt", ...],
//     "merge": {"workclass": {"map": {"State-gov": "Government", ...}, "default": "Other/Unknown"}},
//     "match": {"column": "sex", "by": "age"}
//   }
//
// Steps run in the order trim, filter, drop, merge, match. `match` subsamples
// every group of `column` down to the smallest group count within each value
// of `by`, so the `by` distribution is identical across groups.

#include <algorithm>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fairadapt/error.hpp"
#include "fairadapt/random.hpp"
#include "fairadapt/tabular_data.hpp"

namespace fairadapt {

struct LevelMerge {
  std::map<std::string, std::string> map;
  std::optional<std::string> fallback;  // for levels not in map; unset keeps them

  std::string apply(const std::string& v) const {
    if (auto it = map.find(v); it != map.end()) return it->second;
    return fallback ? *fallback : v;
  }
};

struct RowFilter {
  std::string column;
  std::set<std::string> keep;
};

struct MatchSubsample {
  std::string column;
  std::string by;
};

struct Recipe {
  bool trim = true;
  std::vector<RowFilter> filters;
  std::vector<std::string> drop;
  std::map<std::string, LevelMerge> merge;
  std::optional<MatchSubsample> match;

  static Recipe from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ValidationError("recipe: expected a JSON object");
    static const std::set<std::string> known{"trim", "filter", "drop", "merge", "match", "description"};
    for (const auto& [k, v] : j.items())
      if (!known.count(k)) throw ValidationError("recipe: unknown key '" + k + "'");
    Recipe r;
    try {
      r.trim = j.value("trim", true);
      const auto filters = j.value("filter", nlohmann::json::array());
      for (const auto& f : filters) {
        RowFilter rf{f.at("column").get<std::string>(), {}};
        for (const auto& k : f.at("keep")) rf.keep.insert(k.get<std::string>());
        r.filters.push_back(std::move(rf));
      }
      r.drop = j.value("drop", std::vector<std::string>{});
      const auto merges = j.value("merge", nlohmann::json::object());
      for (const auto& [col, spec] : merges.items()) {
        LevelMerge m;
        m.map = spec.value("map", std::map<std::string, std::string>{});
        if (spec.contains("default")) m.fallback = spec.at("default").get<std::string>();
        r.merge.emplace(col, std::move(m));
      }
      if (j.contains("match"))
        r.match = MatchSubsample{j["match"].at("column").get<std::string>(), j["match"].at("by").get<std::string>()};
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(std::string("recipe: ") + e.what());
    }
    return r;
  }
  static Recipe parse(const std::string& text) {
    try {
      return from_json(nlohmann::json::parse(text));
    } catch (const nlohmann::json::parse_error& e) {
      throw ValidationError(std::string("recipe: ") + e.what());
    }
  }
};

namespace detail {

inline std::size_t column_index(const csv::Table& t, const std::string& name) {
  auto it = std::find(t.header.begin(), t.header.end(), name);
  if (it == t.header.end()) throw ValidationError("preprocess: no column '" + name + "'");
  return static_cast<std::size_t>(it - t.header.begin());
}

inline std::string trimmed(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

}  // namespace detail

/// Applies the recipe to a parsed table. Row order is preserved.
inline csv::Table apply_recipe(csv::Table t, const Recipe& r, std::uint64_t seed) {
  if (r.trim) {
    for (auto& h : t.header) h = detail::trimmed(h);
    for (auto& row : t.rows)
      for (auto& v : row) v = detail::trimmed(v);
  }

  for (const auto& f : r.filters) {
    const auto c = detail::column_index(t, f.column);
    std::erase_if(t.rows, [&](const auto& row) { return !f.keep.count(row[c]); });
  }

  for (const auto& name : r.drop) {
    const auto c = detail::column_index(t, name);
    t.header.erase(t.header.begin() + static_cast<std::ptrdiff_t>(c));
    for (auto& row : t.rows) row.erase(row.begin() + static_cast<std::ptrdiff_t>(c));
  }

  for (const auto& [name, m] : r.merge) {
    const auto c = detail::column_index(t, name);
    for (auto& row : t.rows) row[c] = m.apply(row[c]);
  }

  if (r.match) {
    const auto g = detail::column_index(t, r.match->column);
    const auto b = detail::column_index(t, r.match->by);
    // cell[by value][group] -> row indices
    std::map<std::string, std::map<std::string, std::vector<std::size_t>>> cells;
    std::set<std::string> groups;
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
      cells[t.rows[i][b]][t.rows[i][g]].push_back(i);
      groups.insert(t.rows[i][g]);
    }
    std::vector<bool> keep(t.rows.size(), false);
    for (auto& [value, by_group] : cells) {
      std::size_t k = by_group.size() < groups.size() ? 0 : SIZE_MAX;
      for (const auto& [grp, idx] : by_group) k = std::min(k, idx.size());
      for (auto& [grp, idx] : by_group) {
        auto eng = rng::engine(seed, {rng::tag(rng::Purpose::subsample), rng::hash_name(value), rng::hash_name(grp)});
        for (std::size_t i = 0; i < k; ++i) {
          const auto j = i + static_cast<std::size_t>(eng() % (idx.size() - i));
          std::swap(idx[i], idx[j]);
          keep[idx[i]] = true;
        }
      }
    }
    std::vector<std::vector<std::string>> rows;
    for (std::size_t i = 0; i < t.rows.size(); ++i)
      if (keep[i]) rows.push_back(std::move(t.rows[i]));
    t.rows = std::move(rows);
  }
  return t;
}

inline std::string apply_recipe(const std::string& csv_text, const Recipe& r, std::uint64_t seed) {
  return csv::write(apply_recipe(csv::read(csv_text), r, seed));
}

}  // namespace fairadapt
