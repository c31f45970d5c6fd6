#pragma once

// Causal DAG over named variables together with the protected attribute,
// the outcome, the resolving set and per-variable adaptation parent sets.

#include <algorithm>
#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <queue>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "fairadapt/error.hpp"

namespace fairadapt {

using Edge = std::pair<std::string, std::string>;
using EdgeCoefficients = std::map<Edge, double>;

class CausalGraph {
 public:
  /// Builds and validates a graph. Throws ValidationError naming the offending
  /// node or edge when any structural invariant fails.
  CausalGraph(std::vector<std::string> nodes, std::vector<Edge> edges, std::string protected_attribute,
              std::string outcome, std::set<std::string> resolving = {},
              std::map<std::string, std::set<std::string>> aps = {})
      : nodes_(std::move(nodes)),
        edges_(std::move(edges)),
        protected_(std::move(protected_attribute)),
        outcome_(std::move(outcome)),
        resolving_(std::move(resolving)),
        explicit_aps_(std::move(aps)) {
    validate();
  }

  static CausalGraph from_json(const nlohmann::json& doc) {
    if (!doc.is_object()) throw ValidationError("graph: expected an object at top level");
    auto string_list = [](const nlohmann::json& j, const char* what) {
      if (!j.is_array()) throw ValidationError(std::string("graph: '") + what + "' must be an array");
      std::vector<std::string> out;
      for (const auto& v : j) {
        if (!v.is_string()) throw ValidationError(std::string("graph: '") + what + "' entries must be strings");
        out.push_back(v.get<std::string>());
      }
      return out;
    };
    if (!doc.contains("nodes")) throw ValidationError("graph: 'nodes' not declared");
    auto nodes = string_list(doc.at("nodes"), "nodes");

    std::vector<Edge> edges;
    if (doc.contains("edges")) {
      if (!doc.at("edges").is_array()) throw ValidationError("graph: 'edges' must be an array");
      for (const auto& e : doc.at("edges")) {
        if (!e.is_array() || e.size() != 2 || !e[0].is_string() || !e[1].is_string())
          throw ValidationError("graph: each edge must be a [parent, child] pair of names");
        edges.emplace_back(e[0].get<std::string>(), e[1].get<std::string>());
      }
    }

    if (!doc.contains("protected")) throw ValidationError("protected attribute not declared");
    if (doc.at("protected").is_array())
      throw ValidationError("multiple protected attributes are not supported; declare exactly one");
    if (!doc.at("protected").is_string()) throw ValidationError("graph: 'protected' must be a name");
    if (!doc.contains("outcome")) throw ValidationError("outcome not declared");
    if (!doc.at("outcome").is_string()) throw ValidationError("graph: 'outcome' must be a name");

    std::set<std::string> resolving;
    if (doc.contains("resolving")) {
      for (auto& r : string_list(doc.at("resolving"), "resolving")) resolving.insert(std::move(r));
    }

    std::map<std::string, std::set<std::string>> aps;
    if (doc.contains("aps")) {
      if (!doc.at("aps").is_object()) throw ValidationError("graph: 'aps' must be an object");
      for (const auto& [name, parents] : doc.at("aps").items()) {
        auto list = string_list(parents, "aps");
        aps[name] = std::set<std::string>(list.begin(), list.end());
      }
    }
    return CausalGraph(std::move(nodes), std::move(edges), doc.at("protected").get<std::string>(),
                       doc.at("outcome").get<std::string>(), std::move(resolving), std::move(aps));
  }

  static CausalGraph parse(std::string_view text) {
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
      throw ValidationError(std::string("graph: malformed JSON: ") + e.what());
    }
    return from_json(doc);
  }

  nlohmann::json to_json() const {
    nlohmann::json doc;
    doc["nodes"] = nodes_;
    doc["edges"] = nlohmann::json::array();
    for (const auto& [p, c] : edges_) doc["edges"].push_back({p, c});
    doc["protected"] = protected_;
    doc["outcome"] = outcome_;
    if (!resolving_.empty()) doc["resolving"] = resolving_;
    if (!explicit_aps_.empty()) {
      doc["aps"] = nlohmann::json::object();
      for (const auto& [name, parents] : explicit_aps_) doc["aps"][name] = parents;
    }
    return doc;
  }

  std::string serialize() const { return to_json().dump(2); }

  const std::vector<std::string>& nodes() const noexcept { return nodes_; }
  const std::vector<Edge>& edges() const noexcept { return edges_; }
  const std::string& protected_attribute() const noexcept { return protected_; }
  const std::string& outcome() const noexcept { return outcome_; }
  const std::set<std::string>& resolving() const noexcept { return resolving_; }
  const std::map<std::string, std::set<std::string>>& explicit_aps() const noexcept { return explicit_aps_; }

  /// Non-fatal findings from validation (e.g. the outcome declared resolving).
  const std::vector<std::string>& warnings() const noexcept { return warnings_; }

  bool contains(std::string_view name) const { return index_.count(std::string(name)) != 0; }
  bool is_resolving(std::string_view name) const { return resolving_.count(std::string(name)) != 0; }

  bool has_edge(std::string_view parent, std::string_view child) const {
    const auto& ps = parents_[index_of(child)];
    return std::binary_search(ps.begin(), ps.end(), std::string(parent));
  }

  /// Parents in lexicographic order.
  const std::vector<std::string>& parents(std::string_view name) const { return parents_[index_of(name)]; }
  const std::vector<std::string>& children(std::string_view name) const { return children_[index_of(name)]; }

  /// Adaptation parent set. Empty for resolving variables; the explicit entry
  /// when one was declared; otherwise all parents.
  std::vector<std::string> aps(std::string_view name) const {
    const auto& ps = parents(name);
    if (is_resolving(name)) return {};
    auto it = explicit_aps_.find(std::string(name));
    if (it == explicit_aps_.end()) return ps;
    return std::vector<std::string>(it->second.begin(), it->second.end());
  }

  bool in_aps(std::string_view node, std::string_view parent) const {
    const auto set = aps(node);
    return std::find(set.begin(), set.end(), parent) != set.end();
  }

  /// Kahn's algorithm; among ready nodes the lexicographically smallest goes first.
  const std::vector<std::string>& topological_order() const noexcept { return order_; }

  std::set<std::string> descendants(std::string_view name) const {
    return reach(index_of(name), children_);
  }

  std::set<std::string> ancestors(std::string_view name) const { return reach(index_of(name), parents_); }

  /// de(A) \ R in topological order: the variables the adapter transforms.
  std::vector<std::string> adaptation_targets() const {
    const auto de = descendants(protected_);
    std::vector<std::string> out;
    for (const auto& v : order_) {
      if (de.count(v) && !resolving_.count(v)) out.push_back(v);
    }
    return out;
  }

  CausalGraph with_resolving(std::set<std::string> resolving) const {
    return CausalGraph(nodes_, edges_, protected_, outcome_, std::move(resolving), explicit_aps_);
  }

  CausalGraph with_aps(std::map<std::string, std::set<std::string>> aps) const {
    return CausalGraph(nodes_, edges_, protected_, outcome_, resolving_, std::move(aps));
  }

  friend bool operator==(const CausalGraph& a, const CausalGraph& b) {
    return a.nodes_ == b.nodes_ && std::set<Edge>(a.edges_.begin(), a.edges_.end()) ==
                                       std::set<Edge>(b.edges_.begin(), b.edges_.end()) &&
           a.protected_ == b.protected_ && a.outcome_ == b.outcome_ && a.resolving_ == b.resolving_ &&
           a.explicit_aps_ == b.explicit_aps_;
  }

 private:
  std::size_t index_of(std::string_view name) const {
    auto it = index_.find(std::string(name));
    if (it == index_.end()) throw ValidationError("unknown node '" + std::string(name) + "'");
    return it->second;
  }

  std::set<std::string> reach(std::size_t start, const std::vector<std::vector<std::string>>& next) const {
    std::set<std::string> seen;
    std::vector<std::size_t> stack{start};
    while (!stack.empty()) {
      const auto v = stack.back();
      stack.pop_back();
      for (const auto& w : next[v]) {
        if (seen.insert(w).second) stack.push_back(index_.at(w));
      }
    }
    return seen;
  }

  void validate() {
    if (nodes_.empty()) throw ValidationError("graph has no nodes");
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      if (nodes_[i].empty()) throw ValidationError("empty node name");
      if (!index_.emplace(nodes_[i], i).second) throw ValidationError("duplicate node '" + nodes_[i] + "'");
    }
    if (protected_.empty()) throw ValidationError("protected attribute not declared");
    if (outcome_.empty()) throw ValidationError("outcome not declared");
    if (!contains(protected_)) throw ValidationError("protected attribute '" + protected_ + "' is not a node");
    if (!contains(outcome_)) throw ValidationError("outcome '" + outcome_ + "' is not a node");
    if (protected_ == outcome_) throw ValidationError("protected attribute and outcome must differ");

    parents_.assign(nodes_.size(), {});
    children_.assign(nodes_.size(), {});
    std::set<Edge> seen;
    for (const auto& [p, c] : edges_) {
      const std::string label = p + " -> " + c;
      if (!contains(p)) throw ValidationError("unknown node '" + p + "' in edge " + label);
      if (!contains(c)) throw ValidationError("unknown node '" + c + "' in edge " + label);
      if (p == c) throw ValidationError("self-loop " + label);
      if (!seen.insert({p, c}).second) throw ValidationError("duplicate edge " + label);
      if (c == protected_) throw ValidationError("protected attribute has a parent: edge " + label);
      parents_[index_.at(c)].push_back(p);
      children_[index_.at(p)].push_back(c);
    }
    for (auto& ps : parents_) std::sort(ps.begin(), ps.end());
    for (auto& cs : children_) std::sort(cs.begin(), cs.end());

    compute_order();

    const auto de = descendants(protected_);
    for (const auto& r : resolving_) {
      if (!contains(r)) throw ValidationError("unknown node '" + r + "' in resolving set");
      if (!de.count(r))
        throw ValidationError("resolving node '" + r + "' is not a descendant of protected attribute '" +
                              protected_ + "'");
    }
    for (const auto& [name, set] : explicit_aps_) {
      if (!contains(name)) throw ValidationError("unknown node '" + name + "' in aps");
      const auto& ps = parents_[index_.at(name)];
      for (const auto& p : set) {
        if (!std::binary_search(ps.begin(), ps.end(), p))
          throw ValidationError("aps for '" + name + "' references '" + p + "', which is not a parent");
      }
      if (resolving_.count(name) && !set.empty())
        throw ValidationError("aps for resolving node '" + name + "' must be empty");
    }
    if (resolving_.count(outcome_))
      warnings_.push_back("outcome '" + outcome_ + "' is declared resolving; adaptation leaves it unchanged");
  }

  void compute_order() {
    std::vector<std::size_t> indegree(nodes_.size());
    for (std::size_t i = 0; i < nodes_.size(); ++i) indegree[i] = parents_[i].size();
    std::priority_queue<std::string, std::vector<std::string>, std::greater<>> ready;
    for (std::size_t i = 0; i < nodes_.size(); ++i)
      if (indegree[i] == 0) ready.push(nodes_[i]);
    order_.clear();
    while (!ready.empty()) {
      auto v = ready.top();
      ready.pop();
      for (const auto& c : children_[index_.at(v)]) {
        if (--indegree[index_.at(c)] == 0) ready.push(c);
      }
      order_.push_back(std::move(v));
    }
    if (order_.size() != nodes_.size()) {
      for (const auto& [p, c] : edges_) {
        if (indegree[index_.at(p)] > 0 && indegree[index_.at(c)] > 0)
          throw ValidationError("cycle detected through edge " + p + " -> " + c);
      }
      throw ValidationError("cycle detected");
    }
  }

  std::vector<std::string> nodes_;
  std::vector<Edge> edges_;
  std::string protected_;
  std::string outcome_;
  std::set<std::string> resolving_;
  std::map<std::string, std::set<std::string>> explicit_aps_;

  std::map<std::string, std::size_t> index_;
  std::vector<std::vector<std::string>> parents_;
  std::vector<std::vector<std::string>> children_;
  std::vector<std::string> order_;
  std::vector<std::string> warnings_;
};

/// Sum over directed paths protected -> target that avoid every node of
/// `resolving`, of the product of edge coefficients along the path. This is
/// the total effect of the protected attribute on `target` with the
/// resolving variables held fixed in a linear additive model.
///
/// Computed by dynamic programming over the topological order. Throws
/// ValidationError if an edge lying on such a path has no coefficient.
inline double path_coefficient_sum(const CausalGraph& graph, const EdgeCoefficients& betas,
                                   std::string_view target, const std::set<std::string>& resolving) {
  const std::string tgt(target);
  if (!graph.contains(tgt)) throw ValidationError("unknown node '" + tgt + "'");
  const auto& source = graph.protected_attribute();
  if (tgt == source) return 1.0;
  if (resolving.count(tgt)) return 0.0;

  // Nodes that can lie on a qualifying path: reachable from the source through
  // non-resolving nodes, and ancestors of the target.
  auto relevant = graph.ancestors(tgt);
  relevant.insert(tgt);

  std::map<std::string, double> effect;
  std::set<std::string> reachable{source};
  effect[source] = 1.0;
  for (const auto& v : graph.topological_order()) {
    if (v == source || !relevant.count(v) || resolving.count(v)) continue;
    double total = 0.0;
    bool reached = false;
    for (const auto& p : graph.parents(v)) {
      if (!reachable.count(p)) continue;
      auto it = betas.find({p, v});
      if (it == betas.end()) throw ValidationError("missing coefficient for edge " + p + " -> " + v);
      total += effect[p] * it->second;
      reached = true;
    }
    if (reached) {
      reachable.insert(v);
      effect[v] = total;
    }
  }
  auto it = effect.find(tgt);
  return it == effect.end() ? 0.0 : it->second;
}

}  // namespace fairadapt
