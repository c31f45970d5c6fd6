#pragma once

// Executable structural equation models with shared-quantile counterfactuals.
// Every node value is g(parents, u) with g nondecreasing in its own quantile u,
// so replaying the same u under an intervention gives the counterfactual row.

#include <algorithm>
#include <cfloat>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <boost/math/distributions/normal.hpp>

#include "fairadapt/causal_graph.hpp"
#include "fairadapt/error.hpp"
#include "fairadapt/forest.hpp"
#include "fairadapt/parallel.hpp"
#include "fairadapt/random.hpp"
#include "fairadapt/tabular_data.hpp"

namespace fairadapt {

inline double expit(double x) {
  return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

/// Standard normal quantile; the argument is clamped away from 0 and 1.
inline double normal_quantile(double u) {
  static const boost::math::normal_distribution<double> standard;
  return boost::math::quantile(standard, std::clamp(u, DBL_MIN, 1.0 - DBL_EPSILON / 2));
}

/// value = intercept + sum coef * parent + sd * Phi^{-1}(u)
struct LinearGaussian {
  double intercept = 0.0;
  std::map<std::string, double> coefs;
  double sd = 1.0;
};

/// value = 1 iff u > 1 - expit(intercept + sum coef * parent)
struct BernoulliLogit {
  double intercept = 0.0;
  std::map<std::string, double> coefs;
};

/// value = 1 iff u > 1 - p
struct BernoulliConstant {
  double p = 0.5;
};

using Assignment = std::variant<LinearGaussian, BernoulliLogit, BernoulliConstant>;

struct SampleWithQuantiles {
  Dataset data;
  Matrix u;  // one column per node, in graph().nodes() order
};

class Sem {
 public:
  Sem(CausalGraph graph, std::map<std::string, Assignment> assignments)
      : graph_(std::move(graph)) {
    const auto& nodes = graph_.nodes();
    for (std::size_t k = 0; k < nodes.size(); ++k) {
      auto it = assignments.find(nodes[k]);
      if (it == assignments.end()) throw ValidationError("sem: no assignment for node '" + nodes[k] + "'");
      assign_.push_back(it->second);
      auto check = [&](const std::map<std::string, double>& coefs) {
        for (const auto& [p, c] : coefs)
          if (!graph_.has_edge(p, nodes[k]))
            throw ValidationError("sem: coefficient on '" + p + "' but no edge " + p + " -> " + nodes[k]);
      };
      if (auto* lg = std::get_if<LinearGaussian>(&it->second)) check(lg->coefs);
      if (auto* bl = std::get_if<BernoulliLogit>(&it->second)) check(bl->coefs);
    }
    if (assignments.size() != nodes.size()) throw ValidationError("sem: assignment for a node not in the graph");
    if (!binary(index(graph_.protected_attribute())))
      throw ValidationError("sem: the protected attribute must be binary");
    for (const auto& v : graph_.topological_order()) order_.push_back(index(v));
  }

  const CausalGraph& graph() const { return graph_; }
  std::size_t size() const { return graph_.nodes().size(); }

  std::size_t index(std::string_view name) const {
    const auto& nodes = graph_.nodes();
    auto it = std::find(nodes.begin(), nodes.end(), name);
    if (it == nodes.end()) throw ValidationError("sem: unknown variable '" + std::string(name) + "'");
    return static_cast<std::size_t>(it - nodes.begin());
  }

  bool binary(std::size_t k) const { return !std::holds_alternative<LinearGaussian>(assign_[k]); }
  const Assignment& assignment(std::string_view name) const { return assign_[index(name)]; }

  /// E[g_k(parents, U)] for fixed parent values.
  double conditional_mean(std::size_t k, std::span<const double> values) const {
    return std::visit(
        [&](const auto& a) -> double {
          using T = std::decay_t<decltype(a)>;
          if constexpr (std::is_same_v<T, BernoulliConstant>) {
            return a.p;
          } else {
            double eta = a.intercept;
            for (const auto& [p, c] : a.coefs) eta += c * values[index(p)];
            if constexpr (std::is_same_v<T, LinearGaussian>)
              return eta;
            else
              return expit(eta);
          }
        },
        assign_[k]);
  }

  double assign(std::size_t k, std::span<const double> values, double u) const {
    const double m = conditional_mean(k, values);
    if (const auto* lg = std::get_if<LinearGaussian>(&assign_[k])) return m + lg->sd * normal_quantile(u);
    return u > 1.0 - m ? 1.0 : 0.0;
  }

  /// Forward evaluation at quantile row u; intervened variables are held at
  /// the given constants and every other node reuses its own u.
  std::vector<double> evaluate(std::span<const double> u, const std::map<std::string, double>& interventions = {}) const {
    if (u.size() != size()) throw ValidationError("sem: quantile row has wrong length");
    std::vector<std::pair<std::size_t, double>> fixed;
    for (const auto& [name, v] : interventions) fixed.emplace_back(index(name), v);
    std::vector<double> values(size(), 0.0);
    for (auto k : order_) {
      auto it = std::find_if(fixed.begin(), fixed.end(), [k](const auto& f) { return f.first == k; });
      values[k] = it != fixed.end() ? it->second : assign(k, values, u[k]);
    }
    return values;
  }

  std::vector<double> counterfactual(std::span<const double> u, const std::map<std::string, double>& interventions) const {
    return evaluate(u, interventions);
  }

  /// Quantile draw for (row, node); independent across both.
  double quantile_draw(std::uint64_t seed, std::size_t row, std::size_t k) const {
    return rng::uniform(seed, {rng::tag(rng::Purpose::sem_quantile), row, rng::hash_name(graph_.nodes()[k])});
  }

  Matrix draw_quantiles(std::size_t n, std::uint64_t seed) const {
    Matrix u(n, size());
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < size(); ++k) u(i, k) = quantile_draw(seed, i, k);
    return u;
  }

  SampleWithQuantiles sample(std::size_t n, std::uint64_t seed) const {
    if (n == 0) throw ValidationError("sem: sample size must be at least 1");
    auto u = draw_quantiles(n, seed);
    Matrix values(n, size());
    for (std::size_t i = 0; i < n; ++i) {
      const auto row = evaluate(u.row(i));
      std::copy(row.begin(), row.end(), values.row(i).begin());
    }
    return {make_dataset(values), std::move(u)};
  }

  /// Binary nodes become discrete_ordered columns with levels "0" and "1".
  Metadata metadata() const {
    Metadata m;
    for (std::size_t k = 0; k < size(); ++k) {
      ColumnSpec c;
      c.name = graph_.nodes()[k];
      if (binary(k)) {
        c.kind = ColumnKind::discrete_ordered;
        c.levels = {"0", "1"};
      }
      c.role = c.name == graph_.protected_attribute() ? Role::attribute
               : c.name == graph_.outcome()           ? Role::outcome
                                                      : Role::feature;
      m.columns.push_back(std::move(c));
    }
    m.baseline = "0";
    return m;
  }

  Dataset make_dataset(const Matrix& values) const {
    const auto meta = metadata();
    std::vector<Column> cols;
    for (std::size_t k = 0; k < size(); ++k) {
      Column c{meta.columns[k], std::vector<double>(values.rows)};
      for (std::size_t i = 0; i < values.rows; ++i) c.values[i] = values(i, k);
      cols.push_back(std::move(c));
    }
    return Dataset(std::move(cols), meta.baseline);
  }

  /// Exact population adaptation: each row becomes its counterfactual under
  /// do(A = baseline) with resolving variables held at their observed values.
  Dataset oracle_adapt(const SampleWithQuantiles& s, const std::set<std::string>& resolving, double baseline) const {
    const auto checked = graph_.with_resolving(resolving);  // validates the set
    (void)checked;
    const auto& a = graph_.protected_attribute();
    Matrix out(s.u.rows, size());
    for (std::size_t i = 0; i < s.u.rows; ++i) {
      std::map<std::string, double> iv{{a, baseline}};
      for (const auto& r : resolving) iv[r] = s.data.column(r).values[i];
      const auto row = evaluate(s.u.row(i), iv);
      std::copy(row.begin(), row.end(), out.row(i).begin());
    }
    return make_dataset(out);
  }

  /// Monte-Carlo E[Y(A=b) - Y(A=b, R=R(1-b))] using the outcome's
  /// conditional mean given its parents.
  double ripg_bound(const std::set<std::string>& resolving, double baseline, std::size_t n, std::uint64_t seed) const {
    (void)graph_.with_resolving(resolving);
    if (resolving.empty()) return 0.0;
    const auto& a = graph_.protected_attribute();
    const auto y = index(graph_.outcome());
    const double other = 1.0 - baseline;
    const auto u = draw_quantiles(n, rng::combine(seed, rng::tag(rng::Purpose::experiment)));
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto at_base = evaluate(u.row(i), {{a, baseline}});
      const auto at_other = evaluate(u.row(i), {{a, other}});
      std::map<std::string, double> iv{{a, baseline}};
      for (const auto& r : resolving) iv[r] = at_other[index(r)];
      const auto mixed = evaluate(u.row(i), iv);
      total += conditional_mean(y, at_base) - conditional_mean(y, mixed);
    }
    return total / static_cast<double>(n);
  }

  /// Coefficients of linear nodes keyed by edge.
  EdgeCoefficients edge_coefficients() const {
    EdgeCoefficients out;
    for (std::size_t k = 0; k < size(); ++k) {
      const std::map<std::string, double>* coefs = nullptr;
      if (auto* lg = std::get_if<LinearGaussian>(&assign_[k])) coefs = &lg->coefs;
      if (auto* bl = std::get_if<BernoulliLogit>(&assign_[k])) coefs = &bl->coefs;
      if (!coefs) continue;
      for (const auto& [p, c] : *coefs) out[{p, graph_.nodes()[k]}] = c;
    }
    return out;
  }

 private:
  CausalGraph graph_;
  std::vector<Assignment> assign_;
  std::vector<std::size_t> order_;
};

namespace detail {

inline CausalGraph builtin_graph(std::vector<std::string> nodes, std::vector<Edge> edges) {
  return CausalGraph(std::move(nodes), std::move(edges), "A", "Y");
}

}  // namespace detail

inline std::vector<std::string> builtin_names() {
  return {"synthetic_a", "synthetic_b", "ripg_example", "appendix_b", "chain_example"};
}

/// Built-in models. A ~ Bernoulli(0.5) throughout, with baseline A = 0.
///   synthetic_a:   X_i = 1/8 - A/4 + e_i (i = 1..5), Y ~ Bernoulli(expit(sum X_i))
///   synthetic_b:   X_1, X_2 as above, X_3 = X_2/4 + e_3, Y ~ Bernoulli(expit(X_1 + X_2 + X_3))
///   ripg_example:  X = 1(A=0)/2 + e_X, R = 3 * 1(A=0)/4 + e_R, Y = X/2 + e (Y continuous)
///   appendix_b:    X_1 = 1(A=0)/2 + e_1, X_2 = 2/3 (1(A=0) - 1/2) + e_2, noise variance 0.05,
///                  Y ~ Bernoulli(expit(X_1 + X_2))
///   chain_example: X_1 = 0.5 A + e_1, X_2 = 0.3 A + 0.8 X_1 + e_2, Y = X_2 + e (Y continuous).
///                  These coefficients are artifact constants chosen to give two paths A -> X_2.
/// Noise is standard normal unless stated.
inline Sem builtin(std::string_view name) {
  const BernoulliConstant coin{0.5};
  if (name == "synthetic_a") {
    std::vector<std::string> nodes{"A", "X1", "X2", "X3", "X4", "X5", "Y"};
    std::vector<Edge> edges;
    std::map<std::string, Assignment> a{{"A", coin}};
    BernoulliLogit y;
    for (int i = 1; i <= 5; ++i) {
      const auto x = "X" + std::to_string(i);
      edges.emplace_back("A", x);
      edges.emplace_back(x, "Y");
      a[x] = LinearGaussian{0.125, {{"A", -0.25}}, 1.0};
      y.coefs[x] = 1.0;
    }
    a["Y"] = y;
    return Sem(detail::builtin_graph(nodes, edges), a);
  }
  if (name == "synthetic_b") {
    std::vector<std::string> nodes{"A", "X1", "X2", "X3", "Y"};
    std::vector<Edge> edges{{"A", "X1"}, {"A", "X2"}, {"X2", "X3"}, {"X1", "Y"}, {"X2", "Y"}, {"X3", "Y"}};
    std::map<std::string, Assignment> a{{"A", coin}};
    a["X1"] = LinearGaussian{0.125, {{"A", -0.25}}, 1.0};
    a["X2"] = LinearGaussian{0.125, {{"A", -0.25}}, 1.0};
    a["X3"] = LinearGaussian{0.0, {{"X2", 0.25}}, 1.0};
    a["Y"] = BernoulliLogit{0.0, {{"X1", 1.0}, {"X2", 1.0}, {"X3", 1.0}}};
    return Sem(detail::builtin_graph(nodes, edges), a);
  }
  if (name == "ripg_example") {
    std::vector<std::string> nodes{"A", "X", "R", "Y"};
    std::vector<Edge> edges{{"A", "X"}, {"A", "R"}, {"X", "Y"}};
    std::map<std::string, Assignment> a{{"A", coin}};
    a["X"] = LinearGaussian{0.5, {{"A", -0.5}}, 1.0};
    a["R"] = LinearGaussian{0.75, {{"A", -0.75}}, 1.0};
    a["Y"] = LinearGaussian{0.0, {{"X", 0.5}}, 1.0};
    return Sem(detail::builtin_graph(nodes, edges), a);
  }
  if (name == "appendix_b") {
    const double sd = std::sqrt(0.05);
    std::vector<std::string> nodes{"A", "X1", "X2", "Y"};
    std::vector<Edge> edges{{"A", "X1"}, {"A", "X2"}, {"X1", "Y"}, {"X2", "Y"}};
    std::map<std::string, Assignment> a{{"A", coin}};
    a["X1"] = LinearGaussian{0.5, {{"A", -0.5}}, sd};
    a["X2"] = LinearGaussian{1.0 / 3.0, {{"A", -2.0 / 3.0}}, sd};
    a["Y"] = BernoulliLogit{0.0, {{"X1", 1.0}, {"X2", 1.0}}};
    return Sem(detail::builtin_graph(nodes, edges), a);
  }
  if (name == "chain_example") {
    std::vector<std::string> nodes{"A", "X1", "X2", "Y"};
    std::vector<Edge> edges{{"A", "X1"}, {"A", "X2"}, {"X1", "X2"}, {"X2", "Y"}};
    std::map<std::string, Assignment> a{{"A", coin}};
    a["X1"] = LinearGaussian{0.0, {{"A", 0.5}}, 1.0};
    a["X2"] = LinearGaussian{0.0, {{"A", 0.3}, {"X1", 0.8}}, 1.0};
    a["Y"] = LinearGaussian{0.0, {{"X2", 1.0}}, 1.0};
    return Sem(detail::builtin_graph(nodes, edges), a);
  }
  throw ValidationError("unknown builtin model '" + std::string(name) + "'");
}

}  // namespace fairadapt
