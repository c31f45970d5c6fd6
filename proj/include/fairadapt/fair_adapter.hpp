#pragma once

// Sample-level fair data adaptation. Every non-resolving descendant of the
// protected attribute is mapped, in topological order, to its value in the
// baseline world: continuous variables by conditional quantile matching with
// quantile regression forests, discrete variables by optimal transport
// between estimated conditional laws.

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "fairadapt/causal_graph.hpp"
#include "fairadapt/discrete_transport.hpp"
#include "fairadapt/error.hpp"
#include "fairadapt/forest.hpp"
#include "fairadapt/parallel.hpp"
#include "fairadapt/random.hpp"
#include "fairadapt/tabular_data.hpp"

namespace fairadapt {

enum class CategoricalOrdering {
  automatic,  // rank levels by baseline-group outcome rate, then monotone transport
  declared,   // treat the declared level order as meaningful
  none,       // 0-1 cost transport
};

struct AdapterConfig {
  std::optional<std::string> baseline_level;  // unset: dataset baseline, or first level of a binary attribute
  ForestParams forest;
  std::uint64_t seed = 0;
  CategoricalOrdering categorical_ordering = CategoricalOrdering::automatic;
  std::size_t threads = 0;
  double transport_exponent = 2.0;
};

/// Ranking of the levels of an unordered column.
struct CategoricalOrder {
  std::vector<std::size_t> rank;   // level index -> 0-based rank
  std::vector<std::size_t> order;  // rank -> level index
  std::vector<double> rates;       // baseline-group positive rate per level (fallback applied)
  std::vector<std::string> warnings;
  bool monotone_in_other_groups = true;
};

/// Orders levels by P(outcome = 1 | level, A = baseline) ascending; ties by
/// level frequency ascending, then by label. Levels absent from the baseline
/// group use their overall rate; levels absent altogether use the overall
/// outcome rate. Also checks whether the non-baseline groups show the same
/// monotone ordering.
inline CategoricalOrder order_categorical(const ColumnSpec& column, const std::vector<double>& values,
                                          const std::vector<double>& outcome, const std::vector<double>& attr,
                                          double baseline) {
  const std::size_t K = column.levels.size();
  if (values.size() != outcome.size() || values.size() != attr.size())
    throw ValidationError("order_categorical: input lengths differ");
  for (double y : outcome)
    if (y != 0.0 && y != 1.0) throw ValidationError("order_categorical: outcome must be binary");
  std::vector<double> base_pos(K, 0), base_n(K, 0), all_pos(K, 0), all_n(K, 0), oth_pos(K, 0), oth_n(K, 0);
  double total_pos = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto l = static_cast<std::size_t>(values[i]);
    all_n[l] += 1;
    all_pos[l] += outcome[i];
    total_pos += outcome[i];
    if (attr[i] == baseline) {
      base_n[l] += 1;
      base_pos[l] += outcome[i];
    } else {
      oth_n[l] += 1;
      oth_pos[l] += outcome[i];
    }
  }
  CategoricalOrder out;
  out.rates.resize(K);
  const double overall = values.empty() ? 0.0 : total_pos / static_cast<double>(values.size());
  for (std::size_t l = 0; l < K; ++l) {
    if (base_n[l] > 0) {
      out.rates[l] = base_pos[l] / base_n[l];
    } else if (all_n[l] > 0) {
      out.rates[l] = all_pos[l] / all_n[l];
      out.warnings.push_back("level '" + column.levels[l] + "' of '" + column.name +
                             "' is absent from the baseline group; using its overall rate");
    } else {
      out.rates[l] = overall;
      out.warnings.push_back("level '" + column.levels[l] + "' of '" + column.name +
                             "' never occurs; using the overall outcome rate");
    }
  }
  out.order.resize(K);
  std::iota(out.order.begin(), out.order.end(), 0);
  std::sort(out.order.begin(), out.order.end(), [&](std::size_t a, std::size_t b) {
    if (out.rates[a] != out.rates[b]) return out.rates[a] < out.rates[b];
    if (all_n[a] != all_n[b]) return all_n[a] < all_n[b];
    return column.levels[a] < column.levels[b];
  });
  out.rank.resize(K);
  for (std::size_t r = 0; r < K; ++r) out.rank[out.order[r]] = r;

  double prev = -1.0;
  for (auto l : out.order) {
    if (oth_n[l] == 0) continue;
    const double rate = oth_pos[l] / oth_n[l];
    if (rate < prev) out.monotone_in_other_groups = false;
    prev = rate;
  }
  return out;
}

/// Per-variable estimator.
struct VariableModel {
  std::string name;
  ColumnKind kind = ColumnKind::continuous;
  std::vector<std::string> predictors;   // pa(V), lexicographic
  std::vector<bool> predictor_adapted;   // predictor enters with its adapted value
  PredictorSchema schema;
  std::optional<QuantileForest> quantile_forest;
  std::optional<ProbabilityForest> probability_forest;
  CostKind cost = CostKind::lp;
  std::vector<std::size_t> rank;   // level -> transport position
  std::vector<std::size_t> order;  // transport position -> level
};

struct AdaptationOutput {
  Dataset data;
  /// Per adapted variable and row: the latent quantile for continuous
  /// variables, the transport randomization draw for discrete ones. Baseline
  /// rows hold the value computed from the fitted model as well.
  std::map<std::string, std::vector<double>> quantiles;
  std::size_t zero_mass_fallbacks = 0;
};

namespace detail {

enum class Domain : std::uint64_t { train = 101, test = 102 };

inline bool outcome_binary(const Dataset& data, const std::string& outcome) {
  if (!data.has(outcome)) return false;
  const auto& c = data.column(outcome);
  return is_discrete(c.kind()) && c.spec.levels.size() == 2;
}

}  // namespace detail

class FittedAdapter {
 public:
  const CausalGraph& graph() const { return graph_; }
  const AdapterConfig& config() const { return config_; }
  const std::string& baseline() const { return baseline_; }
  double baseline_index() const { return baseline_index_; }
  const std::vector<VariableModel>& models() const { return models_; }
  const std::vector<std::string>& warnings() const { return warnings_; }
  const std::vector<std::string>& diagnostics() const { return diagnostics_; }
  const AdaptationOutput& train_output() const { return train_; }
  const Dataset& adapted_train() const { return train_.data; }
  std::size_t zero_mass_fallbacks() const { return train_.zero_mass_fallbacks; }
  const Metadata& schema() const { return schema_; }

  const VariableModel* model(std::string_view name) const {
    for (const auto& m : models_)
      if (m.name == name) return &m;
    return nullptr;
  }

  /// Adapts held-out covariates with the fitted estimators. The outcome, if
  /// present, is copied through unchanged.
  AdaptationOutput adapt(const Dataset& test) const {
    check_schema(test);
    check_levels_seen(test);
    return transform(test, detail::Domain::test);
  }

  nlohmann::json summary() const {
    nlohmann::json j;
    j["baseline"] = baseline_;
    j["seed"] = config_.seed;
    j["forest"] = {{"num_trees", config_.forest.num_trees},
                   {"min_node_size", config_.forest.min_node_size},
                   {"bootstrap_fraction", config_.forest.bootstrap_fraction}};
    if (config_.forest.features_per_split) j["forest"]["features_per_split"] = *config_.forest.features_per_split;
    j["resolving"] = graph_.resolving();
    j["variables"] = nlohmann::json::array();
    for (const auto& m : models_) {
      nlohmann::json v;
      v["name"] = m.name;
      v["kind"] = to_string(m.kind);
      v["predictors"] = m.predictors;
      std::vector<std::string> adapted;
      for (std::size_t k = 0; k < m.predictors.size(); ++k)
        if (m.predictor_adapted[k]) adapted.push_back(m.predictors[k]);
      v["adapted_predictors"] = adapted;
      if (is_discrete(m.kind)) {
        v["transport_cost"] = m.cost == CostKind::lp ? "lp" : "zero_one";
        const auto& levels = schema_.find(m.name)->levels;
        std::vector<std::string> ordered;
        for (auto l : m.order) ordered.push_back(levels[l]);
        v["level_order"] = ordered;
      }
      j["variables"].push_back(std::move(v));
    }
    j["warnings"] = warnings_;
    j["diagnostics"] = diagnostics_;
    j["zero_mass_fallbacks"] = train_.zero_mass_fallbacks;
    return j;
  }

 private:
  friend FittedAdapter fit_adapter(const Dataset&, const CausalGraph&, const AdapterConfig&);

  void check_schema(const Dataset& data) const {
    for (const auto& node : graph_.nodes()) {
      if (!data.has(node)) {
        if (node == graph_.outcome()) continue;
        throw ValidationError("adapt: missing column for graph node '" + node + "'");
      }
      const auto& spec = data.column(node).spec;
      const auto* expected = schema_.find(node);
      if (spec.kind != expected->kind || spec.levels != expected->levels)
        throw ValidationError("adapt: column '" + node + "' does not match the training schema");
    }
  }

  void check_levels_seen(const Dataset& data) const {
    for (const auto& node : graph_.nodes()) {
      if (!data.has(node) || node == graph_.outcome()) continue;
      const auto& c = data.column(node);
      if (!is_discrete(c.kind())) continue;
      const auto& seen = seen_levels_.at(node);
      for (std::size_t i = 0; i < data.rows(); ++i) {
        if (!seen[c.level(i)])
          throw ValidationError("adapt: level '" + c.label(i) + "' of column '" + node + "' (row " +
                                std::to_string(i + 1) + ") was not seen in training");
      }
    }
  }

  AdaptationOutput transform(const Dataset& data, detail::Domain domain) const {
    AdaptationOutput out;
    out.data = data;
    const auto& a_name = graph_.protected_attribute();
    const auto& attr = data.column(a_name).values;
    for (auto& v : out.data.column(a_name).values) v = baseline_index_;

    const auto dom = static_cast<std::uint64_t>(domain);
    std::atomic<std::size_t> fallbacks{0};
    for (const auto& m : models_) {
      if (domain == detail::Domain::test && m.name == graph_.outcome()) continue;
      for (const auto& p : m.predictors)
        if (p == graph_.outcome() && !data.has(p))
          throw ValidationError("adapt: '" + m.name + "' depends on the outcome, which is unavailable");

      const auto& observed = data.column(m.name).values;
      auto& target = out.data.column(m.name).values;
      auto& quant = out.quantiles[m.name];
      quant.assign(data.rows(), 0.0);
      const auto var_tag = rng::hash_name(m.name);

      std::vector<const std::vector<double>*> obs_cols, ft_cols;
      for (std::size_t k = 0; k < m.predictors.size(); ++k) {
        obs_cols.push_back(&data.column(m.predictors[k]).values);
        ft_cols.push_back(m.predictor_adapted[k] ? &out.data.column(m.predictors[k]).values : obs_cols.back());
      }

      auto context = [&](const std::vector<const std::vector<double>*>& cols, std::size_t i) {
        std::vector<double> x(cols.size());
        for (std::size_t k = 0; k < cols.size(); ++k) x[k] = (*cols[k])[i];
        return x;
      };
      // Conditional distributions for contexts that occur more than once are
      // built once up front; the rest are built per row.
      using Distribution = QuantileForest::Distribution;
      std::map<std::vector<double>, std::size_t> shared_ids;
      std::vector<Distribution> shared;
      if (m.quantile_forest) {
        std::map<std::vector<double>, std::size_t> uses;
        for (std::size_t i = 0; i < data.rows(); ++i) {
          auto x_obs = context(obs_cols, i), x_ft = context(ft_cols, i);
          if (attr[i] != baseline_index_ && x_ft != x_obs) ++uses[std::move(x_ft)];
          ++uses[std::move(x_obs)];
        }
        std::vector<const std::vector<double>*> keys;
        for (const auto& [x, c] : uses)
          if (c > 1) {
            shared_ids.emplace(x, keys.size());
            keys.push_back(&x);
          }
        shared.resize(keys.size());
        parallel_for(keys.size(), config_.threads, [&](std::size_t k) {
          shared[k] = m.quantile_forest->distribution(m.quantile_forest->leaves(*keys[k]));
        });
      }
      auto with_distribution = [&](const std::vector<double>& x, auto&& fn) {
        if (auto it = shared_ids.find(x); it != shared_ids.end()) return fn(shared[it->second]);
        return fn(m.quantile_forest->distribution(m.quantile_forest->leaves(x)));
      };

      parallel_for(data.rows(), config_.threads, [&](std::size_t i) {
        const auto x_obs = context(obs_cols, i), x_ft = context(ft_cols, i);
        const bool is_base = attr[i] == baseline_index_;
        if (m.quantile_forest) {
          const double jitter =
              rng::uniform(config_.seed, {dom, var_tag, rng::tag(rng::Purpose::jitter), static_cast<std::uint64_t>(i)});
          const double u = with_distribution(x_obs, [&](const Distribution& d) { return d.cdf(observed[i], jitter); });
          quant[i] = u;
          if (is_base || x_ft == x_obs) return;
          target[i] = with_distribution(x_ft, [&](const Distribution& d) { return d.quantile(u); });
        } else {
          const double u = rng::uniform(config_.seed, {dom, var_tag, rng::tag(rng::Purpose::transport_sample),
                                                       static_cast<std::uint64_t>(i)});
          quant[i] = u;
          if (is_base || x_ft == x_obs) return;
          const auto reorder = [&](const std::vector<double>& p) {
            std::vector<double> q(p.size());
            for (std::size_t l = 0; l < p.size(); ++l) q[m.rank[l]] = p[l];
            return q;
          };
          const auto source = reorder(m.probability_forest->predict(x_obs));
          const auto dest = reorder(m.probability_forest->predict(x_ft));
          const auto plan = m.cost == CostKind::lp ? solve_monotone(source, dest, config_.transport_exponent)
                                                   : solve_zero_one(source, dest);
          std::size_t pos = m.rank[static_cast<std::size_t>(observed[i])];
          std::vector<double> dist;
          if (source[pos] > 0.0) {
            dist = counterfactual_distribution(plan, pos);
          } else {
            ++fallbacks;
            if (m.cost == CostKind::lp) {
              // Nearest transport position with positive observed-group mass; ties go down.
              std::size_t best = pos;
              for (std::size_t d = 1; d < source.size(); ++d) {
                if (pos >= d && source[pos - d] > 0.0) {
                  best = pos - d;
                  break;
                }
                if (pos + d < source.size() && source[pos + d] > 0.0) {
                  best = pos + d;
                  break;
                }
              }
              dist = counterfactual_distribution(plan, best);
            } else {
              dist.assign(dest.size(), 0.0);
              double cnt = 0.0;
              for (double v : dest) cnt += v > 0.0 ? 1.0 : 0.0;
              for (std::size_t l = 0; l < dest.size(); ++l) dist[l] = dest[l] > 0.0 ? 1.0 / cnt : 0.0;
            }
          }
          target[i] = static_cast<double>(m.order[sample_counterfactual(dist, u)]);
        }
      });
    }
    out.zero_mass_fallbacks = fallbacks.load();
    return out;
  }

  CausalGraph graph_{std::vector<std::string>{"A", "Y"}, {}, "A", "Y"};
  AdapterConfig config_;
  Metadata schema_;
  std::string baseline_;
  double baseline_index_ = 0.0;
  std::vector<VariableModel> models_;
  std::map<std::string, std::vector<bool>> seen_levels_;
  std::vector<std::string> warnings_;
  std::vector<std::string> diagnostics_;
  AdaptationOutput train_;
};

/// Baseline label: the configured one, else the dataset's, else the first
/// level when the attribute is binary.
inline std::string resolve_baseline(const ColumnSpec& attribute, const std::optional<std::string>& configured,
                                    const std::optional<std::string>& from_data) {
  std::optional<std::string> b = configured ? configured : from_data;
  if (!b) {
    if (attribute.levels.size() > 2)
      throw ValidationError("baseline required: protected attribute '" + attribute.name + "' has " +
                            std::to_string(attribute.levels.size()) + " levels");
    b = attribute.levels.front();
  }
  auto idx = attribute.level_index(*b);
  if (!idx) throw ValidationError("baseline '" + *b + "' is not a level of '" + attribute.name + "'");
  return attribute.levels[*idx];
}

/// Fits estimators for every variable in de(A) \ R on the training data and
/// adapts the training set, outcome included.
inline FittedAdapter fit_adapter(const Dataset& train, const CausalGraph& graph, const AdapterConfig& config) {
  if (!train.has(graph.outcome())) throw ValidationError("adapt: training data needs the outcome column");
  for (const auto& node : graph.nodes())
    if (!train.has(node)) throw ValidationError("adapt: missing column for graph node '" + node + "'");
  config.forest.validate();

  FittedAdapter fa;
  fa.graph_ = graph;
  fa.config_ = config;
  fa.schema_ = train.metadata();
  const auto& a_col = train.column(graph.protected_attribute());
  fa.baseline_ = resolve_baseline(a_col.spec, config.baseline_level, train.baseline());
  fa.baseline_index_ = static_cast<double>(*a_col.spec.level_index(fa.baseline_));
  fa.schema_.baseline = fa.baseline_;
  for (const auto& w : graph.warnings()) fa.warnings_.push_back(w);

  for (const auto& c : train.columns()) {
    if (!is_discrete(c.kind())) continue;
    std::vector<bool> seen(c.spec.levels.size(), false);
    for (std::size_t i = 0; i < train.rows(); ++i) seen[c.level(i)] = true;
    fa.seen_levels_[c.name()] = std::move(seen);
  }

  const std::size_t n = train.rows();
  for (const auto& v : graph.adaptation_targets()) {
    VariableModel m;
    m.name = v;
    const auto& col = train.column(v);
    m.kind = col.kind();
    m.predictors = graph.parents(v);
    for (const auto& p : m.predictors) {
      m.predictor_adapted.push_back(graph.in_aps(v, p));
      const auto& pc = train.column(p);
      m.schema.categories.push_back(pc.kind() == ColumnKind::categorical_unordered ? pc.spec.levels.size() : 0);
    }
    Matrix X(n, m.predictors.size());
    for (std::size_t k = 0; k < m.predictors.size(); ++k) {
      const auto& pv = train.column(m.predictors[k]).values;
      for (std::size_t i = 0; i < n; ++i) X(i, k) = pv[i];
    }
    auto params = config.forest;
    params.seed = rng::combine(config.seed, rng::hash_name(v));
    if (params.num_threads == 0) params.num_threads = config.threads;

    try {
      if (m.kind == ColumnKind::continuous) {
        m.quantile_forest = QuantileForest::fit(X, col.values, m.schema, params);
      } else {
        const std::size_t K = col.spec.levels.size();
        std::vector<std::size_t> labels(n);
        for (std::size_t i = 0; i < n; ++i) labels[i] = col.level(i);
        m.probability_forest = ProbabilityForest::fit(X, labels, K, m.schema, params);
        m.rank.resize(K);
        std::iota(m.rank.begin(), m.rank.end(), 0);
        m.order = m.rank;
        if (m.kind == ColumnKind::categorical_unordered) {
          auto mode = config.categorical_ordering;
          if (mode == CategoricalOrdering::automatic &&
              (v == graph.outcome() || !detail::outcome_binary(train, graph.outcome()))) {
            fa.warnings_.push_back("'" + v + "': outcome-rate ordering needs a binary outcome; using 0-1 transport");
            mode = CategoricalOrdering::none;
          }
          if (mode == CategoricalOrdering::none) {
            m.cost = CostKind::zero_one;
          } else if (mode == CategoricalOrdering::automatic) {
            auto ord = order_categorical(col.spec, col.values, train.column(graph.outcome()).values, a_col.values,
                                         fa.baseline_index_);
            m.rank = ord.rank;
            m.order = ord.order;
            for (auto& w : ord.warnings) fa.warnings_.push_back(std::move(w));
            if (!ord.monotone_in_other_groups)
              fa.diagnostics_.push_back("'" + v +
                                        "': outcome rates of the non-baseline groups are not monotone in the "
                                        "baseline-group level order");
          }
        }
      }
    } catch (const Error& e) {
      throw NumericalError("estimating '" + v + "': " + e.what());
    }
    fa.models_.push_back(std::move(m));
  }

  fa.train_ = fa.transform(train, detail::Domain::train);
  if (fa.train_.zero_mass_fallbacks > 0)
    fa.warnings_.push_back(std::to_string(fa.train_.zero_mass_fallbacks) +
                           " training rows had a zero-probability observed level; used the fallback coupling");
  return fa;
}

inline std::pair<FittedAdapter, Dataset> fit_and_adapt(const Dataset& train, const CausalGraph& graph,
                                                       const AdapterConfig& config) {
  auto fa = fit_adapter(train, graph, config);
  auto adapted = fa.adapted_train();
  return {std::move(fa), std::move(adapted)};
}

inline Dataset adapt_test(const FittedAdapter& adapter, const Dataset& test) { return adapter.adapt(test).data; }

}  // namespace fairadapt
