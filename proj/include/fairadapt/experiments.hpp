#pragma once

// Seeded simulation experiments over the builtin models: fairness/accuracy
// trade-offs across resolving sets, the resolver-induced gap demo, and the
// probability-versus-class gap demo.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fairadapt/error.hpp"
#include "fairadapt/fair_adapter.hpp"
#include "fairadapt/fairness_metrics.hpp"
#include "fairadapt/parallel.hpp"
#include "fairadapt/predictors.hpp"
#include "fairadapt/random.hpp"
#include "fairadapt/sem_lab.hpp"

namespace fairadapt {

struct ExperimentOptions {
  std::size_t n_train = 5000;
  std::size_t n_test = 5000;
  std::size_t repeats = 10;
  std::size_t monte_carlo = 100000;
  std::uint64_t seed = 1;
  TrainingOption option = TrainingOption::b;
  ModelKind model = ModelKind::logistic;
  std::size_t calibration_k = 10;
  std::size_t threads = 0;
  ForestParams forest;

  nlohmann::ordered_json to_json() const {
    return {{"n_train", n_train},
            {"n_test", n_test},
            {"repeats", repeats},
            {"monte_carlo", monte_carlo},
            {"seed", seed},
            {"training_option", option == TrainingOption::a ? "a" : "b"},
            {"calibration_k", calibration_k},
            {"num_trees", forest.num_trees},
            {"min_node_size", forest.min_node_size}};
  }
};

struct ExperimentRow {
  std::string label;
  std::vector<std::string> resolving;
  // metric -> one value per repeat
  std::map<std::string, std::vector<double>> values;

  double mean(const std::string& metric) const {
    const auto& v = values.at(metric);
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
  }
  double sd(const std::string& metric) const {
    const auto& v = values.at(metric);
    if (v.size() < 2) return 0.0;
    const double m = mean(metric);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size() - 1));
  }
};

struct ExperimentResult {
  std::string name;
  std::vector<std::string> metrics;  // column order
  std::vector<ExperimentRow> rows;

  const ExperimentRow& row(const std::string& label) const {
    for (const auto& r : rows)
      if (r.label == label) return r;
    throw ValidationError("experiment " + name + ": no row '" + label + "'");
  }

  /// sqrt of the mean of two rows' variances.
  double pooled_sd(const ExperimentRow& a, const ExperimentRow& b, const std::string& metric) const {
    return std::sqrt((a.sd(metric) * a.sd(metric) + b.sd(metric) * b.sd(metric)) / 2.0);
  }

  std::string to_csv() const {
    std::string out = "label,resolving,repeats";
    for (const auto& m : metrics) out += "," + m + "_mean," + m + "_sd";
    out += "\n";
    for (const auto& r : rows) {
      std::string res;
      for (const auto& v : r.resolving) res += (res.empty() ? "" : ";") + v;
      out += r.label + "," + res + "," + std::to_string(r.values.at(metrics.front()).size());
      for (const auto& m : metrics) out += "," + format_double(r.mean(m)) + "," + format_double(r.sd(m));
      out += "\n";
    }
    return out;
  }
};

namespace detail {

inline std::string set_label(const std::vector<std::string>& s) {
  if (s.empty()) return "none";
  std::string out;
  for (const auto& v : s) out += (out.empty() ? "" : "+") + v;
  return out;
}

inline std::uint64_t repeat_seed(std::uint64_t seed, std::size_t r, std::uint64_t part) {
  return rng::key(seed, {rng::tag(rng::Purpose::experiment), static_cast<std::uint64_t>(r), part});
}

// Fits the adapter and downstream model on one simulated train/test draw.
struct PipelineRun {
  FittedAdapter adapter;
  Predictor predictor;
  Dataset test;
  Dataset adapted_test;
  std::vector<double> predictions;
};

inline PipelineRun run_pipeline(const Sem& sem, const std::set<std::string>& resolving, const ExperimentOptions& o,
                                std::size_t r, std::optional<std::string> baseline = std::nullopt) {
  const auto graph = sem.graph().with_resolving(resolving);
  const auto train_s = sem.sample(o.n_train, repeat_seed(o.seed, r, 1));
  auto test_s = sem.sample(o.n_test, repeat_seed(o.seed, r, 2));
  AdapterConfig cfg;
  cfg.seed = repeat_seed(o.seed, r, 3);
  cfg.forest = o.forest;
  cfg.forest.num_threads = 1;
  cfg.threads = 1;
  cfg.baseline_level = std::move(baseline);
  auto adapter = fit_adapter(train_s.data, graph, cfg);
  TrainSettings settings;
  settings.forest = cfg.forest;
  auto predictor = train(o.option, adapter, train_s.data, adapter.adapted_train(), o.model, settings);
  auto adapted_test = adapter.adapt(test_s.data).data;
  auto predictions = predictor.predict(adapted_test);
  return {std::move(adapter), std::move(predictor), std::move(test_s.data), std::move(adapted_test),
          std::move(predictions)};
}

// Runs body(row, repeat) for every pair, in parallel, collecting metrics.
template <class Body>
ExperimentResult run_grid(std::string name, std::vector<std::string> metrics,
                          const std::vector<std::pair<std::string, std::vector<std::string>>>& rows,
                          const ExperimentOptions& o, Body&& body) {
  if (o.repeats == 0) throw ValidationError("experiment: repeats must be positive");
  ExperimentResult res{std::move(name), std::move(metrics), {}};
  std::vector<std::map<std::string, double>> cells(rows.size() * o.repeats);
  parallel_for(cells.size(), o.threads, [&](std::size_t job) {
    cells[job] = body(job / o.repeats, job % o.repeats);
  });
  for (std::size_t i = 0; i < rows.size(); ++i) {
    ExperimentRow row{rows[i].first, rows[i].second, {}};
    for (std::size_t r = 0; r < o.repeats; ++r)
      for (const auto& m : res.metrics) row.values[m].push_back(cells[i * o.repeats + r].at(m));
    res.rows.push_back(std::move(row));
  }
  return res;
}

inline std::map<std::string, double> eval_metrics(const PipelineRun& run, const ExperimentOptions& o) {
  const auto& attr = run.test.column(run.adapter.graph().protected_attribute()).values;
  const auto& y = run.test.column(run.adapter.graph().outcome()).values;
  const auto rep = evaluate(run.predictions, y, attr, o.calibration_k, run.adapter.baseline_index());
  return {{"auc", rep.auc},
          {"accuracy", rep.accuracy},
          {"parity_gap", rep.parity_gap},
          {"parity_gap_expected", rep.parity_gap_expected},
          {"calibration", rep.calibration_score}};
}

inline ExperimentResult tradeoff(std::string name, const Sem& sem,
                                 const std::vector<std::vector<std::string>>& resolving_sets,
                                 const ExperimentOptions& o) {
  std::vector<std::pair<std::string, std::vector<std::string>>> rows;
  for (const auto& s : resolving_sets) rows.emplace_back(set_label(s), s);
  return run_grid(std::move(name), {"auc", "parity_gap", "calibration", "accuracy", "parity_gap_expected"}, rows, o,
                  [&](std::size_t i, std::size_t r) {
                    const std::set<std::string> res(rows[i].second.begin(), rows[i].second.end());
                    return eval_metrics(run_pipeline(sem, res, o, r), o);
                  });
}

}  // namespace detail

/// Synthetic A over the nested resolving sets {}, {X1}, ..., {X1..X5}.
inline ExperimentResult tradeoff_a(const ExperimentOptions& o = {}) {
  std::vector<std::vector<std::string>> sets{{}};
  for (int i = 1; i <= 5; ++i) {
    auto s = sets.back();
    s.push_back("X" + std::to_string(i));
    sets.push_back(std::move(s));
  }
  return detail::tradeoff("tradeoff_a", builtin("synthetic_a"), sets, o);
}

/// Synthetic B over every subset of {X1, X2, X3}.
inline ExperimentResult tradeoff_b(const ExperimentOptions& o = {}) {
  const std::vector<std::string> vars{"X1", "X2", "X3"};
  std::vector<std::vector<std::string>> sets;
  for (unsigned mask = 0; mask < 8; ++mask) {
    std::vector<std::string> s;
    for (unsigned b = 0; b < 3; ++b)
      if (mask & (1u << b)) s.push_back(vars[b]);
    sets.push_back(std::move(s));
  }
  std::stable_sort(sets.begin(), sets.end(), [](const auto& a, const auto& b) { return a.size() < b.size(); });
  return detail::tradeoff("tradeoff_b", builtin("synthetic_b"), sets, o);
}

/// Linear model with resolver R on the ripg_example SEM. Rows: the predictor
/// fitted on adapted data and the one fitted on the original data. Metrics:
/// expected-probability gap, the resolver-induced bound, and the natural
/// direct effect. All three are expectations over the SEM, estimated on
/// monte_carlo fresh draws rather than the test split.
inline ExperimentResult ripg_demo(const ExperimentOptions& o = {}) {
  const auto sem = builtin("ripg_example");
  const std::set<std::string> resolving{"R"};
  const std::vector<std::pair<std::string, std::vector<std::string>>> rows{{"adapted", {"R"}}, {"unadapted", {"R"}}};
  auto opts = o;
  opts.model = ModelKind::linear;
  const double base = 0.0;
  return detail::run_grid(
      "ripg_demo", {"expected_gap", "ripg_bound", "nde"}, rows, opts, [&](std::size_t i, std::size_t r) {
        const auto mc_seed = detail::repeat_seed(opts.seed, r, 4);
        const auto draws = sem.sample(opts.monte_carlo, detail::repeat_seed(opts.seed, r, 6)).data;
        const auto& attr = draws.column("A").values;
        std::map<std::string, double> m;
        m["ripg_bound"] = sem.ripg_bound(resolving, base, opts.monte_carlo, mc_seed);
        BatchPredictor predict;
        std::optional<detail::PipelineRun> run;
        std::optional<Predictor> plain;
        if (i == 0) {
          run.emplace(detail::run_pipeline(sem, resolving, opts, r));
          predict = [&](const Dataset& d) { return run->predictor.predict(run->adapter.adapt(d).data); };
        } else {
          const auto& g = sem.graph();
          const FeatureEncoder enc(sem.metadata(), g.protected_attribute(), g.outcome());
          const auto train_s = sem.sample(opts.n_train, detail::repeat_seed(opts.seed, r, 1));
          plain.emplace(Predictor::fit(ModelKind::linear, enc, train_s.data, g.outcome(), TrainSettings{}));
          predict = [&](const Dataset& d) { return plain->predict(d); };
        }
        m["expected_gap"] = parity_gap_expected(predict(draws), attr, base);
        m["nde"] = nde_estimate(sem, predict, base, resolving, opts.monte_carlo, mc_seed);
        return m;
      });
}

/// Exact population adaptation of the appendix_b SEM with X2 resolving and
/// the A = 1 group as baseline; scores the optimal probability predictor
/// E[FT(Y) | FT(X1), X2] = expit(FT(X1) + X2) and its 0.5-thresholded class
/// version on monte_carlo draws per repeat.
inline ExperimentResult appendix_b_demo(const ExperimentOptions& o = {}) {
  const auto sem = builtin("appendix_b");
  const std::vector<std::pair<std::string, std::vector<std::string>>> rows{{"optimal", {"X2"}}};
  return detail::run_grid("appendix_b_demo", {"expected_gap", "class_gap"}, rows, o, [&](std::size_t, std::size_t r) {
    const double baseline = 1.0;
    const auto s = sem.sample(o.monte_carlo, detail::repeat_seed(o.seed, r, 5));
    const auto ft = sem.oracle_adapt(s, {"X2"}, baseline);
    const auto& x1 = ft.column("X1").values;
    const auto& x2 = ft.column("X2").values;
    std::vector<double> p(x1.size());
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = expit(x1[i] + x2[i]);
    const auto& attr = s.data.column("A").values;
    // Gap is group A = 0 minus group A = 1, whichever group is the baseline.
    return std::map<std::string, double>{{"expected_gap", parity_gap_expected(p, attr, 0.0)},
                                         {"class_gap", parity_gap(p, attr, 0.0)}};
  });
}

inline std::vector<std::string> experiment_names() { return {"tradeoff_a", "tradeoff_b", "ripg_demo", "appendix_b_demo"}; }

inline ExperimentResult run_experiment(const std::string& name, const ExperimentOptions& o) {
  if (name == "tradeoff_a") return tradeoff_a(o);
  if (name == "tradeoff_b") return tradeoff_b(o);
  if (name == "ripg_demo") return ripg_demo(o);
  if (name == "appendix_b_demo") return appendix_b_demo(o);
  throw ValidationError("unknown experiment '" + name + "'");
}

}  // namespace fairadapt
