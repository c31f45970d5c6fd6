#pragma once

// The fairadapt command line: subcommands adapt, evaluate, simulate,
// experiment, preprocess and replay. Every run writes manifest.json next to
// its outputs with SHA-256 digests of inputs and outputs; `replay` re-runs a
// manifest and compares digests.
//
// Exit codes: 0 success, 1 validation failure, 2 numerical failure.

#include <openssl/evp.h>

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "fairadapt/causal_graph.hpp"
#include "fairadapt/error.hpp"
#include "fairadapt/experiments.hpp"
#include "fairadapt/fair_adapter.hpp"
#include "fairadapt/fairness_metrics.hpp"
#include "fairadapt/predictors.hpp"
#include "fairadapt/preprocess.hpp"
#include "fairadapt/sem_lab.hpp"
#include "fairadapt/tabular_data.hpp"

namespace fairadapt::cli {

inline constexpr const char* kVersion = "0.1.0";

namespace fs = std::filesystem;

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot read '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError("cannot write '" + path.string() + "'");
  out << content;
  if (!out) throw ValidationError("write failed for '" + path.string() + "'");
}

inline std::string sha256_hex(std::string_view bytes) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md.data(), &len, EVP_sha256(), nullptr) != 1)
    throw NumericalError("sha256 failed");
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[md[i] >> 4]);
    out.push_back(hex[md[i] & 15]);
  }
  return out;
}

struct RunManifest {
  std::string tool = "fairadapt";
  std::string version = kVersion;
  std::string subcommand;
  std::vector<std::string> args;  // replayable, with absolute input paths and without --out-dir
  nlohmann::ordered_json config = nlohmann::ordered_json::object();
  std::map<std::string, std::string> inputs;   // path -> sha256
  std::map<std::string, std::string> outputs;  // file name within the output directory -> sha256

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["tool"] = tool;
    j["version"] = version;
    j["subcommand"] = subcommand;
    j["args"] = args;
    j["config"] = config;
    j["inputs"] = inputs;
    j["outputs"] = outputs;
    return j;
  }
  static RunManifest from_json(const nlohmann::json& j) {
    RunManifest m;
    try {
      m.tool = j.at("tool").get<std::string>();
      m.version = j.at("version").get<std::string>();
      m.subcommand = j.at("subcommand").get<std::string>();
      m.args = j.at("args").get<std::vector<std::string>>();
      m.config = j.at("config");
      m.inputs = j.at("inputs").get<std::map<std::string, std::string>>();
      m.outputs = j.at("outputs").get<std::map<std::string, std::string>>();
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(std::string("manifest: ") + e.what());
    }
    return m;
  }
};

/// Collects outputs of one run and their digests.
class OutputDir {
 public:
  OutputDir(fs::path dir, RunManifest& manifest) : dir_(std::move(dir)), manifest_(manifest) {}

  void write(const std::string& name, const std::string& content) {
    write_file(dir_ / name, content);
    manifest_.outputs[name] = sha256_hex(content);
  }
  std::string input(const std::string& path) {
    auto text = read_file(path);
    manifest_.inputs[fs::absolute(path).lexically_normal().string()] = sha256_hex(text);
    return text;
  }
  void finish() { write_file(dir_ / "manifest.json", manifest_.to_json().dump(2) + "\n"); }
  const fs::path& dir() const { return dir_; }

 private:
  fs::path dir_;
  RunManifest& manifest_;
};

namespace detail {

inline const std::set<std::string>& path_flags() {
  static const std::set<std::string> flags{"--graph", "--meta",   "--train",       "--test",  "--aps",
                                           "--recipe", "--input", "--predictions", "--data"};
  return flags;
}

// Absolute input paths, --out-dir dropped.
inline std::vector<std::string> replayable_args(const std::vector<std::string>& args) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < args.size(); ++i) {
    std::string a = args[i];
    std::string flag = a, value;
    const auto eq = a.find('=');
    const bool inline_value = a.rfind("--", 0) == 0 && eq != std::string::npos;
    if (inline_value) {
      flag = a.substr(0, eq);
      value = a.substr(eq + 1);
    }
    if (flag == "--out-dir") {
      if (!inline_value) ++i;
      continue;
    }
    if (path_flags().count(flag)) {
      if (inline_value) {
        out.push_back(flag + "=" + fs::absolute(value).lexically_normal().string());
      } else {
        out.push_back(a);
        if (i + 1 < args.size()) out.push_back(fs::absolute(args[++i]).lexically_normal().string());
      }
      continue;
    }
    out.push_back(a);
  }
  return out;
}

inline std::set<std::string> split_list(const std::vector<std::string>& items) {
  std::set<std::string> out;
  for (const auto& item : items) {
    std::string cur;
    for (char c : item + ",") {
      if (c == ',') {
        if (!cur.empty()) out.insert(cur);
        cur.clear();
      } else if (c != ' ') {
        cur.push_back(c);
      }
    }
  }
  return out;
}

inline std::string quantile_csv(const Dataset& data, const std::map<std::string, std::vector<double>>& quantiles,
                                const CausalGraph& graph) {
  csv::Table t;
  std::vector<const std::vector<double>*> cols;
  for (const auto& v : graph.topological_order()) {
    auto it = quantiles.find(v);
    if (it == quantiles.end()) continue;
    t.header.push_back("U_" + v);
    cols.push_back(&it->second);
  }
  t.rows.resize(data.rows());
  for (std::size_t i = 0; i < data.rows(); ++i)
    for (const auto* c : cols) t.rows[i].push_back(format_double((*c)[i]));
  return csv::write(t);
}

inline std::string column_csv(const std::string& name, const std::vector<double>& values) {
  std::string out = name + "\n";
  for (double v : values) out += format_double(v) + "\n";
  return out;
}

inline ModelKind parse_model(const std::string& s, bool binary_outcome) {
  if (s.empty()) return binary_outcome ? ModelKind::logistic : ModelKind::linear;
  if (s == "logistic") return ModelKind::logistic;
  if (s == "linear") return ModelKind::linear;
  if (s == "forest") return ModelKind::probability_forest;
  throw ValidationError("unknown model '" + s + "'");
}

inline const char* model_name(ModelKind k) {
  switch (k) {
    case ModelKind::logistic: return "logistic";
    case ModelKind::linear: return "linear";
    case ModelKind::probability_forest: return "forest";
  }
  return "";
}

}  // namespace detail

/// Cross-validated comparison of training options A and B. Each fold refits
/// the adapter on the remaining rows. Among options whose mean |expected gap|
/// is within `gap_tolerance` of the smallest, the one with the best utility
/// (AUC, or negative MSE for a continuous outcome) wins; ties go to B.
struct CvReport {
  std::size_t folds = 3;
  double gap_tolerance = 0.02;
  std::map<std::string, double> utility;
  std::map<std::string, double> abs_gap;
  TrainingOption chosen = TrainingOption::b;

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["folds"] = folds;
    j["gap_tolerance"] = gap_tolerance;
    for (const char* o : {"a", "b"}) j["options"][o] = {{"utility", utility.at(o)}, {"abs_expected_gap", abs_gap.at(o)}};
    j["chosen"] = chosen == TrainingOption::a ? "a" : "b";
    return j;
  }
};

inline CvReport cross_validate_option(const Dataset& train_data, const CausalGraph& graph, const AdapterConfig& cfg,
                                      ModelKind kind, const TrainSettings& settings, std::size_t folds = 3,
                                      double gap_tolerance = 0.02) {
  if (folds < 2) throw ValidationError("cross-validation needs at least 2 folds");
  const std::size_t n = train_data.rows();
  if (n < 2 * folds) throw ValidationError("too few rows for cross-validation");
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  auto eng = rng::engine(cfg.seed, {rng::tag(rng::Purpose::split), 0xCF});
  for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[static_cast<std::size_t>(eng() % i)]);

  CvReport rep;
  rep.folds = folds;
  rep.gap_tolerance = gap_tolerance;
  const auto& y_name = graph.outcome();
  const auto& a_name = graph.protected_attribute();
  for (const char* o : {"a", "b"}) rep.utility[o] = rep.abs_gap[o] = 0.0;
  for (std::size_t f = 0; f < folds; ++f) {
    std::vector<std::size_t> tr, va;
    for (std::size_t i = 0; i < n; ++i) (i % folds == f ? va : tr).push_back(perm[i]);
    std::sort(tr.begin(), tr.end());
    std::sort(va.begin(), va.end());
    const auto dtr = train_data.select(tr);
    const auto dva = train_data.select(va);
    const auto fa = fit_adapter(dtr, graph, cfg);
    const auto adapted_va = fa.adapt(dva).data;
    const auto& y = dva.column(y_name).values;
    const auto& attr = dva.column(a_name).values;
    for (auto opt : {TrainingOption::a, TrainingOption::b}) {
      const auto p = train(opt, fa, dtr, fa.adapted_train(), kind, settings).predict(adapted_va);
      double util;
      if (kind == ModelKind::linear) {
        double mse = 0.0;
        for (std::size_t i = 0; i < p.size(); ++i) mse += (p[i] - y[i]) * (p[i] - y[i]);
        util = -mse / static_cast<double>(p.size());
      } else {
        util = auc(p, y);
      }
      const char* key = opt == TrainingOption::a ? "a" : "b";
      rep.utility[key] += util / static_cast<double>(folds);
      rep.abs_gap[key] += std::abs(parity_gap_expected(p, attr, fa.baseline_index())) / static_cast<double>(folds);
    }
  }
  const double best_gap = std::min(rep.abs_gap["a"], rep.abs_gap["b"]);
  const bool a_ok = rep.abs_gap["a"] <= best_gap + gap_tolerance;
  const bool b_ok = rep.abs_gap["b"] <= best_gap + gap_tolerance;
  rep.chosen = (a_ok && (!b_ok || rep.utility["a"] > rep.utility["b"])) ? TrainingOption::a : TrainingOption::b;
  return rep;
}

struct ForestFlags {
  std::size_t num_trees = 100;
  std::size_t min_node_size = 5;
  std::size_t mtry = 0;
  double bootstrap_fraction = 1.0;

  void add(CLI::App* app) {
    app->add_option("--num-trees", num_trees, "Trees per forest")->capture_default_str();
    app->add_option("--min-node-size", min_node_size, "Minimum rows per leaf")->capture_default_str();
    app->add_option("--mtry", mtry, "Features tried per split (0: ceil(sqrt(p)))")->capture_default_str();
    app->add_option("--bootstrap-fraction", bootstrap_fraction, "Bootstrap sample size as a fraction of n")
        ->capture_default_str();
  }
  ForestParams params(std::uint64_t seed, std::size_t threads) const {
    ForestParams p;
    p.num_trees = num_trees;
    p.min_node_size = min_node_size;
    if (mtry) p.features_per_split = mtry;
    p.bootstrap_fraction = bootstrap_fraction;
    p.seed = seed;
    p.num_threads = threads;
    p.validate();
    return p;
  }
  nlohmann::ordered_json to_json() const {
    return {{"num_trees", num_trees},
            {"min_node_size", min_node_size},
            {"mtry", mtry},
            {"bootstrap_fraction", bootstrap_fraction}};
  }
};

struct AdaptArgs {
  std::string graph, meta, train, test, aps, baseline, training_option, model, categorical_order = "auto";
  std::vector<std::string> resolving;
  bool resolving_given = false;
  std::uint64_t seed = 0;
  std::size_t threads = 0;
  bool non_baseline = false, emit_quantiles = false, emit_model = false;
  double transport_exponent = 2.0;
  std::size_t cv_folds = 3;
  double cv_gap_tolerance = 0.02;
  ForestFlags forest;
};

inline void cmd_adapt(const AdaptArgs& a, OutputDir& out, RunManifest& manifest, std::ostream& log) {
  auto graph = CausalGraph::parse(out.input(a.graph));
  if (a.resolving_given) graph = graph.with_resolving(detail::split_list(a.resolving));
  if (!a.aps.empty()) {
    std::map<std::string, std::set<std::string>> aps;
    try {
      aps = nlohmann::json::parse(out.input(a.aps)).get<std::map<std::string, std::set<std::string>>>();
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(std::string("aps file: ") + e.what());
    }
    graph = graph.with_aps(std::move(aps));
  }
  const auto meta = Metadata::parse(out.input(a.meta));
  const auto train_data = ingest(out.input(a.train), meta, graph);
  std::optional<Dataset> test_data;
  if (!a.test.empty()) test_data = ingest(out.input(a.test), meta, graph, true);

  AdapterConfig cfg;
  if (!a.baseline.empty()) cfg.baseline_level = a.baseline;
  cfg.seed = a.seed;
  cfg.threads = a.threads;
  cfg.forest = a.forest.params(0, a.threads);
  cfg.transport_exponent = a.transport_exponent;
  if (a.categorical_order == "auto")
    cfg.categorical_ordering = CategoricalOrdering::automatic;
  else if (a.categorical_order == "declared")
    cfg.categorical_ordering = CategoricalOrdering::declared;
  else if (a.categorical_order == "none")
    cfg.categorical_ordering = CategoricalOrdering::none;
  else
    throw ValidationError("unknown categorical order '" + a.categorical_order + "'");

  const auto fa = fit_adapter(train_data, graph, cfg);
  for (const auto& w : fa.warnings()) log << "warning: " << w << "\n";

  manifest.config = {{"graph", a.graph},
                     {"meta", a.meta},
                     {"train", a.train},
                     {"test", a.test},
                     {"resolving", graph.resolving()},
                     {"baseline", fa.baseline()},
                     {"seed", a.seed},
                     {"forest", a.forest.to_json()},
                     {"categorical_order", a.categorical_order},
                     {"transport_exponent", a.transport_exponent},
                     {"training_option", a.training_option},
                     {"non_baseline", a.non_baseline}};

  out.write("train_adapted.csv", emit_csv(fa.adapted_train()));
  if (a.emit_quantiles) out.write("train_quantiles.csv", detail::quantile_csv(train_data, fa.train_output().quantiles, graph));
  std::optional<AdaptationOutput> test_out;
  if (test_data) {
    test_out = fa.adapt(*test_data);
    out.write("test_adapted.csv", emit_csv(test_out->data));
    if (a.emit_quantiles) out.write("test_quantiles.csv", detail::quantile_csv(*test_data, test_out->quantiles, graph));
  }

  nlohmann::ordered_json model;
  model["adapter"] = fa.summary();
  const bool fit_predictor = !a.training_option.empty() || a.non_baseline;
  if (fit_predictor) {
    const bool binary = fairadapt::detail::outcome_binary(train_data, graph.outcome());
    const auto kind = detail::parse_model(a.model, binary);
    TrainSettings settings;
    settings.forest = a.forest.params(rng::combine(a.seed, rng::hash_name("predictor")), a.threads);
    manifest.config["model"] = detail::model_name(kind);
    std::vector<double> predictions;
    if (a.non_baseline) {
      const auto& levels = meta.find(graph.protected_attribute())->levels;
      if (levels.size() != 2) throw ValidationError("--non-baseline needs a binary protected attribute");
      auto c0 = cfg, c1 = cfg;
      c0.baseline_level = levels[0];
      c1.baseline_level = levels[1];
      const auto w0 = fit_adapter(train_data, graph, c0);
      const auto w1 = fit_adapter(train_data, graph, c1);
      const auto nb = NonBaselinePredictor::fit(w0, w1, kind, settings);
      model["predictor"] = {{"kind", detail::model_name(kind)}, {"non_baseline", true}};
      if (test_data) predictions = nb.predict(*test_data);
    } else {
      TrainingOption option = TrainingOption::b;
      if (a.training_option == "a") {
        option = TrainingOption::a;
      } else if (a.training_option == "cv") {
        const auto rep = cross_validate_option(train_data, graph, cfg, kind, settings, a.cv_folds, a.cv_gap_tolerance);
        option = rep.chosen;
        out.write("cv_report.json", rep.to_json().dump(2) + "\n");
        log << "cross-validation chose option " << (option == TrainingOption::a ? "a" : "b") << "\n";
      } else if (a.training_option != "b") {
        throw ValidationError("unknown training option '" + a.training_option + "'");
      }
      const auto p = train(option, fa, train_data, fa.adapted_train(), kind, settings);
      model["predictor"] = p.summary();
      model["predictor"]["training_option"] = option == TrainingOption::a ? "a" : "b";
      if (test_data) predictions = p.predict(test_out->data);
    }
    if (test_data) out.write("test_predictions.csv", detail::column_csv("prediction", predictions));
  }
  if (a.emit_model) out.write("model.json", model.dump(2) + "\n");
}

struct EvaluateArgs {
  std::string predictions, prediction_column = "prediction", data, meta, label_column, attribute_column, baseline;
  std::string density_out, report = "report.json";
  std::size_t k = 10;
  std::size_t density_points = 101;
};

inline void cmd_evaluate(const EvaluateArgs& a, OutputDir& out, RunManifest& manifest, std::ostream& log) {
  const auto ptab = csv::read(out.input(a.predictions));
  const auto dtab = csv::read(out.input(a.data));
  std::optional<Metadata> meta;
  if (!a.meta.empty()) meta = Metadata::parse(out.input(a.meta));
  auto col = [](const csv::Table& t, const std::string& name, const std::string& file) {
    auto it = std::find(t.header.begin(), t.header.end(), name);
    if (it == t.header.end()) throw ValidationError(file + " has no column '" + name + "'");
    return static_cast<std::size_t>(it - t.header.begin());
  };
  if (ptab.rows.size() != dtab.rows.size())
    throw ValidationError("predictions have " + std::to_string(ptab.rows.size()) + " rows but data has " +
                          std::to_string(dtab.rows.size()));
  const auto pc = col(ptab, a.prediction_column, "predictions");
  const auto lc = col(dtab, a.label_column, "data");
  const auto ac = col(dtab, a.attribute_column, "data");

  std::vector<double> probs, labels, attr;
  for (std::size_t i = 0; i < ptab.rows.size(); ++i) {
    const auto v = parse_double(ptab.rows[i][pc]);
    if (!v) throw ValidationError("non-numeric prediction at row " + std::to_string(i + 1));
    probs.push_back(*v);
  }
  // Labels and attribute: level indices under the metadata, else numbers.
  auto decode = [&](std::size_t c, const std::string& name, std::vector<double>& dst) {
    const ColumnSpec* spec = meta ? meta->find(name) : nullptr;
    for (std::size_t i = 0; i < dtab.rows.size(); ++i) {
      const auto& cell = dtab.rows[i][c];
      std::optional<double> v;
      if (spec && is_discrete(spec->kind)) {
        if (auto idx = spec->level_index(cell)) v = static_cast<double>(*idx);
      } else {
        v = parse_double(cell);
      }
      if (!v) throw ValidationError("bad value '" + cell + "' in column '" + name + "' at row " + std::to_string(i + 1));
      dst.push_back(*v);
    }
  };
  decode(lc, a.label_column, labels);
  decode(ac, a.attribute_column, attr);
  for (double y : labels)
    if (y != 0.0 && y != 1.0) throw ValidationError("labels must be binary (0/1 or a two-level column)");

  double baseline = 0.0;
  const ColumnSpec* aspec = meta ? meta->find(a.attribute_column) : nullptr;
  if (aspec && is_discrete(aspec->kind)) {
    std::optional<std::string> b = a.baseline.empty() ? meta->baseline : std::optional<std::string>(a.baseline);
    if (!b) b = aspec->levels.front();
    const auto idx = aspec->level_index(*b);
    if (!idx) throw ValidationError("baseline '" + *b + "' is not a level of '" + a.attribute_column + "'");
    baseline = static_cast<double>(*idx);
  } else if (!a.baseline.empty()) {
    const auto v = parse_double(a.baseline);
    if (!v) throw ValidationError("baseline '" + a.baseline + "' is not numeric");
    baseline = *v;
  }

  const auto rep = evaluate(probs, labels, attr, a.k, baseline);
  manifest.config = {{"predictions", a.predictions}, {"data", a.data},           {"meta", a.meta},
                     {"label_column", a.label_column}, {"attribute_column", a.attribute_column},
                     {"baseline", baseline},        {"k", a.k}};
  const auto text = rep.to_json().dump(2) + "\n";
  out.write(a.report, text);
  log << text;
  if (!a.density_out.empty()) {
    std::string csv = "p,density_baseline,density_other\n";
    for (const auto& r : density_grid(probs, attr, baseline, a.density_points))
      csv += format_double(r[0]) + "," + format_double(r[1]) + "," + format_double(r[2]) + "\n";
    out.write(a.density_out, csv);
  }
}

struct SimulateArgs {
  std::string model;
  std::size_t n = 5000;
  std::uint64_t seed = 0;
  std::vector<std::string> resolving;
  std::string baseline = "0";
  bool oracle = false;
};

inline void cmd_simulate(const SimulateArgs& a, OutputDir& out, RunManifest& manifest) {
  const auto sem = builtin(a.model);
  if (a.n == 0) throw ValidationError("--n must be positive");
  const auto res = detail::split_list(a.resolving);
  const auto graph = sem.graph().with_resolving(res);
  const auto s = sem.sample(a.n, a.seed);
  manifest.config = {{"model", a.model}, {"n", a.n}, {"seed", a.seed}, {"resolving", res}};
  out.write("data.csv", emit_csv(s.data));
  out.write("metadata.json", sem.metadata().serialize() + "\n");
  out.write("graph.json", graph.serialize() + "\n");
  std::map<std::string, std::vector<double>> u;
  for (std::size_t k = 0; k < sem.size(); ++k) {
    auto& col = u[graph.nodes()[k]];
    for (std::size_t i = 0; i < a.n; ++i) col.push_back(s.u(i, k));
  }
  out.write("quantiles.csv", detail::quantile_csv(s.data, u, graph));
  if (a.oracle) {
    const auto b = parse_double(a.baseline);
    if (!b || (*b != 0.0 && *b != 1.0)) throw ValidationError("--baseline must be 0 or 1 for builtin models");
    manifest.config["baseline"] = *b;
    out.write("oracle_adapted.csv", emit_csv(sem.oracle_adapt(s, res, *b)));
  }
}

struct ExperimentArgs {
  std::string name, training_option = "b";
  std::size_t n = 5000, n_test = 5000, repeats = 10, monte_carlo = 100000, k = 10, threads = 0;
  std::uint64_t seed = 1;
  ForestFlags forest;
};

inline void cmd_experiment(const ExperimentArgs& a, OutputDir& out, RunManifest& manifest, std::ostream& log) {
  ExperimentOptions o;
  o.n_train = a.n;
  o.n_test = a.n_test;
  o.repeats = a.repeats;
  o.monte_carlo = a.monte_carlo;
  o.seed = a.seed;
  o.calibration_k = a.k;
  o.threads = a.threads;
  o.forest = a.forest.params(0, 1);
  if (a.training_option == "a")
    o.option = TrainingOption::a;
  else if (a.training_option != "b")
    throw ValidationError("experiments support training options a and b");
  const auto known = experiment_names();
  if (std::find(known.begin(), known.end(), a.name) == known.end())
    throw ValidationError("unknown experiment '" + a.name + "'");
  if (a.n < 10 || a.n_test < 10 || a.monte_carlo < 10) throw ValidationError("sample sizes must be at least 10");
  manifest.config = {{"experiment", a.name}, {"options", o.to_json()}};
  const auto res = run_experiment(a.name, o);
  out.write(a.name + ".csv", res.to_csv());
  log << res.to_csv();
}

struct PreprocessArgs {
  std::string recipe, input, output = "preprocessed.csv";
  std::uint64_t seed = 0;
};

inline void cmd_preprocess(const PreprocessArgs& a, OutputDir& out, RunManifest& manifest) {
  const auto recipe = Recipe::parse(out.input(a.recipe));
  manifest.config = {{"recipe", a.recipe}, {"input", a.input}, {"seed", a.seed}};
  out.write(a.output, apply_recipe(out.input(a.input), recipe, a.seed));
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

inline int cmd_replay(const std::string& manifest_path, std::string out_dir, std::ostream& out, std::ostream& err) {
  RunManifest m;
  try {
    m = RunManifest::from_json(nlohmann::json::parse(read_file(manifest_path)));
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(std::string("manifest: ") + e.what());
  }
  for (const auto& [path, digest] : m.inputs)
    if (sha256_hex(read_file(path)) != digest) throw ValidationError("input '" + path + "' changed since the run");
  if (out_dir.empty()) out_dir = (fs::path(manifest_path).parent_path() / "replay").string();
  auto args = m.args;
  args.push_back("--out-dir");
  args.push_back(out_dir);
  std::ostringstream sink;
  const int code = run(args, sink, err);
  if (code != 0) return code;
  const auto again = RunManifest::from_json(nlohmann::json::parse(read_file((fs::path(out_dir) / "manifest.json").string())));
  bool ok = again.outputs.size() == m.outputs.size();
  for (const auto& [name, digest] : m.outputs) {
    auto it = again.outputs.find(name);
    const bool same = it != again.outputs.end() && it->second == digest;
    ok = ok && same;
    out << (same ? "match    " : "MISMATCH ") << name << "\n";
  }
  if (!ok) {
    err << "error: replay produced different outputs\n";
    return 1;
  }
  return 0;
}

inline int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Fair data adaptation on a causal graph"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  std::string out_dir = ".";
  std::size_t threads = default_thread_count();

  AdaptArgs ad;
  auto* adapt = app.add_subcommand("adapt", "Fit the adapter on training data and adapt train/test");
  adapt->add_option("--graph", ad.graph, "Causal graph JSON")->required();
  adapt->add_option("--meta", ad.meta, "Column metadata JSON")->required();
  adapt->add_option("--train", ad.train, "Training CSV")->required();
  adapt->add_option("--test", ad.test, "Test CSV (outcome optional)");
  auto* res_opt = adapt->add_option("--resolving", ad.resolving, "Resolving variables (replaces the graph's set)");
  res_opt->expected(0, -1);
  adapt->add_option("--aps", ad.aps, "JSON object: variable -> adapted parents");
  adapt->add_option("--baseline", ad.baseline, "Baseline level of the protected attribute");
  adapt->add_option("--seed", ad.seed, "Seed")->capture_default_str();
  adapt->add_option("--training-option", ad.training_option, "Fit a predictor: a, b or cv");
  adapt->add_option("--model", ad.model, "Predictor: logistic, linear or forest");
  adapt->add_option("--categorical-order", ad.categorical_order, "auto, declared or none")->capture_default_str();
  adapt->add_option("--transport-exponent", ad.transport_exponent, "Exponent of the |i-j|^p cost")->capture_default_str();
  adapt->add_option("--cv-folds", ad.cv_folds, "Folds for --training-option cv")->capture_default_str();
  adapt->add_option("--cv-gap-tolerance", ad.cv_gap_tolerance, "Gap slack when picking an option")->capture_default_str();
  adapt->add_flag("--non-baseline", ad.non_baseline, "Average predictors fitted in both baseline worlds");
  adapt->add_flag("--emit-quantiles", ad.emit_quantiles, "Write estimated latent quantiles");
  adapt->add_flag("--emit-model", ad.emit_model, "Write model.json");
  ad.forest.add(adapt);

  EvaluateArgs ev;
  auto* evaluate_cmd = app.add_subcommand("evaluate", "Score predictions for accuracy and fairness");
  evaluate_cmd->add_option("--predictions", ev.predictions, "CSV with a prediction column")->required();
  evaluate_cmd->add_option("--prediction-column", ev.prediction_column)->capture_default_str();
  evaluate_cmd->add_option("--data", ev.data, "CSV with label and attribute columns")->required();
  evaluate_cmd->add_option("--meta", ev.meta, "Metadata used to decode level labels");
  evaluate_cmd->add_option("--label-column", ev.label_column)->required();
  evaluate_cmd->add_option("--attribute-column", ev.attribute_column)->required();
  evaluate_cmd->add_option("--baseline", ev.baseline, "Baseline level (label with --meta, else a number)");
  evaluate_cmd->add_option("--k", ev.k, "Calibration bins")->capture_default_str();
  evaluate_cmd->add_option("--out", ev.report, "Report file name inside --out-dir")->capture_default_str();
  evaluate_cmd->add_option("--density-out", ev.density_out, "Per-group density grid CSV, inside --out-dir");
  evaluate_cmd->add_option("--density-points", ev.density_points)->capture_default_str();

  SimulateArgs si;
  auto* simulate = app.add_subcommand("simulate", "Sample a builtin structural model");
  simulate->add_option("--model", si.model, "synthetic_a, synthetic_b, ripg_example, appendix_b, chain_example")
      ->required();
  simulate->add_option("--n", si.n)->capture_default_str();
  simulate->add_option("--seed", si.seed)->capture_default_str();
  simulate->add_option("--resolving", si.resolving, "Resolving variables written into graph.json")->expected(0, -1);
  simulate->add_option("--baseline", si.baseline, "Baseline for --oracle")->capture_default_str();
  simulate->add_flag("--oracle", si.oracle, "Also write the exact adaptation");

  ExperimentArgs ex;
  auto* experiment = app.add_subcommand("experiment", "Run a named simulation experiment");
  experiment->add_option("name", ex.name, "tradeoff_a, tradeoff_b, ripg_demo or appendix_b_demo")->required();
  experiment->add_option("--n", ex.n, "Training rows per repeat")->capture_default_str();
  experiment->add_option("--n-test", ex.n_test, "Test rows per repeat")->capture_default_str();
  experiment->add_option("--repeats", ex.repeats)->capture_default_str();
  experiment->add_option("--monte-carlo", ex.monte_carlo, "Draws for Monte-Carlo quantities")->capture_default_str();
  experiment->add_option("--seed", ex.seed)->capture_default_str();
  experiment->add_option("--k", ex.k, "Calibration bins")->capture_default_str();
  experiment->add_option("--training-option", ex.training_option, "a or b")->capture_default_str();
  ex.forest.add(experiment);

  PreprocessArgs pp;
  auto* preprocess = app.add_subcommand("preprocess", "Apply a raw-table recipe");
  preprocess->add_option("--recipe", pp.recipe, "Recipe JSON")->required();
  preprocess->add_option("--input", pp.input, "Raw CSV with a header row")->required();
  preprocess->add_option("--output", pp.output, "File name inside --out-dir")->capture_default_str();
  preprocess->add_option("--seed", pp.seed)->capture_default_str();

  std::string manifest_path, replay_dir;
  auto* replay = app.add_subcommand("replay", "Re-run a manifest and compare output digests");
  replay->add_option("--manifest", manifest_path)->required();
  replay->add_option("--out-dir", replay_dir, "Defaults to <manifest dir>/replay");

  for (auto* sub : {adapt, evaluate_cmd, simulate, experiment, preprocess}) {
    sub->add_option("--out-dir", out_dir, "Output directory")->capture_default_str();
    sub->add_option("--threads", threads, "Worker threads (default FAIRADAPT_THREADS or all cores)");
  }

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  try {
    if (replay->parsed()) return cmd_replay(manifest_path, replay_dir, out, err);

    RunManifest manifest;
    manifest.subcommand = app.get_subcommands().front()->get_name();
    manifest.args = detail::replayable_args(args);
    OutputDir dir(out_dir, manifest);
    if (adapt->parsed()) {
      ad.resolving_given = res_opt->count() > 0;
      ad.threads = threads;
      cmd_adapt(ad, dir, manifest, err);
    } else if (evaluate_cmd->parsed()) {
      cmd_evaluate(ev, dir, manifest, out);
    } else if (simulate->parsed()) {
      cmd_simulate(si, dir, manifest);
    } else if (experiment->parsed()) {
      ex.threads = threads;
      cmd_experiment(ex, dir, manifest, out);
    } else if (preprocess->parsed()) {
      cmd_preprocess(pp, dir, manifest);
    }
    dir.finish();
    return 0;
  } catch (const NumericalError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const nlohmann::json::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

inline int main_entry(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace fairadapt::cli
