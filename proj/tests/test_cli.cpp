#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "support/properties.hpp"

namespace fs = std::filesystem;
using props::cli;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

void put(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

class Cli : public ::testing::Test {
 protected:
  void SetUp() override { dir = props::scratch_dir("cli"); }
  void TearDown() override { fs::remove_all(dir); }
  std::string at(const std::string& name) const { return (dir / name).string(); }

  void simulate(const std::string& model, std::size_t n, const std::string& out) {
    ASSERT_EQ(cli({"simulate", "--model", model, "--n", std::to_string(n), "--seed", "4", "--out-dir", at(out)}), 0);
  }

  fs::path dir;
};

}  // namespace

TEST_F(Cli, HelpExitsZero) {
  std::string out;
  EXPECT_EQ(cli({"--help"}, &out), 0);
  EXPECT_NE(out.find("adapt"), std::string::npos);
  EXPECT_EQ(cli({"adapt", "--help"}, &out), 0);
  EXPECT_NE(out.find("--resolving"), std::string::npos);
}

TEST_F(Cli, UsageErrorsExitOne) {
  std::string err;
  EXPECT_EQ(cli({"adapt"}, nullptr, &err), 1);
  EXPECT_EQ(cli({"frobnicate"}, nullptr, &err), 1);
  EXPECT_EQ(cli({"experiment", "no_such_experiment", "--out-dir", at("x")}, nullptr, &err), 1);
  EXPECT_NE(err.find("unknown experiment"), std::string::npos);
}

TEST_F(Cli, SimulateWritesDataAndSidecars) {
  simulate("synthetic_b", 50, "sim");
  for (const char* f : {"data.csv", "metadata.json", "graph.json", "quantiles.csv", "manifest.json"})
    EXPECT_TRUE(fs::exists(dir / "sim" / f)) << f;
  const auto data = slurp(dir / "sim" / "data.csv");
  EXPECT_EQ(std::count(data.begin(), data.end(), '\n'), 51);
}

TEST_F(Cli, AdaptHappyPath) {
  simulate("synthetic_a", 400, "sim");
  const auto sim = at("sim");
  std::string err;
  ASSERT_EQ(cli({"adapt", "--graph", sim + "/graph.json", "--meta", sim + "/metadata.json", "--train", sim + "/data.csv",
                 "--test", sim + "/data.csv", "--num-trees", "20", "--training-option", "b", "--emit-model",
                 "--out-dir", at("ad")},
                nullptr, &err),
            0)
      << err;
  for (const char* f : {"train_adapted.csv", "test_adapted.csv", "test_predictions.csv", "model.json"})
    EXPECT_TRUE(fs::exists(dir / "ad" / f)) << f;
  const auto pred = slurp(dir / "ad" / "test_predictions.csv");
  EXPECT_EQ(pred.substr(0, pred.find('\n')), "prediction");
  const auto model = nlohmann::json::parse(slurp(dir / "ad" / "model.json"));
  EXPECT_TRUE(model.at("adapter").contains("variables"));
  EXPECT_TRUE(model.contains("predictor"));
}

TEST_F(Cli, MultiLevelAttributeNeedsBaseline) {
  put(dir / "graph.json", R"({"nodes": ["A", "X", "Y"], "edges": [["A", "X"], ["X", "Y"]], "protected": "A", "outcome": "Y"})");
  put(dir / "meta.json", R"({"columns": {"A": {"kind": "categorical_unordered", "levels": ["p", "q", "r"], "role": "attribute"},
                                         "X": {"kind": "continuous", "role": "feature"},
                                         "Y": {"kind": "discrete_ordered", "levels": ["0", "1"], "role": "outcome"}}})");
  std::ostringstream csv;
  csv << "A,X,Y\n";
  const char* lv[3] = {"p", "q", "r"};
  for (int i = 0; i < 60; ++i) csv << lv[i % 3] << "," << (i % 7) * 0.5 << "," << (i / 2) % 2 << "\n";
  put(dir / "d.csv", csv.str());
  std::string err;
  const std::vector<std::string> base{"adapt", "--graph", at("graph.json"), "--meta", at("meta.json"),
                                      "--train",   at("d.csv"),   "--num-trees", "10", "--out-dir", at("o")};
  EXPECT_EQ(cli(base, nullptr, &err), 1);
  EXPECT_NE(err.find("baseline required"), std::string::npos) << err;
  EXPECT_NE(err.find("has 3 levels"), std::string::npos) << err;
  auto with = base;
  with.insert(with.end(), {"--baseline", "q"});
  EXPECT_EQ(cli(with, nullptr, &err), 0) << err;
}

TEST_F(Cli, BadInputNamesRowAndColumn) {
  simulate("chain_example", 20, "sim");
  auto text = slurp(dir / "sim" / "data.csv");
  const auto second = text.find('\n', text.find('\n') + 1) + 1;  // start of data row 2
  const auto comma = text.find(',', second);
  text.replace(comma + 1, text.find(',', comma + 1) - comma - 1, "blue");
  put(dir / "bad.csv", text);
  std::string err;
  EXPECT_EQ(cli({"adapt", "--graph", at("sim/graph.json"), "--meta", at("sim/metadata.json"), "--train", at("bad.csv"),
                 "--out-dir", at("o")},
                nullptr, &err),
            1);
  EXPECT_NE(err.find("'blue' at row 2"), std::string::npos) << err;
}

TEST_F(Cli, EvaluateConstantPredictions) {
  simulate("synthetic_a", 100, "sim");
  std::string preds = "prediction\n";
  for (int i = 0; i < 100; ++i) preds += "0.7\n";
  put(dir / "p.csv", preds);
  std::string out, err;
  ASSERT_EQ(cli({"evaluate", "--predictions", at("p.csv"), "--data", at("sim/data.csv"), "--meta",
                 at("sim/metadata.json"), "--label-column", "Y", "--attribute-column", "A", "--out", "scores.json",
                 "--density-out", "density.csv", "--out-dir", at("ev")},
                &out, &err),
            0)
      << err;
  const auto printed = nlohmann::json::parse(out);
  EXPECT_EQ(printed.at("parity_gap").get<double>(), 0.0);
  EXPECT_EQ(printed.at("auc").get<double>(), 0.5);
  EXPECT_EQ(nlohmann::json::parse(slurp(dir / "ev" / "scores.json")), printed);
  EXPECT_TRUE(fs::exists(dir / "ev" / "density.csv"));

  put(dir / "short.csv", "prediction\n0.5\n0.5\n");
  EXPECT_EQ(cli({"evaluate", "--predictions", at("short.csv"), "--data", at("sim/data.csv"), "--label-column", "Y",
                 "--attribute-column", "A", "--out-dir", at("ev2")},
                nullptr, &err),
            1);
}

TEST_F(Cli, SingularLinearFitExitsTwo) {
  put(dir / "graph.json", R"({"nodes": ["A", "X", "Y"], "edges": [["A", "X"], ["X", "Y"]], "protected": "A", "outcome": "Y"})");
  put(dir / "meta.json", R"({"columns": {"A": {"kind": "discrete_ordered", "levels": ["0", "1"], "role": "attribute"},
                                         "X": {"kind": "continuous", "role": "feature"},
                                         "Y": {"kind": "continuous", "role": "outcome"}}})");
  std::string csv = "A,X,Y\n";
  for (int i = 0; i < 40; ++i) csv += std::to_string(i % 2) + ",3," + std::to_string(i * 0.1) + "\n";
  put(dir / "d.csv", csv);
  std::string err;
  EXPECT_EQ(cli({"adapt", "--graph", at("graph.json"), "--meta", at("meta.json"), "--train", at("d.csv"), "--test",
                 at("d.csv"), "--training-option", "b", "--model", "linear", "--num-trees", "5", "--out-dir", at("o")},
                nullptr, &err),
            2)
      << err;
  EXPECT_NE(err.find("singular"), std::string::npos) << err;
}

TEST_F(Cli, PreprocessWithShippedRecipe) {
  std::string raw = "age,workclass,fnlwgt,education,education-num,marital-status,occupation,relationship,race,sex,"
                    "capital-gain,capital-loss,hours-per-week,native-country,income\n";
  for (int i = 0; i < 40; ++i)
    raw += std::to_string(30 + i % 2) + ", Private,1,HS,9, Never-married,Sales,Own-child, " +
           (i % 5 ? "White" : "Black") + ", " + ((i / 2) % 2 ? "Male" : "Female") + ",0,0,40, Mexico, <=50K\n";
  put(dir / "adult.csv", raw);
  std::string err;
  ASSERT_EQ(cli({"preprocess", "--recipe", std::string(FAIRADAPT_SOURCE_DIR) + "/recipes/uci_adult.json", "--input",
                 at("adult.csv"), "--output", "clean.csv", "--out-dir", at("pp")},
                nullptr, &err),
            0)
      << err;
  const auto clean = slurp(dir / "pp" / "clean.csv");
  EXPECT_EQ(clean.find("fnlwgt"), std::string::npos);
  EXPECT_EQ(clean.find("Black"), std::string::npos);
  EXPECT_NE(clean.find("Non-US"), std::string::npos);
  EXPECT_GT(std::count(clean.begin(), clean.end(), '\n'), 10);
}

TEST_F(Cli, ReplayReproducesDigests) {
  const auto c = props::manifest_replay();
  EXPECT_TRUE(c.ok) << c.detail;
}

TEST_F(Cli, ReplayDetectsTampering) {
  simulate("appendix_b", 30, "sim");
  auto manifest = nlohmann::json::parse(slurp(dir / "sim" / "manifest.json"));
  std::string out;
  ASSERT_EQ(cli({"replay", "--manifest", at("sim/manifest.json"), "--out-dir", at("r1")}, &out), 0);
  EXPECT_NE(out.find("match"), std::string::npos);
  std::ofstream(dir / "sim" / "manifest.json") << [&] {
    auto m = manifest;
    for (auto& [name, digest] : m.at("outputs").items()) digest = std::string(64, '0');
    return m.dump(2);
  }();
  EXPECT_NE(cli({"replay", "--manifest", at("sim/manifest.json"), "--out-dir", at("r2")}, &out), 0);
  EXPECT_NE(out.find("MISMATCH"), std::string::npos);
}
