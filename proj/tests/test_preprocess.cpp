#include <fstream>
#include <map>
#include <sstream>

#include <gtest/gtest.h>

#include "fairadapt/preprocess.hpp"
#include "support/expect.hpp"

using namespace fairadapt;

namespace {

const char* kRaw =
    "age, sex ,race,workclass,fnlwgt\n"
    "30, Male, White, Private,1\n"
    "30, Female, White, State-gov,2\n"
    "30, Male, White, Never-worked,3\n"
    "40, Male, Black, Private,4\n"
    "40, Female, White, Local-gov,5\n"
    "40, Female, White, Private,6\n"
    "40, Male, White, Self-emp-inc,7\n"
    "50, Male, White, Private,8\n";

std::map<std::string, std::map<std::string, int>> counts(const csv::Table& t, const std::string& by,
                                                         const std::string& col) {
  const auto b = std::find(t.header.begin(), t.header.end(), by) - t.header.begin();
  const auto c = std::find(t.header.begin(), t.header.end(), col) - t.header.begin();
  std::map<std::string, std::map<std::string, int>> out;
  for (const auto& row : t.rows) ++out[row[static_cast<std::size_t>(b)]][row[static_cast<std::size_t>(c)]];
  return out;
}

}  // namespace

TEST(Recipe, ParsesAllSteps) {
  const auto r = Recipe::parse(R"({"trim": false, "filter": [{"column": "race", "keep": ["White"]}],
                                   "drop": ["fnlwgt"], "merge": {"workclass": {"map": {"Private": "P"}}},
                                   "match": {"column": "sex", "by": "age"}})");
  EXPECT_FALSE(r.trim);
  ASSERT_EQ(r.filters.size(), 1u);
  EXPECT_EQ(r.filters[0].keep, (std::set<std::string>{"White"}));
  EXPECT_EQ(r.drop, (std::vector<std::string>{"fnlwgt"}));
  EXPECT_FALSE(r.merge.at("workclass").fallback.has_value());
  EXPECT_EQ(r.match->by, "age");
}

TEST(Recipe, Errors) {
  expect_error<ValidationError>([] { Recipe::parse(R"({"drop": ["a"], "shuffle": true})"); }, "unknown key 'shuffle'");
  expect_error<ValidationError>([] { Recipe::parse("[1, 2]"); }, "JSON object");
  expect_error<ValidationError>([] { Recipe::parse("{"); }, "recipe:");
  expect_error<ValidationError>([] { Recipe::parse(R"({"filter": [{"keep": ["x"]}]})"); }, "recipe:");
  const auto r = Recipe::parse(R"({"drop": ["income"]})");
  expect_error<ValidationError>([&] { apply_recipe(csv::read(kRaw), r, 1); }, "no column 'income'");
}

TEST(ApplyRecipe, TrimFilterDropMerge) {
  const auto r = Recipe::parse(R"({"filter": [{"column": "race", "keep": ["White"]}], "drop": ["fnlwgt", "race"],
                                   "merge": {"workclass": {"map": {"State-gov": "Government", "Local-gov": "Government",
                                                                   "Private": "Private"}, "default": "Other"}}})");
  const auto t = apply_recipe(csv::read(kRaw), r, 1);
  EXPECT_EQ(t.header, (std::vector<std::string>{"age", "sex", "workclass"}));
  ASSERT_EQ(t.rows.size(), 7u);
  std::vector<std::string> wc;
  for (const auto& row : t.rows) wc.push_back(row[2]);
  EXPECT_EQ(wc, (std::vector<std::string>{"Private", "Government", "Other", "Government", "Private", "Other", "Private"}));
}

TEST(ApplyRecipe, MatchEqualisesByDistribution) {
  const auto r = Recipe::parse(R"({"match": {"column": "sex", "by": "age"}})");
  const auto t = apply_recipe(csv::read(kRaw), r, 3);
  // age 30: 2 M / 1 F -> 1 each; age 40: 2 M / 2 F; age 50: no female -> dropped
  const auto c = counts(t, "age", "sex");
  EXPECT_EQ(c.at("30").at("Male"), 1);
  EXPECT_EQ(c.at("30").at("Female"), 1);
  EXPECT_EQ(c.at("40").at("Male"), 2);
  EXPECT_EQ(c.at("40").at("Female"), 2);
  EXPECT_EQ(c.count("50"), 0u);
  EXPECT_EQ(t.rows.size(), 6u);
}

TEST(ApplyRecipe, DeterministicPerSeed) {
  std::ostringstream big;
  big << "sex,age,id\n";
  for (int i = 0; i < 400; ++i) big << (i % 3 ? "M" : "F") << "," << 20 + i % 5 << "," << i << "\n";
  const auto r = Recipe::parse(R"({"match": {"column": "sex", "by": "age"}})");
  const auto a = apply_recipe(big.str(), r, 9), b = apply_recipe(big.str(), r, 9), c = apply_recipe(big.str(), r, 10);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, c);
  const auto t = csv::read(a);
  for (const auto& [age, by_sex] : counts(t, "age", "sex")) EXPECT_EQ(by_sex.at("M"), by_sex.at("F")) << age;
}

TEST(ApplyRecipe, ShippedAdultRecipeLoads) {
  std::ifstream in(std::string(FAIRADAPT_SOURCE_DIR) + "/recipes/uci_adult.json");
  ASSERT_TRUE(in.good());
  std::stringstream text;
  text << in.rdbuf();
  const auto r = Recipe::parse(text.str());
  EXPECT_EQ(r.filters.at(0).column, "race");
  EXPECT_EQ(r.match->column, "sex");
  EXPECT_EQ(r.match->by, "age");
  EXPECT_EQ(r.merge.at("native-country").apply("Mexico"), "Non-US");
  EXPECT_EQ(r.merge.at("workclass").apply("Local-gov"), "Government");
}
