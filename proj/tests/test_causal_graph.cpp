#include <algorithm>
#include <map>
#include <set>

#include <gtest/gtest.h>

#include "fairadapt/causal_graph.hpp"
#include "fairadapt/random.hpp"
#include "fairadapt/sem_lab.hpp"
#include "support/expect.hpp"

using namespace fairadapt;

namespace {

const char* kChain = R"({"nodes": ["A", "X1", "X2", "Y"],
  "edges": [["A", "X1"], ["X1", "X2"], ["X2", "Y"]], "protected": "A", "outcome": "Y"})";

CausalGraph random_dag(std::uint64_t seed, std::size_t n) {
  std::vector<std::string> nodes;
  for (std::size_t i = 0; i < n; ++i) nodes.push_back("V" + std::to_string(100 + (i * 7919) % 97));
  // node i may point to node j > i in a hidden order that is not lexicographic
  std::vector<Edge> edges;
  for (std::size_t i = 1; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (rng::uniform(seed, {i, j}) < 0.3) edges.emplace_back(nodes[i], nodes[j]);
  for (std::size_t j = 1; j < n; ++j)
    if (rng::uniform(seed, {0, j}) < 0.4) edges.emplace_back(nodes[0], nodes[j]);
  return CausalGraph(nodes, edges, nodes[0], nodes[n - 1]);
}

// Reachability by repeated edge relaxation; independent of the class internals.
std::set<std::string> reach_closure(const CausalGraph& g, const std::string& from) {
  std::set<std::string> seen;
  bool grew = true;
  while (grew) {
    grew = false;
    for (const auto& [p, c] : g.edges())
      if ((p == from || seen.count(p)) && !seen.count(c)) grew = seen.insert(c).second || grew;
  }
  return seen;
}

// Sum over all directed paths from src to dst avoiding `blocked`, by explicit enumeration.
double brute_paths(const CausalGraph& g, const EdgeCoefficients& b, const std::string& at, const std::string& dst,
                   const std::set<std::string>& blocked, double product) {
  if (at == dst) return product;
  double total = 0.0;
  for (const auto& c : g.children(at)) {
    if (blocked.count(c)) continue;
    total += brute_paths(g, b, c, dst, blocked, product * b.at({at, c}));
  }
  return total;
}

}  // namespace

TEST(CausalGraph, ParsesChain) {
  const auto g = CausalGraph::parse(kChain);
  EXPECT_EQ(g.nodes().size(), 4u);
  EXPECT_EQ(g.protected_attribute(), "A");
  EXPECT_EQ(g.outcome(), "Y");
  EXPECT_TRUE(g.resolving().empty());
}

TEST(CausalGraph, MissingOutcomeIsReported) {
  expect_error<ValidationError>([] { CausalGraph::parse(R"({"nodes": ["A"], "edges": [], "protected": "A"})"); },
                                "outcome not declared");
}

TEST(CausalGraph, ProtectedWithParentIsRejected) {
  expect_error<ValidationError>(
      [] {
        CausalGraph::parse(R"({"nodes": ["A", "X1", "X2", "Y"],
          "edges": [["A", "X1"], ["X1", "X2"], ["X2", "Y"], ["Y", "A"]], "protected": "A", "outcome": "Y"})");
      },
      "protected attribute has a parent");
}

TEST(CausalGraph, StructuralErrorsNameTheCulprit) {
  expect_error<ValidationError>(
      [] { CausalGraph({"A", "B", "C", "Y"}, {{"B", "C"}, {"C", "B"}}, "A", "Y"); }, "cycle detected");
  expect_error<ValidationError>([] { CausalGraph({"A", "X", "Y"}, {{"A", "Q"}}, "A", "Y"); }, "'Q'");
  expect_error<ValidationError>([] { CausalGraph({"A", "X", "Y"}, {{"X", "Y"}}, "A", "Y", {"X"}); },
                                "not a descendant");
  expect_error<ValidationError>(
      [] { CausalGraph({"A", "X", "Y"}, {{"A", "X"}, {"X", "Y"}}, "A", "Y", {}, {{"Y", {"A"}}}); },
      "not a parent");
  expect_error<ValidationError>([] { CausalGraph({"A", "Y"}, {}, "A", "A"); }, "must differ");
  expect_error<ValidationError>(
      [] { CausalGraph::parse(R"({"nodes": ["A", "B", "Y"], "edges": [], "protected": ["A", "B"], "outcome": "Y"})"); },
      "multiple protected");
}

TEST(CausalGraph, TopologicalOrderExamples) {
  EXPECT_EQ(CausalGraph::parse(kChain).topological_order(), (std::vector<std::string>{"A", "X1", "X2", "Y"}));
  EXPECT_EQ(CausalGraph({"Y", "A"}, {}, "A", "Y").topological_order(), (std::vector<std::string>{"A", "Y"}));
}

TEST(CausalGraph, TopologicalOrderRespectsEveryEdgeOnRandomDags) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto g = random_dag(seed, 12);
    const auto& order = g.topological_order();
    ASSERT_EQ(std::set<std::string>(order.begin(), order.end()),
              std::set<std::string>(g.nodes().begin(), g.nodes().end()));
    std::map<std::string, std::size_t> pos;
    for (std::size_t i = 0; i < order.size(); ++i) pos[order[i]] = i;
    for (const auto& [p, c] : g.edges()) EXPECT_LT(pos[p], pos[c]) << p << " -> " << c;
  }
}

TEST(CausalGraph, DescendantsMatchClosureAndAreTransitive) {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const auto g = random_dag(seed, 10);
    for (const auto& u : g.nodes()) {
      const auto du = g.descendants(u);
      EXPECT_EQ(du, reach_closure(g, u));
      for (const auto& v : du)
        for (const auto& w : g.descendants(v)) EXPECT_TRUE(du.count(w));
    }
  }
  const auto chain = CausalGraph::parse(kChain);
  EXPECT_EQ(chain.descendants("A"), (std::set<std::string>{"X1", "X2", "Y"}));
  EXPECT_TRUE(CausalGraph({"A", "Z", "Y"}, {{"A", "Y"}}, "A", "Y").descendants("Z").empty());
  EXPECT_EQ(builtin("synthetic_b").graph().descendants("X2"), (std::set<std::string>{"X3", "Y"}));
}

TEST(CausalGraph, SerializeParseIsIdentity) {
  const auto g = CausalGraph({"A", "C", "P", "Y"}, {{"A", "P"}, {"A", "C"}, {"P", "C"}, {"C", "Y"}}, "A", "Y", {"P"},
                             {{"C", {"P"}}});
  EXPECT_EQ(CausalGraph::parse(g.serialize()), g);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto r = random_dag(seed, 9);
    EXPECT_EQ(CausalGraph::parse(r.serialize()), r);
  }
}

TEST(CausalGraph, AdaptationParentSets) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto g = random_dag(seed, 9);
    for (const auto& v : g.nodes()) EXPECT_EQ(g.aps(v), g.parents(v));
  }
  const auto g = CausalGraph({"A", "C", "P", "Y"}, {{"A", "P"}, {"A", "C"}, {"P", "C"}, {"C", "Y"}}, "A", "Y", {"P"},
                             {{"C", {"P"}}});
  EXPECT_TRUE(g.aps("P").empty());
  EXPECT_EQ(g.aps("C"), (std::vector<std::string>{"P"}));
  EXPECT_EQ(g.aps("Y"), (std::vector<std::string>{"C"}));
  EXPECT_EQ(g.adaptation_targets(), (std::vector<std::string>{"C", "Y"}));
}

TEST(CausalGraph, ResolvingOutcomeIsAllowedWithWarning) {
  const auto g = CausalGraph::parse(kChain).with_resolving({"Y"});
  EXPECT_FALSE(g.warnings().empty());
  EXPECT_EQ(g.adaptation_targets(), (std::vector<std::string>{"X1", "X2"}));
}

TEST(PathCoefficients, Examples) {
  const CausalGraph single({"A", "X", "Y"}, {{"A", "X"}, {"X", "Y"}}, "A", "Y");
  EXPECT_DOUBLE_EQ(path_coefficient_sum(single, {{{"A", "X"}, 0.7}, {{"X", "Y"}, 2.0}}, "X", {}), 0.7);

  const CausalGraph tri({"A", "X1", "X2", "Y"}, {{"A", "X1"}, {"X1", "X2"}, {"A", "X2"}, {"X2", "Y"}}, "A", "Y");
  const EdgeCoefficients b{{{"A", "X1"}, 0.5}, {{"X1", "X2"}, 0.8}, {{"A", "X2"}, 0.3}, {{"X2", "Y"}, 1.0}};
  EXPECT_DOUBLE_EQ(path_coefficient_sum(tri, b, "X2", {}), 0.3 + 0.5 * 0.8);
  EXPECT_DOUBLE_EQ(path_coefficient_sum(tri, b, "X2", {"X1"}), 0.3);

  const auto sb = builtin("synthetic_b");
  EXPECT_EQ(path_coefficient_sum(sb.graph(), sb.edge_coefficients(), "X3", {"X2"}), 0.0);
  EXPECT_DOUBLE_EQ(path_coefficient_sum(sb.graph(), sb.edge_coefficients(), "X3", {}), -0.25 * 0.25);

  expect_error<ValidationError>([&] { path_coefficient_sum(tri, {{{"A", "X1"}, 0.5}}, "X2", {}); },
                                "missing coefficient");
}

TEST(PathCoefficients, MatchesBruteForceEnumeration) {
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    const auto g = random_dag(seed, 8);
    EdgeCoefficients b;
    for (const auto& e : g.edges()) b[e] = rng::uniform(seed + 500, {std::hash<std::string>{}(e.first + e.second)}) - 0.5;
    const auto& a = g.protected_attribute();
    const auto de = g.descendants(a);
    std::set<std::string> res;
    for (const auto& v : de)
      if (rng::uniform(seed, {99, std::hash<std::string>{}(v)}) < 0.25) res.insert(v);
    for (const auto& t : g.nodes()) {
      if (t == a) continue;
      const double want = res.count(t) ? 0.0 : brute_paths(g, b, a, t, res, 1.0);
      EXPECT_NEAR(path_coefficient_sum(g, b, t, res), want, 1e-12) << "seed " << seed << " target " << t;
    }
  }
}
