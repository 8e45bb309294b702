#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "carlab/io.hpp"
#include "carlab/transition_poset.hpp"
#include "oracles.hpp"

namespace carlab {
namespace {

ClassTransitionGraph graph(std::initializer_list<std::pair<int, int>> edges, std::set<ClassLabel> extra = {}) {
  std::vector<TransitionEdge> records;
  for (auto [a, b] : edges) records.push_back({ClassLabel(a), "a" + std::to_string(a), ClassLabel(b), 1});
  return ClassTransitionGraph(records, extra);
}

std::vector<int> indices(const std::vector<ClassLabel>& v) {
  std::vector<int> out;
  for (auto c : v) out.push_back(c.index());
  return out;
}

std::set<int> indices(const std::set<ClassLabel>& s) {
  std::set<int> out;
  for (auto c : s) out.insert(c.index());
  return out;
}

TEST(ExtractTest, FromTraces) {
  std::istringstream in(
      "id,step,timestamp,class,action\n"
      "a,0,0,2,a2\na,1,1,1,a1\na,2,2,0,\n");
  const auto g = extract_relation(parse_trace_log(in));
  ASSERT_EQ(g.edges().size(), 2u);
  EXPECT_EQ(g.edges()[0].from, ClassLabel(1));
  EXPECT_EQ(g.edges()[0].action, "a1");
  EXPECT_EQ(g.edges()[0].to, kNormal);
  EXPECT_EQ(g.edges()[1].from, ClassLabel(2));
  EXPECT_EQ(g.edges()[1].to, ClassLabel(1));
  EXPECT_TRUE(g.deterministic());
}

TEST(ExtractTest, NondeterminismIsFlagged) {
  std::istringstream in(
      "id,step,timestamp,class,action\n"
      "a,0,0,1,a1\na,1,1,0,\n"
      "b,0,0,1,a1\nb,1,1,2,a2\nb,2,2,0,\n");
  const auto g = extract_relation(parse_trace_log(in));
  ASSERT_EQ(g.nondeterministic().size(), 1u);
  EXPECT_EQ(g.nondeterministic()[0].from, ClassLabel(1));
  EXPECT_EQ(g.nondeterministic()[0].action, "a1");
  EXPECT_EQ(indices(g.nondeterministic()[0].destinations), (std::vector<int>{0, 2}));
}

TEST(ExtractTest, EmptyInputAndRecordParsing) {
  const auto g = extract_relation(std::vector<TransitionEdge>{});
  EXPECT_TRUE(g.edges().empty());
  EXPECT_EQ(g.classes().size(), 1u);

  std::istringstream ok("from_class,action,to_class,count\n2,a,1,3\n2,a,1,2\n1,b,0,1\n");
  const auto h = extract_relation(parse_transition_records(ok));
  ASSERT_EQ(h.edges().size(), 2u);
  EXPECT_EQ(h.edges()[1].count, 5u);

  std::istringstream bad_header("from,action,to,count\n1,a,0,1\n");
  EXPECT_THROW(parse_transition_records(bad_header), Error);
  std::istringstream zero("from_class,action,to_class,count\n1,a,0,0\n");
  EXPECT_THROW(parse_transition_records(zero), Error);
  std::istringstream from_normal("from_class,action,to_class,count\n0,a,1,1\n");
  EXPECT_THROW(extract_relation(parse_transition_records(from_normal)), Error);
}

TEST(PosetTest, Examples) {
  const auto chain = check_poset(graph({{2, 1}, {1, 0}}));
  EXPECT_TRUE(chain.passed());
  EXPECT_TRUE(chain.closure_used);

  const auto cyclic = check_poset(graph({{1, 2}, {2, 1}}));
  EXPECT_FALSE(cyclic.antisymmetric);
  EXPECT_EQ(indices(cyclic.cycle), (std::vector<int>{1, 2}));

  const auto g = graph({{1, 0}, {2, 0}});
  EXPECT_TRUE(check_poset(g).passed());
  // Frozen from the closure oracle: all axioms hold and the only minimum is 0.
  EXPECT_EQ(indices(has_unique_minimum(g).minimal), (std::vector<int>{0}));
}

TEST(MinimumTest, Examples) {
  const auto chain = has_unique_minimum(graph({{2, 1}, {1, 0}}));
  EXPECT_TRUE(chain.passed);
  EXPECT_EQ(indices(chain.minimal), (std::vector<int>{0}));

  const auto split = has_unique_minimum(graph({{1, 0}, {3, 2}}));
  EXPECT_FALSE(split.passed);
  EXPECT_EQ(indices(split.minimal), (std::vector<int>{0, 2}));

  const auto single = has_unique_minimum(ClassTransitionGraph{});
  EXPECT_TRUE(single.passed);
  EXPECT_EQ(indices(single.minimal), (std::vector<int>{0}));
}

TEST(LevelTest, Examples) {
  const auto xi = build_level_diagram(graph({{2, 1}, {1, 0}, {3, 1}}));
  EXPECT_TRUE(xi.complete);
  EXPECT_EQ(xi.height, 2);
  const std::map<ClassLabel, int> expected{{ClassLabel(0), 0}, {ClassLabel(1), 1}, {ClassLabel(2), 2}, {ClassLabel(3), 2}};
  EXPECT_EQ(xi.level, expected);
  EXPECT_TRUE(xi.warnings.empty());

  const auto stranded = build_level_diagram(graph({{1, 0}}, {ClassLabel(4)}));
  EXPECT_FALSE(stranded.complete);
  EXPECT_EQ(indices(stranded.unleveled), (std::vector<int>{4}));

  const auto only_normal = build_level_diagram(ClassTransitionGraph{});
  EXPECT_TRUE(only_normal.complete);
  EXPECT_EQ(only_normal.height, 0);
}

TEST(LevelTest, WarningsForEdgesNotGoingOneLevelDown) {
  const auto xi = build_level_diagram(graph({{1, 0}, {2, 1}, {2, 0}, {1, 2}}));
  // Levels: 1 -> 1, 2 -> 1; edges 2->1 and 1->2 stay on level 1.
  EXPECT_EQ(xi.warnings.size(), 2u);
}

TEST(ValidateTest, Verdicts) {
  EXPECT_EQ(validate_to_normal(graph({{2, 1}, {1, 0}})).verdict, Verdict::pass);
  EXPECT_EQ(validate_to_normal(graph({{1, 2}, {2, 1}, {1, 0}})).verdict, Verdict::fail);
  EXPECT_EQ(validate_to_normal(graph({{1, 0}}, {ClassLabel(4)})).verdict, Verdict::fail);

  std::vector<TransitionEdge> records{{ClassLabel(1), "a", kNormal, 3}, {ClassLabel(1), "a", ClassLabel(2), 1},
                                      {ClassLabel(2), "b", kNormal, 1}};
  const auto r = validate_to_normal(ClassTransitionGraph(records));
  EXPECT_TRUE(r.structurally_valid);
  EXPECT_EQ(r.verdict, Verdict::inconclusive);
}

TEST(DistanceTest, Examples) {
  const auto xi = build_level_diagram(graph({{2, 1}, {1, 0}}, {ClassLabel(5)}));
  EXPECT_EQ(distance_to_normal(xi, kNormal), 0);
  EXPECT_EQ(distance_to_normal(xi, ClassLabel(2)), 2);
  EXPECT_THROW(distance_to_normal(xi, ClassLabel(5)), Error);
}

TEST(NeighborhoodTest, Examples) {
  const auto layers = neighborhood(graph({{2, 1}, {1, 0}}), 2, 0.0);
  ASSERT_EQ(layers.size(), 2u);
  EXPECT_EQ(indices(layers[0]), (std::set<int>{1}));
  EXPECT_EQ(indices(layers[1]), (std::set<int>{1, 2}));

  std::vector<TransitionEdge> records{{ClassLabel(1), "a", kNormal, 5}, {ClassLabel(3), "c", ClassLabel(1), 1},
                                      {ClassLabel(3), "d", ClassLabel(5), 9}};
  const ClassTransitionGraph g(records);
  EXPECT_EQ(indices(neighborhood(g, 2, 0.5)[1]), (std::set<int>{1}));
  EXPECT_EQ(indices(neighborhood(g, 2, 0.0)[1]), (std::set<int>{1, 3}));

  // Threshold 1: class 2 splits its transitions between 0 and 5.
  std::vector<TransitionEdge> split{{ClassLabel(1), "a", kNormal, 2}, {ClassLabel(2), "b", kNormal, 1},
                                    {ClassLabel(2), "b", ClassLabel(5), 1}, {ClassLabel(5), "f", kNormal, 1}};
  EXPECT_EQ(indices(neighborhood(ClassTransitionGraph(split), 1, 1.0)[0]), (std::set<int>{1, 5}));
  EXPECT_THROW(neighborhood(g, 0, 0.0), Error);
}

TEST(NeighborhoodTest, ZeroThresholdMatchesLevels) {
  std::mt19937 rng(41);
  for (int round = 0; round < 50; ++round) {
    const int n = 2 + static_cast<int>(rng() % 10);
    std::vector<TransitionEdge> records;
    for (int c = 1; c < n; ++c) records.push_back({ClassLabel(c), "a", ClassLabel(static_cast<int>(rng() % c)), 1});
    for (int extra = 0; extra < n; ++extra) {
      const int a = 1 + static_cast<int>(rng() % (n - 1)), b = static_cast<int>(rng() % n);
      records.push_back({ClassLabel(a), "x", ClassLabel(b), 1 + rng() % 3});
    }
    const ClassTransitionGraph g(records);
    const auto xi = build_level_diagram(g);
    ASSERT_TRUE(xi.complete);
    const auto layers = neighborhood(g, n, 0.0);
    for (int d = 1; d <= n; ++d) {
      std::set<ClassLabel> expected;
      for (const auto& [c, level] : xi.level)
        if (!c.is_normal() && level <= d) expected.insert(c);
      EXPECT_EQ(layers[static_cast<std::size_t>(d - 1)], expected);
    }
  }
}

TEST(CounterClassTest, Examples) {
  LevelDiagram xi;
  for (int c = 0; c <= 4; ++c) xi.level[ClassLabel(c)] = c;
  xi.height = 4;
  EXPECT_EQ(indices(counter_class(xi, 0.5)), (std::set<int>{2, 3, 4}));
  EXPECT_EQ(indices(counter_class(xi, 1.0)), (std::set<int>{4}));

  LevelDiagram flat;
  flat.level = {{ClassLabel(0), 0}, {ClassLabel(1), 1}, {ClassLabel(2), 1}};
  flat.height = 1;
  EXPECT_EQ(indices(counter_class(flat, 0.5)), (std::set<int>{1, 2}));

  flat.complete = false;
  EXPECT_THROW(counter_class(flat, 0.5), Error);
  EXPECT_THROW(counter_class(xi, 0.0), Error);
}

TEST(PosetTest, AgreesWithClosureOracle) {
  std::mt19937 rng(43);
  for (int round = 0; round < 100; ++round) {
    const int n = 1 + static_cast<int>(rng() % 20);
    std::vector<std::vector<bool>> step(static_cast<std::size_t>(n), std::vector<bool>(static_cast<std::size_t>(n)));
    std::vector<TransitionEdge> records;
    const double density = (rng() % 100) / 400.0;
    for (int a = 1; a < n; ++a)
      for (int b = 0; b < n; ++b)
        if (a != b && std::generate_canonical<double, 32>(rng) < density) {
          step[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)] = true;
          records.push_back({ClassLabel(a), "a", ClassLabel(b), 1});
        }
    std::set<ClassLabel> all;
    for (int c = 0; c < n; ++c) all.insert(ClassLabel(c));
    const ClassTransitionGraph g(records, all);
    const auto expected = oracle::evaluate_axioms(step);
    const auto report = check_poset(g);
    EXPECT_EQ(report.antisymmetric, expected.antisymmetric);
    EXPECT_EQ(report.transitive, expected.transitive);
    EXPECT_EQ(report.reflexive, expected.reflexive);
    std::vector<int> minimal;
    for (auto i : expected.minimal) minimal.push_back(static_cast<int>(i));
    EXPECT_EQ(indices(has_unique_minimum(g).minimal), minimal);
    // The reported cycle is a real cycle of the input graph.
    for (std::size_t k = 0; k < report.cycle.size(); ++k)
      EXPECT_TRUE(g.has_edge(report.cycle[k], report.cycle[(k + 1) % report.cycle.size()]));
    EXPECT_EQ(report.cycle.empty(), report.antisymmetric);
  }
}

TEST(JsonTest, LevelDiagramRoundTrip) {
  const auto xi = build_level_diagram(graph({{2, 1}, {1, 0}, {3, 1}}, {ClassLabel(7)}));
  const auto back = level_diagram_from_json(to_json(xi));
  EXPECT_EQ(back.level, xi.level);
  EXPECT_EQ(back.unleveled, xi.unleveled);
  EXPECT_EQ(back.complete, xi.complete);
  EXPECT_EQ(back.height, xi.height);
}

}  // namespace
}  // namespace carlab
