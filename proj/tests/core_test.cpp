#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "carlab/core.hpp"
#include "carlab/io.hpp"
#include "oracles.hpp"

namespace carlab {
namespace {

LearningSet parse(const std::string& text, FeatureMode mode = FeatureMode::real) {
  std::istringstream in(text);
  return parse_learning_set(in, mode);
}

std::vector<Trace> parse_traces(const std::string& text) {
  std::istringstream in(text);
  return parse_trace_log(in);
}

TEST(LearningSetTest, ParsesSmallFile) {
  const auto set = parse("id,f1,f2,class\na,1.5,2,0\nb,3,4,1\nc,5,-6e-1,1\n");
  EXPECT_EQ(set.feature_count(), 2u);
  EXPECT_EQ(set.deviated_count(), 1);
  EXPECT_EQ(set.size(), 3u);
  EXPECT_DOUBLE_EQ(set.samples()[2].features[1], -0.6);
  EXPECT_EQ(set.share(ClassLabel(1)).size(), 2u);
}

TEST(LearningSetTest, RejectsEmptyClassShare) {
  try {
    parse("id,f1,class\na,1,1\nb,2,1\n");
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("empty class share"), std::string::npos);
  }
  EXPECT_THROW(parse("id,f1,class\na,1,0\nb,2,2\n"), Error);  // class 1 missing
}

TEST(LearningSetTest, RejectsNonBooleanValueInBooleanMode) {
  try {
    parse("id,f1,class\na,0.5,0\n", FeatureMode::boolean);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("non-Boolean value"), std::string::npos);
  }
  EXPECT_NO_THROW(parse("id,f1,class\na,0,0\nb,1,1\n", FeatureMode::boolean));
}

TEST(LearningSetTest, RejectsMalformedRows) {
  EXPECT_THROW(parse("id,f1,f2,class\na,1,0\n"), Error);       // field count
  EXPECT_THROW(parse("id,f1,class\na,x,0\n"), Error);          // not a number
  EXPECT_THROW(parse("id,f1,class\na,1,zero\n"), Error);       // bad class
  EXPECT_THROW(parse("name,f1,class\na,1,0\n"), Error);        // header
  EXPECT_THROW(parse("id,f1,class\n,1,0\n"), Error);           // empty id
  EXPECT_THROW(parse("id,f1,class\n"), Error);                 // no rows
}

TEST(TraceLogTest, ParsesTwoEventTrace) {
  const auto traces = parse_traces("id,step,timestamp,f1,class,action\na,0,1.0,3,1,treat\na,1,2.0,1,0,\n");
  ASSERT_EQ(traces.size(), 1u);
  EXPECT_EQ(traces[0].length(), 2u);
  EXPECT_EQ(traces[0].events[0].applied_action, "treat");
  EXPECT_FALSE(traces[0].events[1].applied_action);
}

TEST(TraceLogTest, RejectsInvariantViolations) {
  const std::string header = "id,step,timestamp,f1,class,action\n";
  try {
    parse_traces(header + "a,0,1.0,3,1,t\na,1,1.0,1,0,\n");
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("non-increasing timestamp"), std::string::npos);
  }
  EXPECT_THROW(parse_traces(header + "a,0,1.0,3,0,t\n"), Error);             // action on normal
  EXPECT_THROW(parse_traces(header + "a,0,1.0,3,1,t\na,2,2.0,1,0,\n"), Error);  // step gap
  EXPECT_THROW(parse_traces(header + "a,1,1.0,3,0,\n"), Error);              // does not start at 0
  EXPECT_THROW(parse_traces(header + "a,0,1.0,3,1,\n"), Error);              // deviated without action
  EXPECT_THROW(parse_traces(header + "a,0,1.0,3,0,\na,1,2.0,3,1,t\n"), Error);  // after normal
}

TEST(TraceLogTest, AcceptsFeaturelessLogAndUnorderedRows) {
  const auto traces = parse_traces("id,step,timestamp,class,action\nb,1,5,0,\na,0,1,2,x\nb,0,4,1,y\na,1,2,0,\n");
  ASSERT_EQ(traces.size(), 2u);
  EXPECT_EQ(traces[0].object_id, "a");
  EXPECT_EQ(traces[1].events[0].step, 0u);
}

TEST(LinkageGraphTest, SingleTraceIsPath) {
  const auto traces = parse_traces(
      "id,step,timestamp,f1,class,action\na,0,0,3,2,a2\na,1,1,2,1,a1\na,2,2,1,0,\n");
  const auto g = build_linkage_graph(traces);
  ASSERT_EQ(g.vertices.size(), 3u);
  ASSERT_EQ(g.edges.size(), 2u);
  EXPECT_EQ(g.edges[0].from, 0u);
  EXPECT_EQ(g.edges[0].to, 1u);
  EXPECT_EQ(g.edges[0].action, "a2");
  EXPECT_EQ(g.edges[1].action, "a1");
  EXPECT_EQ(g.find("a", 2), 2u);
}

TEST(LinkageGraphTest, EmptyInputGivesEmptyGraph) {
  const auto g = build_linkage_graph({});
  EXPECT_TRUE(g.vertices.empty());
  EXPECT_TRUE(g.edges.empty());
}

TEST(LinkageGraphTest, DisjointTracesGiveTwoComponents) {
  const auto traces = parse_traces(
      "id,step,timestamp,f1,class,action\n"
      "a,0,0,3,2,a2\na,1,1,2,1,a1\na,2,2,1,0,\n"
      "b,0,0,9,1,a1\nb,1,1,8,0,\n");
  const auto g = build_linkage_graph(traces);
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  for (const auto& e : g.edges) edges.emplace_back(e.from, e.to);
  EXPECT_EQ(oracle::components(g.vertices.size(), edges), 2u);
}

// Random valid traces for the property tests below.
std::vector<Trace> random_traces(std::mt19937& rng, std::size_t n_features) {
  std::uniform_int_distribution<int> count(0, 6), len(1, 5), cls(1, 4);
  std::uniform_real_distribution<double> val(-10, 10), dt(0.01, 3.0);
  std::vector<Trace> out;
  const int objects = count(rng);
  for (int o = 0; o < objects; ++o) {
    Trace t;
    t.object_id = "obj" + std::to_string(o);
    const int length = len(rng);
    double time = dt(rng);
    for (int k = 0; k < length; ++k) {
      TraceEvent e;
      e.object_id = t.object_id;
      e.step = static_cast<std::size_t>(k);
      e.timestamp = time;
      time += dt(rng);
      for (std::size_t j = 0; j < n_features; ++j) e.state.push_back(val(rng));
      e.assigned_class = k + 1 == length && rng() % 2 ? kNormal : ClassLabel(cls(rng));
      if (!e.assigned_class.is_normal()) e.applied_action = "act" + std::to_string(e.assigned_class.index());
      t.events.push_back(std::move(e));
    }
    out.push_back(std::move(t));
  }
  return out;
}

TEST(LinkageGraphTest, EdgeCountAndPathProperty) {
  std::mt19937 rng(7);
  for (int round = 0; round < 200; ++round) {
    const auto traces = random_traces(rng, 2);
    const auto g = build_linkage_graph(traces);
    std::size_t events = 0, expected_edges = 0;
    for (const auto& t : traces) {
      events += t.length();
      expected_edges += t.length() - 1;
    }
    EXPECT_EQ(g.vertices.size(), events);
    ASSERT_EQ(g.edges.size(), expected_edges);
    std::vector<std::pair<std::size_t, std::size_t>> edges;
    for (const auto& e : g.edges) {
      ASSERT_LT(e.from, g.vertices.size());
      ASSERT_LT(e.to, g.vertices.size());
      EXPECT_EQ(g.vertices[e.from].object_id, g.vertices[e.to].object_id);
      EXPECT_EQ(g.vertices[e.from].step + 1, g.vertices[e.to].step);
      edges.emplace_back(e.from, e.to);
    }
    EXPECT_EQ(oracle::components(g.vertices.size(), edges), traces.size());
  }
}

TEST(RoundTripTest, LearningSetAndTraceLog) {
  std::mt19937 rng(11);
  std::uniform_real_distribution<double> val(-1e6, 1e6);
  for (int round = 0; round < 100; ++round) {
    std::vector<LearningSample> samples;
    const int classes = 1 + static_cast<int>(rng() % 4);
    for (int i = 0; i < 3 * classes; ++i)
      samples.push_back({"s" + std::to_string(i), {val(rng), val(rng) / 3.0, 1e-300 * val(rng)},
                         ClassLabel(i % classes)});
    const LearningSet set(samples, 3, FeatureMode::real);
    std::ostringstream out;
    write_learning_set(out, set);
    EXPECT_EQ(parse(out.str()), set);

    const auto traces = random_traces(rng, 3);
    std::ostringstream tout;
    write_trace_log(tout, traces, 3);
    EXPECT_EQ(parse_traces(tout.str()), traces);
  }
}

}  // namespace
}  // namespace carlab
