#pragma once

// Random instance builders shared by the unit tests and the acceptance run.

#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "carlab/carlab.hpp"
#include "oracles.hpp"

namespace instances {

using namespace carlab;

// Band construction on one feature: class i owns x in [10 i, 10 i + 5) and
// every class uses the same offsets u, so a_i (x -> x + 10 (parent(i) - i))
// maps each training point of class i onto a training point of its parent.
// With a tree (parent(i) < i) every step moves one level closer to 0.
struct BandInstance {
  LearningSet set;
  ActionTable actions;
  std::vector<int> parent;  // parent[0] = 0
  std::vector<int> depth;
  int height = 0;
};

inline BandInstance band_instance(std::mt19937& rng, int deviated, int per_class) {
  // Multiples of 1/8 keep x + 10 (p - i) exact in binary floating point.
  std::vector<double> offsets;
  for (int k = 0; k < per_class; ++k) offsets.push_back(static_cast<double>(rng() % 40) / 8.0);
  std::vector<int> parent(static_cast<std::size_t>(deviated) + 1, 0), depth(parent.size(), 0);
  for (int i = 1; i <= deviated; ++i) {
    parent[static_cast<std::size_t>(i)] = static_cast<int>(rng() % static_cast<unsigned>(i));
    depth[static_cast<std::size_t>(i)] = depth[static_cast<std::size_t>(parent[static_cast<std::size_t>(i)])] + 1;
  }
  std::vector<LearningSample> samples;
  for (int i = 0; i <= deviated; ++i)
    for (int k = 0; k < per_class; ++k)
      samples.push_back({"c" + std::to_string(i) + "_" + std::to_string(k),
                         {10.0 * i + offsets[static_cast<std::size_t>(k)]},
                         ClassLabel(i)});
  std::vector<ActionSpec> specs;
  for (int i = 1; i <= deviated; ++i)
    specs.push_back({"a" + std::to_string(i), ClassLabel(i),
                     AffineMap{{1.0}, {10.0 * (parent[static_cast<std::size_t>(i)] - i)}}});
  BandInstance out{LearningSet(std::move(samples), 1, FeatureMode::real), register_actions(std::move(specs), deviated),
                   parent, depth, 0};
  for (int d : out.depth) out.height = std::max(out.height, d);
  return out;
}

// Boolean learning set over a random subset of {0,1}^n plus random table
// actions for every deviated class.
struct BooleanInstance {
  LearningSet set;
  ActionTable actions;
};

inline BooleanInstance boolean_instance(std::mt19937& rng, int n, int classes, double density) {
  const Vertex size = Vertex{1} << n;
  std::vector<LearningSample> samples;
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  for (Vertex v = 0; v < size; ++v) {
    const bool forced = v < static_cast<Vertex>(classes);
    if (!forced && coin(rng) >= density) continue;
    const int label = forced ? static_cast<int>(v) : static_cast<int>(rng() % static_cast<unsigned>(classes));
    samples.push_back({"v" + vertex_string(v, n), to_features(v, n), ClassLabel(label)});
  }
  std::vector<ActionSpec> specs;
  for (int c = 1; c < classes; ++c) {
    std::vector<Vertex> images(size);
    for (auto& img : images) img = static_cast<Vertex>(rng() & Subcube::mask(n));
    specs.push_back({"a" + std::to_string(c), ClassLabel(c),
                     BooleanAction::table("a" + std::to_string(c), n, std::move(images))});
  }
  return {LearningSet(std::move(samples), static_cast<std::size_t>(n), FeatureMode::boolean),
          register_actions(std::move(specs), classes - 1)};
}

// Real-valued learning set on the grid {0, 0.5, ..., 2.5}^n; the first
// `classes` samples fix one point per class.
inline LearningSet random_learning_set(std::mt19937& rng, std::size_t n, std::size_t m, int classes) {
  std::uniform_int_distribution<int> value(0, 5);
  std::vector<LearningSample> samples;
  for (std::size_t i = 0; i < m; ++i) {
    FeatureVector x(n);
    for (auto& v : x) v = value(rng) * 0.5;
    const int label = i < static_cast<std::size_t>(classes) ? static_cast<int>(i)
                                                            : static_cast<int>(rng() % classes);
    samples.push_back({"p" + std::to_string(i), std::move(x), ClassLabel(label)});
  }
  return LearningSet(std::move(samples), n, FeatureMode::real);
}

// Partial Boolean function: about 20% positives, 20% negatives.
inline PartialBooleanFunction random_partial_function(std::mt19937& rng, int n) {
  PartialBooleanFunction f{n, {}, {}};
  const Vertex size = Vertex{1} << n;
  std::uniform_int_distribution<int> role(0, 9);
  for (Vertex v = 0; v < size; ++v) {
    const int r = role(rng);
    if (r < 2)
      f.positives.push_back(v);
    else if (r < 4)
      f.negatives.push_back(v);
  }
  return f;
}

inline BooleanAction random_table_action(std::mt19937& rng, const std::string& id, int n) {
  std::vector<Vertex> images(std::size_t{1} << n);
  for (auto& v : images) v = static_cast<Vertex>(rng() & Subcube::mask(n));
  return BooleanAction::table(id, n, std::move(images));
}

// Independent forward simulation: vertex v is in region after exactly d
// steps of classify-then-act.
inline bool forward_in_region(Vertex v, std::size_t d, const VertexSet& region, const BooleanActionMap& actions,
                              const std::function<std::optional<ClassLabel>(Vertex)>& classify) {
  for (std::size_t step = 0; step < d; ++step) {
    const auto c = classify(v);
    if (!c) return false;
    if (!c->is_normal()) v = actions.at(*c).apply(v);
  }
  return region.contains(v);
}

// Random MDP with K0 absorbing and the same number of actions elsewhere,
// together with its dense oracle form.
struct MdpInstance {
  MDPModel model;
  oracle::TabularMdp tabular;
};

inline MdpInstance random_mdp(std::mt19937& rng, double gamma) {
  using Row = MDPModel::ActionRow;
  const std::size_t n = 2 + rng() % 5;
  const std::size_t actions = 1 + rng() % 3;
  std::uniform_real_distribution<double> u(0.0, 1.0), r(-2.0, 2.0);
  oracle::TabularMdp t;
  t.states = n;
  t.actions = actions;
  t.gamma = gamma;
  t.P.assign(n, std::vector<std::vector<double>>(actions, std::vector<double>(n, 0.0)));
  t.R = t.P;
  std::vector<std::vector<Row>> rows(n);
  std::vector<ClassLabel> states;
  for (std::size_t s = 0; s < n; ++s) states.push_back(ClassLabel(static_cast<int>(s)));
  rows[0].push_back({kStayAction, std::vector<double>(n, 0.0), std::vector<double>(n, 0.0)});
  rows[0][0].prob[0] = 1.0;
  for (std::size_t k = 0; k < actions; ++k) t.P[0][k][0] = 1.0;
  for (std::size_t s = 1; s < n; ++s)
    for (std::size_t k = 0; k < actions; ++k) {
      Row row{"act" + std::to_string(k), std::vector<double>(n), std::vector<double>(n)};
      double sum = 0.0;
      for (std::size_t d = 0; d < n; ++d) {
        row.prob[d] = u(rng) < 0.4 ? 0.0 : u(rng);
        row.reward[d] = std::round(r(rng) * 4.0) / 4.0;
        sum += row.prob[d];
      }
      if (sum == 0.0) {
        row.prob[0] = 1.0;
        sum = 1.0;
      }
      for (auto& p : row.prob) p /= sum;
      t.P[s][k] = row.prob;
      t.R[s][k] = row.reward;
      rows[s].push_back(std::move(row));
    }
  return {MDPModel(states, std::move(rows), gamma), std::move(t)};
}

}  // namespace instances
