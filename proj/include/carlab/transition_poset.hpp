#pragma once

// Class-transition relation extracted from deterministic data, poset checks
// on its reflexive-transitive closure, and the level diagram rooted at the
// normal class.
//
// An observed step "class x, action a, lands in class y" is read as y <= x.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <deque>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "carlab/core.hpp"
#include "carlab/csv.hpp"

namespace carlab {

struct TransitionEdge {
  ClassLabel from;
  std::string action;
  ClassLabel to;
  std::size_t count = 1;

  friend bool operator==(const TransitionEdge&, const TransitionEdge&) = default;
};

// CSV: from_class,action,to_class,count
inline std::vector<TransitionEdge> parse_transition_records(std::istream& in) {
  std::vector<std::string> row;
  std::size_t line_no = 0;
  if (!csv::next_row(in, row, line_no)) throw Error("transition file has no header");
  if (row != std::vector<std::string>{"from_class", "action", "to_class", "count"})
    throw csv::row_error(line_no, "transition header must be from_class,action,to_class,count");
  std::vector<TransitionEdge> out;
  while (csv::next_row(in, row, line_no)) {
    if (row.size() != 4) throw csv::row_error(line_no, "expected 4 fields");
    TransitionEdge e{ClassLabel(csv::parse_int<int>(row[0], line_no)), row[1],
                     ClassLabel(csv::parse_int<int>(row[2], line_no)),
                     csv::parse_int<std::size_t>(row[3], line_no)};
    if (e.from.index() < 0 || e.to.index() < 0) throw csv::row_error(line_no, "negative class");
    if (e.action.empty()) throw csv::row_error(line_no, "empty action");
    if (e.count == 0) throw csv::row_error(line_no, "count must be positive");
    out.push_back(std::move(e));
  }
  return out;
}

inline std::vector<TransitionEdge> load_transition_records(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path + "'");
  return parse_transition_records(in);
}

inline void write_transition_records(std::ostream& os, const std::vector<TransitionEdge>& edges) {
  os << "from_class,action,to_class,count\n";
  for (const auto& e : edges)
    os << e.from.index() << ',' << e.action << ',' << e.to.index() << ',' << e.count << '\n';
}

struct NondeterministicPair {
  ClassLabel from;
  std::string action;
  std::vector<ClassLabel> destinations;
};

// Aggregated class-to-class transitions. The normal class is always a member
// and never a source.
class ClassTransitionGraph {
 public:
  ClassTransitionGraph() { classes_.insert(kNormal); }

  ClassTransitionGraph(const std::vector<TransitionEdge>& records,
                       const std::set<ClassLabel>& extra_classes = {}) {
    classes_.insert(kNormal);
    classes_.insert(extra_classes.begin(), extra_classes.end());
    std::map<std::tuple<ClassLabel, std::string, ClassLabel>, std::size_t> agg;
    for (const auto& r : records) {
      if (r.from.is_normal()) throw Error("transition leaves the normal class");
      if (r.count == 0) throw Error("transition count must be positive");
      agg[{r.from, r.action, r.to}] += r.count;
      classes_.insert(r.from);
      classes_.insert(r.to);
    }
    for (const auto& [key, count] : agg) {
      const auto& [from, action, to] = key;
      edges_.push_back({from, action, to, count});
    }
    std::map<std::pair<ClassLabel, std::string>, std::vector<ClassLabel>> dest;
    for (const auto& e : edges_) dest[{e.from, e.action}].push_back(e.to);
    for (auto& [key, to] : dest)
      if (to.size() > 1) nondeterministic_.push_back({key.first, key.second, to});
  }

  const std::set<ClassLabel>& classes() const { return classes_; }
  const std::vector<TransitionEdge>& edges() const { return edges_; }
  const std::vector<NondeterministicPair>& nondeterministic() const { return nondeterministic_; }
  bool deterministic() const { return nondeterministic_.empty(); }

  std::vector<ClassLabel> class_list() const { return {classes_.begin(), classes_.end()}; }

  bool has_edge(ClassLabel from, ClassLabel to) const {
    return std::any_of(edges_.begin(), edges_.end(),
                       [&](const TransitionEdge& e) { return e.from == from && e.to == to; });
  }

 private:
  std::set<ClassLabel> classes_;
  std::vector<TransitionEdge> edges_;
  std::vector<NondeterministicPair> nondeterministic_;
};

inline ClassTransitionGraph extract_relation(const std::vector<TransitionEdge>& records) {
  return ClassTransitionGraph(records);
}

inline std::vector<TransitionEdge> transitions_of(const std::vector<Trace>& traces) {
  std::vector<TransitionEdge> out;
  for (const auto& t : traces) {
    validate_trace(t);
    for (std::size_t k = 0; k + 1 < t.events.size(); ++k)
      out.push_back({t.events[k].assigned_class, *t.events[k].applied_action,
                     t.events[k + 1].assigned_class, 1});
  }
  return out;
}

inline ClassTransitionGraph extract_relation(const std::vector<Trace>& traces) {
  std::set<ClassLabel> seen;
  for (const auto& t : traces)
    for (const auto& e : t.events) seen.insert(e.assigned_class);
  return ClassTransitionGraph(transitions_of(traces), seen);
}

namespace detail {

// Dense view of the step relation: index order follows class order.
struct DenseRelation {
  std::vector<ClassLabel> classes;
  std::map<ClassLabel, std::size_t> index;
  std::vector<std::vector<std::size_t>> succ;  // distinct successors, no self loops
  std::vector<std::vector<bool>> step;         // raw step relation

  explicit DenseRelation(const ClassTransitionGraph& g) : classes(g.class_list()) {
    const std::size_t n = classes.size();
    for (std::size_t i = 0; i < n; ++i) index[classes[i]] = i;
    succ.resize(n);
    step.assign(n, std::vector<bool>(n, false));
    for (const auto& e : g.edges()) {
      const auto a = index.at(e.from), b = index.at(e.to);
      if (step[a][b]) continue;
      step[a][b] = true;
      if (a != b) succ[a].push_back(b);
    }
  }

  std::vector<std::optional<std::size_t>> bfs_parents(std::size_t src) const {
    std::vector<std::optional<std::size_t>> parent(classes.size());
    std::vector<bool> seen(classes.size(), false);
    std::deque<std::size_t> q{src};
    seen[src] = true;
    while (!q.empty()) {
      const auto u = q.front();
      q.pop_front();
      for (auto v : succ[u])
        if (!seen[v]) {
          seen[v] = true;
          parent[v] = u;
          q.push_back(v);
        }
    }
    return parent;
  }

  // reach[i][j]: j reachable from i in zero or more steps.
  std::vector<std::vector<bool>> closure() const {
    const std::size_t n = classes.size();
    std::vector<std::vector<bool>> reach(n, std::vector<bool>(n, false));
    for (std::size_t s = 0; s < n; ++s) {
      reach[s][s] = true;
      std::deque<std::size_t> q{s};
      while (!q.empty()) {
        const auto u = q.front();
        q.pop_front();
        for (auto v : succ[u])
          if (!reach[s][v]) {
            reach[s][v] = true;
            q.push_back(v);
          }
      }
    }
    return reach;
  }

  std::vector<std::size_t> path(std::size_t from, std::size_t to) const {
    const auto parent = bfs_parents(from);
    std::vector<std::size_t> p{to};
    while (p.back() != from) p.push_back(*parent[p.back()]);
    std::reverse(p.begin(), p.end());
    return p;
  }
};

}  // namespace detail

struct PosetReport {
  bool reflexive = true;
  bool antisymmetric = true;
  bool transitive = true;
  // Closure added pairs that the raw step relation did not contain.
  bool closure_used = false;
  // Directed cycle c0 -> c1 -> ... -> c0 through distinct classes.
  std::vector<ClassLabel> cycle;

  bool passed() const { return reflexive && antisymmetric && transitive; }
};

inline PosetReport check_poset(const ClassTransitionGraph& g) {
  const detail::DenseRelation rel(g);
  const auto reach = rel.closure();
  const std::size_t n = rel.classes.size();
  PosetReport r;
  for (std::size_t i = 0; i < n; ++i) r.reflexive = r.reflexive && reach[i][i];
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (i != j && reach[i][j] && !rel.step[i][j]) r.closure_used = true;
  for (std::size_t i = 0; i < n && r.transitive; ++i)
    for (std::size_t j = 0; j < n && r.transitive; ++j) {
      if (!reach[i][j]) continue;
      for (std::size_t k = 0; k < n; ++k)
        if (reach[j][k] && !reach[i][k]) {
          r.transitive = false;
          break;
        }
    }
  for (std::size_t i = 0; i < n && r.antisymmetric; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      if (!(reach[i][j] && reach[j][i])) continue;
      r.antisymmetric = false;
      // Closed walk i -> j -> i, cut at its first repeated class.
      auto walk = rel.path(i, j);
      const auto back = rel.path(j, i);
      walk.insert(walk.end(), back.begin() + 1, back.end());
      std::map<std::size_t, std::size_t> pos;
      for (std::size_t k = 0; k < walk.size(); ++k) {
        auto [it, fresh] = pos.emplace(walk[k], k);
        if (!fresh) {
          for (std::size_t m = it->second; m < k; ++m) r.cycle.push_back(rel.classes[walk[m]]);
          break;
        }
      }
      break;
    }
  return r;
}

struct MinimumReport {
  bool passed = false;
  std::vector<ClassLabel> minimal;
};

// Minimal elements of the closed relation: classes from which no other class
// is reachable. Passes iff the normal class is the only one.
inline MinimumReport has_unique_minimum(const ClassTransitionGraph& g) {
  const detail::DenseRelation rel(g);
  MinimumReport r;
  for (std::size_t i = 0; i < rel.classes.size(); ++i)
    if (rel.succ[i].empty()) r.minimal.push_back(rel.classes[i]);
  r.passed = r.minimal.size() == 1 && r.minimal.front().is_normal();
  return r;
}

// Level diagram: level(c) is the length of the shortest directed path from c
// to the normal class.
struct LevelDiagram {
  std::map<ClassLabel, int> level;
  std::vector<ClassLabel> unleveled;
  bool complete = true;
  int height = 0;
  // Edges between leveled classes that do not go exactly one level down.
  std::vector<TransitionEdge> warnings;

  std::optional<int> level_of(ClassLabel c) const {
    auto it = level.find(c);
    if (it == level.end()) return std::nullopt;
    return it->second;
  }
};

inline LevelDiagram build_level_diagram(const ClassTransitionGraph& g) {
  LevelDiagram xi;
  std::map<ClassLabel, std::vector<ClassLabel>> preds;
  for (const auto& e : g.edges())
    if (e.from != e.to) preds[e.to].push_back(e.from);
  xi.level[kNormal] = 0;
  std::deque<ClassLabel> q{kNormal};
  while (!q.empty()) {
    const auto u = q.front();
    q.pop_front();
    for (auto p : preds[u])
      if (!xi.level.count(p)) {
        xi.level[p] = xi.level[u] + 1;
        q.push_back(p);
      }
  }
  for (auto c : g.classes())
    if (!xi.level.count(c)) xi.unleveled.push_back(c);
  xi.complete = xi.unleveled.empty();
  for (const auto& [c, d] : xi.level) xi.height = std::max(xi.height, d);
  for (const auto& e : g.edges()) {
    auto a = xi.level_of(e.from), b = xi.level_of(e.to);
    if (a && b && *b != *a - 1) xi.warnings.push_back(e);
  }
  return xi;
}

inline int distance_to_normal(const LevelDiagram& xi, ClassLabel c) {
  if (auto d = xi.level_of(c)) return *d;
  throw Error("class " + std::to_string(c.index()) + " is not in the level diagram");
}

enum class Verdict { pass, inconclusive, fail };

inline const char* to_string(Verdict v) {
  switch (v) {
    case Verdict::pass: return "pass";
    case Verdict::inconclusive: return "inconclusive";
    case Verdict::fail: return "fail";
  }
  return "?";
}

struct ValidationReport {
  PosetReport poset;
  MinimumReport minimum;
  LevelDiagram diagram;
  std::vector<NondeterministicPair> nondeterministic;
  // Poset axioms, unique minimum and a complete diagram all hold.
  bool structurally_valid = false;
  Verdict verdict = Verdict::fail;
  std::vector<std::string> notes;
};

// Nondeterministic (class, action) pairs turn a structural pass into
// `inconclusive`: the data is stochastic and belongs to the MDP workflow.
inline ValidationReport validate_to_normal(const ClassTransitionGraph& g) {
  ValidationReport r;
  r.poset = check_poset(g);
  r.minimum = has_unique_minimum(g);
  r.diagram = build_level_diagram(g);
  r.nondeterministic = g.nondeterministic();
  r.structurally_valid = r.poset.passed() && r.minimum.passed && r.diagram.complete;
  if (!r.poset.antisymmetric) r.notes.push_back("directed cycle among distinct classes");
  if (!r.minimum.passed) r.notes.push_back("normal class is not the unique minimal element");
  if (!r.diagram.complete) r.notes.push_back("classes outside the level diagram");
  if (!r.structurally_valid) {
    r.verdict = Verdict::fail;
  } else if (!r.nondeterministic.empty()) {
    r.verdict = Verdict::inconclusive;
    r.notes.push_back("nondeterministic transitions; fit an MDP (fit-mdp / eval-policy)");
  } else {
    r.verdict = Verdict::pass;
  }
  return r;
}

// Layers S_1..S_depth of the neighborhood of the normal class. A class joins
// layer d when it links into {normal} + S_{d-1} and the share of its outgoing
// transition counts landing there is at least `link_threshold`.
inline std::vector<std::set<ClassLabel>> neighborhood(const ClassTransitionGraph& g, int depth,
                                                      double link_threshold) {
  if (depth < 1) throw Error("neighborhood depth must be at least 1");
  if (!(link_threshold >= 0.0 && link_threshold <= 1.0))
    throw Error("link threshold must lie in [0,1]");
  std::map<ClassLabel, std::size_t> out_total;
  for (const auto& e : g.edges()) out_total[e.from] += e.count;

  std::vector<std::set<ClassLabel>> layers;
  std::set<ClassLabel> current;
  for (int d = 1; d <= depth; ++d) {
    std::set<ClassLabel> target = current;
    target.insert(kNormal);
    std::map<ClassLabel, std::size_t> into;
    for (const auto& e : g.edges())
      if (target.count(e.to) && !target.count(e.from)) into[e.from] += e.count;
    std::set<ClassLabel> next = current;
    for (const auto& [c, k] : into) {
      const double share = static_cast<double>(k) / static_cast<double>(out_total[c]);
      if (share >= link_threshold) next.insert(c);
    }
    layers.push_back(next);
    current = std::move(next);
  }
  return layers;
}

// Classes at level >= ceil(fraction * h).
inline std::set<ClassLabel> counter_class(const LevelDiagram& xi, double fraction) {
  if (!xi.complete) throw Error("counter-class needs a complete level diagram");
  if (xi.height < 1) throw Error("counter-class needs a diagram of height >= 1");
  if (!(fraction > 0.0 && fraction <= 1.0)) throw Error("counter-class fraction must lie in (0,1]");
  // The small slack keeps e.g. 0.3 * 10 from rounding up to 4.
  const int threshold = static_cast<int>(std::ceil(fraction * xi.height - 1e-9));
  std::set<ClassLabel> out;
  for (const auto& [c, d] : xi.level)
    if (d >= threshold) out.insert(c);
  return out;
}

inline nlohmann::json labels_to_json(const std::vector<ClassLabel>& v) {
  nlohmann::json a = nlohmann::json::array();
  for (auto c : v) a.push_back(c.index());
  return a;
}

inline nlohmann::json labels_to_json(const std::set<ClassLabel>& s) {
  return labels_to_json(std::vector<ClassLabel>(s.begin(), s.end()));
}

inline nlohmann::json edge_to_json(const TransitionEdge& e) {
  return {{"from", e.from.index()}, {"action", e.action}, {"to", e.to.index()}, {"count", e.count}};
}

inline nlohmann::json to_json(const PosetReport& r) {
  return {{"reflexive", r.reflexive},
          {"antisymmetric", r.antisymmetric},
          {"transitive", r.transitive},
          {"closure_used", r.closure_used},
          {"cycle", labels_to_json(r.cycle)},
          {"passed", r.passed()}};
}

inline nlohmann::json to_json(const LevelDiagram& xi) {
  nlohmann::json levels = nlohmann::json::object();
  for (const auto& [c, d] : xi.level) levels[std::to_string(c.index())] = d;
  nlohmann::json warnings = nlohmann::json::array();
  for (const auto& e : xi.warnings) warnings.push_back(edge_to_json(e));
  return {{"levels", levels},
          {"unleveled", labels_to_json(xi.unleveled)},
          {"complete", xi.complete},
          {"height", xi.height},
          {"warnings", warnings}};
}

inline LevelDiagram level_diagram_from_json(const nlohmann::json& j) {
  LevelDiagram xi;
  try {
    for (const auto& [key, value] : j.at("levels").items())
      xi.level[ClassLabel(std::stoi(key))] = value.get<int>();
    for (const auto& c : j.at("unleveled")) xi.unleveled.push_back(ClassLabel(c.get<int>()));
  } catch (const std::exception& e) {
    throw Error(std::string("malformed level diagram: ") + e.what());
  }
  xi.complete = xi.unleveled.empty();
  for (const auto& [c, d] : xi.level) xi.height = std::max(xi.height, d);
  return xi;
}

inline nlohmann::json to_json(const ValidationReport& r) {
  nlohmann::json nd = nlohmann::json::array();
  for (const auto& p : r.nondeterministic)
    nd.push_back({{"from", p.from.index()}, {"action", p.action}, {"destinations", labels_to_json(p.destinations)}});
  return {{"poset", to_json(r.poset)},
          {"unique_minimum", {{"passed", r.minimum.passed}, {"minimal", labels_to_json(r.minimum.minimal)}}},
          {"diagram", to_json(r.diagram)},
          {"nondeterministic", nd},
          {"structurally_valid", r.structurally_valid},
          {"verdict", to_string(r.verdict)},
          {"notes", r.notes}};
}

}  // namespace carlab
