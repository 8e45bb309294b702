#pragma once

// Binary-domain engine: maximal subcubes of partially defined Boolean
// functions, the forall/exists region split, and backward reachability of a
// region under the classify-then-act step.
//
// A vertex of {0,1}^n is stored as an unsigned word; feature j (0-based) is
// bit j. Text renderings put feature 1 first, so "011" has x1=0, x2=1, x3=1.

#include <algorithm>
#include <bit>
#include <concepts>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "carlab/core.hpp"

namespace carlab {

using Vertex = std::uint32_t;

inline constexpr int kMaxExactDims = 20;

inline void check_dims(int n) {
  if (n < 1 || n > kMaxExactDims)
    throw Error("Boolean dimension " + std::to_string(n) + " outside 1.." +
                std::to_string(kMaxExactDims));
}

inline std::string vertex_string(Vertex v, int n) {
  std::string s(static_cast<std::size_t>(n), '0');
  for (int j = 0; j < n; ++j)
    if ((v >> j) & 1u) s[static_cast<std::size_t>(j)] = '1';
  return s;
}

inline Vertex parse_vertex(std::string_view s) {
  if (s.empty() || s.size() > static_cast<std::size_t>(kMaxExactDims))
    throw Error("bad binary vector '" + std::string(s) + "'");
  Vertex v = 0;
  for (std::size_t j = 0; j < s.size(); ++j) {
    if (s[j] == '1')
      v |= Vertex{1} << j;
    else if (s[j] != '0')
      throw Error("bad binary vector '" + std::string(s) + "'");
  }
  return v;
}

inline Vertex to_vertex(const FeatureVector& x) {
  check_dims(static_cast<int>(x.size()));
  Vertex v = 0;
  for (std::size_t j = 0; j < x.size(); ++j) {
    if (x[j] == 1.0)
      v |= Vertex{1} << j;
    else if (x[j] != 0.0)
      throw Error("non-Boolean coordinate in Boolean vector");
  }
  return v;
}

inline FeatureVector to_features(Vertex v, int n) {
  FeatureVector x(static_cast<std::size_t>(n));
  for (int j = 0; j < n; ++j) x[static_cast<std::size_t>(j)] = ((v >> j) & 1u) ? 1.0 : 0.0;
  return x;
}

// Ternary word over {0,1,*}: `care` marks the fixed coordinates, `value`
// holds their bits (zero outside `care`).
class Subcube {
 public:
  Subcube() = default;
  Subcube(int n, Vertex care, Vertex value) : n_(n), care_(care), value_(value & care) {}

  static Subcube full(int n) { return Subcube(n, 0, 0); }
  static Subcube point(int n, Vertex v) { return Subcube(n, mask(n), v); }

  static Subcube parse(std::string_view word) {
    if (word.empty() || word.size() > static_cast<std::size_t>(kMaxExactDims))
      throw Error("bad subcube '" + std::string(word) + "'");
    Vertex care = 0, value = 0;
    for (std::size_t j = 0; j < word.size(); ++j) {
      switch (word[j]) {
        case '0': care |= Vertex{1} << j; break;
        case '1': care |= Vertex{1} << j; value |= Vertex{1} << j; break;
        case '*': break;
        default: throw Error("bad subcube '" + std::string(word) + "'");
      }
    }
    return Subcube(static_cast<int>(word.size()), care, value);
  }

  static Vertex mask(int n) { return n >= 32 ? ~Vertex{0} : (Vertex{1} << n) - 1; }

  int dims() const { return n_; }
  Vertex care() const { return care_; }
  Vertex value() const { return value_; }
  Vertex free_mask() const { return mask(n_) & ~care_; }
  int free_count() const { return std::popcount(free_mask()); }

  bool contains(Vertex v) const { return (v & care_) == value_; }
  bool subset_of(const Subcube& o) const {
    return (o.care_ & ~care_) == 0 && (value_ & o.care_) == o.value_;
  }

  Subcube fixed(int j, bool bit) const {
    const Vertex b = Vertex{1} << j;
    return Subcube(n_, care_ | b, bit ? (value_ | b) : (value_ & ~b));
  }
  Subcube freed(int j) const {
    const Vertex b = Vertex{1} << j;
    return Subcube(n_, care_ & ~b, value_ & ~b);
  }

  template <class F>
  void for_each_vertex(F&& f) const {
    const Vertex free = free_mask();
    Vertex sub = 0;
    do {
      f(value_ | sub);
      sub = (sub - free) & free;
    } while (sub != 0);
  }

  std::string str() const {
    std::string s(static_cast<std::size_t>(n_), '*');
    for (int j = 0; j < n_; ++j)
      if ((care_ >> j) & 1u) s[static_cast<std::size_t>(j)] = ((value_ >> j) & 1u) ? '1' : '0';
    return s;
  }

  friend auto operator<=>(const Subcube& a, const Subcube& b) {
    return a.str() <=> b.str();
  }
  friend bool operator==(const Subcube& a, const Subcube& b) {
    return a.n_ == b.n_ && a.care_ == b.care_ && a.value_ == b.value_;
  }

 private:
  int n_ = 0;
  Vertex care_ = 0;
  Vertex value_ = 0;
};

// Explicit vertex set over {0,1}^n.
class VertexSet {
 public:
  VertexSet() = default;
  explicit VertexSet(int n) : n_(n), bits_(std::size_t{1} << n, false) { check_dims(n); }

  static VertexSet all(int n) {
    VertexSet s(n);
    s.bits_.flip();
    return s;
  }
  static VertexSet of(int n, const std::vector<Vertex>& vs) {
    VertexSet s(n);
    for (Vertex v : vs) s.insert(v);
    return s;
  }
  static VertexSet cover(int n, const std::vector<Subcube>& cubes) {
    VertexSet s(n);
    for (const auto& c : cubes) c.for_each_vertex([&](Vertex v) { s.insert(v); });
    return s;
  }

  int dims() const { return n_; }
  std::size_t universe() const { return bits_.size(); }
  bool contains(Vertex v) const { return v < bits_.size() && bits_[v]; }
  void insert(Vertex v) {
    if (v >= bits_.size()) throw Error("vertex outside the cube");
    bits_[v] = true;
  }
  void erase(Vertex v) { bits_.at(v) = false; }
  std::size_t count() const { return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), true)); }
  bool empty() const { return count() == 0; }

  std::vector<Vertex> vertices() const {
    std::vector<Vertex> out;
    for (std::size_t v = 0; v < bits_.size(); ++v)
      if (bits_[v]) out.push_back(static_cast<Vertex>(v));
    return out;
  }

  VertexSet operator|(const VertexSet& o) const { return combine(o, [](bool a, bool b) { return a || b; }); }
  VertexSet operator&(const VertexSet& o) const { return combine(o, [](bool a, bool b) { return a && b; }); }
  VertexSet operator-(const VertexSet& o) const { return combine(o, [](bool a, bool b) { return a && !b; }); }
  VertexSet complement() const {
    VertexSet s = *this;
    s.bits_.flip();
    return s;
  }

  friend bool operator==(const VertexSet&, const VertexSet&) = default;

 private:
  template <class Op>
  VertexSet combine(const VertexSet& o, Op op) const {
    if (o.n_ != n_) throw Error("dimension mismatch between vertex sets");
    VertexSet s(n_);
    for (std::size_t v = 0; v < bits_.size(); ++v) s.bits_[v] = op(bits_[v], o.bits_[v]);
    return s;
  }

  int n_ = 0;
  std::vector<bool> bits_;
};

struct PartialBooleanFunction {
  int n = 0;
  std::vector<Vertex> positives;
  std::vector<Vertex> negatives;
};

// All maximal subcubes that contain a positive point and no negative one.
//
// Starts from the full cube and punctures it with one negative point at a
// time: every cube containing the point is replaced by the cubes obtained by
// fixing one of its free coordinates to the opposite bit. Cubes that lose all
// positives are discarded and absorbed (non-maximal) cubes are removed after
// each puncture.
inline std::vector<Subcube> reduced_dnf(const PartialBooleanFunction& f) {
  check_dims(f.n);
  const auto neg = VertexSet::of(f.n, f.negatives);
  for (Vertex p : f.positives)
    if (neg.contains(p))
      throw Error("positive and negative sets overlap at " + vertex_string(p, f.n));
  const auto pos_set = VertexSet::of(f.n, f.positives);
  const auto positives = pos_set.vertices();
  if (positives.empty()) return {};

  auto has_positive = [&](const Subcube& c) {
    if (c.free_count() <= 10 && (std::size_t{1} << c.free_count()) < positives.size()) {
      bool hit = false;
      c.for_each_vertex([&](Vertex v) { hit = hit || pos_set.contains(v); });
      return hit;
    }
    return std::any_of(positives.begin(), positives.end(), [&](Vertex p) { return c.contains(p); });
  };

  std::vector<Subcube> cubes{Subcube::full(f.n)};
  for (Vertex z : neg.vertices()) {
    std::vector<Subcube> kept, fresh;
    for (const auto& c : cubes) {
      if (!c.contains(z)) {
        kept.push_back(c);
        continue;
      }
      const Vertex free = c.free_mask();
      for (int j = 0; j < f.n; ++j) {
        if (!((free >> j) & 1u)) continue;
        auto child = c.fixed(j, !((z >> j) & 1u));
        if (has_positive(child)) fresh.push_back(child);
      }
    }
    std::sort(fresh.begin(), fresh.end(), [](const Subcube& a, const Subcube& b) {
      return a.free_count() != b.free_count() ? a.free_count() > b.free_count()
                                              : std::pair(a.care(), a.value()) < std::pair(b.care(), b.value());
    });
    fresh.erase(std::unique(fresh.begin(), fresh.end()), fresh.end());
    // Kept cubes are already pairwise incomparable and no fresh cube can
    // contain one of them, so only fresh cubes may be absorbed. Sorting by
    // size puts every potential absorber before the cubes it absorbs.
    std::vector<Subcube> accepted;
    for (const auto& c : fresh) {
      auto absorbed = [&](const Subcube& o) { return c.subset_of(o); };
      if (std::any_of(kept.begin(), kept.end(), absorbed)) continue;
      if (std::any_of(accepted.begin(), accepted.end(), absorbed)) continue;
      accepted.push_back(c);
    }
    kept.insert(kept.end(), accepted.begin(), accepted.end());
    cubes = std::move(kept);
  }
  std::sort(cubes.begin(), cubes.end());
  return cubes;
}

// Irredundant-ish cover of a vertex set by subcubes inside it: every
// uncovered vertex (in increasing order) seeds a cube that is widened one
// coordinate at a time while it stays inside the set.
inline std::vector<Subcube> subcube_cover(const VertexSet& region) {
  std::vector<Subcube> out;
  VertexSet covered(region.dims());
  for (Vertex v : region.vertices()) {
    if (covered.contains(v)) continue;
    auto cube = Subcube::point(region.dims(), v);
    for (int j = 0; j < region.dims(); ++j) {
      auto wider = cube.freed(j);
      bool inside = true;
      cube.fixed(j, !((v >> j) & 1u)).for_each_vertex([&](Vertex u) { inside = inside && region.contains(u); });
      if (inside) cube = wider;
    }
    cube.for_each_vertex([&](Vertex u) { covered.insert(u); });
    out.push_back(cube);
  }
  return out;
}

struct RegionPartition {
  VertexSet forall_region;  // covered by positive cubes only
  VertexSet exists_region;  // covered by both
  VertexSet negative_only;  // covered by negative cubes only
  VertexSet uncovered;      // covered by neither
};

inline RegionPartition forall_exists_partition(const std::vector<Subcube>& pos_rdnf,
                                               const std::vector<Subcube>& neg_rdnf, int n) {
  check_dims(n);
  for (const auto* side : {&pos_rdnf, &neg_rdnf})
    for (const auto& c : *side)
      if (c.dims() != n) throw Error("subcube dimension mismatch");
  const auto pos = VertexSet::cover(n, pos_rdnf);
  const auto neg = VertexSet::cover(n, neg_rdnf);
  return {pos - neg, pos & neg, neg - pos, (pos | neg).complement()};
}

// Deterministic map of {0,1}^n into itself, given as an explicit table or as
// a per-coordinate substitution rule.
class BooleanAction {
 public:
  struct Literal {
    enum class Kind { zero, one, copy, negate };
    Kind kind = Kind::copy;
    int source = 0;  // 0-based input coordinate for copy/negate
  };

  BooleanAction() = default;

  static BooleanAction table(std::string id, int n, std::vector<Vertex> images) {
    check_dims(n);
    if (images.size() != (std::size_t{1} << n))
      throw Error("action table '" + id + "' must list all 2^n inputs");
    for (Vertex v : images)
      if (v > Subcube::mask(n)) throw Error("action table '" + id + "' maps outside the cube");
    BooleanAction a;
    a.id_ = std::move(id);
    a.n_ = n;
    a.map_ = std::move(images);
    return a;
  }

  static BooleanAction rule(std::string id, std::vector<Literal> literals) {
    const int n = static_cast<int>(literals.size());
    if (n < 1) throw Error("action rule '" + id + "' is empty");
    for (const auto& l : literals)
      if ((l.kind == Literal::Kind::copy || l.kind == Literal::Kind::negate) &&
          (l.source < 0 || l.source >= n))
        throw Error("action rule '" + id + "' references a missing coordinate");
    BooleanAction a;
    a.id_ = std::move(id);
    a.n_ = n;
    a.map_ = std::move(literals);
    return a;
  }

  // Tokens "0", "1", "xK", "!xK" with 1-based K.
  static BooleanAction parse_rule(std::string id, const std::vector<std::string>& tokens) {
    std::vector<Literal> lits;
    for (const auto& t : tokens) {
      Literal l;
      if (t == "0") {
        l.kind = Literal::Kind::zero;
      } else if (t == "1") {
        l.kind = Literal::Kind::one;
      } else {
        std::string_view s = t;
        l.kind = Literal::Kind::copy;
        if (!s.empty() && s.front() == '!') {
          l.kind = Literal::Kind::negate;
          s.remove_prefix(1);
        }
        if (s.size() < 2 || s.front() != 'x') throw Error("bad rule token '" + t + "'");
        try {
          l.source = std::stoi(std::string(s.substr(1))) - 1;
        } catch (const std::exception&) {
          throw Error("bad rule token '" + t + "'");
        }
      }
      lits.push_back(l);
    }
    return rule(std::move(id), std::move(lits));
  }

  static BooleanAction identity(std::string id, int n) {
    std::vector<Literal> lits(static_cast<std::size_t>(n));
    for (int j = 0; j < n; ++j) lits[static_cast<std::size_t>(j)] = {Literal::Kind::copy, j};
    return rule(std::move(id), std::move(lits));
  }

  const std::string& id() const { return id_; }
  int dims() const { return n_; }
  bool is_table() const { return std::holds_alternative<std::vector<Vertex>>(map_); }

  Vertex apply(Vertex v) const {
    if (const auto* t = std::get_if<std::vector<Vertex>>(&map_)) return (*t)[v];
    const auto& lits = std::get<std::vector<Literal>>(map_);
    Vertex out = 0;
    for (std::size_t j = 0; j < lits.size(); ++j)
      if (bit(lits[j], [&](int s) { return ((v >> s) & 1u) != 0; })) out |= Vertex{1} << j;
    return out;
  }

  FeatureVector apply(const FeatureVector& x) const {
    if (static_cast<int>(x.size()) != n_) throw Error("action '" + id_ + "' dimension mismatch");
    if (is_table()) return to_features(apply(to_vertex(x)), n_);
    const auto& lits = std::get<std::vector<Literal>>(map_);
    FeatureVector out(x.size());
    for (std::size_t j = 0; j < lits.size(); ++j) {
      const bool b = bit(lits[j], [&](int s) {
        const double v = x[static_cast<std::size_t>(s)];
        if (v != 0.0 && v != 1.0) throw Error("non-Boolean coordinate under Boolean action");
        return v == 1.0;
      });
      out[j] = b ? 1.0 : 0.0;
    }
    return out;
  }

  nlohmann::json to_json() const {
    if (const auto* t = std::get_if<std::vector<Vertex>>(&map_)) {
      nlohmann::json tab = nlohmann::json::object();
      for (Vertex v = 0; v < t->size(); ++v) tab[vertex_string(v, n_)] = vertex_string((*t)[v], n_);
      return {{"id", id_}, {"kind", "table"}, {"table", tab}};
    }
    nlohmann::json rule = nlohmann::json::array();
    for (const auto& l : std::get<std::vector<Literal>>(map_)) {
      switch (l.kind) {
        case Literal::Kind::zero: rule.push_back("0"); break;
        case Literal::Kind::one: rule.push_back("1"); break;
        case Literal::Kind::copy: rule.push_back("x" + std::to_string(l.source + 1)); break;
        case Literal::Kind::negate: rule.push_back("!x" + std::to_string(l.source + 1)); break;
      }
    }
    return {{"id", id_}, {"kind", "rule"}, {"rule", rule}};
  }

 private:
  template <class Get>
  static bool bit(const Literal& l, Get&& get) {
    switch (l.kind) {
      case Literal::Kind::zero: return false;
      case Literal::Kind::one: return true;
      case Literal::Kind::copy: return get(l.source);
      case Literal::Kind::negate: return !get(l.source);
    }
    return false;
  }

  std::string id_;
  int n_ = 0;
  std::variant<std::vector<Vertex>, std::vector<Literal>> map_;
};

using BooleanActionMap = std::map<ClassLabel, BooleanAction>;

// Vertex classifier: a class, or nullopt when the decision is indeterminate.
template <class F>
concept VertexClassifier = std::invocable<const F&, Vertex> &&
    std::convertible_to<std::invoke_result_t<const F&, Vertex>, std::optional<ClassLabel>>;

// One classify-then-act step for every vertex. Normal vertices stay put;
// indeterminate ones have no successor.
struct StepMap {
  int n = 0;
  std::vector<std::optional<Vertex>> next;
  std::size_t indeterminate = 0;
};

template <VertexClassifier Classify>
StepMap build_step_map(int n, const BooleanActionMap& actions, const Classify& classify) {
  check_dims(n);
  StepMap m{n, std::vector<std::optional<Vertex>>(std::size_t{1} << n), 0};
  for (Vertex v = 0; v < m.next.size(); ++v) {
    const std::optional<ClassLabel> c = classify(v);
    if (!c) {
      ++m.indeterminate;
      continue;
    }
    if (c->is_normal()) {
      m.next[v] = v;
      continue;
    }
    auto it = actions.find(*c);
    if (it == actions.end())
      throw Error("no action bound to class " + std::to_string(c->index()));
    if (it->second.dims() != n) throw Error("action '" + it->second.id() + "' dimension mismatch");
    m.next[v] = it->second.apply(v);
  }
  return m;
}

struct BackwardStep {
  VertexSet region;
  std::size_t indeterminate = 0;
};

inline VertexSet preimage(const VertexSet& region, const StepMap& map) {
  if (region.dims() != map.n) throw Error("dimension mismatch between region and step map");
  VertexSet out(map.n);
  for (Vertex v = 0; v < map.next.size(); ++v)
    if (map.next[v] && region.contains(*map.next[v])) out.insert(v);
  return out;
}

// Vertices that are in `region` after one classify-then-act step.
template <VertexClassifier Classify>
BackwardStep backward_step(const VertexSet& region, const BooleanActionMap& actions,
                           const Classify& classify) {
  const auto map = build_step_map(region.dims(), actions, classify);
  return {preimage(region, map), map.indeterminate};
}

struct BackwardReach {
  std::vector<VertexSet> depth;   // depth[d]: in region after exactly d steps
  std::vector<VertexSet> within;  // within[d]: union of depth[0..d]
  std::size_t indeterminate = 0;
  std::optional<std::size_t> stabilized_at;  // first d with within[d] == within[d-1]
};

inline BackwardReach backward_reach(const VertexSet& region, const StepMap& map, std::size_t k) {
  BackwardReach r;
  r.indeterminate = map.indeterminate;
  r.depth.push_back(region);
  r.within.push_back(region);
  for (std::size_t d = 1; d <= k; ++d) {
    r.depth.push_back(preimage(r.depth.back(), map));
    r.within.push_back(r.within.back() | r.depth.back());
    if (!r.stabilized_at && r.within[d] == r.within[d - 1]) r.stabilized_at = d;
  }
  return r;
}

template <VertexClassifier Classify>
BackwardReach backward_reach(const VertexSet& region, const BooleanActionMap& actions,
                             const Classify& classify, std::size_t k) {
  return backward_reach(region, build_step_map(region.dims(), actions, classify), k);
}

// One-vs-rest RDNF per class of a Boolean learning set.
inline std::vector<std::vector<Subcube>> multiclass_rdnf(const LearningSet& set) {
  if (set.mode() != FeatureMode::boolean) throw Error("multiclass RDNF needs a Boolean learning set");
  const int n = static_cast<int>(set.feature_count());
  check_dims(n);
  std::vector<std::vector<Subcube>> out;
  for (int c = 0; c < set.class_count(); ++c) {
    PartialBooleanFunction f{n, {}, {}};
    for (const auto& s : set.samples())
      (s.label.index() == c ? f.positives : f.negatives).push_back(to_vertex(s.features));
    out.push_back(reduced_dnf(f));
  }
  return out;
}

// Classifier over per-class subcube families. `exclusive` assigns a class
// only when its cubes are the only ones covering the vertex (the class's
// forall region); `voting` uses the share of each class's cubes that fire.
class RdnfClassifier {
 public:
  enum class Rule { exclusive, voting };

  RdnfClassifier(int n, std::vector<std::vector<Subcube>> per_class, Rule rule = Rule::exclusive)
      : n_(n), per_class_(std::move(per_class)), rule_(rule) {
    check_dims(n);
  }

  static RdnfClassifier from(const LearningSet& set, Rule rule = Rule::exclusive) {
    return RdnfClassifier(static_cast<int>(set.feature_count()), multiclass_rdnf(set), rule);
  }

  int dims() const { return n_; }
  const std::vector<std::vector<Subcube>>& per_class() const { return per_class_; }

  std::optional<ClassLabel> operator()(Vertex v) const {
    if (rule_ == Rule::exclusive) {
      std::optional<ClassLabel> hit;
      for (std::size_t c = 0; c < per_class_.size(); ++c) {
        const bool covers = std::any_of(per_class_[c].begin(), per_class_[c].end(),
                                        [&](const Subcube& q) { return q.contains(v); });
        if (!covers) continue;
        if (hit) return std::nullopt;
        hit = ClassLabel(static_cast<int>(c));
      }
      return hit;
    }
    double best = 0.0;
    std::optional<ClassLabel> hit;
    bool tie = false;
    for (std::size_t c = 0; c < per_class_.size(); ++c) {
      const auto& cubes = per_class_[c];
      if (cubes.empty()) continue;
      const auto fired = std::count_if(cubes.begin(), cubes.end(), [&](const Subcube& q) { return q.contains(v); });
      const double score = static_cast<double>(fired) / static_cast<double>(cubes.size());
      if (score > best) {
        best = score;
        hit = ClassLabel(static_cast<int>(c));
        tie = false;
      } else if (score == best && score > 0.0) {
        tie = true;
      }
    }
    return tie ? std::nullopt : hit;
  }

  // forall/exists split of class c against the union of all other classes.
  RegionPartition partition(ClassLabel c) const {
    std::vector<Subcube> others;
    for (std::size_t k = 0; k < per_class_.size(); ++k)
      if (static_cast<int>(k) != c.index())
        others.insert(others.end(), per_class_[k].begin(), per_class_[k].end());
    return forall_exists_partition(per_class_.at(static_cast<std::size_t>(c.index())), others, n_);
  }

 private:
  int n_;
  std::vector<std::vector<Subcube>> per_class_;
  Rule rule_;
};

inline nlohmann::json region_to_json(const VertexSet& region) {
  nlohmann::json verts = nlohmann::json::array();
  for (Vertex v : region.vertices()) verts.push_back(vertex_string(v, region.dims()));
  nlohmann::json cover = nlohmann::json::array();
  for (const auto& c : subcube_cover(region)) cover.push_back(c.str());
  return {{"count", region.count()}, {"vertices", verts}, {"cover", cover}};
}

inline nlohmann::json subcubes_to_json(const std::vector<Subcube>& cubes) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& c : cubes) arr.push_back(c.str());
  return arr;
}

}  // namespace carlab
