#pragma once

// Logical dependencies: axis-aligned box predicates attached to one class,
// mined from a learning set by growing a box around every training point,
// and the uniform voting similarity used to classify with them.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "carlab/core.hpp"

namespace carlab {

// Closed parallelotope. Feature indices are 0-based; a missing bound means
// that side is unbounded.
struct Box {
  std::map<std::size_t, double> lower;
  std::map<std::size_t, double> upper;

  bool contains(const FeatureVector& x) const {
    for (const auto& [j, c] : lower) {
      if (j >= x.size()) throw Error("feature index " + std::to_string(j + 1) + " out of range");
      if (!(c <= x[j])) return false;
    }
    for (const auto& [j, c] : upper) {
      if (j >= x.size()) throw Error("feature index " + std::to_string(j + 1) + " out of range");
      if (!(x[j] <= c)) return false;
    }
    return true;
  }

  bool is_empty() const {
    for (const auto& [j, lo] : lower) {
      auto it = upper.find(j);
      if (it != upper.end() && lo > it->second) return true;
    }
    return false;
  }

  friend auto operator<=>(const Box&, const Box&) = default;
};

struct LogicalDependency {
  ClassLabel class_index;
  Box box;

  std::size_t lower_support() const { return box.lower.size(); }
  std::size_t upper_support() const { return box.upper.size(); }

  friend auto operator<=>(const LogicalDependency&, const LogicalDependency&) = default;
};

inline bool eval_ld(const LogicalDependency& ld, const FeatureVector& x) {
  return ld.box.contains(x);
}

struct Admissibility {
  enum class Status { admissible, no_own_coverage, violating };
  Status status = Status::admissible;
  std::size_t own_covered = 0;
  std::size_t counter_covered = 0;

  bool ok() const { return status == Status::admissible; }
};

inline Admissibility is_admissible(const LogicalDependency& ld, const LearningSet& set,
                                   ClassLabel target, std::size_t budget) {
  Admissibility r;
  for (const auto& s : set.samples()) {
    if (!eval_ld(ld, s.features)) continue;
    if (s.label == target)
      ++r.own_covered;
    else
      ++r.counter_covered;
  }
  if (r.own_covered == 0)
    r.status = Admissibility::Status::no_own_coverage;
  else if (r.counter_covered > budget)
    r.status = Admissibility::Status::violating;
  return r;
}

enum class QualityCriterion {
  coverage,           // own-class training points covered
  coverage_net,       // own-class covered minus counter-class covered
};

inline std::optional<QualityCriterion> parse_quality(const std::string& name) {
  if (name == "coverage") return QualityCriterion::coverage;
  if (name == "coverage-net") return QualityCriterion::coverage_net;
  return std::nullopt;
}

struct MiningConfig {
  std::size_t violation_budget = 0;
  QualityCriterion quality = QualityCriterion::coverage;
};

class UnseparableSeed : public Error {
 public:
  explicit UnseparableSeed(const std::string& object_id)
      : Error("unseparable seed '" + object_id + "'"), object_id_(object_id) {}
  const std::string& object_id() const { return object_id_; }

 private:
  std::string object_id_;
};

namespace detail {

// Sorted distinct training values of every feature.
inline std::vector<std::vector<double>> feature_grid(const LearningSet& set) {
  std::vector<std::vector<double>> grid(set.feature_count());
  for (const auto& s : set.samples())
    for (std::size_t j = 0; j < grid.size(); ++j) grid[j].push_back(s.features[j]);
  for (auto& g : grid) {
    std::sort(g.begin(), g.end());
    g.erase(std::unique(g.begin(), g.end()), g.end());
  }
  return grid;
}

inline double quality(const Admissibility& a, QualityCriterion q) {
  switch (q) {
    case QualityCriterion::coverage:
      return static_cast<double>(a.own_covered);
    case QualityCriterion::coverage_net:
      return static_cast<double>(a.own_covered) - static_cast<double>(a.counter_covered);
  }
  return 0.0;
}

// Next looser value for a bound on the feature grid, or nullopt when the
// bound has to be dropped.
inline std::optional<double> relax_lower(const std::vector<double>& grid, double c) {
  auto it = std::lower_bound(grid.begin(), grid.end(), c);
  if (it == grid.begin()) return std::nullopt;
  return *std::prev(it);
}

inline std::optional<double> relax_upper(const std::vector<double>& grid, double c) {
  auto it = std::upper_bound(grid.begin(), grid.end(), c);
  if (it == grid.end()) return std::nullopt;
  return *it;
}

}  // namespace detail

// One relaxation of a single bound: moved to the adjacent grid value, or
// removed when it already sits at the end of the grid.
struct BoundRelaxation {
  std::size_t feature = 0;
  bool lower = true;
  LogicalDependency relaxed;
};

inline std::vector<BoundRelaxation> single_bound_relaxations(const LogicalDependency& ld,
                                                             const LearningSet& set) {
  const auto grid = detail::feature_grid(set);
  std::vector<BoundRelaxation> out;
  for (const auto& [j, c] : ld.box.lower) {
    BoundRelaxation r{j, true, ld};
    if (auto next = detail::relax_lower(grid[j], c))
      r.relaxed.box.lower[j] = *next;
    else
      r.relaxed.box.lower.erase(j);
    out.push_back(std::move(r));
  }
  for (const auto& [j, c] : ld.box.upper) {
    BoundRelaxation r{j, false, ld};
    if (auto next = detail::relax_upper(grid[j], c))
      r.relaxed.box.upper[j] = *next;
    else
      r.relaxed.box.upper.erase(j);
    out.push_back(std::move(r));
  }
  return out;
}

// Grows a box from the point box at the seed. Features are visited in
// ascending order, the lower bound before the upper one; each bound is
// loosened one grid value at a time (and finally dropped) while the box stays
// admissible and the quality criterion does not decrease.
inline LogicalDependency grow_maximal_ld(const LearningSample& seed, const LearningSet& set,
                                         const MiningConfig& config) {
  if (seed.features.size() != set.feature_count())
    throw Error("seed feature count does not match the learning set");
  const auto grid = detail::feature_grid(set);
  const std::size_t budget = config.violation_budget;

  LogicalDependency ld{seed.label, {}};
  for (std::size_t j = 0; j < set.feature_count(); ++j) {
    ld.box.lower[j] = seed.features[j];
    ld.box.upper[j] = seed.features[j];
  }
  auto current = is_admissible(ld, set, seed.label, budget);
  if (!current.ok()) throw UnseparableSeed(seed.object_id);

  auto try_accept = [&](const LogicalDependency& candidate) {
    const auto a = is_admissible(candidate, set, seed.label, budget);
    if (!a.ok() || detail::quality(a, config.quality) < detail::quality(current, config.quality))
      return false;
    ld = candidate;
    current = a;
    return true;
  };

  for (std::size_t j = 0; j < set.feature_count(); ++j) {
    while (ld.box.lower.count(j)) {
      auto candidate = ld;
      if (auto next = detail::relax_lower(grid[j], ld.box.lower.at(j)))
        candidate.box.lower[j] = *next;
      else
        candidate.box.lower.erase(j);
      if (!try_accept(candidate)) break;
    }
    while (ld.box.upper.count(j)) {
      auto candidate = ld;
      if (auto next = detail::relax_upper(grid[j], ld.box.upper.at(j)))
        candidate.box.upper[j] = *next;
      else
        candidate.box.upper.erase(j);
      if (!try_accept(candidate)) break;
    }
  }
  return ld;
}

struct MiningWarning {
  ClassLabel class_index;
  std::string object_id;
  std::string message;
};

// Mined dependencies grouped by class (index = class).
struct LDSet {
  std::vector<std::vector<LogicalDependency>> per_class;
  std::vector<MiningWarning> warnings;

  int class_count() const { return static_cast<int>(per_class.size()); }

  const std::vector<LogicalDependency>& of(ClassLabel c) const {
    static const std::vector<LogicalDependency> kEmpty;
    const auto i = static_cast<std::size_t>(c.index());
    return i < per_class.size() ? per_class[i] : kEmpty;
  }

  std::vector<LogicalDependency> all() const {
    std::vector<LogicalDependency> out;
    for (const auto& v : per_class) out.insert(out.end(), v.begin(), v.end());
    return out;
  }

  std::size_t size() const {
    std::size_t s = 0;
    for (const auto& v : per_class) s += v.size();
    return s;
  }
};

inline LDSet mine_lds(const LearningSet& set, const MiningConfig& config = {}) {
  LDSet out;
  out.per_class.resize(static_cast<std::size_t>(set.class_count()));
  for (const auto& s : set.samples()) {
    try {
      out.per_class[static_cast<std::size_t>(s.label.index())].push_back(
          grow_maximal_ld(s, set, config));
    } catch (const UnseparableSeed& e) {
      out.warnings.push_back({s.label, s.object_id, e.what()});
    }
  }
  for (auto& lds : out.per_class) {
    std::sort(lds.begin(), lds.end());
    lds.erase(std::unique(lds.begin(), lds.end()), lds.end());
  }
  return out;
}

// Share of class i's dependencies that fire on x; 0 when the class has none.
inline double gamma_similarity(const FeatureVector& x, const LDSet& lds, ClassLabel c) {
  const auto& own = lds.of(c);
  if (own.empty()) return 0.0;
  std::size_t hits = 0;
  for (const auto& ld : own) hits += eval_ld(ld, x) ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(own.size());
}

struct Classification {
  enum class Reason { determinate, tied, all_zero };
  std::optional<ClassLabel> label;
  Reason reason = Reason::all_zero;
  std::vector<double> scores;

  bool determinate() const { return label.has_value(); }
};

inline const char* to_string(Classification::Reason r) {
  switch (r) {
    case Classification::Reason::determinate: return "determinate";
    case Classification::Reason::tied: return "tied";
    case Classification::Reason::all_zero: return "all-zero";
  }
  return "?";
}

// Unique positive argmax, otherwise indeterminate with the reason.
inline Classification decide(std::vector<double> scores) {
  Classification out;
  double best = 0.0;
  for (double s : scores) best = std::max(best, s);
  if (best > 0.0) {
    std::size_t winners = 0, at = 0;
    for (std::size_t i = 0; i < scores.size(); ++i)
      if (scores[i] == best) {
        ++winners;
        at = i;
      }
    if (winners == 1) {
      out.label = ClassLabel(static_cast<int>(at));
      out.reason = Classification::Reason::determinate;
    } else {
      out.reason = Classification::Reason::tied;
    }
  }
  out.scores = std::move(scores);
  return out;
}

inline Classification classify(const FeatureVector& x, const LDSet& lds) {
  std::vector<double> scores;
  scores.reserve(lds.per_class.size());
  for (int c = 0; c < lds.class_count(); ++c) scores.push_back(gamma_similarity(x, lds, ClassLabel(c)));
  return decide(std::move(scores));
}

inline std::optional<Box> ld_overlap(const LogicalDependency& a, const LogicalDependency& b) {
  Box out = a.box;
  for (const auto& [j, c] : b.box.lower) {
    auto [it, fresh] = out.lower.emplace(j, c);
    if (!fresh) it->second = std::max(it->second, c);
  }
  for (const auto& [j, c] : b.box.upper) {
    auto [it, fresh] = out.upper.emplace(j, c);
    if (!fresh) it->second = std::min(it->second, c);
  }
  if (out.is_empty()) return std::nullopt;
  return out;
}

// Intersection of two dependencies of different classes.
struct IndeterminacyArea {
  ClassLabel first_class;
  std::size_t first_index = 0;
  ClassLabel second_class;
  std::size_t second_index = 0;
  Box box;
};

inline std::vector<IndeterminacyArea> indeterminacy_areas(const LDSet& lds) {
  std::vector<IndeterminacyArea> out;
  for (int a = 0; a < lds.class_count(); ++a)
    for (int b = a + 1; b < lds.class_count(); ++b) {
      const auto& la = lds.of(ClassLabel(a));
      const auto& lb = lds.of(ClassLabel(b));
      for (std::size_t i = 0; i < la.size(); ++i)
        for (std::size_t k = 0; k < lb.size(); ++k)
          if (auto box = ld_overlap(la[i], lb[k]))
            out.push_back({ClassLabel(a), i, ClassLabel(b), k, std::move(*box)});
    }
  return out;
}

// Two-class view of a learning set: samples of `normal_side` become class 0,
// samples of `counter_side` class 1, everything else is dropped.
inline LearningSet two_class_view(const LearningSet& set, const std::set<ClassLabel>& normal_side,
                                  const std::set<ClassLabel>& counter_side) {
  std::vector<LearningSample> samples;
  for (const auto& s : set.samples()) {
    if (normal_side.count(s.label))
      samples.push_back({s.object_id, s.features, ClassLabel(0)});
    else if (counter_side.count(s.label))
      samples.push_back({s.object_id, s.features, ClassLabel(1)});
  }
  return LearningSet(std::move(samples), set.feature_count(), set.mode());
}

// JSON: [{ "class": i, "lower": {"j": c}, "upper": {"j": c} }] with 1-based j.
inline nlohmann::json box_to_json(const Box& box) {
  auto side = [](const std::map<std::size_t, double>& m) {
    nlohmann::json o = nlohmann::json::object();
    for (const auto& [j, c] : m) o[std::to_string(j + 1)] = c;
    return o;
  };
  return {{"lower", side(box.lower)}, {"upper", side(box.upper)}};
}

inline nlohmann::json to_json(const LDSet& lds) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& ld : lds.all()) {
    auto o = box_to_json(ld.box);
    o["class"] = ld.class_index.index();
    arr.push_back(std::move(o));
  }
  return arr;
}

inline LDSet ldset_from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw Error("LD set must be a JSON array");
  LDSet out;
  auto side = [](const nlohmann::json& o, std::map<std::size_t, double>& m) {
    if (!o.is_object()) throw Error("LD bounds must be JSON objects");
    for (const auto& [key, value] : o.items()) {
      std::size_t idx = 0;
      try {
        idx = std::stoul(key);
      } catch (const std::exception&) {
        throw Error("bad feature index '" + key + "'");
      }
      if (idx == 0) throw Error("feature indices are 1-based");
      if (!value.is_number()) throw Error("bound value must be a number");
      m[idx - 1] = value.get<double>();
    }
  };
  for (const auto& item : j) {
    if (!item.is_object() || !item.contains("class") || !item["class"].is_number_integer())
      throw Error("LD entry needs an integer 'class'");
    LogicalDependency ld;
    ld.class_index = ClassLabel(item["class"].get<int>());
    if (ld.class_index.index() < 0) throw Error("negative LD class");
    if (item.contains("lower")) side(item["lower"], ld.box.lower);
    if (item.contains("upper")) side(item["upper"], ld.box.upper);
    if (ld.box.is_empty()) throw Error("LD with an empty box");
    const auto c = static_cast<std::size_t>(ld.class_index.index());
    if (out.per_class.size() <= c) out.per_class.resize(c + 1);
    out.per_class[c].push_back(std::move(ld));
  }
  for (auto& lds : out.per_class) std::sort(lds.begin(), lds.end());
  return out;
}

}  // namespace carlab
