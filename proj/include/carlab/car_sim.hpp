#pragma once

// Classification-action recursion: classify every object, apply the action
// bound to its deviated class, repeat until it is normal, stalls, or runs
// out of steps.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "carlab/boolean_inverse.hpp"
#include "carlab/core.hpp"
#include "carlab/io.hpp"

namespace carlab {

// x_j -> slope_j * x_j + offset_j with every slope strictly positive.
struct AffineMap {
  std::vector<double> slope;
  std::vector<double> offset;

  FeatureVector apply(const FeatureVector& x) const {
    if (x.size() != slope.size()) throw Error("affine action dimension mismatch");
    FeatureVector out(x.size());
    for (std::size_t j = 0; j < x.size(); ++j) out[j] = slope[j] * x[j] + offset[j];
    return out;
  }
};

struct ActionSpec {
  std::string id;
  ClassLabel bound_class;
  std::variant<BooleanAction, AffineMap> kind;

  FeatureVector apply(const FeatureVector& x) const {
    return std::visit([&](const auto& a) { return a.apply(x); }, kind);
  }
};

// Validated, total assignment of one action to every deviated class 1..l.
class ActionTable {
 public:
  ActionTable() = default;
  explicit ActionTable(std::map<ClassLabel, ActionSpec> by_class) : by_class_(std::move(by_class)) {}

  const ActionSpec& for_class(ClassLabel c) const {
    auto it = by_class_.find(c);
    if (it == by_class_.end()) throw Error("no action bound to class " + std::to_string(c.index()));
    return it->second;
  }
  FeatureVector apply(ClassLabel c, const FeatureVector& x) const { return for_class(c).apply(x); }
  const std::map<ClassLabel, ActionSpec>& entries() const { return by_class_; }
  int deviated_count() const { return static_cast<int>(by_class_.size()); }

  // Boolean view for the inverse engine; fails on affine actions.
  BooleanActionMap boolean_actions() const {
    BooleanActionMap out;
    for (const auto& [c, spec] : by_class_) {
      const auto* b = std::get_if<BooleanAction>(&spec.kind);
      if (!b) throw Error("action '" + spec.id + "' is not Boolean");
      out.emplace(c, *b);
    }
    return out;
  }

 private:
  std::map<ClassLabel, ActionSpec> by_class_;
};

inline ActionTable register_actions(std::vector<ActionSpec> specs, int deviated_count) {
  std::map<ClassLabel, ActionSpec> table;
  for (auto& s : specs) {
    const int c = s.bound_class.index();
    if (c < 1 || c > deviated_count)
      throw Error("action '" + s.id + "' bound to class " + std::to_string(c) + " outside 1.." +
                  std::to_string(deviated_count));
    if (const auto* a = std::get_if<AffineMap>(&s.kind)) {
      if (a->slope.size() != a->offset.size()) throw Error("affine action '" + s.id + "' has mismatched vectors");
      for (double alpha : a->slope) {
        if (alpha == 0.0) throw Error("non-invertible affine component in action '" + s.id + "'");
        if (!(alpha > 0.0)) throw Error("non-positive affine slope in action '" + s.id + "'");
      }
    }
    if (!table.emplace(s.bound_class, std::move(s)).second)
      throw Error("duplicate action binding for class " + std::to_string(c));
  }
  for (int c = 1; c <= deviated_count; ++c)
    if (!table.count(ClassLabel(c))) throw Error("missing action for class " + std::to_string(c));
  return ActionTable(std::move(table));
}

// JSON: [{"class": i, "id": "...", "kind": "affine"|"table"|"rule", payload}]
//   affine: "slope": [...], "offset": [...]
//   table:  "table": {"00": "01", ...} covering every input vector
//   rule:   "rule": ["x2", "!x1", "0", ...]
inline std::vector<ActionSpec> action_specs_from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw Error("action file must be a JSON array");
  std::vector<ActionSpec> out;
  try {
    for (const auto& item : j) {
      ActionSpec spec;
      spec.bound_class = ClassLabel(item.at("class").get<int>());
      spec.id = item.contains("id") ? item["id"].get<std::string>()
                                    : "a" + std::to_string(spec.bound_class.index());
      const auto kind = item.at("kind").get<std::string>();
      if (kind == "affine") {
        spec.kind = AffineMap{item.at("slope").get<std::vector<double>>(),
                              item.at("offset").get<std::vector<double>>()};
      } else if (kind == "rule") {
        spec.kind = BooleanAction::parse_rule(spec.id, item.at("rule").get<std::vector<std::string>>());
      } else if (kind == "table") {
        const auto& tab = item.at("table");
        if (!tab.is_object() || tab.empty()) throw Error("action table must be a nonempty object");
        const int n = static_cast<int>(tab.begin().key().size());
        check_dims(n);
        std::vector<Vertex> images(std::size_t{1} << n);
        std::vector<bool> set(images.size(), false);
        for (const auto& [in, outv] : tab.items()) {
          if (static_cast<int>(in.size()) != n) throw Error("action table keys differ in length");
          const auto v = parse_vertex(in);
          const auto img = outv.get<std::string>();
          if (static_cast<int>(img.size()) != n) throw Error("action table values differ in length");
          images[v] = parse_vertex(img);
          set[v] = true;
        }
        if (std::count(set.begin(), set.end(), false) != 0)
          throw Error("action table '" + spec.id + "' must cover all 2^n inputs");
        spec.kind = BooleanAction::table(spec.id, n, std::move(images));
      } else {
        throw Error("unknown action kind '" + kind + "'");
      }
      out.push_back(std::move(spec));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("malformed action file: ") + e.what());
  }
  return out;
}

inline nlohmann::json to_json(const ActionSpec& spec) {
  nlohmann::json o;
  if (const auto* a = std::get_if<AffineMap>(&spec.kind)) {
    o = {{"kind", "affine"}, {"slope", a->slope}, {"offset", a->offset}};
  } else {
    o = std::get<BooleanAction>(spec.kind).to_json();
  }
  o["class"] = spec.bound_class.index();
  o["id"] = spec.id;
  return o;
}

template <class F>
concept FeatureClassifier = std::invocable<const F&, const FeatureVector&> &&
    std::convertible_to<std::invoke_result_t<const F&, const FeatureVector&>, std::optional<ClassLabel>>;

enum class RunStatus { converged, stalled_indeterminate, stalled_cycle, exhausted };

inline const char* to_string(RunStatus s) {
  switch (s) {
    case RunStatus::converged: return "converged";
    case RunStatus::stalled_indeterminate: return "stalled-indeterminate";
    case RunStatus::stalled_cycle: return "stalled-cycle";
    case RunStatus::exhausted: return "exhausted";
  }
  return "?";
}

struct ObjectRun {
  std::string object_id;
  Trace trace;
  RunStatus status = RunStatus::exhausted;
  std::optional<std::size_t> steps_to_normal;
  FeatureVector final_state;
};

struct CarRunReport {
  std::vector<ObjectRun> objects;  // ordered by object id
  std::size_t max_steps = 0;
};

// One object's run. Step k classifies x^(k) (timestamp k); a normal class
// ends the run, an indeterminate one stalls it, and a repeated
// (state, class) pair marks a cycle. At most max_steps actions are applied.
template <FeatureClassifier Classify>
ObjectRun run_object(const std::string& id, FeatureVector x, const Classify& classify,
                     const ActionTable& actions, std::size_t max_steps) {
  ObjectRun run;
  run.object_id = id;
  run.trace.object_id = id;
  std::set<std::pair<FeatureVector, ClassLabel>> seen;
  for (std::size_t k = 0;; ++k) {
    const std::optional<ClassLabel> c = classify(x);
    if (!c) {
      run.status = RunStatus::stalled_indeterminate;
      break;
    }
    if (c->is_normal()) {
      run.trace.events.push_back({id, k, static_cast<double>(k), x, *c, std::nullopt});
      run.status = RunStatus::converged;
      run.steps_to_normal = k;
      break;
    }
    if (!seen.emplace(x, *c).second) {
      run.status = RunStatus::stalled_cycle;
      break;
    }
    const auto& action = actions.for_class(*c);
    run.trace.events.push_back({id, k, static_cast<double>(k), x, *c, action.id});
    if (k == max_steps) {
      run.status = RunStatus::exhausted;
      break;
    }
    x = action.apply(x);
  }
  run.final_state = std::move(x);
  return run;
}

template <FeatureClassifier Classify>
CarRunReport run_car(const std::vector<FeatureRow>& population, const Classify& classify,
                     const ActionTable& actions, std::size_t max_steps) {
  CarRunReport report;
  report.max_steps = max_steps;
  std::set<std::string> ids;
  for (const auto& p : population) {
    if (p.object_id.empty()) throw Error("population member with empty id");
    if (!ids.insert(p.object_id).second) throw Error("duplicate object id '" + p.object_id + "'");
    report.objects.push_back(run_object(p.object_id, p.features, classify, actions, max_steps));
  }
  std::sort(report.objects.begin(), report.objects.end(),
            [](const ObjectRun& a, const ObjectRun& b) { return a.object_id < b.object_id; });
  return report;
}

template <FeatureClassifier Classify>
CarRunReport run_car(const LearningSet& set, const Classify& classify, const ActionTable& actions,
                     std::size_t max_steps) {
  std::vector<FeatureRow> rows;
  for (const auto& s : set.samples()) rows.push_back({s.object_id, s.features});
  return run_car(rows, classify, actions, max_steps);
}

// Unnamed vectors get ids x0, x1, ... (zero padded so they sort in order).
template <FeatureClassifier Classify>
CarRunReport run_car(const std::vector<FeatureVector>& vectors, const Classify& classify,
                     const ActionTable& actions, std::size_t max_steps) {
  std::vector<FeatureRow> rows;
  const std::size_t width = std::to_string(vectors.empty() ? 0 : vectors.size() - 1).size();
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    auto num = std::to_string(i);
    rows.push_back({"x" + std::string(width - num.size(), '0') + num, vectors[i]});
  }
  return run_car(rows, classify, actions, max_steps);
}

struct ConvergenceSummary {
  std::size_t population = 0;
  std::vector<double> fraction_normal_within;  // index k = 0..max_steps
  std::optional<double> terminal_fraction;
  std::optional<double> mean_steps;
  std::optional<double> median_steps;
  std::optional<double> p90_steps;
  std::size_t converged = 0;
  std::size_t stalled_indeterminate = 0;
  std::size_t stalled_cycle = 0;
  std::size_t exhausted = 0;
};

// Convergence is read off the traces: a trace converged iff it ends in the
// normal class, after (length - 1) steps. Percentiles use nearest rank.
inline ConvergenceSummary convergence_metrics(const CarRunReport& report) {
  ConvergenceSummary s;
  s.population = report.objects.size();
  if (s.population == 0) return s;
  std::vector<std::size_t> steps;
  for (const auto& o : report.objects) {
    const auto& ev = o.trace.events;
    if (!ev.empty() && ev.back().assigned_class.is_normal()) steps.push_back(ev.size() - 1);
    switch (o.status) {
      case RunStatus::converged: break;
      case RunStatus::stalled_indeterminate: ++s.stalled_indeterminate; break;
      case RunStatus::stalled_cycle: ++s.stalled_cycle; break;
      case RunStatus::exhausted: ++s.exhausted; break;
    }
  }
  s.converged = steps.size();
  std::sort(steps.begin(), steps.end());
  for (std::size_t k = 0; k <= report.max_steps; ++k) {
    const auto within = std::upper_bound(steps.begin(), steps.end(), k) - steps.begin();
    s.fraction_normal_within.push_back(static_cast<double>(within) / static_cast<double>(s.population));
  }
  s.terminal_fraction = s.fraction_normal_within.back();
  if (!steps.empty()) {
    double sum = 0.0;
    for (auto k : steps) sum += static_cast<double>(k);
    s.mean_steps = sum / static_cast<double>(steps.size());
    auto rank = [&](double q) {
      const auto r = static_cast<std::size_t>(std::ceil(q * static_cast<double>(steps.size())));
      return static_cast<double>(steps[std::max<std::size_t>(r, 1) - 1]);
    };
    s.median_steps = rank(0.5);
    s.p90_steps = rank(0.9);
  }
  return s;
}

inline nlohmann::json to_json(const ConvergenceSummary& s) {
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  return {{"population", s.population},
          {"fraction_normal_within", s.fraction_normal_within},
          {"terminal_fraction", opt(s.terminal_fraction)},
          {"mean_steps", opt(s.mean_steps)},
          {"median_steps", opt(s.median_steps)},
          {"p90_steps", opt(s.p90_steps)},
          {"converged", s.converged},
          {"stalls", {{"indeterminate", s.stalled_indeterminate}, {"cycle", s.stalled_cycle}}},
          {"exhausted", s.exhausted}};
}

inline nlohmann::json to_json(const CarRunReport& r) {
  nlohmann::json objects = nlohmann::json::array();
  for (const auto& o : r.objects)
    objects.push_back({{"id", o.object_id},
                       {"status", to_string(o.status)},
                       {"steps_to_normal", o.steps_to_normal ? nlohmann::json(*o.steps_to_normal) : nlohmann::json(nullptr)},
                       {"trace_length", o.trace.length()},
                       {"final_state", o.final_state}});
  return {{"max_steps", r.max_steps}, {"objects", objects}, {"summary", to_json(convergence_metrics(r))}};
}

inline std::vector<Trace> traces_of(const CarRunReport& r) {
  std::vector<Trace> out;
  for (const auto& o : r.objects) out.push_back(o.trace);
  return out;
}

}  // namespace carlab
