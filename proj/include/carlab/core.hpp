#pragma once

// Core data model: feature vectors, class labels, learning sets, object
// traces and the linkage graph built from them.

#include <algorithm>
#include <compare>
#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace carlab {

// Base of every error raised by the library. Input and validation problems
// are reported through this type so the CLI can map them to exit code 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using FeatureVector = std::vector<double>;

enum class FeatureMode { real, boolean };

inline const char* to_string(FeatureMode mode) {
  return mode == FeatureMode::real ? "real" : "boolean";
}

// Class index; 0 is the "normal" class, 1..l are the deviated classes.
class ClassLabel {
 public:
  constexpr ClassLabel() = default;
  constexpr explicit ClassLabel(int index) : index_(index) {}

  constexpr int index() const { return index_; }
  constexpr bool is_normal() const { return index_ == 0; }

  friend constexpr auto operator<=>(ClassLabel, ClassLabel) = default;

 private:
  int index_ = 0;
};

inline constexpr ClassLabel kNormal{0};

struct LearningSample {
  std::string object_id;
  FeatureVector features;
  ClassLabel label;

  friend bool operator==(const LearningSample&, const LearningSample&) = default;
};

// A labelled learning set. Construction validates every invariant: nonempty
// ids, a shared feature count, Boolean coordinates in Boolean mode, and a
// nonempty share for every class 0..l.
class LearningSet {
 public:
  LearningSet() = default;

  LearningSet(std::vector<LearningSample> samples, std::size_t feature_count,
              FeatureMode mode)
      : samples_(std::move(samples)), n_(feature_count), mode_(mode) {
    validate();
  }

  const std::vector<LearningSample>& samples() const { return samples_; }
  std::size_t feature_count() const { return n_; }
  // Number of deviated classes; class count is l + 1.
  int deviated_count() const { return l_; }
  int class_count() const { return l_ + 1; }
  std::size_t size() const { return samples_.size(); }
  FeatureMode mode() const { return mode_; }

  std::vector<const LearningSample*> share(ClassLabel c) const {
    std::vector<const LearningSample*> out;
    for (const auto& s : samples_)
      if (s.label == c) out.push_back(&s);
    return out;
  }

  friend bool operator==(const LearningSet&, const LearningSet&) = default;

 private:
  void validate() {
    if (samples_.empty()) throw Error("learning set is empty");
    int max_label = 0;
    for (const auto& s : samples_) {
      if (s.object_id.empty()) throw Error("sample with empty object id");
      if (s.features.size() != n_)
        throw Error("inconsistent feature count for object '" + s.object_id + "'");
      if (s.label.index() < 0)
        throw Error("negative class label for object '" + s.object_id + "'");
      if (mode_ == FeatureMode::boolean)
        for (double v : s.features)
          if (v != 0.0 && v != 1.0)
            throw Error("non-Boolean value in Boolean mode for object '" +
                        s.object_id + "'");
      max_label = std::max(max_label, s.label.index());
    }
    std::vector<bool> seen(static_cast<std::size_t>(max_label) + 1, false);
    for (const auto& s : samples_) seen[static_cast<std::size_t>(s.label.index())] = true;
    for (std::size_t c = 0; c < seen.size(); ++c)
      if (!seen[c]) throw Error("empty class share for class " + std::to_string(c));
    l_ = max_label;
  }

  std::vector<LearningSample> samples_;
  std::size_t n_ = 0;
  int l_ = 0;
  FeatureMode mode_ = FeatureMode::real;
};

struct TraceEvent {
  std::string object_id;
  std::size_t step = 0;
  double timestamp = 0.0;
  FeatureVector state;
  ClassLabel assigned_class;
  // Absent exactly when assigned_class is normal.
  std::optional<std::string> applied_action;

  friend bool operator==(const TraceEvent&, const TraceEvent&) = default;
};

// All events of one object, ordered by step.
struct Trace {
  std::string object_id;
  std::vector<TraceEvent> events;

  std::size_t length() const { return events.size(); }

  friend bool operator==(const Trace&, const Trace&) = default;
};

// Checks the per-object invariants: steps consecutive from 0, strictly
// increasing timestamps, and an action iff the class is deviated. The normal
// class is absorbing, so a normal event must close its trace.
inline void validate_trace(const Trace& trace) {
  const auto& ev = trace.events;
  for (std::size_t k = 0; k < ev.size(); ++k) {
    const auto& e = ev[k];
    if (e.object_id != trace.object_id)
      throw Error("trace '" + trace.object_id + "' contains event of object '" +
                  e.object_id + "'");
    if (e.step != k)
      throw Error("gap in step numbering for object '" + trace.object_id +
                  "' at step " + std::to_string(k));
    if (k > 0 && !(e.timestamp > ev[k - 1].timestamp))
      throw Error("non-increasing timestamp for object '" + trace.object_id +
                  "' at step " + std::to_string(k));
    if (e.timestamp < 0.0)
      throw Error("negative timestamp for object '" + trace.object_id + "'");
    if (e.assigned_class.is_normal() && e.applied_action)
      throw Error("action present on a normal-class event of object '" +
                  trace.object_id + "'");
    if (!e.assigned_class.is_normal() && (!e.applied_action || e.applied_action->empty()))
      throw Error("missing action on a deviated-class event of object '" +
                  trace.object_id + "'");
    if (e.assigned_class.is_normal() && k + 1 < ev.size())
      throw Error("event after a normal-class event of object '" + trace.object_id + "'");
  }
}

// Directed graph over object states (one vertex per (object_id, step)), with
// action-labelled edges between consecutive states of the same object.
struct LinkageGraph {
  struct Vertex {
    std::string object_id;
    std::size_t step = 0;
    FeatureVector state;
  };
  struct Edge {
    std::size_t from = 0;
    std::size_t to = 0;
    std::string action;
    std::optional<double> weight;
  };

  std::vector<Vertex> vertices;
  std::vector<Edge> edges;

  std::optional<std::size_t> find(const std::string& object_id, std::size_t step) const {
    for (std::size_t i = 0; i < vertices.size(); ++i)
      if (vertices[i].object_id == object_id && vertices[i].step == step) return i;
    return std::nullopt;
  }
};

// Edge weight is the elapsed time between the two states.
inline LinkageGraph build_linkage_graph(const std::vector<Trace>& traces) {
  LinkageGraph g;
  for (const auto& trace : traces) {
    validate_trace(trace);
    const std::size_t base = g.vertices.size();
    for (const auto& e : trace.events)
      g.vertices.push_back({e.object_id, e.step, e.state});
    for (std::size_t k = 0; k + 1 < trace.events.size(); ++k) {
      const auto& e = trace.events[k];
      g.edges.push_back({base + k, base + k + 1, *e.applied_action,
                         trace.events[k + 1].timestamp - e.timestamp});
    }
  }
  return g;
}

}  // namespace carlab

template <>
struct std::hash<carlab::ClassLabel> {
  std::size_t operator()(carlab::ClassLabel c) const noexcept {
    return std::hash<int>{}(c.index());
  }
};
