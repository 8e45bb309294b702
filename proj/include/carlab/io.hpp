#pragma once

// Readers and writers for the dataset and trace-log CSV formats.
//
//   dataset:   id,f1,...,fn,class
//   trace log: id,step,timestamp,f1,...,fn,class,action   (action empty for class 0)

#include <algorithm>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "carlab/core.hpp"
#include "carlab/csv.hpp"

namespace carlab {

namespace detail {

inline std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path + "'");
  return in;
}

inline void write_features(std::ostream& os, const FeatureVector& x) {
  for (double v : x) os << ',' << csv::format_double(v);
}

inline void write_feature_header(std::ostream& os, std::size_t n) {
  for (std::size_t j = 1; j <= n; ++j) os << ",f" << j;
}

}  // namespace detail

inline LearningSet parse_learning_set(std::istream& in, FeatureMode mode) {
  std::vector<std::string> row;
  std::size_t line_no = 0;
  if (!csv::next_row(in, row, line_no)) throw Error("dataset has no header");
  if (row.size() < 3 || row.front() != "id" || row.back() != "class")
    throw csv::row_error(line_no, "dataset header must be id,f1,...,fn,class");
  const std::size_t n = row.size() - 2;

  std::vector<LearningSample> samples;
  while (csv::next_row(in, row, line_no)) {
    if (row.size() != n + 2)
      throw csv::row_error(line_no, "expected " + std::to_string(n + 2) + " fields, got " +
                                        std::to_string(row.size()));
    LearningSample s;
    s.object_id = row[0];
    if (s.object_id.empty()) throw csv::row_error(line_no, "empty id");
    s.features.reserve(n);
    for (std::size_t j = 0; j < n; ++j) s.features.push_back(csv::parse_double(row[j + 1], line_no));
    s.label = ClassLabel(csv::parse_int<int>(row[n + 1], line_no));
    if (s.label.index() < 0) throw csv::row_error(line_no, "negative class");
    samples.push_back(std::move(s));
  }
  return LearningSet(std::move(samples), n, mode);
}

inline LearningSet load_learning_set(const std::string& path, FeatureMode mode) {
  auto in = detail::open_input(path);
  return parse_learning_set(in, mode);
}

inline void write_learning_set(std::ostream& os, const LearningSet& set) {
  os << "id";
  detail::write_feature_header(os, set.feature_count());
  os << ",class\n";
  for (const auto& s : set.samples()) {
    os << s.object_id;
    detail::write_features(os, s.features);
    os << ',' << s.label.index() << '\n';
  }
}

// Unlabelled vectors for classification: id,f1,...,fn with an optional
// trailing class column that is ignored.
struct FeatureRow {
  std::string object_id;
  FeatureVector features;
};

inline std::vector<FeatureRow> parse_feature_table(std::istream& in) {
  std::vector<std::string> row;
  std::size_t line_no = 0;
  if (!csv::next_row(in, row, line_no)) throw Error("vector table has no header");
  if (row.size() < 2 || row.front() != "id")
    throw csv::row_error(line_no, "vector header must start with id");
  const bool labelled = row.back() == "class";
  const std::size_t n = row.size() - 1 - (labelled ? 1 : 0);
  if (n == 0) throw csv::row_error(line_no, "no feature columns");
  std::vector<FeatureRow> out;
  while (csv::next_row(in, row, line_no)) {
    if (row.size() != n + 1 + (labelled ? 1 : 0)) throw csv::row_error(line_no, "wrong field count");
    FeatureRow r{row[0], {}};
    for (std::size_t j = 0; j < n; ++j) r.features.push_back(csv::parse_double(row[j + 1], line_no));
    out.push_back(std::move(r));
  }
  return out;
}

inline std::vector<FeatureRow> load_feature_table(const std::string& path) {
  auto in = detail::open_input(path);
  return parse_feature_table(in);
}

// Traces come back ordered by object id; events within a trace by step.
inline std::vector<Trace> parse_trace_log(std::istream& in) {
  std::vector<std::string> row;
  std::size_t line_no = 0;
  if (!csv::next_row(in, row, line_no)) throw Error("trace log has no header");
  if (row.size() < 5 || row[0] != "id" || row[1] != "step" || row[2] != "timestamp" ||
      row[row.size() - 2] != "class" || row.back() != "action")
    throw csv::row_error(line_no, "trace header must be id,step,timestamp,f1,...,fn,class,action");
  const std::size_t n = row.size() - 5;

  std::map<std::string, Trace> by_id;
  while (csv::next_row(in, row, line_no)) {
    if (row.size() != n + 5) throw csv::row_error(line_no, "wrong field count");
    TraceEvent e;
    e.object_id = row[0];
    if (e.object_id.empty()) throw csv::row_error(line_no, "empty id");
    e.step = csv::parse_int<std::size_t>(row[1], line_no);
    e.timestamp = csv::parse_double(row[2], line_no);
    for (std::size_t j = 0; j < n; ++j) e.state.push_back(csv::parse_double(row[3 + j], line_no));
    e.assigned_class = ClassLabel(csv::parse_int<int>(row[3 + n], line_no));
    if (e.assigned_class.index() < 0) throw csv::row_error(line_no, "negative class");
    if (!row[4 + n].empty()) e.applied_action = row[4 + n];
    auto& trace = by_id[e.object_id];
    trace.object_id = e.object_id;
    trace.events.push_back(std::move(e));
  }

  std::vector<Trace> traces;
  traces.reserve(by_id.size());
  for (auto& [id, trace] : by_id) {
    std::stable_sort(trace.events.begin(), trace.events.end(),
                     [](const TraceEvent& a, const TraceEvent& b) { return a.step < b.step; });
    validate_trace(trace);
    traces.push_back(std::move(trace));
  }
  return traces;
}

inline std::vector<Trace> load_trace_log(const std::string& path) {
  auto in = detail::open_input(path);
  return parse_trace_log(in);
}

inline void write_trace_log_header(std::ostream& os, std::size_t feature_count) {
  os << "id,step,timestamp";
  detail::write_feature_header(os, feature_count);
  os << ",class,action\n";
}

inline void write_trace_events(std::ostream& os, const std::vector<Trace>& traces) {
  for (const auto& t : traces)
    for (const auto& e : t.events) {
      os << e.object_id << ',' << e.step << ',' << csv::format_double(e.timestamp);
      detail::write_features(os, e.state);
      os << ',' << e.assigned_class.index() << ',' << e.applied_action.value_or("") << '\n';
    }
}

inline void write_trace_log(std::ostream& os, const std::vector<Trace>& traces,
                            std::size_t feature_count) {
  write_trace_log_header(os, feature_count);
  write_trace_events(os, traces);
}

}  // namespace carlab
