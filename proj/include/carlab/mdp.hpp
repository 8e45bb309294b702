#pragma once

// Markov decision model over classes, estimated from stochastic traces, with
// rewards derived from level-diagram distances, value iteration, policy
// evaluation and observed-vs-optimal policy comparison.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "carlab/core.hpp"
#include "carlab/transition_poset.hpp"

namespace carlab {

// Synthetic action of the absorbing normal class.
inline const std::string kStayAction = "stay";

enum class RewardShape {
  level_difference,   // level(s) - level(s')
  negative_distance,  // -level(s')
};

inline std::optional<RewardShape> parse_reward_shape(const std::string& s) {
  if (s == "level-difference") return RewardShape::level_difference;
  if (s == "negative-distance") return RewardShape::negative_distance;
  return std::nullopt;
}

struct MdpConfig {
  double gamma = 0.9;
  double tol = 1e-9;
  double smoothing = 0.0;
  RewardShape reward_shape = RewardShape::level_difference;
};

class MDPModel {
 public:
  struct ActionRow {
    std::string action;
    std::vector<double> prob;    // indexed like states()
    std::vector<double> reward;  // indexed like states()
  };

  MDPModel() = default;
  MDPModel(std::vector<ClassLabel> states, std::vector<std::vector<ActionRow>> rows, double gamma)
      : states_(std::move(states)), rows_(std::move(rows)), gamma_(gamma) {
    validate();
  }

  const std::vector<ClassLabel>& states() const { return states_; }
  const std::vector<std::vector<ActionRow>>& rows() const { return rows_; }
  const std::vector<ActionRow>& actions_at(std::size_t s) const { return rows_[s]; }
  double gamma() const { return gamma_; }
  std::size_t size() const { return states_.size(); }

  std::optional<std::size_t> index_of(ClassLabel c) const {
    auto it = std::lower_bound(states_.begin(), states_.end(), c);
    if (it == states_.end() || *it != c) return std::nullopt;
    return static_cast<std::size_t>(it - states_.begin());
  }

  std::optional<std::size_t> action_index(std::size_t s, const std::string& a) const {
    for (std::size_t k = 0; k < rows_[s].size(); ++k)
      if (rows_[s][k].action == a) return k;
    return std::nullopt;
  }

  // Expected one-step return of action k at state s under values v.
  double q_value(std::size_t s, std::size_t k, const std::vector<double>& v) const {
    const auto& row = rows_[s][k];
    double q = 0.0;
    for (std::size_t t = 0; t < states_.size(); ++t)
      if (row.prob[t] != 0.0) q += row.prob[t] * (row.reward[t] + gamma_ * v[t]);
    return q;
  }

 private:
  void validate() const {
    if (!(gamma_ >= 0.0 && gamma_ < 1.0)) throw Error("discount must lie in [0,1)");
    if (!std::is_sorted(states_.begin(), states_.end()) ||
        std::adjacent_find(states_.begin(), states_.end()) != states_.end())
      throw Error("MDP states must be sorted and distinct");
    if (rows_.size() != states_.size()) throw Error("MDP needs one action list per state");
    const auto normal = index_of(kNormal);
    if (!normal) throw Error("MDP lacks the normal class");
    for (std::size_t s = 0; s < states_.size(); ++s) {
      if (rows_[s].empty())
        throw Error("state " + std::to_string(states_[s].index()) + " has no action");
      std::set<std::string> names;
      for (const auto& row : rows_[s]) {
        if (!names.insert(row.action).second) throw Error("duplicate action '" + row.action + "'");
        if (row.prob.size() != states_.size() || row.reward.size() != states_.size())
          throw Error("MDP row of wrong width");
        double sum = 0.0;
        for (double p : row.prob) {
          if (!(p >= 0.0)) throw Error("negative transition probability");
          sum += p;
        }
        if (std::abs(sum - 1.0) > 1e-12)
          throw Error("transition row (" + std::to_string(states_[s].index()) + ", " + row.action +
                      ") is not normalized");
      }
    }
    const auto& stay = rows_[*normal];
    if (stay.size() != 1 || stay[0].action != kStayAction || stay[0].prob[*normal] != 1.0 ||
        stay[0].reward[*normal] != 0.0)
      throw Error("normal class must be absorbing with a single zero-reward 'stay' action");
  }

  std::vector<ClassLabel> states_;
  std::vector<std::vector<ActionRow>> rows_;
  double gamma_ = 0.9;
};

// Reward of landing in s' from s; action independent.
inline double level_reward(const LevelDiagram& xi, ClassLabel from, ClassLabel to, RewardShape shape) {
  const int a = distance_to_normal(xi, from);
  const int b = distance_to_normal(xi, to);
  return shape == RewardShape::level_difference ? static_cast<double>(a - b) : -static_cast<double>(b);
}

struct RewardTable {
  std::map<std::pair<ClassLabel, ClassLabel>, double> reward;
  double at(ClassLabel from, ClassLabel to) const { return reward.at({from, to}); }
};

inline RewardTable reward_from_levels(const LevelDiagram& xi,
                                      RewardShape shape = RewardShape::level_difference) {
  if (!xi.complete) throw Error("rewards need a complete level diagram");
  RewardTable t;
  for (const auto& [a, la] : xi.level)
    for (const auto& [b, lb] : xi.level) t.reward[{a, b}] = level_reward(xi, a, b, shape);
  return t;
}

// Frequency estimate with additive smoothing over all states:
//   P(s,a,s') = (count(s,a,s') + k) / (count(s,a,.) + k |S|)
inline MDPModel estimate_mdp(const std::vector<Trace>& traces, const LevelDiagram& xi,
                             const MdpConfig& config = {}) {
  if (!(config.smoothing >= 0.0)) throw Error("smoothing must be nonnegative");
  std::set<ClassLabel> seen{kNormal};
  std::map<ClassLabel, std::map<std::string, std::map<ClassLabel, std::size_t>>> counts;
  for (const auto& t : traces) {
    validate_trace(t);
    for (const auto& e : t.events) seen.insert(e.assigned_class);
    for (std::size_t k = 0; k + 1 < t.events.size(); ++k)
      ++counts[t.events[k].assigned_class][*t.events[k].applied_action][t.events[k + 1].assigned_class];
  }
  for (auto c : seen)
    if (!xi.level_of(c))
      throw Error("class " + std::to_string(c.index()) + " is missing from the level diagram");

  std::vector<ClassLabel> states(seen.begin(), seen.end());
  const std::size_t n = states.size();
  std::vector<std::vector<MDPModel::ActionRow>> rows(n);
  for (std::size_t s = 0; s < n; ++s) {
    const auto from = states[s];
    if (from.is_normal()) {
      MDPModel::ActionRow stay{kStayAction, std::vector<double>(n, 0.0), std::vector<double>(n, 0.0)};
      stay.prob[s] = 1.0;
      rows[s].push_back(std::move(stay));
      continue;
    }
    auto it = counts.find(from);
    if (it == counts.end())
      throw Error("state " + std::to_string(from.index()) + " has no observed action");
    for (const auto& [action, dest] : it->second) {
      MDPModel::ActionRow row{action, std::vector<double>(n, 0.0), std::vector<double>(n, 0.0)};
      std::size_t total = 0;
      for (const auto& [to, c] : dest) total += c;
      const double denom = static_cast<double>(total) + config.smoothing * static_cast<double>(n);
      for (std::size_t t = 0; t < n; ++t) {
        auto d = dest.find(states[t]);
        const double c = d == dest.end() ? 0.0 : static_cast<double>(d->second);
        row.prob[t] = (c + config.smoothing) / denom;
        row.reward[t] = level_reward(xi, from, states[t], config.reward_shape);
      }
      // Renormalize so the row sums to one up to a single rounding.
      double sum = 0.0;
      for (double p : row.prob) sum += p;
      for (double& p : row.prob) p /= sum;
      rows[s].push_back(std::move(row));
    }
  }
  return MDPModel(std::move(states), std::move(rows), config.gamma);
}

// Decision rule per state: a distribution over the state's actions.
struct Policy {
  std::map<ClassLabel, std::map<std::string, double>> decision;

  static Policy deterministic(const std::map<ClassLabel, std::string>& choice) {
    Policy p;
    for (const auto& [s, a] : choice) p.decision[s][a] = 1.0;
    return p;
  }

  std::optional<std::string> action_at(ClassLabel s) const {
    auto it = decision.find(s);
    if (it == decision.end() || it->second.size() != 1) return std::nullopt;
    return it->second.begin()->first;
  }
};

struct ValueFunction {
  std::vector<ClassLabel> states;
  std::vector<double> values;

  double at(ClassLabel c) const {
    auto it = std::lower_bound(states.begin(), states.end(), c);
    if (it == states.end() || *it != c) throw Error("no value for class " + std::to_string(c.index()));
    return values[static_cast<std::size_t>(it - states.begin())];
  }
};

inline double bellman_residual(const MDPModel& mdp, const std::vector<double>& v) {
  double r = 0.0;
  for (std::size_t s = 0; s < mdp.size(); ++s) {
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < mdp.actions_at(s).size(); ++k) best = std::max(best, mdp.q_value(s, k, v));
    r = std::max(r, std::abs(best - v[s]));
  }
  return r;
}

struct OptimalSolution {
  ValueFunction value;
  Policy policy;
  std::size_t iterations = 0;
  double residual = 0.0;
};

namespace detail {

// Sweep-to-sweep change below which the fixed point is within tol.
inline double stop_threshold(double gamma, double tol) {
  return gamma == 0.0 ? std::numeric_limits<double>::infinity() : tol * (1.0 - gamma) / gamma;
}

inline std::vector<std::size_t> greedy_actions(const MDPModel& mdp, const std::vector<double>& v,
                                               std::size_t s, double tie) {
  std::vector<double> q;
  for (std::size_t k = 0; k < mdp.actions_at(s).size(); ++k) q.push_back(mdp.q_value(s, k, v));
  const double best = *std::max_element(q.begin(), q.end());
  std::vector<std::size_t> out;
  for (std::size_t k = 0; k < q.size(); ++k)
    if (q[k] >= best - tie) out.push_back(k);
  return out;
}

}  // namespace detail

// Value iteration from V = 0, stopped once the distance to the fixed point is
// provably within tol. The greedy policy breaks ties (within tol) toward the
// lexicographically smallest action id.
inline OptimalSolution value_iteration(const MDPModel& mdp, double tol = 1e-9) {
  if (!(tol > 0.0)) throw Error("tolerance must be positive");
  const std::size_t n = mdp.size();
  std::vector<double> v(n, 0.0), next(n, 0.0);
  const double stop = detail::stop_threshold(mdp.gamma(), tol);
  OptimalSolution out;
  for (;;) {
    double diff = 0.0;
    for (std::size_t s = 0; s < n; ++s) {
      double best = -std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < mdp.actions_at(s).size(); ++k) best = std::max(best, mdp.q_value(s, k, v));
      next[s] = best;
      diff = std::max(diff, std::abs(best - v[s]));
    }
    v.swap(next);
    ++out.iterations;
    if (diff <= stop) break;
    if (out.iterations > 10'000'000) throw Error("value iteration did not converge");
  }
  out.value = {mdp.states(), v};
  out.residual = bellman_residual(mdp, v);
  for (std::size_t s = 0; s < n; ++s) {
    std::string chosen;
    for (const auto k : detail::greedy_actions(mdp, v, s, tol)) {
      const auto& a = mdp.actions_at(s)[k].action;
      if (chosen.empty() || a < chosen) chosen = a;
    }
    out.policy.decision[mdp.states()[s]][chosen] = 1.0;
  }
  return out;
}

namespace detail {

// pi[s][k]: probability of action k at state s; the normal class always stays.
inline std::vector<std::vector<double>> policy_matrix(const MDPModel& mdp, const Policy& pi) {
  std::vector<std::vector<double>> m(mdp.size());
  for (std::size_t s = 0; s < mdp.size(); ++s) {
    m[s].assign(mdp.actions_at(s).size(), 0.0);
    const auto state = mdp.states()[s];
    auto it = pi.decision.find(state);
    if (state.is_normal() && (it == pi.decision.end() || it->second.empty())) {
      m[s][0] = 1.0;
      continue;
    }
    if (it == pi.decision.end() || it->second.empty())
      throw Error("policy has no decision for state " + std::to_string(state.index()));
    double sum = 0.0;
    for (const auto& [a, p] : it->second) {
      auto k = mdp.action_index(s, a);
      if (!k)
        throw Error("policy uses action '" + a + "' outside A(" + std::to_string(state.index()) + ")");
      if (!(p >= 0.0)) throw Error("negative policy probability");
      m[s][*k] += p;
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9)
      throw Error("policy distribution at state " + std::to_string(state.index()) + " does not sum to 1");
  }
  return m;
}

}  // namespace detail

// Iterative evaluation of V^pi, stopped within tol of the fixed point.
inline ValueFunction policy_evaluation(const MDPModel& mdp, const Policy& pi, double tol = 1e-9) {
  if (!(tol > 0.0)) throw Error("tolerance must be positive");
  const auto m = detail::policy_matrix(mdp, pi);
  const std::size_t n = mdp.size();
  std::vector<double> v(n, 0.0), next(n, 0.0);
  const double stop = detail::stop_threshold(mdp.gamma(), tol);
  for (std::size_t it = 0;; ++it) {
    double diff = 0.0;
    for (std::size_t s = 0; s < n; ++s) {
      double val = 0.0;
      for (std::size_t k = 0; k < m[s].size(); ++k)
        if (m[s][k] != 0.0) val += m[s][k] * mdp.q_value(s, k, v);
      next[s] = val;
      diff = std::max(diff, std::abs(val - v[s]));
    }
    v.swap(next);
    if (diff <= stop) break;
    if (it > 10'000'000) throw Error("policy evaluation did not converge");
  }
  return {mdp.states(), v};
}

// Direct solve of (I - gamma P_pi) V = r_pi by Gaussian elimination with
// partial pivoting.
inline ValueFunction policy_evaluation_exact(const MDPModel& mdp, const Policy& pi) {
  const auto m = detail::policy_matrix(mdp, pi);
  const std::size_t n = mdp.size();
  std::vector<std::vector<double>> a(n, std::vector<double>(n + 1, 0.0));
  for (std::size_t s = 0; s < n; ++s) {
    a[s][s] = 1.0;
    for (std::size_t k = 0; k < m[s].size(); ++k) {
      if (m[s][k] == 0.0) continue;
      const auto& row = mdp.actions_at(s)[k];
      for (std::size_t t = 0; t < n; ++t) {
        a[s][t] -= mdp.gamma() * m[s][k] * row.prob[t];
        a[s][n] += m[s][k] * row.prob[t] * row.reward[t];
      }
    }
  }
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < n; ++r)
      if (std::abs(a[r][c]) > std::abs(a[piv][c])) piv = r;
    std::swap(a[c], a[piv]);
    if (a[c][c] == 0.0) throw Error("singular policy evaluation system");
    for (std::size_t r = 0; r < n; ++r) {
      if (r == c || a[r][c] == 0.0) continue;
      const double f = a[r][c] / a[c][c];
      for (std::size_t k = c; k <= n; ++k) a[r][k] -= f * a[c][k];
    }
  }
  std::vector<double> v(n);
  for (std::size_t s = 0; s < n; ++s) v[s] = a[s][n] / a[s][s];
  return {mdp.states(), v};
}

// Empirical action frequencies at every visited deviated state.
inline Policy extract_observed_policy(const std::vector<Trace>& traces) {
  std::map<ClassLabel, std::map<std::string, std::size_t>> counts;
  for (const auto& t : traces) {
    validate_trace(t);
    for (const auto& e : t.events)
      if (!e.assigned_class.is_normal()) ++counts[e.assigned_class][*e.applied_action];
  }
  Policy p;
  for (const auto& [s, by_action] : counts) {
    std::size_t total = 0;
    for (const auto& [a, c] : by_action) total += c;
    for (const auto& [a, c] : by_action)
      p.decision[s][a] = static_cast<double>(c) / static_cast<double>(total);
  }
  return p;
}

struct PolicyComparison {
  ValueFunction observed_value;
  ValueFunction optimal_value;
  Policy optimal_policy;
  std::vector<double> regret;            // V*(s) - V^obs(s), indexed like states
  std::vector<ClassLabel> agreement;     // observed policy concentrated on optimal actions
  std::vector<ClassLabel> unobserved;    // states the observed policy never visits
  double max_regret = 0.0;
  bool optimal = false;
  double tolerance = 0.0;
};

// States the observed policy never visits follow the optimal action and are
// listed in `unobserved`. Regret within the agreement tolerance counts as
// optimal.
inline PolicyComparison compare_policies(const Policy& observed, const MDPModel& mdp, double tol = 1e-9) {
  PolicyComparison out;
  const auto opt = value_iteration(mdp, tol);
  out.optimal_value = opt.value;
  out.optimal_policy = opt.policy;
  out.tolerance = std::max(1e-9, 10.0 * tol);

  Policy filled;
  for (std::size_t s = 0; s < mdp.size(); ++s) {
    const auto state = mdp.states()[s];
    auto it = observed.decision.find(state);
    if (state.is_normal()) {
      filled.decision[state][kStayAction] = 1.0;
    } else if (it == observed.decision.end() || it->second.empty()) {
      out.unobserved.push_back(state);
      filled.decision[state] = opt.policy.decision.at(state);
    } else {
      filled.decision[state] = it->second;
    }
  }
  for (const auto& [state, dist] : observed.decision)
    if (!mdp.index_of(state))
      throw Error("observed policy visits state " + std::to_string(state.index()) + " outside the MDP");

  out.observed_value = policy_evaluation_exact(mdp, filled);
  const auto& v_star = opt.value.values;
  for (std::size_t s = 0; s < mdp.size(); ++s) {
    const double r = v_star[s] - out.observed_value.values[s];
    out.regret.push_back(r);
    out.max_regret = std::max(out.max_regret, r);
    const auto state = mdp.states()[s];
    const auto greedy = detail::greedy_actions(mdp, v_star, s, out.tolerance);
    bool concentrated = true;
    for (const auto& [a, p] : filled.decision.at(state)) {
      if (p == 0.0) continue;
      const auto k = *mdp.action_index(s, a);
      concentrated = concentrated && std::find(greedy.begin(), greedy.end(), k) != greedy.end();
    }
    if (concentrated) out.agreement.push_back(state);
  }
  out.optimal = out.max_regret <= out.tolerance;
  return out;
}

inline nlohmann::json to_json(const MDPModel& mdp) {
  nlohmann::json states = nlohmann::json::array();
  for (auto c : mdp.states()) states.push_back(c.index());
  nlohmann::json tr = nlohmann::json::array();
  for (std::size_t s = 0; s < mdp.size(); ++s)
    for (const auto& row : mdp.actions_at(s))
      for (std::size_t t = 0; t < mdp.size(); ++t)
        if (row.prob[t] != 0.0)
          tr.push_back({{"s", mdp.states()[s].index()},
                        {"a", row.action},
                        {"s'", mdp.states()[t].index()},
                        {"p", row.prob[t]},
                        {"r", row.reward[t]}});
  return {{"states", states}, {"gamma", mdp.gamma()}, {"transitions", tr}};
}

inline MDPModel mdp_from_json(const nlohmann::json& j) {
  try {
    std::vector<ClassLabel> states;
    for (const auto& s : j.at("states")) states.push_back(ClassLabel(s.get<int>()));
    std::sort(states.begin(), states.end());
    const std::size_t n = states.size();
    auto idx = [&](int c) {
      auto it = std::lower_bound(states.begin(), states.end(), ClassLabel(c));
      if (it == states.end() || it->index() != c) throw Error("transition references unknown state");
      return static_cast<std::size_t>(it - states.begin());
    };
    std::vector<std::map<std::string, MDPModel::ActionRow>> rows(n);
    for (const auto& t : j.at("transitions")) {
      const auto s = idx(t.at("s").get<int>());
      const auto a = t.at("a").get<std::string>();
      auto& row = rows[s][a];
      if (row.prob.empty()) row = {a, std::vector<double>(n, 0.0), std::vector<double>(n, 0.0)};
      const auto to = idx(t.at("s'").get<int>());
      row.prob[to] = t.at("p").get<double>();
      row.reward[to] = t.at("r").get<double>();
    }
    std::vector<std::vector<MDPModel::ActionRow>> out(n);
    for (std::size_t s = 0; s < n; ++s)
      for (auto& [a, row] : rows[s]) out[s].push_back(std::move(row));
    return MDPModel(std::move(states), std::move(out), j.at("gamma").get<double>());
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("malformed MDP JSON: ") + e.what());
  }
}

inline nlohmann::json to_json(const Policy& p) {
  nlohmann::json o = nlohmann::json::object();
  for (const auto& [s, dist] : p.decision) o[std::to_string(s.index())] = dist;
  return o;
}

inline nlohmann::json to_json(const PolicyComparison& c) {
  nlohmann::json table = nlohmann::json::array();
  for (std::size_t s = 0; s < c.regret.size(); ++s)
    table.push_back({{"state", c.optimal_value.states[s].index()},
                     {"optimal_value", c.optimal_value.values[s]},
                     {"observed_value", c.observed_value.values[s]},
                     {"regret", c.regret[s]}});
  return {{"per_state", table},
          {"optimal_policy", to_json(c.optimal_policy)},
          {"agreement", labels_to_json(c.agreement)},
          {"unobserved", labels_to_json(c.unobserved)},
          {"max_regret", c.max_regret},
          {"tolerance", c.tolerance},
          {"verdict", c.optimal ? "optimal" : "suboptimal"}};
}

}  // namespace carlab
