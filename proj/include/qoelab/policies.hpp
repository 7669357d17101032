#pragma once

// Handoff decision policies: tabular Q-learning over predicted QoE states,
// the RNL load baseline, a delay-driven multi-attribute baseline, an offline
// minimal-handoff oracle, and value iteration as the Bellman reference.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "qoelab/error.hpp"
#include "qoelab/qoe_model.hpp"

namespace qoelab {

struct InterfaceId {
  int index = 0;
  friend constexpr auto operator<=>(InterfaceId, InterfaceId) = default;
};

// Selecting the current interface means staying.
struct Action {
  InterfaceId target;
  friend constexpr auto operator<=>(Action, Action) = default;
};

struct JointState {
  std::vector<QoeState> per_interface;
  InterfaceId current;
};

// Joint-state indexing, row-major over (state of interface 0, state of
// interface 1, ..., current interface).
class StateSpace {
 public:
  StateSpace() = default;
  explicit StateSpace(std::vector<int> states_per_interface) : counts_(std::move(states_per_interface)) {
    if (counts_.empty()) throw DomainError("state space needs at least one interface");
    for (int c : counts_)
      if (c < 1) throw DomainError("each interface needs at least one QoE state");
  }

  int interface_count() const { return static_cast<int>(counts_.size()); }
  const std::vector<int>& states_per_interface() const { return counts_; }

  std::size_t size() const {
    std::size_t n = counts_.size();
    for (int c : counts_) n *= static_cast<std::size_t>(c);
    return n;
  }

  std::size_t index(const JointState& s) const {
    if (s.per_interface.size() != counts_.size()) throw DomainError("joint state has the wrong interface count");
    if (s.current.index < 0 || s.current.index >= interface_count()) throw DomainError("current interface out of range");
    std::size_t idx = 0;
    for (std::size_t i = 0; i < counts_.size(); ++i) {
      const int q = s.per_interface[i].index;
      if (q < 1 || q > counts_[i]) throw DomainError("QoE state out of range for interface");
      idx = idx * static_cast<std::size_t>(counts_[i]) + static_cast<std::size_t>(q - 1);
    }
    return idx * counts_.size() + static_cast<std::size_t>(s.current.index);
  }

  JointState state(std::size_t idx) const {
    JointState s;
    s.current.index = static_cast<int>(idx % counts_.size());
    idx /= counts_.size();
    s.per_interface.resize(counts_.size());
    for (std::size_t i = counts_.size(); i-- > 0;) {
      s.per_interface[i].index = static_cast<int>(idx % static_cast<std::size_t>(counts_[i])) + 1;
      idx /= static_cast<std::size_t>(counts_[i]);
    }
    return s;
  }

  std::string label(std::size_t idx) const {
    const auto s = state(idx);
    std::ostringstream os;
    for (std::size_t i = 0; i < s.per_interface.size(); ++i) os << (i ? "," : "") << s.per_interface[i].index;
    os << "|" << s.current.index;
    return os.str();
  }

  friend bool operator==(const StateSpace&, const StateSpace&) = default;

 private:
  std::vector<int> counts_;
};

// ---------------------------------------------------------------------------
// Reward

struct RewardConfig {
  double w_qoe = 1.0;
  double qoe_min = 1.0;
  double qoe_max = 3.0;
  double cost_min = 0.0;
  double cost_max = 1.0;
  double handoff_cost = 1.0;

  void validate() const {
    if (!(w_qoe >= 0.0 && w_qoe <= 1.0)) throw DomainError("w_qoe must lie in [0, 1]");
    if (!(qoe_min < qoe_max)) throw DomainError("qoe_min must be < qoe_max");
    if (!(cost_min < cost_max)) throw DomainError("cost_min must be < cost_max");
    if (!(handoff_cost >= 0.0)) throw DomainError("handoff_cost must be >= 0");
  }
};

inline double qoe_utility(double qoe, const RewardConfig& cfg) {
  if (qoe >= cfg.qoe_max) return 1.0;
  if (qoe <= cfg.qoe_min) return 0.0;
  return (qoe - cfg.qoe_min) / (cfg.qoe_max - cfg.qoe_min);
}

inline double cost_utility(double cost, const RewardConfig& cfg) {
  if (cost <= cfg.cost_min) return 1.0;
  if (cost >= cfg.cost_max) return 0.0;
  return (cfg.cost_max - cost) / (cfg.cost_max - cfg.cost_min);
}

inline double reward(double qoe_state_value, double cost, const RewardConfig& cfg) {
  return cfg.w_qoe * qoe_utility(qoe_state_value, cfg) + (1.0 - cfg.w_qoe) * cost_utility(cost, cfg);
}

// ---------------------------------------------------------------------------
// Q-learning

enum class AlphaDecay : std::uint8_t { Constant, InverseVisit };

inline std::string_view to_string(AlphaDecay d) { return d == AlphaDecay::Constant ? "constant" : "inverse_visit"; }

inline AlphaDecay parse_alpha_decay(std::string_view s) {
  if (s == "constant") return AlphaDecay::Constant;
  if (s == "inverse_visit") return AlphaDecay::InverseVisit;
  throw UsageError("unknown alpha_decay '" + std::string(s) + "'");
}

struct QLearningConfig {
  double alpha = 0.80;
  double gamma = 0.95;
  double epsilon = 0.2;
  double epsilon_decay = 0.99;  // per episode
  double epsilon_floor = 0.01;
  AlphaDecay alpha_decay = AlphaDecay::Constant;

  void validate() const {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw DomainError("alpha must lie in [0, 1]");
    if (!(gamma >= 0.0 && gamma < 1.0)) throw DomainError("gamma must lie in [0, 1)");
    if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw DomainError("epsilon must lie in [0, 1]");
    if (!(epsilon_decay > 0.0 && epsilon_decay <= 1.0)) throw DomainError("epsilon_decay must lie in (0, 1]");
    if (!(epsilon_floor >= 0.0 && epsilon_floor <= 1.0)) throw DomainError("epsilon_floor must lie in [0, 1]");
  }

  // Exploration probability for a 0-based episode index.
  double epsilon_at(int episode) const {
    return std::max(epsilon_floor, epsilon * std::pow(epsilon_decay, static_cast<double>(episode)));
  }
};

class QTable {
 public:
  QTable() = default;
  QTable(std::size_t states, std::size_t actions)
      : states_(states), actions_(actions), values_(states * actions, 0.0), visits_(states * actions, 0) {}

  std::size_t state_count() const { return states_; }
  std::size_t action_count() const { return actions_; }

  double& value(std::size_t s, std::size_t a) { return values_.at(s * actions_ + a); }
  double value(std::size_t s, std::size_t a) const { return values_.at(s * actions_ + a); }
  long long& visits(std::size_t s, std::size_t a) { return visits_.at(s * actions_ + a); }
  long long visits(std::size_t s, std::size_t a) const { return visits_.at(s * actions_ + a); }

  std::span<const double> row(std::size_t s) const { return {values_.data() + s * actions_, actions_}; }
  std::span<double> row(std::size_t s) { return {values_.data() + s * actions_, actions_}; }

  double max_value(std::size_t s) const {
    const auto r = row(s);
    return *std::max_element(r.begin(), r.end());
  }

  friend bool operator==(const QTable&, const QTable&) = default;

 private:
  std::size_t states_ = 0;
  std::size_t actions_ = 0;
  std::vector<double> values_;
  std::vector<long long> visits_;
};

// Effective learning rate for the n-th visit (n >= 1). The inverse-visit
// schedule is the rescaled linear rate alpha / (1 + (1 - gamma)(n - 1)).
inline double effective_alpha(const QLearningConfig& cfg, long long visit) {
  if (cfg.alpha_decay == AlphaDecay::Constant) return cfg.alpha;
  return cfg.alpha / (1.0 + (1.0 - cfg.gamma) * static_cast<double>(visit - 1));
}

// Q(s,a) <- Q(s,a) + alpha [r + gamma max_a' Q(s',a') - Q(s,a)]
inline void q_update(QTable& q, std::size_t s, std::size_t a, double r, std::size_t s_next,
                     const QLearningConfig& cfg) {
  const long long n = ++q.visits(s, a);
  const double alpha = effective_alpha(cfg, n);
  const double target = r + cfg.gamma * q.max_value(s_next);
  q.value(s, a) += alpha * (target - q.value(s, a));
}

inline void q_update(QTable& q, const StateSpace& space, const JointState& s, Action a, double r,
                     const JointState& s_next, const QLearningConfig& cfg) {
  q_update(q, space.index(s), static_cast<std::size_t>(a.target.index), r, space.index(s_next), cfg);
}

enum class SelectMode : std::uint8_t { Explore, Exploit };

// Greedy action. Ties prefer staying on `current`, then the lowest index.
inline Action greedy_action(const QTable& q, std::size_t s, InterfaceId current) {
  const auto r = q.row(s);
  std::size_t best = static_cast<std::size_t>(current.index);
  for (std::size_t a = 0; a < r.size(); ++a)
    if (r[a] > r[best] || (r[a] == r[best] && best != static_cast<std::size_t>(current.index) && a < best))
      best = a;
  return Action{InterfaceId{static_cast<int>(best)}};
}

template <class Rng>
Action select_action(const QTable& q, std::size_t s, InterfaceId current, SelectMode mode, Rng& rng) {
  if (mode == SelectMode::Exploit) return greedy_action(q, s, current);
  std::uniform_int_distribution<int> pick(0, static_cast<int>(q.action_count()) - 1);
  return Action{InterfaceId{pick(rng)}};
}

template <class Rng>
Action select_epsilon_greedy(const QTable& q, std::size_t s, InterfaceId current, double epsilon, Rng& rng) {
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  const auto mode = coin(rng) < epsilon ? SelectMode::Explore : SelectMode::Exploit;
  return select_action(q, s, current, mode, rng);
}

// ---------------------------------------------------------------------------
// Hysteresis and baselines

struct HysteresisConfig {
  double margin = 0.1;
  int dwell_epochs = 2;

  void validate() const {
    if (!(margin >= 0.0)) throw DomainError("hysteresis margin must be >= 0");
    if (dwell_epochs < 0) throw DomainError("dwell_epochs must be >= 0");
  }
};

inline Action decide_handoff(Action proposed, InterfaceId current, double expected_gain, const HysteresisConfig& hys,
                             int epochs_since_handoff) {
  if (proposed.target != current && expected_gain >= hys.margin && epochs_since_handoff >= hys.dwell_epochs)
    return proposed;
  return Action{current};
}

// RNL-driven handoff: move to the least-loaded interface when the current one
// is worse by more than the margin (seconds). Undefined RNL anywhere means stay.
inline Action m4_policy_step(std::span<const std::optional<double>> rnl, InterfaceId current,
                             const HysteresisConfig& hys) {
  if (current.index < 0 || static_cast<std::size_t>(current.index) >= rnl.size())
    throw DomainError("current interface out of range");
  for (const auto& v : rnl)
    if (!v) return Action{current};
  std::size_t target = static_cast<std::size_t>(current.index);
  for (std::size_t i = 0; i < rnl.size(); ++i)
    if (*rnl[i] < *rnl[target]) target = i;
  if (*rnl[static_cast<std::size_t>(current.index)] - *rnl[target] > hys.margin)
    return Action{InterfaceId{static_cast<int>(target)}};
  return Action{current};
}

struct QosInputs {
  double bandwidth = 0.0;
  double delay = 0.0;
  double jitter = 0.0;
  double loss = 0.0;
};

struct QosWeights {
  double bandwidth = 0.0;
  double delay = 1.0;
  double jitter = 0.0;
  double loss = 0.0;

  static QosWeights delay_only() { return {}; }
};

// QoS_i = w_B B_i + w_D / D_i + w_JIT / JIT_i + w_PLR / PLR_i
inline double naive_qos_score(const QosInputs& in, const QosWeights& w) {
  auto inverse = [](double weight, double x, const char* what) {
    if (weight == 0.0) return 0.0;
    if (!(x > 0.0)) throw DomainError(std::string(what) + " must be > 0 when its weight is non-zero");
    return weight / x;
  };
  return w.bandwidth * in.bandwidth + inverse(w.delay, in.delay, "delay") +
         inverse(w.jitter, in.jitter, "jitter") + inverse(w.loss, in.loss, "loss");
}

inline Action naive_policy_step(std::span<const QosInputs> inputs, const QosWeights& w, InterfaceId current) {
  if (std::abs(w.bandwidth + w.delay + w.jitter + w.loss - 1.0) > 1e-9)
    throw DomainError("QoS weights must sum to 1");
  if (current.index < 0 || static_cast<std::size_t>(current.index) >= inputs.size())
    throw DomainError("current interface out of range");
  std::vector<double> score(inputs.size());
  for (std::size_t i = 0; i < inputs.size(); ++i) score[i] = naive_qos_score(inputs[i], w);
  std::size_t best = static_cast<std::size_t>(current.index);
  for (std::size_t i = 0; i < score.size(); ++i)
    if (score[i] > score[best]) best = i;
  return Action{InterfaceId{static_cast<int>(best)}};
}

// Number of epochs where the attachment differs from the previous one
// (epoch 0 is compared against `start`).
inline int count_handoffs(InterfaceId start, std::span<const int> attachment) {
  int n = 0;
  int prev = start.index;
  for (int a : attachment) {
    n += a != prev ? 1 : 0;
    prev = a;
  }
  return n;
}

// Offline best case: stay on an interface with the maximal QoE state at every
// epoch while switching as rarely as possible. Dynamic programming over
// (epoch, interface) with unit switch cost; ties favour staying, then the
// lower index.
inline std::vector<int> oracle_policy(std::span<const std::vector<int>> states_per_interface, InterfaceId start) {
  const auto n_if = states_per_interface.size();
  if (n_if == 0) return {};
  const auto len = states_per_interface[0].size();
  for (const auto& s : states_per_interface)
    if (s.size() != len) throw DomainError("oracle needs equal-length state sequences");
  if (len == 0) return {};

  constexpr int kInf = std::numeric_limits<int>::max() / 2;
  std::vector<int> cost(len * n_if, kInf), from(len * n_if, -1);
  auto allowed = [&](std::size_t t, std::size_t i) {
    int best = 0;
    for (const auto& s : states_per_interface) best = std::max(best, s[t]);
    return states_per_interface[i][t] == best;
  };
  for (std::size_t i = 0; i < n_if; ++i)
    if (allowed(0, i)) cost[i] = static_cast<int>(i) != start.index ? 1 : 0;
  for (std::size_t t = 1; t < len; ++t)
    for (std::size_t i = 0; i < n_if; ++i) {
      if (!allowed(t, i)) continue;
      int best = kInf, arg = -1;
      if (cost[(t - 1) * n_if + i] < kInf) {
        best = cost[(t - 1) * n_if + i];
        arg = static_cast<int>(i);
      }
      for (std::size_t j = 0; j < n_if; ++j) {
        const int c = cost[(t - 1) * n_if + j];
        if (c < kInf && c + 1 < best) {
          best = c + 1;
          arg = static_cast<int>(j);
        }
      }
      cost[t * n_if + i] = best;
      from[t * n_if + i] = arg;
    }

  std::vector<int> seq(len);
  std::size_t end = 0;
  int end_cost = kInf;
  for (std::size_t i = 0; i < n_if; ++i)
    if (cost[(len - 1) * n_if + i] < end_cost) {
      end_cost = cost[(len - 1) * n_if + i];
      end = i;
    }
  seq[len - 1] = static_cast<int>(end);
  for (std::size_t t = len - 1; t > 0; --t) seq[t - 1] = from[t * n_if + static_cast<std::size_t>(seq[t])];
  return seq;
}

// ---------------------------------------------------------------------------
// Value iteration

// Finite MDP with transition probabilities P(s' | s, a) and rewards R(s, a).
struct Mdp {
  std::size_t states = 0;
  std::size_t actions = 0;
  std::vector<double> transitions;  // [a][s][s']
  std::vector<double> rewards;      // [s][a]

  Mdp() = default;
  Mdp(std::size_t n_states, std::size_t n_actions)
      : states(n_states),
        actions(n_actions),
        transitions(n_actions * n_states * n_states, 0.0),
        rewards(n_states * n_actions, 0.0) {}

  double& p(std::size_t a, std::size_t s, std::size_t next) { return transitions[(a * states + s) * states + next]; }
  double p(std::size_t a, std::size_t s, std::size_t next) const {
    return transitions[(a * states + s) * states + next];
  }
  double& r(std::size_t s, std::size_t a) { return rewards[s * actions + a]; }
  double r(std::size_t s, std::size_t a) const { return rewards[s * actions + a]; }

  // Same reward for every action, i.e. a state reward.
  void set_state_reward(std::size_t s, double value) {
    for (std::size_t a = 0; a < actions; ++a) r(s, a) = value;
  }

  void validate() const {
    if (states == 0 || actions == 0) throw DomainError("MDP needs states and actions");
    if (transitions.size() != actions * states * states || rewards.size() != states * actions)
      throw DomainError("MDP tables have the wrong size");
    for (std::size_t a = 0; a < actions; ++a)
      for (std::size_t s = 0; s < states; ++s) {
        double sum = 0.0;
        for (std::size_t n = 0; n < states; ++n) {
          const double v = p(a, s, n);
          if (!(v >= 0.0)) throw DomainError("MDP transition probabilities must be >= 0");
          sum += v;
        }
        if (std::abs(sum - 1.0) > 1e-9) throw DomainError("MDP transition rows must be stochastic");
      }
  }
};

struct ValueIterationResult {
  std::vector<double> utility;   // U(s)
  std::vector<double> q;         // Q*(s, a), [s][a]
  std::vector<std::size_t> policy;
  int sweeps = 0;
};

// U(s) <- max_a [R(s,a) + gamma sum_s' P(s'|s,a) U(s')] until the sup-norm
// change drops below `tol`. Greedy policy ties go to the lowest action.
inline ValueIterationResult value_iteration(const Mdp& mdp, double gamma, double tol, int max_sweeps = 1'000'000) {
  mdp.validate();
  if (!(gamma >= 0.0 && gamma < 1.0)) throw DomainError("gamma must lie in [0, 1)");
  const auto ns = mdp.states, na = mdp.actions;
  ValueIterationResult out;
  out.utility.assign(ns, 0.0);
  out.q.assign(ns * na, 0.0);
  auto backup = [&](const std::vector<double>& u) {
    for (std::size_t s = 0; s < ns; ++s)
      for (std::size_t a = 0; a < na; ++a) {
        double ev = 0.0;
        for (std::size_t n = 0; n < ns; ++n) ev += mdp.p(a, s, n) * u[n];
        out.q[s * na + a] = mdp.r(s, a) + gamma * ev;
      }
  };
  while (out.sweeps < max_sweeps) {
    backup(out.utility);
    ++out.sweeps;
    double delta = 0.0;
    for (std::size_t s = 0; s < ns; ++s) {
      const double u = *std::max_element(out.q.begin() + static_cast<std::ptrdiff_t>(s * na),
                                         out.q.begin() + static_cast<std::ptrdiff_t>((s + 1) * na));
      delta = std::max(delta, std::abs(u - out.utility[s]));
      out.utility[s] = u;
    }
    if (delta < tol) break;
  }
  backup(out.utility);
  out.policy.resize(ns);
  for (std::size_t s = 0; s < ns; ++s) {
    std::size_t best = 0;
    for (std::size_t a = 1; a < na; ++a)
      if (out.q[s * na + a] > out.q[s * na + best]) best = a;
    out.policy[s] = best;
  }
  return out;
}

}  // namespace qoelab
