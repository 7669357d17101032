#pragma once

// Experiment harness: trains per-interface HMMs on simulated probe traces,
// warms up the Q-learning agent, then replays identical evaluation runs
// through every enabled policy and aggregates handoff counts, MOS and reward.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "qoelab/error.hpp"
#include "qoelab/hmm.hpp"
#include "qoelab/model_io.hpp"
#include "qoelab/netsim.hpp"
#include "qoelab/policies.hpp"
#include "qoelab/probing.hpp"
#include "qoelab/qoe_model.hpp"
#include "qoelab/trace_io.hpp"

namespace qoelab {

enum class PolicyKind : std::uint8_t { Best, Naive, M4, Proposed };

inline constexpr PolicyKind kAllPolicies[] = {PolicyKind::Best, PolicyKind::Naive, PolicyKind::M4,
                                              PolicyKind::Proposed};

inline std::string_view to_string(PolicyKind p) {
  switch (p) {
    case PolicyKind::Best: return "best";
    case PolicyKind::Naive: return "naive";
    case PolicyKind::M4: return "m4";
    case PolicyKind::Proposed: return "proposed";
  }
  return "?";
}

inline PolicyKind parse_policy(std::string_view s) {
  for (auto p : kAllPolicies)
    if (to_string(p) == s) return p;
  throw UsageError("unknown policy '" + std::string(s) + "'");
}

// Merge label `from` into `into` on one interface before HMM training.
struct FoldRule {
  int interface = 0;
  int from = 2;
  int into = 3;
};

// Offsets keep training, warm-up and evaluation runs disjoint.
inline constexpr int kWarmupRunBase = 10000;
inline constexpr int kHmmRunBase = 20000;

struct HarnessConfig {
  ScenarioConfig scenario = ScenarioConfig::roaming();
  RewardConfig reward;
  QLearningConfig qlearn = [] {
    QLearningConfig q;
    q.alpha_decay = AlphaDecay::InverseVisit;
    return q;
  }();
  HysteresisConfig hysteresis{0.1, 2};
  HysteresisConfig m4_hysteresis{0.02, 0};
  int rnl_history = 5;
  double rnl_jitter_weight = 5.0;
  QosWeights naive_weights = QosWeights::delay_only();
  std::vector<PolicyKind> policies_enabled{kAllPolicies, kAllPolicies + 4};
  std::string output_dir = "out";
  int warmup_episodes = 50;
  int hmm_training_runs = 10;
  int hmm_folds = 2;
  std::vector<int> hmm_states;  // per interface; empty means the generator's state count
  std::vector<FoldRule> label_folds{FoldRule{0, 2, 3}};
  EmConfig em;
  int start_interface = 0;

  int states_for(std::size_t i) const {
    if (i < hmm_states.size()) return hmm_states[i];
    return static_cast<int>(scenario.channels.at(i).generator.state_count());
  }

  void validate() const {
    scenario.validate();
    reward.validate();
    qlearn.validate();
    hysteresis.validate();
    m4_hysteresis.validate();
    if (policies_enabled.empty()) throw UsageError("no policies enabled");
    if (scenario.channels.size() < 2) throw UsageError("policy comparison needs at least two interfaces");
    if (warmup_episodes < 0) throw UsageError("warmup_episodes must be >= 0");
    if (hmm_folds < 2 || hmm_training_runs < hmm_folds)
      throw UsageError("hmm training needs folds >= 2 and at least as many training runs as folds");
    if (start_interface < 0 || static_cast<std::size_t>(start_interface) >= scenario.channels.size())
      throw UsageError("start_interface out of range");
    for (std::size_t i = 0; i < scenario.channels.size(); ++i)
      if (states_for(i) < 1) throw UsageError("hmm state count must be >= 1");
  }
};

// ---------------------------------------------------------------------------
// Config file: INI sections mirroring HarnessConfig.
//
//   [scenario]  kind, duration_epochs, runs, seed, codec, handoff_penalty_mos,
//               roaming_dwell_mean, probe_jitter_s
//   [probe]     probes_per_second, ba_packet_bytes, late_threshold_s, imputation
//   [reward]    w_qoe, qoe_min, qoe_max, cost_min, cost_max, handoff_cost
//   [qlearn]    alpha, gamma, epsilon, epsilon_decay, epsilon_floor, alpha_decay,
//               warmup_episodes
//   [hysteresis] margin, dwell_epochs
//   [m4]        margin, history, jitter_weight
//   [hmm]       training_runs, folds, states, fold, restarts, max_iterations, tolerance
//   [harness]   policies, output_dir, start_interface

namespace detail {

inline std::vector<std::string> split_list(const std::string& s, char sep = ',') {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
  }
  return out;
}

template <class T>
T convert(const std::string& key, const std::string& v) {
  std::istringstream in(v);
  T out{};
  in >> out;
  if (!in || !(in >> std::ws).eof()) throw UsageError("config key '" + key + "': cannot parse '" + v + "'");
  return out;
}

}  // namespace detail

inline HarnessConfig parse_config(std::istream& in) {
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw UsageError(std::string("config: ") + e.what());
  }

  std::map<std::string, std::string> kv;
  for (const auto& [section, body] : tree) {
    if (body.empty()) throw UsageError("config key '" + section + "' must live in a section");
    for (const auto& [key, value] : body) kv[section + "." + key] = value.data();
  }
  auto take = [&](const std::string& key) -> std::optional<std::string> {
    auto it = kv.find(key);
    if (it == kv.end()) return std::nullopt;
    auto v = it->second;
    kv.erase(it);
    return v;
  };
  auto num = [&]<class T>(const std::string& key, T& target) {
    if (auto v = take(key)) target = detail::convert<T>(key, *v);
  };

  HarnessConfig cfg;
  ScenarioKind kind = ScenarioKind::Roaming;
  Codec codec = Codec::G711;
  double dwell = 40.0;
  if (auto v = take("scenario.kind")) kind = parse_scenario_kind(*v);
  if (auto v = take("scenario.codec")) codec = parse_codec(*v);
  num("scenario.roaming_dwell_mean", dwell);
  cfg.scenario = kind == ScenarioKind::Roaming ? ScenarioConfig::roaming(codec, dwell)
                                               : ScenarioConfig::wlan_congestion(codec);
  if (kind == ScenarioKind::WlanCongestion) cfg.label_folds.clear();
  num("scenario.duration_epochs", cfg.scenario.duration_epochs);
  num("scenario.runs", cfg.scenario.runs);
  num("scenario.seed", cfg.scenario.seed);
  num("scenario.handoff_penalty_mos", cfg.scenario.handoff_penalty_mos);
  num("scenario.probe_jitter_s", cfg.scenario.probe_jitter_s);

  num("probe.probes_per_second", cfg.scenario.probe.probes_per_second);
  num("probe.ba_packet_bytes", cfg.scenario.probe.ba_packet_bytes);
  num("probe.late_threshold_s", cfg.scenario.probe.late_threshold_s);
  if (auto v = take("probe.imputation")) cfg.scenario.probe.imputation = parse_imputation(*v);

  cfg.reward.qoe_max = cfg.scenario.scheme.state_count();
  num("reward.w_qoe", cfg.reward.w_qoe);
  num("reward.qoe_min", cfg.reward.qoe_min);
  num("reward.qoe_max", cfg.reward.qoe_max);
  num("reward.cost_min", cfg.reward.cost_min);
  num("reward.cost_max", cfg.reward.cost_max);
  num("reward.handoff_cost", cfg.reward.handoff_cost);

  num("qlearn.alpha", cfg.qlearn.alpha);
  num("qlearn.gamma", cfg.qlearn.gamma);
  num("qlearn.epsilon", cfg.qlearn.epsilon);
  num("qlearn.epsilon_decay", cfg.qlearn.epsilon_decay);
  num("qlearn.epsilon_floor", cfg.qlearn.epsilon_floor);
  if (auto v = take("qlearn.alpha_decay")) cfg.qlearn.alpha_decay = parse_alpha_decay(*v);
  num("qlearn.warmup_episodes", cfg.warmup_episodes);

  num("hysteresis.margin", cfg.hysteresis.margin);
  num("hysteresis.dwell_epochs", cfg.hysteresis.dwell_epochs);
  num("m4.margin", cfg.m4_hysteresis.margin);
  num("m4.history", cfg.rnl_history);
  num("m4.jitter_weight", cfg.rnl_jitter_weight);

  num("hmm.training_runs", cfg.hmm_training_runs);
  num("hmm.folds", cfg.hmm_folds);
  num("hmm.restarts", cfg.em.restarts);
  num("hmm.max_iterations", cfg.em.max_iterations);
  num("hmm.tolerance", cfg.em.tolerance);
  if (auto v = take("hmm.states")) {
    cfg.hmm_states.clear();
    for (const auto& s : detail::split_list(*v)) cfg.hmm_states.push_back(detail::convert<int>("hmm.states", s));
  }
  // "interface:from:into" entries, e.g. "0:2:3"
  if (auto v = take("hmm.fold")) {
    cfg.label_folds.clear();
    for (const auto& rule : detail::split_list(*v)) {
      const auto parts = detail::split_list(rule, ':');
      if (parts.size() != 3) throw UsageError("hmm.fold entries look like interface:from:into");
      cfg.label_folds.push_back({detail::convert<int>("hmm.fold", parts[0]), detail::convert<int>("hmm.fold", parts[1]),
                                 detail::convert<int>("hmm.fold", parts[2])});
    }
  }

  if (auto v = take("harness.policies")) {
    cfg.policies_enabled.clear();
    for (const auto& p : detail::split_list(*v)) cfg.policies_enabled.push_back(parse_policy(p));
  }
  if (auto v = take("harness.output_dir")) cfg.output_dir = *v;
  num("harness.start_interface", cfg.start_interface);

  if (!kv.empty()) throw UsageError("unknown config key '" + kv.begin()->first + "'");
  return cfg;
}

inline HarnessConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config " + path);
  return parse_config(in);
}

// ---------------------------------------------------------------------------
// Report types

struct PolicyResult {
  PolicyKind policy = PolicyKind::Best;
  int handoffs = 0;
  std::vector<int> run_handoffs;
  double mean_mos = 0.0;
  std::vector<double> run_mean_mos;
  double reward_sum = 0.0;
};

struct InterfaceAccuracy {
  std::string label;
  int states = 0;
  double accuracy = 0.0;  // cross-validated one-step prediction accuracy
  std::vector<double> fold_accuracy;
};

struct TimelineRow {
  int run = 0;
  PolicyKind policy = PolicyKind::Best;
  int epoch = 0;
  std::vector<double> mos;  // per interface
  int attached = 0;
  double realized_mos = 0.0;
  int cumulative_handoffs = 0;
};

struct EvaluationReport {
  unsigned long long seed = 0;
  std::string scenario;
  std::string codec;
  int runs = 0;
  int duration_epochs = 0;
  std::vector<std::string> interface_labels;
  std::vector<PolicyResult> policies;
  std::vector<InterfaceAccuracy> prediction;
  std::vector<TimelineRow> timeline;

  const PolicyResult* find(PolicyKind p) const {
    for (const auto& r : policies)
      if (r.policy == p) return &r;
    return nullptr;
  }
};

// (baseline - proposed) / baseline, undefined when either side is missing or
// the baseline made no handoffs.
inline std::optional<double> handoff_reduction(const EvaluationReport& r, PolicyKind baseline) {
  const auto* b = r.find(baseline);
  const auto* p = r.find(PolicyKind::Proposed);
  if (!b || !p || b->handoffs == 0) return std::nullopt;
  return static_cast<double>(b->handoffs - p->handoffs) / static_cast<double>(b->handoffs);
}

// ---------------------------------------------------------------------------
// Proposed agent: HMM state prediction per interface feeding a Q-table.

class QoeHandoffAgent {
 public:
  QoeHandoffAgent(std::vector<HmmModel> models, const HarnessConfig& cfg) : models_(std::move(models)), cfg_(&cfg) {
    std::vector<int> counts;
    for (const auto& m : models_) counts.push_back(static_cast<int>(m.state_count()));
    space_ = StateSpace(counts);
    q_ = QTable(space_.size(), models_.size());
  }

  const StateSpace& space() const { return space_; }
  const QTable& table() const { return q_; }
  const std::vector<HmmModel>& models() const { return models_; }

  struct Episode {
    std::vector<int> attachment;
    std::vector<double> realized_mos;
    double reward_sum = 0.0;
  };

  // learning: epsilon-greedy with Q updates; otherwise greedy and frozen.
  Episode run(const SimRun& run, bool learning, double epsilon, std::mt19937_64& rng) {
    const auto& sc = cfg_->scenario;
    const auto n_if = models_.size();
    std::vector<OnlineFilter> filters;
    for (const auto& m : models_) filters.emplace_back(m);

    Episode ep;
    InterfaceId current{cfg_->start_interface};
    int last_switch = -(1 << 20);
    auto observe = [&](int epoch) {
      JointState s;
      s.current = current;
      for (std::size_t i = 0; i < n_if; ++i) {
        const double obs = sc.channels[i].observation_from_rtt(run.interfaces[i].observed_rtt[static_cast<std::size_t>(epoch)]);
        const auto belief = filters[i].update(obs);
        s.per_interface.push_back(predict_next_state(models_[i], belief).first);
      }
      return s;
    };

    auto first = step_environment(run, 0, current, Action{current}, sc.handoff_penalty_mos);
    ep.attachment.push_back(current.index);
    ep.realized_mos.push_back(first.realized_mos);
    ep.reward_sum += reward_of(first.realized_mos, false);
    JointState state = observe(0);

    for (int t = 1; t < run.duration(); ++t) {
      const auto s_idx = space_.index(state);
      std::uniform_real_distribution<double> coin(0.0, 1.0);
      Action action{current};
      if (learning && coin(rng) < epsilon) {
        action = select_action(q_, s_idx, current, SelectMode::Explore, rng);
      } else {
        const Action greedy = select_action(q_, s_idx, current, SelectMode::Exploit, rng);
        // Advantage of switching now over staying one more epoch.
        const double gain = q_.value(s_idx, static_cast<std::size_t>(greedy.target.index)) -
                            q_.value(s_idx, static_cast<std::size_t>(current.index));
        action = decide_handoff(greedy, current, gain, cfg_->hysteresis, t - last_switch);
      }

      const auto out = step_environment(run, t, current, action, sc.handoff_penalty_mos);
      const double r = reward_of(out.realized_mos, out.handoff_occurred);
      if (out.handoff_occurred) last_switch = t;
      current = action.target;
      ep.attachment.push_back(current.index);
      ep.realized_mos.push_back(out.realized_mos);
      ep.reward_sum += r;

      JointState next = observe(t);
      if (learning) q_update(q_, s_idx, static_cast<std::size_t>(action.target.index), r, space_.index(next), cfg_->qlearn);
      state = std::move(next);
    }
    return ep;
  }

  double reward_of(double realized_mos, bool handoff) const {
    const double qoe = quantize_mos(MosScore(realized_mos), cfg_->scenario.scheme).index;
    return reward(qoe, handoff ? cfg_->reward.handoff_cost : 0.0, cfg_->reward);
  }

 private:
  std::vector<HmmModel> models_;
  const HarnessConfig* cfg_;
  StateSpace space_;
  QTable q_;
};

// ---------------------------------------------------------------------------
// Pipeline pieces

inline std::vector<LabeledTrace> labeled_traces(const HarnessConfig& cfg, std::size_t interface, int first_run,
                                                int count) {
  std::vector<LabeledTrace> out;
  const auto& ch = cfg.scenario.channels[interface];
  for (int r = 0; r < count; ++r) {
    const auto run = generate_run(cfg.scenario, first_run + r);
    const auto& ir = run.interfaces[interface];
    LabeledTrace t;
    for (double rtt : ir.observed_rtt) t.observations.push_back(ch.observation_from_rtt(rtt));
    t.labels = ir.qoe_states;
    for (const auto& f : cfg.label_folds)
      if (static_cast<std::size_t>(f.interface) == interface) t.labels = fold_label(t.labels, f.from, f.into);
    out.push_back(std::move(t));
  }
  return out;
}

struct TrainedPredictors {
  std::vector<HmmModel> models;
  std::vector<InterfaceAccuracy> accuracy;
};

inline TrainedPredictors train_predictors(const HarnessConfig& cfg) {
  TrainedPredictors out;
  for (std::size_t i = 0; i < cfg.scenario.channels.size(); ++i) {
    const int k = cfg.states_for(i);
    const auto data = labeled_traces(cfg, i, kHmmRunBase, cfg.hmm_training_runs);
    EmConfig em = cfg.em;
    em.seed = cfg.scenario.seed + i;
    const auto cv = cross_validate(data, cfg.hmm_folds, k, em, cfg.scenario.seed);
    Sequences seqs;
    LabelSequences labels;
    for (const auto& t : data) {
      seqs.push_back(t.observations);
      labels.push_back(t.labels);
    }
    out.models.push_back(em_train(seqs, &labels, k, em).first);
    out.accuracy.push_back({cfg.scenario.channels[i].label, k, cv.accuracy, cv.fold_accuracy});
  }
  return out;
}

struct EpisodeTrace {
  std::vector<int> attachment;
  std::vector<double> realized_mos;
  double reward_sum = 0.0;
};

inline double baseline_reward(const HarnessConfig& cfg, double mos, bool handoff) {
  const double qoe = quantize_mos(MosScore(mos), cfg.scenario.scheme).index;
  return reward(qoe, handoff ? cfg.reward.handoff_cost : 0.0, cfg.reward);
}

// Replays a fixed attachment plan (or a per-epoch decision rule) through the
// environment. decide(t) returns the interface to use at epoch t given the
// attachment at t-1 and everything observed up to t-1.
template <class Decide>
EpisodeTrace replay(const HarnessConfig& cfg, const SimRun& run, Decide&& decide) {
  EpisodeTrace ep;
  InterfaceId current{cfg.start_interface};
  for (int t = 0; t < run.duration(); ++t) {
    const Action a = t == 0 ? Action{current} : decide(t, current);
    const auto out = step_environment(run, t, current, a, cfg.scenario.handoff_penalty_mos);
    current = a.target;
    ep.attachment.push_back(current.index);
    ep.realized_mos.push_back(out.realized_mos);
    ep.reward_sum += baseline_reward(cfg, out.realized_mos, out.handoff_occurred);
  }
  return ep;
}

inline EpisodeTrace run_best(const HarnessConfig& cfg, const SimRun& run) {
  std::vector<std::vector<int>> states;
  for (const auto& ir : run.interfaces) states.push_back(ir.qoe_states);
  const auto plan = oracle_policy(states, InterfaceId{cfg.start_interface});
  EpisodeTrace ep;
  int prev = cfg.start_interface;
  for (int t = 0; t < run.duration(); ++t) {
    const auto out = step_environment(run, t, InterfaceId{prev}, Action{InterfaceId{plan[static_cast<std::size_t>(t)]}},
                                      cfg.scenario.handoff_penalty_mos);
    prev = plan[static_cast<std::size_t>(t)];
    ep.attachment.push_back(prev);
    ep.realized_mos.push_back(out.realized_mos);
    ep.reward_sum += baseline_reward(cfg, out.realized_mos, out.handoff_occurred);
  }
  return ep;
}

inline EpisodeTrace run_naive(const HarnessConfig& cfg, const SimRun& run) {
  return replay(cfg, run, [&](int t, InterfaceId current) {
    std::vector<QosInputs> in;
    for (const auto& ir : run.interfaces) in.push_back({0.0, ir.observed_rtt[static_cast<std::size_t>(t - 1)], 0.0, 0.0});
    return naive_policy_step(in, cfg.naive_weights, current);
  });
}

inline EpisodeTrace run_m4(const HarnessConfig& cfg, const SimRun& run) {
  std::vector<RnlEstimator> est(run.interfaces.size(), RnlEstimator(cfg.rnl_history, cfg.rnl_jitter_weight));
  return replay(cfg, run, [&](int t, InterfaceId current) {
    std::vector<std::optional<double>> rnl;
    for (std::size_t i = 0; i < est.size(); ++i) {
      est[i].update(run.interfaces[i].observed_rtt[static_cast<std::size_t>(t - 1)]);
      rnl.push_back(est[i].jitter_defined() ? std::optional<double>(est[i].rnl()) : std::nullopt);
    }
    return m4_policy_step(rnl, current, cfg.m4_hysteresis);
  });
}

struct ComparisonArtifacts {
  EvaluationReport report;
  std::optional<QTable> qtable;
  StateSpace space;
  std::vector<HmmModel> models;
};

inline ComparisonArtifacts run_comparison(const HarnessConfig& cfg) {
  cfg.validate();
  const auto& sc = cfg.scenario;
  ComparisonArtifacts art;
  auto& rep = art.report;
  rep.seed = sc.seed;
  rep.scenario = std::string(to_string(sc.kind));
  rep.codec = std::string(to_string(sc.codec.codec));
  rep.runs = sc.runs;
  rep.duration_epochs = sc.duration_epochs;
  for (const auto& ch : sc.channels) rep.interface_labels.push_back(ch.label);

  const bool want_proposed =
      std::find(cfg.policies_enabled.begin(), cfg.policies_enabled.end(), PolicyKind::Proposed) !=
      cfg.policies_enabled.end();
  std::optional<QoeHandoffAgent> agent;
  if (want_proposed) {
    auto trained = train_predictors(cfg);
    rep.prediction = trained.accuracy;
    art.models = trained.models;
    agent.emplace(std::move(trained.models), cfg);
    for (int ep = 0; ep < cfg.warmup_episodes; ++ep) {
      std::seed_seq seq{static_cast<std::uint32_t>(sc.seed), 0x9e37u, static_cast<std::uint32_t>(ep)};
      std::mt19937_64 rng(seq);
      agent->run(generate_run(sc, kWarmupRunBase + ep), true, cfg.qlearn.epsilon_at(ep), rng);
    }
    art.qtable = agent->table();
    art.space = agent->space();
  }

  std::vector<PolicyKind> order;
  for (auto p : kAllPolicies)
    if (std::find(cfg.policies_enabled.begin(), cfg.policies_enabled.end(), p) != cfg.policies_enabled.end())
      order.push_back(p);
  for (auto p : order) {
    PolicyResult pr;
    pr.policy = p;
    rep.policies.push_back(std::move(pr));
  }

  for (int r = 0; r < sc.runs; ++r) {
    const auto run = generate_run(sc, r);
    for (auto& res : rep.policies) {
      EpisodeTrace ep;
      switch (res.policy) {
        case PolicyKind::Best: ep = run_best(cfg, run); break;
        case PolicyKind::Naive: ep = run_naive(cfg, run); break;
        case PolicyKind::M4: ep = run_m4(cfg, run); break;
        case PolicyKind::Proposed: {
          std::mt19937_64 rng(sc.seed);
          auto e = agent->run(run, false, 0.0, rng);
          ep = {std::move(e.attachment), std::move(e.realized_mos), e.reward_sum};
          break;
        }
      }
      const int handoffs = count_handoffs(InterfaceId{cfg.start_interface}, ep.attachment);
      res.run_handoffs.push_back(handoffs);
      res.handoffs += handoffs;
      double mos_sum = 0.0;
      int cumulative = 0;
      int prev = cfg.start_interface;
      for (std::size_t t = 0; t < ep.attachment.size(); ++t) {
        mos_sum += ep.realized_mos[t];
        cumulative += ep.attachment[t] != prev ? 1 : 0;
        prev = ep.attachment[t];
        TimelineRow row{r, res.policy, static_cast<int>(t), {}, ep.attachment[t], ep.realized_mos[t], cumulative};
        for (const auto& ir : run.interfaces) row.mos.push_back(ir.mos[t]);
        rep.timeline.push_back(std::move(row));
      }
      res.run_mean_mos.push_back(mos_sum / static_cast<double>(ep.attachment.size()));
      res.reward_sum += ep.reward_sum;
    }
  }
  for (auto& res : rep.policies) {
    double s = 0.0;
    for (double m : res.run_mean_mos) s += m;
    res.mean_mos = s / static_cast<double>(res.run_mean_mos.size());
  }
  return art;
}

// ---------------------------------------------------------------------------
// Rendering

namespace detail {

inline std::string fixed(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

inline std::string percent_or_dash(std::optional<double> v) { return v ? fixed(*v * 100.0, 2) : "—"; }

inline Json optional_json(std::optional<double> v) { return v ? Json(*v) : Json(nullptr); }

}  // namespace detail

inline Json report_to_json(const EvaluationReport& r) {
  Json j;
  j["format"] = "qoelab.report";
  j["seed"] = r.seed;
  j["scenario"] = r.scenario;
  j["codec"] = r.codec;
  j["runs"] = r.runs;
  j["duration_epochs"] = r.duration_epochs;
  j["interfaces"] = r.interface_labels;
  Json pol = Json::array();
  for (const auto& p : r.policies)
    pol.push_back({{"policy", to_string(p.policy)},
                   {"handoffs", p.handoffs},
                   {"run_handoffs", p.run_handoffs},
                   {"mean_mos", p.mean_mos},
                   {"run_mean_mos", p.run_mean_mos},
                   {"reward_sum", p.reward_sum}});
  j["policies"] = pol;
  Json acc = Json::array();
  for (const auto& a : r.prediction)
    acc.push_back({{"interface", a.label}, {"states", a.states}, {"accuracy", a.accuracy}, {"fold_accuracy", a.fold_accuracy}});
  j["prediction_accuracy"] = acc;
  const auto vs_naive = handoff_reduction(r, PolicyKind::Naive);
  const auto vs_m4 = handoff_reduction(r, PolicyKind::M4);
  std::optional<double> mean;
  if (vs_naive && vs_m4) mean = (*vs_naive + *vs_m4) / 2.0;
  j["reduction"] = {{"vs_naive", detail::optional_json(vs_naive)},
                    {"vs_m4", detail::optional_json(vs_m4)},
                    {"mean", detail::optional_json(mean)}};
  return j;
}

inline std::string report_csv(const EvaluationReport& r) {
  std::ostringstream os;
  os << "policy,handoffs,mean_mos,reward_sum,reduction_pct\n";
  for (const auto& p : r.policies) {
    std::optional<double> red;
    if (p.policy == PolicyKind::Naive || p.policy == PolicyKind::M4) red = handoff_reduction(r, p.policy);
    os << to_string(p.policy) << ',' << p.handoffs << ',' << detail::fixed(p.mean_mos) << ','
       << detail::fixed(p.reward_sum) << ',' << detail::percent_or_dash(red) << '\n';
  }
  return os.str();
}

inline std::string timeline_csv(const EvaluationReport& r) {
  std::ostringstream os;
  os << "run_id,policy,epoch";
  for (const auto& l : r.interface_labels) os << ",mos_" << l;
  os << ",attached,realized_mos,cumulative_handoffs\n";
  for (const auto& row : r.timeline) {
    os << run_id(row.run) << ',' << to_string(row.policy) << ',' << row.epoch;
    for (double m : row.mos) os << ',' << detail::fixed(m);
    os << ',' << r.interface_labels.at(static_cast<std::size_t>(row.attached)) << ',' << detail::fixed(row.realized_mos)
       << ',' << row.cumulative_handoffs << '\n';
  }
  return os.str();
}

inline std::string table5_text(const EvaluationReport& r) {
  std::ostringstream os;
  os << "policy      handoffs  mean_mos  reward_sum\n";
  for (const auto& p : r.policies) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "%-10s  %8d  %8.4f  %10.2f\n", std::string(to_string(p.policy)).c_str(), p.handoffs,
                  p.mean_mos, p.reward_sum);
    os << buf;
  }
  os << "reduction vs naive: " << detail::percent_or_dash(handoff_reduction(r, PolicyKind::Naive)) << "%\n";
  os << "reduction vs m4:    " << detail::percent_or_dash(handoff_reduction(r, PolicyKind::M4)) << "%\n";
  for (const auto& a : r.prediction)
    os << "prediction accuracy " << a.label << " (" << a.states << " states): " << detail::fixed(a.accuracy * 100.0, 2)
       << "%\n";
  return os.str();
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UsageError("cannot write " + path.string());
  out << text;
}

// Writes report.json, report.csv, timeline.csv, qtable.json and one model file
// per interface into `dir`.
inline void write_comparison(const ComparisonArtifacts& art, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_text_file(dir / "report.json", report_to_json(art.report).dump(2) + "\n");
  write_text_file(dir / "report.csv", report_csv(art.report));
  write_text_file(dir / "timeline.csv", timeline_csv(art.report));
  if (art.qtable)
    write_text_file(dir / "qtable.json", qtable_to_json(*art.qtable, art.space, art.report.interface_labels).dump(2) + "\n");
  for (std::size_t i = 0; i < art.models.size(); ++i) {
    Metadata meta{{"scenario", art.report.scenario},
                  {"codec", art.report.codec},
                  {"seed", std::to_string(art.report.seed)},
                  {"interface", art.report.interface_labels[i]}};
    write_text_file(dir / ("hmm_" + art.report.interface_labels[i] + ".json"), hmm_to_json(art.models[i], meta).dump(2) + "\n");
  }
}

// ---------------------------------------------------------------------------
// Report merging

struct MergedReports {
  std::string summary_csv;
  Json summary;
};

inline MergedReports merge_reports(const std::vector<std::pair<std::string, Json>>& reports) {
  std::ostringstream os;
  os << "source,scenario,codec,seed,runs";
  for (auto p : kAllPolicies) os << ",handoffs_" << to_string(p);
  for (auto p : kAllPolicies) os << ",mean_mos_" << to_string(p);
  os << ",reduction_vs_naive_pct,reduction_vs_m4_pct\n";

  std::map<std::string, long long> totals;
  Json sources = Json::array();
  for (const auto& [name, j] : reports) {
    try {
      if (j.at("format") != "qoelab.report") throw ValidationError(name + ": not a report document");
      std::map<std::string, const Json*> by_policy;
      for (const auto& p : j.at("policies")) by_policy[p.at("policy").get<std::string>()] = &p;
      os << name << ',' << j.at("scenario").get<std::string>() << ',' << j.at("codec").get<std::string>() << ','
         << j.at("seed").get<unsigned long long>() << ',' << j.at("runs").get<int>();
      for (auto p : kAllPolicies) {
        auto it = by_policy.find(std::string(to_string(p)));
        if (it == by_policy.end()) {
          os << ',';
          continue;
        }
        const auto h = it->second->at("handoffs").get<long long>();
        totals[std::string(to_string(p))] += h;
        os << ',' << h;
      }
      for (auto p : kAllPolicies) {
        auto it = by_policy.find(std::string(to_string(p)));
        os << ',' << (it == by_policy.end() ? std::string() : detail::fixed(it->second->at("mean_mos").get<double>()));
      }
      const auto& red = j.at("reduction");
      auto pct = [](const Json& v) { return v.is_null() ? std::string("—") : detail::fixed(v.get<double>() * 100.0, 2); };
      os << ',' << pct(red.at("vs_naive")) << ',' << pct(red.at("vs_m4")) << '\n';
      sources.push_back(name);
    } catch (const Json::exception& e) {
      throw ValidationError(name + ": malformed report: " + e.what());
    }
  }
  MergedReports out;
  out.summary_csv = os.str();
  out.summary["format"] = "qoelab.summary";
  out.summary["reports"] = sources;
  Json t = Json::object();
  for (auto p : kAllPolicies) {
    auto it = totals.find(std::string(to_string(p)));
    if (it != totals.end()) t[std::string(to_string(p))] = it->second;
  }
  out.summary["total_handoffs"] = t;
  return out;
}

}  // namespace qoelab
