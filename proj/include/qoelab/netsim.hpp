#pragma once

// Discrete-time multi-homed access simulator. Each interface is driven by a
// ground-truth Gaussian HMM whose hidden state also fixes the packet loss
// rate; every epoch yields a true delay, a burst of passive probes and the
// E-Model MOS a call on that interface would get.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "qoelab/error.hpp"
#include "qoelab/hmm.hpp"
#include "qoelab/policies.hpp"
#include "qoelab/probing.hpp"
#include "qoelab/qoe_model.hpp"
#include "qoelab/trace_io.hpp"

namespace qoelab {

// What the generator's emissions measure.
enum class DelayKind : std::uint8_t { OneWay, RoundTrip };

struct ChannelModel {
  HmmModel generator;
  std::vector<double> loss_per_state;
  std::string label;
  DelayKind kind = DelayKind::RoundTrip;

  void validate() const {
    generator.validate();
    if (loss_per_state.size() != generator.state_count())
      throw DomainError("channel " + label + ": one loss value per generator state required");
    for (double l : loss_per_state)
      if (!(l >= 0.0 && l <= 1.0)) throw DomainError("channel " + label + ": loss must lie in [0, 1]");
  }

  // Delay the HMM observes, given a measured RTT.
  double observation_from_rtt(double rtt_s) const { return kind == DelayKind::OneWay ? owd_from_rtt(rtt_s) : rtt_s; }
};

namespace presets {

// Learned G.711 WLAN-congestion model (one-way delay, seconds).
inline HmmModel wlan_congestion_g711_model() {
  HmmModel m;
  m.prior = {0.6, 0.2, 0.2};
  m.transitions = TransitionMatrix{{0.9279, 0.0596, 0.0125}, {0.2817, 0.3803, 0.3380}, {0.0400, 0.2400, 0.7200}};
  m.emissions = {{0.4850, 0.0576}, {0.1302, 0.0010}, {0.0462, 0.0006}};
  m.scheme = QuantizationScheme::congestion();
  return m;
}

// Learned G.729 roaming model of the WLAN interface (RTT, seconds).
inline HmmModel wlan_roaming_g729_model() {
  HmmModel m;
  m.prior = {0.0, 1.0};
  m.transitions = TransitionMatrix{{0.9500, 0.0500}, {0.0654, 0.9346}};
  m.emissions = {{0.9905, 0.0044}, {0.0519, 0.0079}};
  return m;
}

// Learned G.729 roaming model of the CDMA2000 interface (RTT, seconds). The
// printed last row sums to 1.0001 and is renormalized.
inline HmmModel cdma_roaming_g729_model() {
  HmmModel m;
  m.prior = {0.0, 0.0, 1.0};
  m.transitions = TransitionMatrix{{0.7852, 0.1333, 0.0815}, {0.1111, 0.8148, 0.0741}, {0.0696, 0.0435, 0.8870}};
  m.transitions.normalize_rows();
  m.emissions = {{0.9519, 0.0055}, {0.6401, 0.0076}, {0.2857, 0.0025}};
  m.scheme = QuantizationScheme::roaming();
  return m;
}

inline ChannelModel wlan_congestion_channel() {
  return {wlan_congestion_g711_model(), {0.25, 0.15, 0.03}, "WLAN", DelayKind::OneWay};
}

// WLAN coverage alternates between in-range and out-of-range with a geometric
// dwell of `mean_dwell_epochs` in each.
inline ChannelModel wlan_roaming_channel(double mean_dwell_epochs = 40.0) {
  if (!(mean_dwell_epochs >= 1.0)) throw DomainError("roaming dwell mean must be >= 1 epoch");
  auto m = wlan_roaming_g729_model();
  const double leave = 1.0 / mean_dwell_epochs;
  m.transitions = TransitionMatrix{{1.0 - leave, leave}, {leave, 1.0 - leave}};
  return {m, {0.30, 0.0}, "WLAN", DelayKind::RoundTrip};
}

inline ChannelModel cdma_roaming_channel() {
  auto m = cdma_roaming_g729_model();
  m.scheme.reset();
  return {m, {0.20, 0.02, 0.0}, "CDMA2000", DelayKind::RoundTrip};
}

}  // namespace presets

enum class ScenarioKind : std::uint8_t { WlanCongestion, Roaming };

inline std::string_view to_string(ScenarioKind k) {
  return k == ScenarioKind::WlanCongestion ? "wlan_congestion" : "roaming";
}

inline ScenarioKind parse_scenario_kind(std::string_view s) {
  if (s == "wlan_congestion" || s == "congestion") return ScenarioKind::WlanCongestion;
  if (s == "roaming") return ScenarioKind::Roaming;
  throw UsageError("unknown scenario kind '" + std::string(s) + "'");
}

struct ScenarioConfig {
  ScenarioKind kind = ScenarioKind::Roaming;
  int duration_epochs = 300;
  int runs = 12;
  unsigned long long seed = 1;
  CodecProfile codec = CodecProfile::g711();
  std::vector<ChannelModel> channels;
  QuantizationScheme scheme = QuantizationScheme::roaming();
  ProbeConfig probe;
  double probe_jitter_s = 0.005;  // per-probe deviation around the epoch RTT
  double delay_floor_s = 0.001;
  double handoff_penalty_mos = 0.3;
  double roaming_dwell_mean = 40.0;

  static ScenarioConfig wlan_congestion(Codec codec = Codec::G711) {
    ScenarioConfig c;
    c.kind = ScenarioKind::WlanCongestion;
    c.duration_epochs = 101;
    c.runs = 100;
    c.codec = CodecProfile::of(codec);
    c.scheme = QuantizationScheme::congestion();
    c.channels = {presets::wlan_congestion_channel()};
    c.probe.late_threshold_s = c.codec.late_threshold_s;
    return c;
  }

  static ScenarioConfig roaming(Codec codec = Codec::G711, double dwell_mean = 40.0) {
    ScenarioConfig c;
    c.kind = ScenarioKind::Roaming;
    c.codec = CodecProfile::of(codec);
    c.scheme = QuantizationScheme::roaming();
    c.roaming_dwell_mean = dwell_mean;
    c.channels = {presets::wlan_roaming_channel(dwell_mean), presets::cdma_roaming_channel()};
    c.probe.late_threshold_s = c.codec.late_threshold_s;
    return c;
  }

  void validate() const {
    if (duration_epochs < 2) throw DomainError("duration_epochs must be >= 2");
    if (runs < 1) throw DomainError("runs must be >= 1");
    if (channels.empty()) throw DomainError("scenario needs at least one channel");
    if (!(handoff_penalty_mos >= 0.0 && handoff_penalty_mos <= 1.0))
      throw DomainError("handoff penalty must lie in [0, 1] MOS");
    if (!(probe_jitter_s >= 0.0)) throw DomainError("probe jitter must be >= 0");
    if (!(delay_floor_s > 0.0)) throw DomainError("delay floor must be > 0");
    codec.validate();
    probe.validate();
    for (const auto& c : channels) c.validate();
  }
};

struct InterfaceRun {
  std::string label;
  std::vector<int> hidden_states;  // 0-based generator states
  std::vector<double> true_rtt;
  std::vector<double> observed_rtt;  // per-epoch aggregate of received probes
  std::vector<bool> imputed;
  std::vector<double> mos;
  std::vector<int> qoe_states;  // 1-based
  std::vector<std::vector<ProbeRecord>> probes;  // received probes per epoch
};

struct SimRun {
  int run_index = 0;
  unsigned long long seed = 0;
  std::vector<InterfaceRun> interfaces;

  int duration() const { return interfaces.empty() ? 0 : static_cast<int>(interfaces[0].mos.size()); }
};

inline std::string run_id(int run_index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "run%03d", run_index);
  return buf;
}

// Fully determined by (cfg.seed, run_index); each interface draws from its own
// stream so channels do not perturb each other.
inline SimRun generate_run(const ScenarioConfig& cfg, int run_index) {
  cfg.validate();
  SimRun run;
  run.run_index = run_index;
  run.seed = cfg.seed;
  const auto len = static_cast<std::size_t>(cfg.duration_epochs);
  for (std::size_t i = 0; i < cfg.channels.size(); ++i) {
    const auto& ch = cfg.channels[i];
    std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32),
                      static_cast<std::uint32_t>(run_index), static_cast<std::uint32_t>(i)};
    std::mt19937_64 rng(seq);
    auto path = sample_sequence(ch.generator, len, rng);

    InterfaceRun ir;
    ir.label = ch.label;
    ir.hidden_states = std::move(path.states);
    ir.probes.resize(len);
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    std::normal_distribution<double> jitter(0.0, 1.0);
    std::optional<double> previous;
    for (std::size_t t = 0; t < len; ++t) {
      const int s = ir.hidden_states[t];
      const double delay = std::max(path.observations[t], cfg.delay_floor_s);
      const double rtt = ch.kind == DelayKind::RoundTrip ? delay : 2.0 * delay;
      const double loss = ch.loss_per_state[static_cast<std::size_t>(s)];
      const MosScore mos = mos_from_delay(owd_from_rtt(rtt), loss, cfg.codec);

      for (int p = 0; p < cfg.probe.probes_per_second; ++p) {
        const bool lost = coin(rng) < loss;
        const double probe_rtt = std::max(cfg.delay_floor_s, rtt + cfg.probe_jitter_s * jitter(rng));
        if (!lost) ir.probes[t].push_back({static_cast<int>(t), static_cast<int>(i), probe_rtt, false});
      }
      const auto agg = aggregate_epoch(ir.probes[t], cfg.probe, previous);
      previous = agg.rtt_s;

      ir.true_rtt.push_back(rtt);
      ir.observed_rtt.push_back(agg.rtt_s);
      ir.imputed.push_back(agg.imputed);
      ir.mos.push_back(mos.value());
      ir.qoe_states.push_back(quantize_mos(mos, cfg.scheme).index);
    }
    run.interfaces.push_back(std::move(ir));
  }
  return run;
}

struct StepOutcome {
  std::vector<std::span<const ProbeRecord>> probes;  // every interface, every epoch
  std::vector<double> observed_rtt;
  double realized_mos = 1.0;
  bool handoff_occurred = false;
  double handoff_penalty_mos = 0.0;
};

// Attaches to action.target for `epoch`. A switch costs `penalty_mos` on the
// switching epoch. Never modifies the run.
inline StepOutcome step_environment(const SimRun& run, int epoch, InterfaceId current, Action action,
                                    double penalty_mos) {
  if (epoch < 0 || epoch >= run.duration()) throw DomainError("epoch out of range");
  const auto n_if = static_cast<int>(run.interfaces.size());
  if (action.target.index < 0 || action.target.index >= n_if || current.index < 0 || current.index >= n_if)
    throw DomainError("interface out of range");
  StepOutcome out;
  for (const auto& ir : run.interfaces) {
    out.probes.emplace_back(ir.probes[static_cast<std::size_t>(epoch)]);
    out.observed_rtt.push_back(ir.observed_rtt[static_cast<std::size_t>(epoch)]);
  }
  out.handoff_occurred = action.target != current;
  out.handoff_penalty_mos = out.handoff_occurred ? penalty_mos : 0.0;
  const double mos = run.interfaces[static_cast<std::size_t>(action.target.index)].mos[static_cast<std::size_t>(epoch)];
  out.realized_mos = std::max(MosScore::kMin, mos - out.handoff_penalty_mos);
  return out;
}

inline std::vector<DelayTrace> to_delay_traces(const SimRun& run) {
  std::vector<DelayTrace> out;
  for (const auto& ir : run.interfaces) {
    DelayTrace t{run_id(run.run_index), ir.label, {}};
    for (std::size_t e = 0; e < ir.mos.size(); ++e)
      t.samples.push_back({static_cast<int>(e), ir.observed_rtt[e], ir.mos[e]});
    out.push_back(std::move(t));
  }
  return out;
}

}  // namespace qoelab
