#pragma once

// Passive probing over mobility signaling: binding updates/acks give one RTT
// sample per probe on every interface. Probes are reduced to one value per
// decision epoch, and the relative network load (RNL) estimator smooths those
// values for the load-aware baseline.

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>

#include "qoelab/error.hpp"

namespace qoelab {

enum class Imputation : std::uint8_t { ThresholdClamp, CarryForward };

inline std::string_view to_string(Imputation i) {
  return i == Imputation::ThresholdClamp ? "threshold_clamp" : "carry_forward";
}

inline Imputation parse_imputation(std::string_view s) {
  if (s == "threshold_clamp") return Imputation::ThresholdClamp;
  if (s == "carry_forward") return Imputation::CarryForward;
  throw UsageError("unknown imputation '" + std::string(s) + "'");
}

struct ProbeConfig {
  int probes_per_second = 5;
  int ba_packet_bytes = 24;
  double late_threshold_s = 0.650;
  Imputation imputation = Imputation::ThresholdClamp;
  double epoch_seconds = 1.0;

  void validate() const {
    if (probes_per_second < 1) throw DomainError("probes_per_second must be >= 1");
    if (ba_packet_bytes <= 0) throw DomainError("ba_packet_bytes must be > 0");
    if (!(late_threshold_s > 0.0)) throw DomainError("late_threshold_s must be > 0");
  }
};

// Signaling overhead of the probe stream in bits per second.
inline long long probe_overhead_bps(const ProbeConfig& cfg) {
  return static_cast<long long>(cfg.probes_per_second) * cfg.ba_packet_bytes * 8;
}

struct ProbeRecord {
  int epoch = 0;
  int interface = 0;
  double rtt_s = 0.0;
  bool imputed = false;
};

struct EpochRtt {
  double rtt_s = 0.0;
  bool imputed = false;
};

// Mean RTT of the probes received in one epoch. With nothing received, falls
// back to the configured imputation.
inline EpochRtt aggregate_epoch(std::span<const ProbeRecord> received, const ProbeConfig& cfg,
                                std::optional<double> previous = std::nullopt) {
  if (!received.empty()) {
    double sum = 0.0;
    for (const auto& r : received) {
      if (!(r.rtt_s > 0.0)) throw DomainError("probe RTT must be > 0");
      sum += r.rtt_s;
    }
    return {sum / static_cast<double>(received.size()), false};
  }
  switch (cfg.imputation) {
    case Imputation::ThresholdClamp:
      return {cfg.late_threshold_s, true};
    case Imputation::CarryForward:
      if (!previous) throw DomainError("carry_forward imputation has no previous epoch value");
      return {*previous, true};
  }
  throw DomainError("unknown imputation mode");
}

// Relative network load:
//
//   Z_n = RTT_n / h + (h - 1) / h * Z_{n-1}        Z_0 = RTT_0
//   D_n = RTT_n - RTT_{n-1}
//   J_n = |D_n| / h + (h - 1) / h * J_{n-1}        J_0 = |D_1|
//   RNL = Z_n + c * J_n
//
// The jitter term only exists from the second sample on; the first update
// reports Z_0 alone.
class RnlEstimator {
 public:
  explicit RnlEstimator(int history = 5, double jitter_weight = 5.0) : h_(history), c_(jitter_weight) {
    if (h_ < 1) throw DomainError("RNL history window must be >= 1");
  }

  double update(double rtt_s) {
    if (!(rtt_s > 0.0) || !std::isfinite(rtt_s)) throw DomainError("RTT must be a finite value > 0");
    const double h = static_cast<double>(h_);
    if (samples_ == 0) {
      z_ = rtt_s;
      j_ = 0.0;
    } else {
      const double d = rtt_s - last_rtt_;
      // Incremental form of the same recursion; a constant input is an exact
      // fixed point.
      z_ += (rtt_s - z_) / h;
      const double j_prev = samples_ == 1 ? std::abs(d) : j_;
      j_ = j_prev + (std::abs(d) - j_prev) / h;
    }
    last_rtt_ = rtt_s;
    ++samples_;
    return rnl();
  }

  double rnl() const { return samples_ < 2 ? z_ : z_ + c_ * j_; }
  bool defined() const { return samples_ >= 1; }
  bool jitter_defined() const { return samples_ >= 2; }

  double smoothed_rtt() const { return z_; }
  double smoothed_jitter() const { return j_; }
  double last_rtt() const { return last_rtt_; }
  long long samples() const { return samples_; }
  int history() const { return h_; }
  double jitter_weight() const { return c_; }

 private:
  int h_;
  double c_;
  double z_ = 0.0;
  double j_ = 0.0;
  double last_rtt_ = 0.0;
  long long samples_ = 0;
};

// Value-style wrapper: returns the advanced estimator and the emitted RNL.
inline std::pair<RnlEstimator, double> rnl_update(RnlEstimator est, double rtt_s) {
  const double v = est.update(rtt_s);
  return {est, v};
}

}  // namespace qoelab
