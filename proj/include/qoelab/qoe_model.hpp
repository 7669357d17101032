#pragma once

// Voice quality model: one-way delay and loss -> E-Model R-factor -> MOS,
// and MOS -> discrete QoE state.
//
// R-factor chain (all delays in milliseconds inside the formula):
//
//   R      = 93.2 - Id(d) - Ie_eff(loss)
//   Id(d)  = 0.024 d + 0.11 (d - 177.3) H(d - 177.3)
//   Ie_eff = Ie + (95 - Ie) * loss / (loss + Bpl)
//   MOS    = 1                                        R <= 0
//          = 1 + 0.035 R + 7e-6 R (R - 60) (100 - R)  otherwise, clamped to [1, 5]
//
// Codec constants: G.711 Ie = 0, Bpl = 0.25; G.729 Ie = 11, Bpl = 0.19
// (loss and Bpl expressed as fractions).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "qoelab/error.hpp"

namespace qoelab {

enum class Codec : std::uint8_t { G711, G729 };

inline std::string_view to_string(Codec c) {
  return c == Codec::G711 ? "g711" : "g729";
}

inline Codec parse_codec(std::string_view s) {
  if (s == "g711" || s == "G711" || s == "G.711") return Codec::G711;
  if (s == "g729" || s == "G729" || s == "G.729") return Codec::G729;
  throw UsageError("unknown codec '" + std::string(s) + "' (expected g711 or g729)");
}

struct CodecProfile {
  Codec codec = Codec::G711;
  double equipment_impairment = 0.0;  // Ie
  double packet_loss_robustness = 0.25;  // Bpl, as a fraction
  double late_threshold_s = 0.650;  // probes slower than this count as late

  static CodecProfile g711() { return {Codec::G711, 0.0, 0.25, 0.400}; }
  static CodecProfile g729() { return {Codec::G729, 11.0, 0.19, 0.650}; }
  static CodecProfile of(Codec c) { return c == Codec::G711 ? g711() : g729(); }

  void validate() const {
    if (!(equipment_impairment >= 0.0)) throw DomainError("codec Ie must be >= 0");
    if (!(packet_loss_robustness > 0.0)) throw DomainError("codec Bpl must be > 0");
    if (!(late_threshold_s > 0.0)) throw DomainError("codec late threshold must be > 0");
  }
};

// MOS on the 1..5 scale. Construction clamps.
class MosScore {
 public:
  static constexpr double kMin = 1.0;
  static constexpr double kMax = 5.0;

  constexpr MosScore() = default;
  explicit MosScore(double v) : value_(std::clamp(v, kMin, kMax)) {}

  constexpr double value() const { return value_; }
  friend constexpr auto operator<=>(MosScore, MosScore) = default;

 private:
  double value_ = kMin;
};

namespace emodel {

inline constexpr double kBaseR = 93.2;
inline constexpr double kDelayKneeMs = 177.3;

inline double delay_impairment(double owd_ms) {
  double id = 0.024 * owd_ms;
  if (owd_ms > kDelayKneeMs) id += 0.11 * (owd_ms - kDelayKneeMs);
  return id;
}

inline double effective_equipment_impairment(double loss, const CodecProfile& codec) {
  const double ie = codec.equipment_impairment;
  return ie + (95.0 - ie) * loss / (loss + codec.packet_loss_robustness);
}

inline double r_to_mos(double r) {
  if (r <= 0.0) return MosScore::kMin;
  const double mos = 1.0 + 0.035 * r + 7e-6 * r * (r - 60.0) * (100.0 - r);
  return std::clamp(mos, MosScore::kMin, MosScore::kMax);
}

}  // namespace emodel

inline MosScore mos_from_delay(double owd_s, double loss_fraction, const CodecProfile& codec) {
  if (!(owd_s >= 0.0) || !std::isfinite(owd_s))
    throw DomainError("one-way delay must be a finite value >= 0");
  if (!(loss_fraction >= 0.0 && loss_fraction <= 1.0))
    throw DomainError("loss fraction must lie in [0, 1]");
  const double r = emodel::kBaseR - emodel::delay_impairment(owd_s * 1000.0) -
                   emodel::effective_equipment_impairment(loss_fraction, codec);
  return MosScore(emodel::r_to_mos(r));
}

// OWD approximated as half the round-trip time.
inline double owd_from_rtt(double rtt_s) { return rtt_s / 2.0; }

// 1-based discrete QoE state. State 1 is the worst band.
struct QoeState {
  int index = 1;
  friend constexpr auto operator<=>(QoeState, QoeState) = default;
};

class QuantizationScheme {
 public:
  QuantizationScheme() : QuantizationScheme(std::vector<double>{2.0, 3.0}) {}

  explicit QuantizationScheme(std::vector<double> boundaries) : boundaries_(std::move(boundaries)) {
    const auto n = boundaries_.size() + 1;
    if (n != 2 && n != 3 && n != 5)
      throw DomainError("quantization scheme must have 2, 3 or 5 states");
    for (std::size_t i = 0; i < boundaries_.size(); ++i) {
      const double b = boundaries_[i];
      if (!(b > MosScore::kMin && b < MosScore::kMax))
        throw DomainError("quantization boundaries must lie strictly inside (1, 5)");
      if (i > 0 && !(b > boundaries_[i - 1]))
        throw DomainError("quantization boundaries must be strictly ascending");
    }
  }

  // <2, [2,3), >=3
  static QuantizationScheme congestion() { return QuantizationScheme({2.0, 3.0}); }
  // <2, [2,4), >=4
  static QuantizationScheme roaming() { return QuantizationScheme({2.0, 4.0}); }

  const std::vector<double>& boundaries() const { return boundaries_; }
  int state_count() const { return static_cast<int>(boundaries_.size()) + 1; }

  friend bool operator==(const QuantizationScheme&, const QuantizationScheme&) = default;

 private:
  std::vector<double> boundaries_;
};

// Cut points belong to the upper band.
inline QoeState quantize_mos(MosScore mos, const QuantizationScheme& scheme) {
  const auto& b = scheme.boundaries();
  const auto above = std::upper_bound(b.begin(), b.end(), mos.value());
  return QoeState{static_cast<int>(above - b.begin()) + 1};
}

}  // namespace qoelab
