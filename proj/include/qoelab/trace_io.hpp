#pragma once

// Delay/MOS traces as CSV:
//
//   run_id,interface,epoch,rtt_s,mos
//   run000,WLAN,0,0.051900000,4.39
//   run000,WLAN,1,0.0481,
//
// One row per (run, interface, epoch). RTT is in seconds; the mos column may
// be empty. Output is ordered by (run_id, interface, epoch) with reals written
// to 9 significant digits.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <tuple>
#include <type_traits>
#include <utility>
#include <vector>

#include "qoelab/error.hpp"
#include "qoelab/qoe_model.hpp"

namespace qoelab {

struct TraceSample {
  int epoch = 0;
  double rtt_s = 0.0;
  std::optional<double> mos;

  friend bool operator==(const TraceSample&, const TraceSample&) = default;
};

struct DelayTrace {
  std::string run_id;
  std::string interface_label;
  std::vector<TraceSample> samples;

  friend bool operator==(const DelayTrace&, const DelayTrace&) = default;
};

inline constexpr std::string_view kTraceHeader = "run_id,interface,epoch,rtt_s,mos";

inline void validate_trace(const DelayTrace& t) {
  for (std::size_t i = 0; i < t.samples.size(); ++i) {
    const auto& s = t.samples[i];
    if (i > 0 && s.epoch <= t.samples[i - 1].epoch)
      throw ValidationError("run " + t.run_id + " (" + t.interface_label + "): epochs are not strictly increasing");
    if (!(s.rtt_s > 0.0) || !std::isfinite(s.rtt_s))
      throw ValidationError("run " + t.run_id + " (" + t.interface_label + "): rtt_s must be > 0");
    if (s.mos && !(*s.mos >= MosScore::kMin && *s.mos <= MosScore::kMax))
      throw ValidationError("run " + t.run_id + " (" + t.interface_label + "): mos must lie in [1, 5]");
  }
}

namespace detail {

inline std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const auto comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

template <class T>
std::optional<T> parse_number(std::string_view s) {
  T v{};
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end) return std::nullopt;
  if constexpr (std::is_floating_point_v<T>)
    if (!std::isfinite(v)) return std::nullopt;
  return v;
}

inline std::string format_real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

}  // namespace detail

inline std::vector<DelayTrace> read_traces(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) throw ParseError(1, "missing header");
  ++line_no;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kTraceHeader) throw ParseError(1, "header must be '" + std::string(kTraceHeader) + "'");

  std::map<std::pair<std::string, std::string>, DelayTrace> groups;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = detail::split_csv(line);
    if (f.size() != 5) throw ParseError(line_no, "expected 5 fields, got " + std::to_string(f.size()));
    if (f[0].empty() || f[1].empty()) throw ParseError(line_no, "run_id and interface must be non-empty");
    const auto epoch = detail::parse_number<int>(f[2]);
    if (!epoch) throw ParseError(line_no, "epoch is not an integer");
    const auto rtt = detail::parse_number<double>(f[3]);
    if (!rtt) throw ParseError(line_no, "rtt_s is not a finite number");
    std::optional<double> mos;
    if (!f[4].empty()) {
      mos = detail::parse_number<double>(f[4]);
      if (!mos) throw ParseError(line_no, "mos is not a finite number");
    }

    auto key = std::make_pair(std::string(f[0]), std::string(f[1]));
    auto& trace = groups[key];
    if (trace.run_id.empty()) {
      trace.run_id = key.first;
      trace.interface_label = key.second;
    }
    if (!(*rtt > 0.0))
      throw ValidationError("run " + trace.run_id + " line " + std::to_string(line_no) + ": rtt_s must be > 0");
    if (mos && !(*mos >= MosScore::kMin && *mos <= MosScore::kMax))
      throw ValidationError("run " + trace.run_id + " line " + std::to_string(line_no) + ": mos must lie in [1, 5]");
    if (!trace.samples.empty() && *epoch <= trace.samples.back().epoch)
      throw ValidationError("run " + trace.run_id + " (" + trace.interface_label + ") line " +
                            std::to_string(line_no) + ": epochs are not strictly increasing");
    trace.samples.push_back({*epoch, *rtt, mos});
  }

  std::vector<DelayTrace> out;
  out.reserve(groups.size());
  for (auto& [key, trace] : groups) out.push_back(std::move(trace));
  return out;
}

inline std::vector<DelayTrace> read_traces_string(const std::string& text) {
  std::istringstream in(text);
  return read_traces(in);
}

inline void write_traces(std::ostream& out, std::span<const DelayTrace> traces) {
  std::vector<const DelayTrace*> order;
  for (const auto& t : traces) {
    validate_trace(t);
    order.push_back(&t);
  }
  std::stable_sort(order.begin(), order.end(), [](const DelayTrace* a, const DelayTrace* b) {
    return std::tie(a->run_id, a->interface_label) < std::tie(b->run_id, b->interface_label);
  });
  out << kTraceHeader << '\n';
  for (const auto* t : order)
    for (const auto& s : t->samples) {
      out << t->run_id << ',' << t->interface_label << ',' << s.epoch << ',' << detail::format_real(s.rtt_s) << ',';
      if (s.mos) out << detail::format_real(*s.mos);
      out << '\n';
    }
}

inline std::string write_traces_string(std::span<const DelayTrace> traces) {
  std::ostringstream out;
  write_traces(out, traces);
  return out.str();
}

// HMM observations from a trace: the stored RTT, or RTT/2 as a one-way delay.
inline std::vector<double> trace_observations(const DelayTrace& t, bool halve_rtt) {
  std::vector<double> obs;
  obs.reserve(t.samples.size());
  for (const auto& s : t.samples) obs.push_back(halve_rtt ? owd_from_rtt(s.rtt_s) : s.rtt_s);
  return obs;
}

// Ground-truth QoE labels: the mos column where present, otherwise the
// E-Model applied to RTT/2 with no loss.
inline std::vector<int> trace_labels(const DelayTrace& t, const QuantizationScheme& scheme, const CodecProfile& codec) {
  std::vector<int> labels;
  labels.reserve(t.samples.size());
  for (const auto& s : t.samples) {
    const MosScore mos = s.mos ? MosScore(*s.mos) : mos_from_delay(owd_from_rtt(s.rtt_s), 0.0, codec);
    labels.push_back(quantize_mos(mos, scheme).index);
  }
  return labels;
}

}  // namespace qoelab
