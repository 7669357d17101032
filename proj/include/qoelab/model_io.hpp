#pragma once

// JSON documents for trained HMMs and Q-tables. Doubles are written in their
// shortest round-trip decimal form, so a save/load cycle is bit-exact.

#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "qoelab/error.hpp"
#include "qoelab/hmm.hpp"
#include "qoelab/policies.hpp"

namespace qoelab {

using Json = nlohmann::ordered_json;

// Free-form provenance stored next to the parameters.
using Metadata = std::map<std::string, std::string>;

inline Json hmm_to_json(const HmmModel& m, const Metadata& meta = {}) {
  Json j;
  j["format"] = "qoelab.hmm";
  j["version"] = 1;
  j["states"] = m.state_count();
  j["prior"] = m.prior;
  Json rows = Json::array();
  for (std::size_t i = 0; i < m.transitions.size(); ++i) {
    auto r = m.transitions.row(i);
    rows.push_back(std::vector<double>(r.begin(), r.end()));
  }
  j["transitions"] = rows;
  Json em = Json::array();
  for (const auto& e : m.emissions) em.push_back({{"mean", e.mean}, {"variance", e.variance}});
  j["emissions"] = em;
  j["scheme"] = m.scheme ? Json(m.scheme->boundaries()) : Json(nullptr);
  Json md = Json::object();
  for (const auto& [k, v] : meta) md[k] = v;
  j["metadata"] = md;
  return j;
}

inline HmmModel hmm_from_json(const Json& j, Metadata* meta = nullptr) {
  try {
    if (j.at("format") != "qoelab.hmm") throw ValidationError("not an HMM document");
    HmmModel m;
    m.prior = j.at("prior").get<std::vector<double>>();
    const auto n = m.prior.size();
    const auto& rows = j.at("transitions");
    if (rows.size() != n) throw ValidationError("transition matrix size does not match prior");
    m.transitions = TransitionMatrix(n);
    for (std::size_t r = 0; r < n; ++r) {
      const auto row = rows.at(r).get<std::vector<double>>();
      if (row.size() != n) throw ValidationError("transition matrix must be square");
      for (std::size_t c = 0; c < n; ++c) m.transitions(r, c) = row[c];
    }
    for (const auto& e : j.at("emissions"))
      m.emissions.push_back({e.at("mean").get<double>(), e.at("variance").get<double>()});
    if (!j.at("scheme").is_null()) m.scheme = QuantizationScheme(j.at("scheme").get<std::vector<double>>());
    if (meta && j.contains("metadata"))
      for (const auto& [k, v] : j.at("metadata").items()) (*meta)[k] = v.get<std::string>();
    m.validate();
    return m;
  } catch (const Json::exception& e) {
    throw ValidationError(std::string("malformed HMM document: ") + e.what());
  } catch (const DomainError& e) {
    throw ValidationError(std::string("invalid HMM document: ") + e.what());
  }
}

inline Json qtable_to_json(const QTable& q, const StateSpace& space, const std::vector<std::string>& action_labels) {
  if (space.size() != q.state_count() || action_labels.size() != q.action_count())
    throw DomainError("Q-table does not match its state space or action labels");
  Json j;
  j["format"] = "qoelab.qtable";
  j["version"] = 1;
  j["states_per_interface"] = space.states_per_interface();
  j["actions"] = action_labels;
  Json rows = Json::array();
  for (std::size_t s = 0; s < q.state_count(); ++s) {
    auto r = q.row(s);
    std::vector<long long> visits;
    for (std::size_t a = 0; a < q.action_count(); ++a) visits.push_back(q.visits(s, a));
    rows.push_back({{"state", space.label(s)},
                    {"values", std::vector<double>(r.begin(), r.end())},
                    {"visits", visits}});
  }
  j["rows"] = rows;
  return j;
}

struct LoadedQTable {
  QTable table;
  StateSpace space;
  std::vector<std::string> actions;
};

inline LoadedQTable qtable_from_json(const Json& j) {
  try {
    if (j.at("format") != "qoelab.qtable") throw ValidationError("not a Q-table document");
    LoadedQTable out;
    out.space = StateSpace(j.at("states_per_interface").get<std::vector<int>>());
    out.actions = j.at("actions").get<std::vector<std::string>>();
    out.table = QTable(out.space.size(), out.actions.size());
    const auto& rows = j.at("rows");
    if (rows.size() != out.space.size()) throw ValidationError("Q-table row count does not match state space");
    for (std::size_t s = 0; s < rows.size(); ++s) {
      if (rows[s].at("state") != out.space.label(s)) throw ValidationError("Q-table rows are out of order");
      const auto values = rows[s].at("values").get<std::vector<double>>();
      const auto visits = rows[s].at("visits").get<std::vector<long long>>();
      if (values.size() != out.actions.size() || visits.size() != out.actions.size())
        throw ValidationError("Q-table row has the wrong number of actions");
      for (std::size_t a = 0; a < values.size(); ++a) {
        out.table.value(s, a) = values[a];
        out.table.visits(s, a) = visits[a];
      }
    }
    return out;
  } catch (const Json::exception& e) {
    throw ValidationError(std::string("malformed Q-table document: ") + e.what());
  } catch (const DomainError& e) {
    throw ValidationError(std::string("invalid Q-table document: ") + e.what());
  }
}

inline Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open " + path);
  try {
    return Json::parse(in);
  } catch (const Json::exception& e) {
    throw ValidationError(path + ": " + e.what());
  }
}

inline void write_json_file(const std::string& path, const Json& j) {
  std::ofstream out(path);
  if (!out) throw UsageError("cannot write " + path);
  out << j.dump(2) << '\n';
}

}  // namespace qoelab
