// qoelab command-line front end.
//
//   qoelab simulate         --config FILE --seed N --out DIR [--runs N --duration N]
//   qoelab train-hmm        --traces FILE --states K --folds N --out DIR
//   qoelab predict          --model FILE --traces FILE [--interface L] --out DIR
//   qoelab compare-policies --config FILE --seed N --out DIR
//   qoelab report           REPORT.json... --out DIR
//
// Exit status: 0 success, 2 usage or config error, 3 invalid data.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "qoelab/harness.hpp"

namespace fs = std::filesystem;
using namespace qoelab;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;

struct CommonOptions {
  std::string config;
  std::optional<unsigned long long> seed;
  std::string out = ".";
  std::optional<std::string> codec;
};

HarnessConfig resolve_config(const CommonOptions& o) {
  HarnessConfig cfg = o.config.empty() ? HarnessConfig{} : load_config(o.config);
  if (o.codec) {
    const Codec c = parse_codec(*o.codec);
    auto rebuilt = cfg.scenario.kind == ScenarioKind::Roaming
                       ? ScenarioConfig::roaming(c, cfg.scenario.roaming_dwell_mean)
                       : ScenarioConfig::wlan_congestion(c);
    rebuilt.duration_epochs = cfg.scenario.duration_epochs;
    rebuilt.runs = cfg.scenario.runs;
    rebuilt.seed = cfg.scenario.seed;
    rebuilt.handoff_penalty_mos = cfg.scenario.handoff_penalty_mos;
    rebuilt.probe_jitter_s = cfg.scenario.probe_jitter_s;
    const double late = rebuilt.probe.late_threshold_s;
    rebuilt.probe = cfg.scenario.probe;
    rebuilt.probe.late_threshold_s = late;
    cfg.scenario = rebuilt;
  }
  if (o.seed) cfg.scenario.seed = *o.seed;
  return cfg;
}

std::vector<DelayTrace> load_traces(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open traces " + path);
  return read_traces(in);
}

int cmd_simulate(const CommonOptions& o, std::optional<int> runs, std::optional<int> duration) {
  auto cfg = resolve_config(o);
  if (runs) cfg.scenario.runs = *runs;
  if (duration) cfg.scenario.duration_epochs = *duration;
  cfg.scenario.validate();

  std::vector<DelayTrace> traces;
  std::vector<double> mos_sum(cfg.scenario.channels.size(), 0.0);
  std::vector<long long> mos_n(cfg.scenario.channels.size(), 0);
  for (int r = 0; r < cfg.scenario.runs; ++r) {
    const auto run = generate_run(cfg.scenario, r);
    for (std::size_t i = 0; i < run.interfaces.size(); ++i)
      for (double m : run.interfaces[i].mos) {
        mos_sum[i] += m;
        ++mos_n[i];
      }
    for (auto& t : to_delay_traces(run)) traces.push_back(std::move(t));
  }
  fs::create_directories(o.out);
  write_text_file(fs::path(o.out) / "traces.csv", write_traces_string(traces));
  std::printf("scenario %s, codec %s, %d runs x %d epochs\n", std::string(to_string(cfg.scenario.kind)).c_str(),
              std::string(to_string(cfg.scenario.codec.codec)).c_str(), cfg.scenario.runs,
              cfg.scenario.duration_epochs);
  for (std::size_t i = 0; i < mos_sum.size(); ++i)
    std::printf("mean MOS %s: %.4f\n", cfg.scenario.channels[i].label.c_str(),
                mos_sum[i] / static_cast<double>(mos_n[i]));
  return 0;
}

struct TrainOptions {
  std::string traces;
  std::string interface_label;
  int states = 3;
  int folds = 2;
  std::string scheme = "congestion";
  bool halve_rtt = false;
  int restarts = 30;
};

QuantizationScheme scheme_by_name(const std::string& s) {
  if (s == "congestion") return QuantizationScheme::congestion();
  if (s == "roaming") return QuantizationScheme::roaming();
  throw UsageError("unknown scheme '" + s + "' (congestion or roaming)");
}

int cmd_train_hmm(const CommonOptions& o, const TrainOptions& t) {
  const Codec codec = parse_codec(o.codec.value_or("g711"));
  const auto scheme = scheme_by_name(t.scheme);
  std::vector<LabeledTrace> data;
  for (const auto& tr : load_traces(t.traces)) {
    if (!t.interface_label.empty() && tr.interface_label != t.interface_label) continue;
    data.push_back({trace_observations(tr, t.halve_rtt), trace_labels(tr, scheme, CodecProfile::of(codec))});
  }
  if (data.empty()) throw ValidationError("no traces selected");
  if (t.folds < 2 || static_cast<std::size_t>(t.folds) > data.size())
    throw UsageError("--folds must be between 2 and the number of traces (" + std::to_string(data.size()) + ")");

  EmConfig em;
  em.seed = o.seed.value_or(1);
  em.restarts = t.restarts;
  em.scheme = scheme;
  const auto cv = cross_validate(data, t.folds, t.states, em, o.seed.value_or(1));
  for (std::size_t f = 0; f < cv.fold_accuracy.size(); ++f) std::printf("fold %zu accuracy: %.4f\n", f + 1, cv.fold_accuracy[f]);
  std::printf("mean accuracy: %.4f\n", cv.accuracy);

  Sequences seqs;
  LabelSequences labels;
  for (const auto& d : data) {
    seqs.push_back(d.observations);
    labels.push_back(d.labels);
  }
  auto [model, report] = em_train(seqs, &labels, t.states, em);
  std::printf("EM: %d iterations, converged %s, final log-likelihood %.6f\n", report.iterations,
              report.converged ? "yes" : "no", report.log_likelihood_per_iteration.back());

  fs::create_directories(o.out);
  Metadata meta{{"codec", std::string(to_string(codec))},
                {"scheme", t.scheme},
                {"observation", t.halve_rtt ? "owd" : "rtt"},
                {"cv_accuracy", detail::fixed(cv.accuracy)}};
  if (!t.interface_label.empty()) meta["interface"] = t.interface_label;
  write_text_file(fs::path(o.out) / "model.json", hmm_to_json(model, meta).dump(2) + "\n");
  return 0;
}

int cmd_predict(const CommonOptions& o, const std::string& model_path, const std::string& traces_path,
                std::string interface_label) {
  Metadata meta;
  const auto model = hmm_from_json(read_json_file(model_path), &meta);
  // defaults to the interface the model was trained on, if recorded
  if (interface_label.empty() && meta.count("interface")) interface_label = meta["interface"];
  const bool halve = meta.count("observation") && meta["observation"] == "owd";
  const Codec codec = parse_codec(o.codec.value_or(meta.count("codec") ? meta["codec"] : "g711"));

  std::ostringstream csv;
  csv << "run_id,interface,epoch,filtered_state,predicted_state";
  for (std::size_t k = 0; k < model.state_count(); ++k) csv << ",p" << k + 1;
  csv << '\n';
  PredictionScore score;
  for (const auto& tr : load_traces(traces_path)) {
    if (!interface_label.empty() && tr.interface_label != interface_label) continue;
    const auto obs = trace_observations(tr, halve);
    std::optional<std::vector<int>> labels;
    if (model.scheme) labels = trace_labels(tr, *model.scheme, CodecProfile::of(codec));
    OnlineFilter filter(model);
    for (std::size_t t = 0; t < obs.size(); ++t) {
      const auto belief = filter.update(obs[t]);
      const auto [next, next_belief] = predict_next_state(model, belief);
      csv << tr.run_id << ',' << tr.interface_label << ',' << tr.samples[t].epoch << ',' << belief.map_state() + 1 << ','
          << next.index;
      for (double p : next_belief.probs) csv << ',' << detail::fixed(p, 9);
      csv << '\n';
      if (labels && t + 1 < obs.size()) {
        ++score.total;
        score.correct += next.index == (*labels)[t + 1] ? 1 : 0;
      }
    }
  }
  fs::create_directories(o.out);
  write_text_file(fs::path(o.out) / "predictions.csv", csv.str());
  if (score.total > 0) std::printf("one-step prediction accuracy: %.4f (%lld/%lld)\n", score.accuracy(),
                                   static_cast<long long>(score.correct), static_cast<long long>(score.total));
  return 0;
}

int cmd_compare(const CommonOptions& o) {
  auto cfg = resolve_config(o);
  const auto art = run_comparison(cfg);
  write_comparison(art, o.out);
  std::fputs(table5_text(art.report).c_str(), stdout);
  return 0;
}

int cmd_report(const CommonOptions& o, const std::vector<std::string>& inputs) {
  std::vector<std::pair<std::string, Json>> reports;
  for (const auto& p : inputs) reports.emplace_back(fs::path(p).parent_path().filename().string().empty()
                                                         ? fs::path(p).stem().string()
                                                         : fs::path(p).parent_path().filename().string(),
                                                     read_json_file(p));
  const auto merged = merge_reports(reports);
  fs::create_directories(o.out);
  write_text_file(fs::path(o.out) / "summary.csv", merged.summary_csv);
  write_text_file(fs::path(o.out) / "summary.json", merged.summary.dump(2) + "\n");
  std::fputs(merged.summary_csv.c_str(), stdout);
  return 0;
}

void add_common(CLI::App* app, CommonOptions& o, bool with_config) {
  if (with_config) app->add_option("--config", o.config, "Harness config file")->check(CLI::ExistingFile);
  app->add_option("--seed", o.seed, "Master seed");
  app->add_option("--out", o.out, "Output directory");
  app->add_option("--codec", o.codec, "Codec profile")->check(CLI::IsMember({"g711", "g729"}));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"QoE-driven vertical handoff experiments"};
  app.require_subcommand(1);

  CommonOptions common;
  std::optional<int> runs, duration;
  auto* sim = app.add_subcommand("simulate", "Generate synthetic delay/MOS traces");
  add_common(sim, common, true);
  sim->add_option("--runs", runs, "Number of runs");
  sim->add_option("--duration", duration, "Epochs per run");

  TrainOptions train;
  auto* tr = app.add_subcommand("train-hmm", "Fit and cross-validate a QoE-state HMM");
  add_common(tr, common, false);
  tr->add_option("--traces", train.traces, "Trace CSV")->required()->check(CLI::ExistingFile);
  tr->add_option("--states", train.states, "Number of hidden states");
  tr->add_option("--folds", train.folds, "Cross-validation folds");
  tr->add_option("--interface", train.interface_label, "Only use traces of this interface");
  tr->add_option("--scheme", train.scheme, "MOS quantization: congestion or roaming");
  tr->add_option("--restarts", train.restarts, "EM restarts");
  tr->add_flag("--halve-rtt", train.halve_rtt, "Train on RTT/2 instead of RTT");

  std::string model_path, traces_path;
  auto* pr = app.add_subcommand("predict", "Filter traces through a saved model");
  add_common(pr, common, false);
  pr->add_option("--model", model_path, "Model JSON")->required()->check(CLI::ExistingFile);
  pr->add_option("--traces", traces_path, "Trace CSV")->required()->check(CLI::ExistingFile);
  std::string predict_interface;
  pr->add_option("--interface", predict_interface, "Only filter traces of this interface");

  auto* cmp = app.add_subcommand("compare-policies", "Evaluate Best, Naive, M4 and the proposed policy");
  add_common(cmp, common, true);

  std::vector<std::string> inputs;
  auto* rep = app.add_subcommand("report", "Merge report.json files into a summary");
  add_common(rep, common, false);
  rep->add_option("reports", inputs, "report.json files");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  }

  try {
    if (*sim) return cmd_simulate(common, runs, duration);
    if (*tr) return cmd_train_hmm(common, train);
    if (*pr) return cmd_predict(common, model_path, traces_path, predict_interface);
    if (*cmp) return cmd_compare(common);
    if (*rep) return cmd_report(common, inputs);
  } catch (const UsageError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  } catch (const DomainError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  } catch (const ParseError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitData;
  } catch (const ValidationError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitData;
  } catch (const DegenerateModelError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitData;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return kExitUsage;
}
