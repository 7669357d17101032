#pragma once

// Discrete-time hidden Markov model with scalar Gaussian emissions over delay
// observations. Filtering and EM run in log space; state indices are 0-based
// internally and exposed as 1-based QoeState values.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "qoelab/error.hpp"
#include "qoelab/qoe_model.hpp"

namespace qoelab {

inline constexpr double kProbabilityTolerance = 1e-9;

namespace detail {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

inline double safe_log(double p) { return p > 0.0 ? std::log(p) : kNegInf; }

inline double log_sum_exp(std::span<const double> xs) {
  double m = kNegInf;
  for (double x : xs) m = std::max(m, x);
  if (m == kNegInf) return kNegInf;
  double s = 0.0;
  for (double x : xs) s += std::exp(x - m);
  return m + std::log(s);
}

inline void check_distribution(std::span<const double> p, const char* what) {
  double sum = 0.0;
  for (double v : p) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw DomainError(std::string(what) + " has a negative or non-finite entry");
    sum += v;
  }
  if (std::abs(sum - 1.0) > kProbabilityTolerance)
    throw DomainError(std::string(what) + " does not sum to 1");
}

}  // namespace detail

struct GaussianEmission {
  double mean = 0.0;      // seconds
  double variance = 1.0;  // seconds^2

  double log_pdf(double x) const {
    const double d = x - mean;
    return -0.5 * (std::log(2.0 * std::numbers::pi * variance) + d * d / variance);
  }
};

// Row-stochastic square matrix, row-major.
class TransitionMatrix {
 public:
  TransitionMatrix() = default;
  explicit TransitionMatrix(std::size_t n, double fill = 0.0) : n_(n), data_(n * n, fill) {}
  TransitionMatrix(std::initializer_list<std::initializer_list<double>> rows) : n_(rows.size()) {
    data_.reserve(n_ * n_);
    for (const auto& r : rows) {
      if (r.size() != n_) throw DomainError("transition matrix must be square");
      data_.insert(data_.end(), r.begin(), r.end());
    }
  }

  static TransitionMatrix identity(std::size_t n) {
    TransitionMatrix m(n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  std::size_t size() const { return n_; }
  double& operator()(std::size_t i, std::size_t j) { return data_[i * n_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * n_ + j]; }
  std::span<double> row(std::size_t i) { return {data_.data() + i * n_, n_}; }
  std::span<const double> row(std::size_t i) const { return {data_.data() + i * n_, n_}; }

  void normalize_rows() {
    for (std::size_t i = 0; i < n_; ++i) {
      auto r = row(i);
      const double s = std::accumulate(r.begin(), r.end(), 0.0);
      if (s > 0.0)
        for (double& v : r) v /= s;
    }
  }

  void validate() const {
    for (std::size_t i = 0; i < n_; ++i) detail::check_distribution(row(i), "transition matrix row");
  }

  friend bool operator==(const TransitionMatrix&, const TransitionMatrix&) = default;

 private:
  std::size_t n_ = 0;
  std::vector<double> data_;
};

struct HmmModel {
  std::vector<double> prior;
  TransitionMatrix transitions;
  std::vector<GaussianEmission> emissions;
  std::optional<QuantizationScheme> scheme;

  std::size_t state_count() const { return prior.size(); }

  void validate() const {
    const auto n = prior.size();
    if (n == 0) throw DomainError("HMM needs at least one state");
    if (transitions.size() != n || emissions.size() != n)
      throw DomainError("HMM prior, transitions and emissions disagree on state count");
    detail::check_distribution(prior, "prior");
    transitions.validate();
    for (const auto& e : emissions)
      if (!std::isfinite(e.mean) || !(e.variance > 0.0) || !std::isfinite(e.variance))
        throw DomainError("emission needs finite mean and positive variance");
    if (scheme && static_cast<std::size_t>(scheme->state_count()) != n)
      throw DomainError("HMM state count must equal the quantization scheme's state count");
  }

  friend bool operator==(const HmmModel& a, const HmmModel& b) {
    if (a.prior != b.prior || !(a.transitions == b.transitions) || a.scheme != b.scheme) return false;
    if (a.emissions.size() != b.emissions.size()) return false;
    for (std::size_t i = 0; i < a.emissions.size(); ++i)
      if (a.emissions[i].mean != b.emissions[i].mean || a.emissions[i].variance != b.emissions[i].variance)
        return false;
    return true;
  }
};

struct BeliefState {
  std::vector<double> probs;

  std::size_t map_state() const {
    return static_cast<std::size_t>(std::max_element(probs.begin(), probs.end()) - probs.begin());
  }
};

struct FilterResult {
  std::vector<BeliefState> beliefs;
  double log_evidence = 0.0;
};

// Incremental forward filter. Holds the normalized log-belief and the
// accumulated log-evidence of everything seen so far.
class OnlineFilter {
 public:
  explicit OnlineFilter(const HmmModel& model) : model_(&model) {
    const auto n = model.state_count();
    log_prior_.resize(n);
    log_tm_.resize(n * n);
    for (std::size_t i = 0; i < n; ++i) {
      log_prior_[i] = detail::safe_log(model.prior[i]);
      for (std::size_t j = 0; j < n; ++j) log_tm_[i * n + j] = detail::safe_log(model.transitions(i, j));
    }
  }

  BeliefState update(double observation) {
    if (!std::isfinite(observation)) throw DomainError("observation must be finite");
    const auto n = model_->state_count();
    std::vector<double> next(n);
    std::vector<double> terms(n);
    for (std::size_t s = 0; s < n; ++s) {
      double pred;
      if (steps_ == 0) {
        pred = log_prior_[s];
      } else {
        for (std::size_t p = 0; p < n; ++p) terms[p] = log_belief_[p] + log_tm_[p * n + s];
        pred = detail::log_sum_exp(terms);
      }
      next[s] = pred + model_->emissions[s].log_pdf(observation);
    }
    const double norm = detail::log_sum_exp(next);
    if (!std::isfinite(norm)) throw DomainError("observation has zero likelihood under the model");
    for (double& v : next) v -= norm;
    log_belief_ = std::move(next);
    log_evidence_ += norm;
    ++steps_;
    return belief();
  }

  BeliefState belief() const {
    BeliefState b{std::vector<double>(log_belief_.size())};
    double sum = 0.0;
    for (std::size_t i = 0; i < log_belief_.size(); ++i) sum += b.probs[i] = std::exp(log_belief_[i]);
    for (double& p : b.probs) p /= sum;
    return b;
  }

  bool empty() const { return steps_ == 0; }
  std::size_t steps() const { return steps_; }
  double log_evidence() const { return log_evidence_; }

 private:
  const HmmModel* model_;
  std::vector<double> log_prior_;
  std::vector<double> log_tm_;
  std::vector<double> log_belief_;
  double log_evidence_ = 0.0;
  std::size_t steps_ = 0;
};

inline FilterResult forward_filter(const HmmModel& model, std::span<const double> observations) {
  if (observations.empty()) throw DomainError("forward_filter needs at least one observation");
  model.validate();
  OnlineFilter filter(model);
  FilterResult out;
  out.beliefs.reserve(observations.size());
  for (double o : observations) out.beliefs.push_back(filter.update(o));
  out.log_evidence = filter.log_evidence();
  return out;
}

// One-step-ahead prediction. Ties go to the lower state index.
inline std::pair<QoeState, BeliefState> predict_next_state(const HmmModel& model, const BeliefState& belief) {
  const auto n = model.state_count();
  if (belief.probs.size() != n) throw DomainError("belief size does not match model");
  BeliefState next{std::vector<double>(n, 0.0)};
  for (std::size_t from = 0; from < n; ++from)
    for (std::size_t to = 0; to < n; ++to) next.probs[to] += belief.probs[from] * model.transitions(from, to);
  return {QoeState{static_cast<int>(next.map_state()) + 1}, std::move(next)};
}

// ---------------------------------------------------------------------------
// Training

struct EmConfig {
  int max_iterations = 200;
  double tolerance = 1e-6;  // relative log-likelihood improvement
  int restarts = 30;           // candidate starts, screened with a short run
  int screen_iterations = 10;
  int finalists = 3;           // best screened starts run to convergence
  double variance_floor = 1e-8;
  unsigned long long seed = 0;
  std::optional<QuantizationScheme> scheme;
};

struct TrainingReport {
  std::vector<double> log_likelihood_per_iteration;
  int iterations = 0;
  bool converged = false;
  int best_restart = 0;
};

using Sequences = std::vector<std::vector<double>>;
using LabelSequences = std::vector<std::vector<int>>;

namespace detail {

struct Posteriors {
  std::vector<double> gamma;      // T x N
  std::vector<double> xi_sum;     // N x N, summed over t
  double log_likelihood = 0.0;
};

inline Posteriors forward_backward(const HmmModel& m, std::span<const double> obs) {
  const auto n = m.state_count();
  const auto len = obs.size();
  std::vector<double> log_tm(n * n), log_b(len * n), la(len * n), lb(len * n), log_c(len);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) log_tm[i * n + j] = safe_log(m.transitions(i, j));
  for (std::size_t t = 0; t < len; ++t)
    for (std::size_t s = 0; s < n; ++s) log_b[t * n + s] = m.emissions[s].log_pdf(obs[t]);

  std::vector<double> terms(n);
  for (std::size_t t = 0; t < len; ++t) {
    for (std::size_t s = 0; s < n; ++s) {
      double pred;
      if (t == 0) {
        pred = safe_log(m.prior[s]);
      } else {
        for (std::size_t p = 0; p < n; ++p) terms[p] = la[(t - 1) * n + p] + log_tm[p * n + s];
        pred = log_sum_exp(terms);
      }
      la[t * n + s] = pred + log_b[t * n + s];
    }
    log_c[t] = log_sum_exp(std::span<const double>(la.data() + t * n, n));
    for (std::size_t s = 0; s < n; ++s) la[t * n + s] -= log_c[t];
  }

  for (std::size_t s = 0; s < n; ++s) lb[(len - 1) * n + s] = 0.0;
  for (std::size_t t = len - 1; t-- > 0;) {
    for (std::size_t s = 0; s < n; ++s) {
      for (std::size_t j = 0; j < n; ++j)
        terms[j] = log_tm[s * n + j] + log_b[(t + 1) * n + j] + lb[(t + 1) * n + j];
      lb[t * n + s] = log_sum_exp(terms) - log_c[t + 1];
    }
  }

  Posteriors out;
  out.gamma.resize(len * n);
  out.xi_sum.assign(n * n, 0.0);
  out.log_likelihood = std::accumulate(log_c.begin(), log_c.end(), 0.0);
  for (std::size_t t = 0; t < len; ++t) {
    double sum = 0.0;
    for (std::size_t s = 0; s < n; ++s) sum += out.gamma[t * n + s] = std::exp(la[t * n + s] + lb[t * n + s]);
    for (std::size_t s = 0; s < n; ++s) out.gamma[t * n + s] /= sum;
  }
  for (std::size_t t = 0; t + 1 < len; ++t)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        out.xi_sum[i * n + j] += std::exp(la[t * n + i] + log_tm[i * n + j] + log_b[(t + 1) * n + j] +
                                          lb[(t + 1) * n + j] - log_c[t + 1]);
  return out;
}

inline void check_sequences(const Sequences& seqs) {
  if (seqs.empty()) throw DomainError("training needs at least one sequence");
  bool has_pair = false;
  for (const auto& s : seqs) {
    has_pair = has_pair || s.size() >= 2;
    for (double x : s)
      if (!std::isfinite(x)) throw DomainError("training data contains a non-finite value");
  }
  if (!has_pair) throw DomainError("training needs a sequence of length >= 2");
}

inline std::vector<double> pooled(const Sequences& seqs) {
  std::vector<double> all;
  for (const auto& s : seqs) all.insert(all.end(), s.begin(), s.end());
  return all;
}

inline std::pair<double, double> moments(std::span<const double> xs) {
  const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return {mean, ss / static_cast<double>(xs.size())};
}

inline TransitionMatrix sticky_transitions(std::size_t k, double self = 0.8) {
  if (k == 1) return TransitionMatrix::identity(1);
  TransitionMatrix tm(k, (1.0 - self) / static_cast<double>(k - 1));
  for (std::size_t i = 0; i < k; ++i) tm(i, i) = self;
  return tm;
}

// Equal-count quantile bins over the pooled data.
inline HmmModel quantile_init(const Sequences& seqs, std::size_t k, double floor) {
  auto all = pooled(seqs);
  std::sort(all.begin(), all.end());
  const double overall_var = std::max(moments(all).second, floor);
  HmmModel m;
  m.prior.assign(k, 1.0 / static_cast<double>(k));
  m.transitions = sticky_transitions(k);
  for (std::size_t b = 0; b < k; ++b) {
    const auto lo = b * all.size() / k;
    const auto hi = std::max(lo + 1, (b + 1) * all.size() / k);
    auto [mu, var] = moments(std::span<const double>(all.data() + lo, hi - lo));
    if (var < floor) var = std::max(floor, overall_var / static_cast<double>(k * k));
    m.emissions.push_back({mu, var});
  }
  return m;
}

inline std::optional<HmmModel> label_init(const Sequences& seqs, const LabelSequences& labels, std::size_t k,
                                          double floor) {
  if (labels.size() != seqs.size()) return std::nullopt;
  std::vector<std::vector<double>> by_state(k);
  TransitionMatrix counts(k, 0.1);
  std::vector<double> first(k, 0.1);
  for (std::size_t q = 0; q < seqs.size(); ++q) {
    if (labels[q].size() != seqs[q].size()) return std::nullopt;
    for (std::size_t t = 0; t < seqs[q].size(); ++t) {
      const int l = labels[q][t];
      if (l < 1 || static_cast<std::size_t>(l) > k) return std::nullopt;
      by_state[l - 1].push_back(seqs[q][t]);
      if (t == 0) first[l - 1] += 1.0;
      if (t + 1 < seqs[q].size()) {
        const int nl = labels[q][t + 1];
        if (nl >= 1 && static_cast<std::size_t>(nl) <= k) counts(l - 1, nl - 1) += 1.0;
      }
    }
  }
  HmmModel fallback = quantile_init(seqs, k, floor);
  HmmModel m;
  const double total = std::accumulate(first.begin(), first.end(), 0.0);
  for (double f : first) m.prior.push_back(f / total);
  counts.normalize_rows();
  m.transitions = counts;
  // Labels count from the worst band (highest delay); quantile bins count from the lowest delay.
  for (std::size_t s = 0; s < k; ++s) {
    if (by_state[s].size() >= 2) {
      auto [mu, var] = moments(by_state[s]);
      m.emissions.push_back({mu, std::max(var, floor)});
    } else {
      m.emissions.push_back(fallback.emissions[k - 1 - s]);
    }
  }
  return m;
}

// Restart seeding: k-means++ picks of pooled observations as state means,
// each with a share of the pooled variance.
template <class Rng>
HmmModel spread_init(const Sequences& seqs, std::size_t k, double floor, Rng& rng) {
  const auto all = pooled(seqs);
  const double var = std::max(moments(all).second / static_cast<double>(k * k * k * k), floor);
  std::vector<double> centres{all[std::uniform_int_distribution<std::size_t>(0, all.size() - 1)(rng)]};
  std::vector<double> d2(all.size());
  while (centres.size() < k) {
    for (std::size_t i = 0; i < all.size(); ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (double c : centres) best = std::min(best, (all[i] - c) * (all[i] - c));
      d2[i] = best;
    }
    if (std::accumulate(d2.begin(), d2.end(), 0.0) <= 0.0) break;
    centres.push_back(all[std::discrete_distribution<std::size_t>(d2.begin(), d2.end())(rng)]);
  }
  // all observations equal to the existing centres; spread the rest by the std dev
  while (centres.size() < k) centres.push_back(centres.back() + std::sqrt(var));
  std::sort(centres.begin(), centres.end());
  std::vector<std::vector<double>> members(centres.size());
  for (double x : all) {
    std::size_t near = 0;
    for (std::size_t c = 1; c < centres.size(); ++c)
      if (std::abs(x - centres[c]) < std::abs(x - centres[near])) near = c;
    members[near].push_back(x);
  }
  HmmModel m;
  m.prior.assign(k, 1.0 / static_cast<double>(k));
  m.transitions = sticky_transitions(k);
  for (std::size_t c = 0; c < centres.size(); ++c) {
    const double v = members[c].size() >= 2 ? moments(members[c]).second : 0.0;
    m.emissions.push_back({centres[c], std::max(v, var)});
  }
  return m;
}

}  // namespace detail

// Sorts states by descending emission mean so that state 1 is the
// highest-delay (worst) state.
inline HmmModel canonicalize(const HmmModel& m) {
  const auto n = m.state_count();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return m.emissions[a].mean > m.emissions[b].mean; });
  HmmModel out;
  out.scheme = m.scheme;
  out.transitions = TransitionMatrix(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.prior.push_back(m.prior[order[i]]);
    out.emissions.push_back(m.emissions[order[i]]);
    for (std::size_t j = 0; j < n; ++j) out.transitions(i, j) = m.transitions(order[i], order[j]);
  }
  return out;
}

// Baum-Welch from a given starting point. The returned model is the one with
// the highest log-likelihood seen; the report lists the log-likelihood of every
// parameter set evaluated.
inline std::pair<HmmModel, TrainingReport> baum_welch(const Sequences& seqs, HmmModel init, const EmConfig& cfg) {
  detail::check_sequences(seqs);
  init.validate();
  const auto n = init.state_count();
  HmmModel current = std::move(init);
  HmmModel best = current;
  double best_ll = detail::kNegInf;
  TrainingReport report;

  for (int iter = 0; iter < cfg.max_iterations; ++iter) {
    std::vector<double> prior_acc(n, 0.0), xi_acc(n * n, 0.0), from_acc(n, 0.0);
    std::vector<double> w_acc(n, 0.0), wx_acc(n, 0.0);
    double ll = 0.0;
    std::vector<detail::Posteriors> posts;
    posts.reserve(seqs.size());
    for (const auto& seq : seqs) {
      if (seq.empty()) continue;
      auto p = detail::forward_backward(current, seq);
      ll += p.log_likelihood;
      for (std::size_t s = 0; s < n; ++s) prior_acc[s] += p.gamma[s];
      for (std::size_t i = 0; i < n * n; ++i) xi_acc[i] += p.xi_sum[i];
      for (std::size_t t = 0; t < seq.size(); ++t)
        for (std::size_t s = 0; s < n; ++s) {
          const double g = p.gamma[t * n + s];
          w_acc[s] += g;
          wx_acc[s] += g * seq[t];
          if (t + 1 < seq.size()) from_acc[s] += g;
        }
      posts.push_back(std::move(p));
    }

    report.log_likelihood_per_iteration.push_back(ll);
    report.iterations = iter + 1;
    const double prev = best_ll;
    if (ll > best_ll) {
      best_ll = ll;
      best = current;
    }
    if (iter > 0 && ll - prev < cfg.tolerance * std::max(std::abs(prev), 1e-300)) {
      report.converged = true;
      break;
    }

    // M-step
    HmmModel next = current;
    const double prior_sum = std::accumulate(prior_acc.begin(), prior_acc.end(), 0.0);
    for (std::size_t s = 0; s < n; ++s) next.prior[s] = prior_acc[s] / prior_sum;
    for (std::size_t i = 0; i < n; ++i) {
      if (from_acc[i] <= 1e-300) continue;
      double row_sum = 0.0;
      for (std::size_t j = 0; j < n; ++j) row_sum += xi_acc[i * n + j];
      for (std::size_t j = 0; j < n; ++j) next.transitions(i, j) = xi_acc[i * n + j] / row_sum;
    }
    std::vector<double> var_acc(n, 0.0), means(n);
    for (std::size_t s = 0; s < n; ++s) means[s] = w_acc[s] > 1e-300 ? wx_acc[s] / w_acc[s] : current.emissions[s].mean;
    std::size_t q = 0;
    for (const auto& seq : seqs) {
      if (seq.empty()) continue;
      const auto& g = posts[q++].gamma;
      for (std::size_t t = 0; t < seq.size(); ++t)
        for (std::size_t s = 0; s < n; ++s) var_acc[s] += g[t * n + s] * (seq[t] - means[s]) * (seq[t] - means[s]);
    }
    for (std::size_t s = 0; s < n; ++s) {
      if (w_acc[s] <= 1e-300) continue;
      next.emissions[s] = {means[s], std::max(var_acc[s] / w_acc[s], cfg.variance_floor)};
    }
    current = std::move(next);
  }
  return {best, report};
}

inline std::size_t distinct_count(const Sequences& seqs) {
  auto all = detail::pooled(seqs);
  std::sort(all.begin(), all.end());
  return static_cast<std::size_t>(std::unique(all.begin(), all.end()) - all.begin());
}

// EM from a deterministic first start (label- or quantile-based) plus k-means++
// seeded starts. Every start gets a short run; the best few by log-likelihood
// continue to convergence and the best of those wins, ties going to the lowest
// start index.
inline std::pair<HmmModel, TrainingReport> em_train(const Sequences& seqs, const LabelSequences* labels, int k,
                                                    const EmConfig& cfg = {}) {
  detail::check_sequences(seqs);
  if (k < 1) throw DomainError("state count must be >= 1");
  const auto ks = static_cast<std::size_t>(k);
  if (distinct_count(seqs) < ks)
    throw DegenerateModelError("state count " + std::to_string(k) + " exceeds the number of distinct observations");
  if (cfg.scheme && cfg.scheme->state_count() != k)
    throw DomainError("state count must equal the quantization scheme's state count");

  HmmModel base;
  if (labels) {
    if (auto m = detail::label_init(seqs, *labels, ks, cfg.variance_floor)) base = std::move(*m);
  }
  if (base.prior.empty()) base = detail::quantile_init(seqs, ks, cfg.variance_floor);

  std::mt19937_64 rng(cfg.seed);
  const int starts = std::max(1, cfg.restarts);
  EmConfig screen = cfg;
  screen.max_iterations = std::max(1, std::min(cfg.screen_iterations, cfg.max_iterations));
  std::vector<std::pair<HmmModel, TrainingReport>> screened;
  std::vector<double> screened_ll;
  for (int r = 0; r < starts; ++r) {
    auto result = baum_welch(seqs, r == 0 ? base : detail::spread_init(seqs, ks, cfg.variance_floor, rng), screen);
    const auto& ll = result.second.log_likelihood_per_iteration;
    screened_ll.push_back(*std::max_element(ll.begin(), ll.end()));
    screened.push_back(std::move(result));
  }
  std::vector<std::size_t> order(screened.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return screened_ll[a] > screened_ll[b]; });
  order.resize(std::min(order.size(), static_cast<std::size_t>(std::max(1, cfg.finalists))));
  std::sort(order.begin(), order.end());

  std::optional<std::pair<HmmModel, TrainingReport>> best;
  double best_ll = detail::kNegInf;
  EmConfig rest = cfg;
  rest.max_iterations = cfg.max_iterations - screen.max_iterations;
  for (std::size_t r : order) {
    auto& [model, report] = screened[r];
    if (!report.converged && rest.max_iterations > 0) {
      auto more = baum_welch(seqs, model, rest);
      model = std::move(more.first);
      auto& ll = report.log_likelihood_per_iteration;
      ll.insert(ll.end(), more.second.log_likelihood_per_iteration.begin(), more.second.log_likelihood_per_iteration.end());
      report.iterations += more.second.iterations;
      report.converged = more.second.converged;
    }
    const auto& ll = report.log_likelihood_per_iteration;
    const double final_ll = *std::max_element(ll.begin(), ll.end());
    if (!best || final_ll > best_ll) {
      best_ll = final_ll;
      report.best_restart = static_cast<int>(r);
      best = std::move(screened[r]);
    }
  }
  best->first = canonicalize(best->first);
  best->first.scheme = cfg.scheme;
  return std::move(*best);
}

// Draws a hidden path (0-based states) and matching observations.
struct SampledSequence {
  std::vector<int> states;
  std::vector<double> observations;
};

template <class Rng>
int sample_categorical(std::span<const double> p, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double x = u(rng);
  for (std::size_t i = 0; i < p.size(); ++i) {
    x -= p[i];
    if (x < 0.0) return static_cast<int>(i);
  }
  // Rounding left a sliver; take the last state with mass.
  for (std::size_t i = p.size(); i-- > 0;)
    if (p[i] > 0.0) return static_cast<int>(i);
  return 0;
}

template <class Rng>
SampledSequence sample_sequence(const HmmModel& m, std::size_t length, Rng& rng) {
  SampledSequence out;
  out.states.reserve(length);
  out.observations.reserve(length);
  int s = 0;
  for (std::size_t t = 0; t < length; ++t) {
    s = t == 0 ? sample_categorical(m.prior, rng) : sample_categorical(m.transitions.row(s), rng);
    std::normal_distribution<double> emit(m.emissions[s].mean, std::sqrt(m.emissions[s].variance));
    out.states.push_back(s);
    out.observations.push_back(emit(rng));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Prediction scoring and cross-validation

struct LabeledTrace {
  std::vector<double> observations;
  std::vector<int> labels;  // 1-based QoE state per epoch
};

struct PredictionScore {
  std::size_t correct = 0;
  std::size_t total = 0;
  double accuracy() const { return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total); }
};

// One-step-ahead predictions: belief after epoch t predicts the label at t+1.
inline PredictionScore score_trace(const HmmModel& model, const LabeledTrace& trace) {
  if (trace.labels.size() != trace.observations.size())
    throw DomainError("trace labels and observations differ in length");
  PredictionScore score;
  if (trace.observations.empty()) return score;
  OnlineFilter filter(model);
  for (std::size_t t = 0; t + 1 < trace.observations.size(); ++t) {
    auto belief = filter.update(trace.observations[t]);
    const auto [predicted, next] = predict_next_state(model, belief);
    score.correct += predicted.index == trace.labels[t + 1] ? 1 : 0;
    ++score.total;
  }
  return score;
}

inline PredictionScore score_traces(const HmmModel& model, std::span<const LabeledTrace> traces) {
  PredictionScore total;
  for (const auto& t : traces) {
    auto s = score_trace(model, t);
    total.correct += s.correct;
    total.total += s.total;
  }
  return total;
}

struct CrossValidationResult {
  double accuracy = 0.0;  // micro-average over all scored steps
  std::vector<double> fold_accuracy;
  std::vector<int> trace_fold;  // fold that held out each trace
  std::vector<PredictionScore> trace_scores;
};

inline CrossValidationResult cross_validate(std::span<const LabeledTrace> dataset, int folds, int k,
                                            const EmConfig& cfg = {}, unsigned long long split_seed = 0) {
  if (folds < 2) throw DomainError("cross-validation needs at least 2 folds");
  if (static_cast<std::size_t>(folds) > dataset.size())
    throw DomainError("fewer traces (" + std::to_string(dataset.size()) + ") than folds (" + std::to_string(folds) + ")");

  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(split_seed);
  std::shuffle(order.begin(), order.end(), rng);

  CrossValidationResult out;
  out.trace_fold.assign(dataset.size(), -1);
  out.trace_scores.resize(dataset.size());
  for (std::size_t i = 0; i < order.size(); ++i)
    out.trace_fold[order[i]] = static_cast<int>(i * static_cast<std::size_t>(folds) / order.size());

  PredictionScore total;
  for (int f = 0; f < folds; ++f) {
    Sequences train;
    LabelSequences train_labels;
    for (std::size_t i = 0; i < dataset.size(); ++i)
      if (out.trace_fold[i] != f) {
        train.push_back(dataset[i].observations);
        train_labels.push_back(dataset[i].labels);
      }
    auto [model, report] = em_train(train, &train_labels, k, cfg);
    PredictionScore fold_score;
    for (std::size_t i = 0; i < dataset.size(); ++i)
      if (out.trace_fold[i] == f) {
        out.trace_scores[i] = score_trace(model, dataset[i]);
        fold_score.correct += out.trace_scores[i].correct;
        fold_score.total += out.trace_scores[i].total;
      }
    out.fold_accuracy.push_back(fold_score.accuracy());
    total.correct += fold_score.correct;
    total.total += fold_score.total;
  }
  out.accuracy = total.accuracy();
  return out;
}

// Merges label `from` into `into` and renumbers the remaining labels to a
// contiguous 1..k' range, preserving order.
inline std::vector<int> fold_label(std::span<const int> labels, int from, int into) {
  std::vector<int> out(labels.begin(), labels.end());
  for (int& l : out)
    if (l == from) l = into;
  for (int& l : out)
    if (l > from) --l;
  return out;
}

}  // namespace qoelab
