#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "qoelab/hmm.hpp"
#include "qoelab/netsim.hpp"

using namespace qoelab;

namespace {

HmmModel two_state() {
  HmmModel m;
  m.prior = {0.3, 0.7};
  m.transitions = TransitionMatrix{{0.9, 0.1}, {0.2, 0.8}};
  m.emissions = {{0.8, 0.01}, {0.1, 0.01}};
  return m;
}

HmmModel random_model(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.05, 1.0), mean(0.0, 1.0), var(0.01, 0.2);
  HmmModel m;
  m.transitions = TransitionMatrix(n);
  for (std::size_t i = 0; i < n; ++i) {
    m.prior.push_back(u(rng));
    for (std::size_t j = 0; j < n; ++j) m.transitions(i, j) = u(rng);
    m.emissions.push_back({mean(rng), var(rng)});
  }
  double s = 0.0;
  for (double p : m.prior) s += p;
  for (double& p : m.prior) p /= s;
  m.transitions.normalize_rows();
  return m;
}

}  // namespace

TEST(Filter, MatchesPathEnumeration) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> obs(-0.2, 1.2);
  for (std::size_t n = 1; n <= 3; ++n)
    for (std::size_t len = 1; len <= 6; ++len) {
      const auto m = random_model(n, rng);
      std::vector<double> o(len);
      for (double& x : o) x = obs(rng);
      const auto got = forward_filter(m, o);
      const auto want = oracle::brute_force_filter(m, o);
      for (std::size_t t = 0; t < len; ++t)
        for (std::size_t s = 0; s < n; ++s) EXPECT_NEAR(got.beliefs[t].probs[s], want[t][s], 1e-9);
      EXPECT_NEAR(got.log_evidence, std::log(oracle::brute_force_evidence(m, o)), 1e-9);
    }
}

TEST(Filter, OnlineMatchesBatch) {
  const auto m = two_state();
  const std::vector<double> o{0.1, 0.12, 0.75, 0.8, 0.2};
  OnlineFilter f(m);
  const auto batch = forward_filter(m, o);
  for (std::size_t t = 0; t < o.size(); ++t) EXPECT_EQ(f.update(o[t]).probs, batch.beliefs[t].probs);
  EXPECT_DOUBLE_EQ(f.log_evidence(), batch.log_evidence);
}

TEST(Filter, BeliefsSumToOne) {
  std::mt19937_64 rng(3);
  const auto m = random_model(3, rng);
  const auto path = sample_sequence(m, 500, rng);
  for (const auto& b : forward_filter(m, path.observations).beliefs) {
    double s = 0.0;
    for (double p : b.probs) {
      EXPECT_GE(p, 0.0);
      s += p;
    }
    EXPECT_NEAR(s, 1.0, 1e-9);
  }
}

TEST(Filter, RejectsBadInput) {
  const auto m = two_state();
  EXPECT_THROW(forward_filter(m, std::vector<double>{}), DomainError);
  OnlineFilter f(m);
  EXPECT_THROW(f.update(NAN), DomainError);
  EXPECT_THROW(f.update(INFINITY), DomainError);
}

TEST(Predict, OneStepPropagation) {
  const auto m = two_state();
  const auto [state, next] = predict_next_state(m, BeliefState{{0.5, 0.5}});
  EXPECT_NEAR(next.probs[0], 0.55, 1e-12);
  EXPECT_NEAR(next.probs[1], 0.45, 1e-12);
  EXPECT_EQ(state.index, 1);
  // exact tie goes to the lower state
  HmmModel flat = m;
  flat.transitions = TransitionMatrix{{0.5, 0.5}, {0.5, 0.5}};
  EXPECT_EQ(predict_next_state(flat, BeliefState{{0.2, 0.8}}).first.index, 1);
  EXPECT_THROW(predict_next_state(m, BeliefState{{1.0}}), DomainError);
}

TEST(Model, Validation) {
  auto m = two_state();
  EXPECT_NO_THROW(m.validate());
  m.transitions(0, 0) = 0.95;
  EXPECT_THROW(m.validate(), DomainError);
  m = two_state();
  m.emissions[1].variance = 0.0;
  EXPECT_THROW(m.validate(), DomainError);
  m = two_state();
  m.scheme = QuantizationScheme::congestion();
  EXPECT_THROW(m.validate(), DomainError);
  EXPECT_NO_THROW(presets::cdma_roaming_g729_model().validate());
  EXPECT_NO_THROW(presets::wlan_congestion_g711_model().validate());
  EXPECT_NO_THROW(presets::wlan_roaming_g729_model().validate());
}

TEST(Training, LogLikelihoodNeverDecreases) {
  std::mt19937_64 rng(5);
  const auto truth = presets::wlan_congestion_g711_model();
  Sequences seqs;
  for (int i = 0; i < 3; ++i) seqs.push_back(sample_sequence(truth, 150, rng).observations);
  for (int trial = 0; trial < 10; ++trial) {
    auto init = random_model(3, rng);
    EmConfig cfg;
    cfg.tolerance = 0.0;
    cfg.max_iterations = 60;
    const auto [model, report] = baum_welch(seqs, init, cfg);
    const auto& ll = report.log_likelihood_per_iteration;
    for (std::size_t i = 1; i < ll.size(); ++i) EXPECT_GE(ll[i], ll[i - 1] - 1e-9);
  }
}

TEST(Training, EvidenceMatchesFilter) {
  std::mt19937_64 rng(8);
  const auto m = random_model(3, rng);
  const auto seq = sample_sequence(m, 40, rng).observations;
  const auto post = detail::forward_backward(m, seq);
  EXPECT_NEAR(post.log_likelihood, forward_filter(m, seq).log_evidence, 1e-9);
  // posteriors are distributions; xi totals T-1
  double xi = 0.0;
  for (double v : post.xi_sum) xi += v;
  EXPECT_NEAR(xi, 39.0, 1e-9);
}

TEST(Training, CanonicalOrderIsDescendingMean) {
  std::mt19937_64 rng(2);
  const auto truth = presets::cdma_roaming_g729_model();
  Sequences seqs;
  for (int i = 0; i < 5; ++i) seqs.push_back(sample_sequence(truth, 200, rng).observations);
  const auto [m, report] = em_train(seqs, nullptr, 3);
  EXPECT_GT(m.emissions[0].mean, m.emissions[1].mean);
  EXPECT_GT(m.emissions[1].mean, m.emissions[2].mean);
  EXPECT_NO_THROW(m.validate());
  EXPECT_NEAR(m.emissions[0].mean, 0.9519, 0.05);
  EXPECT_NEAR(m.emissions[2].mean, 0.2857, 0.05);
}

TEST(Training, CanonicalizePermutesConsistently) {
  HmmModel m;
  m.prior = {0.2, 0.8};
  m.transitions = TransitionMatrix{{0.7, 0.3}, {0.1, 0.9}};
  m.emissions = {{0.1, 0.01}, {0.9, 0.02}};
  const auto c = canonicalize(m);
  EXPECT_EQ(c.prior, (std::vector<double>{0.8, 0.2}));
  EXPECT_EQ(c.transitions(0, 0), 0.9);
  EXPECT_EQ(c.transitions(0, 1), 0.1);
  EXPECT_EQ(c.transitions(1, 0), 0.3);
  EXPECT_EQ(c.emissions[0].mean, 0.9);
}

TEST(Training, TooManyStatesIsDegenerate) {
  const Sequences seqs{{0.1, 0.1, 0.2, 0.2}};
  EXPECT_THROW(em_train(seqs, nullptr, 3), DegenerateModelError);
  EXPECT_NO_THROW(em_train(seqs, nullptr, 2));
  EXPECT_THROW(em_train(Sequences{}, nullptr, 2), DomainError);
  EXPECT_THROW(em_train(Sequences{{0.1}}, nullptr, 1), DomainError);
}

TEST(Training, SingleStateIsSampleMoments) {
  const Sequences seqs{{0.1, 0.3, 0.2}, {0.4, 0.0}};
  const auto [m, report] = em_train(seqs, nullptr, 1);
  EXPECT_NEAR(m.emissions[0].mean, 0.2, 1e-12);
  EXPECT_NEAR(m.emissions[0].variance, 0.02, 1e-12);
  EXPECT_DOUBLE_EQ(m.transitions(0, 0), 1.0);
}

TEST(Training, Deterministic) {
  std::mt19937_64 rng(4);
  const auto truth = presets::wlan_congestion_g711_model();
  Sequences seqs;
  for (int i = 0; i < 4; ++i) seqs.push_back(sample_sequence(truth, 101, rng).observations);
  EmConfig cfg;
  cfg.seed = 9;
  EXPECT_EQ(em_train(seqs, nullptr, 3, cfg).first, em_train(seqs, nullptr, 3, cfg).first);
}

TEST(Sampling, OccupancyMatchesStationary) {
  const auto m = presets::cdma_roaming_g729_model();
  const auto pi = oracle::stationary(m.transitions);
  std::mt19937_64 rng(12);
  std::vector<double> count(3, 0.0);
  const std::size_t len = 200000;
  for (int s : sample_sequence(m, len, rng).states) count[static_cast<std::size_t>(s)] += 1.0;
  for (std::size_t s = 0; s < 3; ++s) EXPECT_NEAR(count[s] / static_cast<double>(len), pi[s], 0.01);
}

TEST(CrossValidation, NearDeterministicDataIsPredictable) {
  HmmModel truth;
  truth.prior = {0.5, 0.5};
  truth.transitions = TransitionMatrix{{0.99, 0.01}, {0.01, 0.99}};
  truth.emissions = {{0.9, 1e-4}, {0.1, 1e-4}};
  std::mt19937_64 rng(6);
  std::vector<LabeledTrace> data;
  for (int i = 0; i < 6; ++i) {
    auto p = sample_sequence(truth, 200, rng);
    LabeledTrace t{p.observations, {}};
    for (int s : p.states) t.labels.push_back(s + 1);
    data.push_back(std::move(t));
  }
  const auto cv = cross_validate(data, 3, 2);
  EXPECT_GE(cv.accuracy, 0.97);
  EXPECT_EQ(cv.fold_accuracy.size(), 3u);
  for (int f : cv.trace_fold) {
    EXPECT_GE(f, 0);
    EXPECT_LT(f, 3);
  }
}

TEST(CrossValidation, AccuracyIsMicroAverageOfTraceScores) {
  std::mt19937_64 rng(21);
  const auto truth = presets::cdma_roaming_g729_model();
  std::vector<LabeledTrace> data;
  for (int i = 0; i < 4; ++i) {
    auto p = sample_sequence(truth, 120, rng);
    LabeledTrace t{p.observations, {}};
    for (int s : p.states) t.labels.push_back(s + 1);
    data.push_back(std::move(t));
  }
  const auto cv = cross_validate(data, 2, 3);
  std::size_t c = 0, n = 0;
  for (const auto& s : cv.trace_scores) {
    c += s.correct;
    n += s.total;
  }
  EXPECT_EQ(n, 4u * 119u);
  EXPECT_DOUBLE_EQ(cv.accuracy, static_cast<double>(c) / static_cast<double>(n));
}

TEST(CrossValidation, RejectsBadFolds) {
  std::vector<LabeledTrace> data(2, LabeledTrace{{0.1, 0.2, 0.3}, {1, 1, 2}});
  EXPECT_THROW(cross_validate(data, 1, 2), DomainError);
  EXPECT_THROW(cross_validate(data, 3, 2), DomainError);
}

TEST(Labels, FoldAndCompact) {
  const std::vector<int> l{1, 2, 3, 2, 1};
  EXPECT_EQ(fold_label(l, 2, 3), (std::vector<int>{1, 2, 2, 2, 1}));
  EXPECT_EQ(fold_label(l, 2, 1), (std::vector<int>{1, 1, 2, 1, 1}));
}

// A wide high-delay state next to two narrow ones traps EM started from
// quantile bins; the screened restarts should still reach the optimum found
// from the generator itself.
TEST(EmTrain, RestartsEscapeQuantileTrap) {
  const auto truth = presets::wlan_congestion_g711_model();
  std::mt19937_64 rng(4);
  Sequences data;
  for (int i = 0; i < 10; ++i) data.push_back(sample_sequence(truth, 101, rng).observations);
  EmConfig cfg;
  cfg.seed = 4;
  const auto learned = em_train(data, nullptr, 3, cfg).first;
  const auto from_truth = baum_welch(data, truth, cfg).first;
  double ll_learned = 0.0, ll_truth = 0.0;
  for (const auto& d : data) {
    ll_learned += forward_filter(learned, d).log_evidence;
    ll_truth += forward_filter(from_truth, d).log_evidence;
  }
  EXPECT_GE(ll_learned, ll_truth - 1e-3);  // both stop at a relative tolerance of 1e-6
  for (std::size_t s = 0; s < 3; ++s)
    EXPECT_NEAR(learned.emissions[s].mean, truth.emissions[s].mean, 0.1 * truth.emissions[s].mean);

  cfg.restarts = 1;
  const auto single = em_train(data, nullptr, 3, cfg).first;
  double ll_single = 0.0;
  for (const auto& d : data) ll_single += forward_filter(single, d).log_evidence;
  EXPECT_LT(ll_single, ll_truth - 1.0);
}

TEST(EmTrain, DeterministicPerSeed) {
  const auto truth = presets::wlan_congestion_g711_model();
  std::mt19937_64 rng(9);
  Sequences data;
  for (int i = 0; i < 4; ++i) data.push_back(sample_sequence(truth, 60, rng).observations);
  EmConfig cfg;
  cfg.seed = 3;
  EXPECT_EQ(em_train(data, nullptr, 3, cfg).first, em_train(data, nullptr, 3, cfg).first);
}
