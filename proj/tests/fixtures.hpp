#pragma once

#include <algorithm>
#include <cstddef>
#include <random>

#include "qoelab/hmm.hpp"
#include "qoelab/policies.hpp"

namespace fixture {

// Six states on a ring. Action 0 mostly stays put, action 1 moves on and
// costs 0.1 of reward.
inline qoelab::Mdp ring_mdp() {
  constexpr std::size_t n = 6;
  const double state_reward[n] = {0.0, 0.2, 0.4, 1.0, 0.6, 0.1};
  qoelab::Mdp m(n, 2);
  for (std::size_t s = 0; s < n; ++s) {
    m.p(0, s, s) += 0.7;
    m.p(0, s, (s + 1) % n) += 0.3;
    m.p(1, s, (s + 1) % n) += 0.6;
    m.p(1, s, (s + 2) % n) += 0.2;
    m.p(1, s, (s + n - 1) % n) += 0.2;
    m.r(s, 0) = state_reward[s];
    m.r(s, 1) = std::max(state_reward[s] - 0.1, 0.0);
  }
  return m;
}

inline constexpr double kRingGamma = 0.8;

// Tabular Q-learning on an MDP with uniformly random behaviour.
inline qoelab::QTable learn(const qoelab::Mdp& m, const qoelab::QLearningConfig& cfg, long steps,
                            unsigned long long seed) {
  qoelab::QTable q(m.states, m.actions);
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, m.actions - 1);
  std::size_t s = 0;
  for (long t = 0; t < steps; ++t) {
    const std::size_t a = pick(rng);
    std::vector<double> row(m.states);
    for (std::size_t n = 0; n < m.states; ++n) row[n] = m.p(a, s, n);
    const auto next = static_cast<std::size_t>(qoelab::sample_categorical(row, rng));
    qoelab::q_update(q, s, a, m.r(s, a), next, cfg);
    s = next;
  }
  return q;
}

}  // namespace fixture
