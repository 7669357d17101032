#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "qoelab/policies.hpp"

using namespace qoelab;

TEST(Reward, ClampCases) {
  RewardConfig c;
  c.qoe_min = 1;
  c.qoe_max = 3;
  for (double w : {0.0, 0.3, 1.0}) {
    c.w_qoe = w;
    EXPECT_EQ(reward(3.0, 0.0, c), 1.0);
    EXPECT_EQ(reward(4.0, -1.0, c), 1.0);
    EXPECT_EQ(reward(1.0, 1.0, c), 0.0);
    EXPECT_EQ(reward(0.0, 2.0, c), 0.0);
  }
  EXPECT_EQ(qoe_utility(3.0, c), 1.0);
  EXPECT_EQ(qoe_utility(1.0, c), 0.0);
  EXPECT_EQ(cost_utility(0.0, c), 1.0);
  EXPECT_EQ(cost_utility(1.0, c), 0.0);
}

TEST(Reward, Midpoint) {
  RewardConfig c;
  c.w_qoe = 0.7;
  EXPECT_NEAR(reward(2.0, 0.5, c), 0.5, 1e-12);
}

TEST(Reward, RangeAndMonotonicity) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> q(0.0, 4.0), cost(-0.5, 1.5), w(0.0, 1.0), d(0.0, 0.5);
  RewardConfig c;
  for (int i = 0; i < 5000; ++i) {
    c.w_qoe = w(rng);
    const double qq = q(rng), cc = cost(rng);
    const double r = reward(qq, cc, c);
    EXPECT_GE(r, 0.0);
    EXPECT_LE(r, 1.0);
    EXPECT_GE(reward(qq + d(rng), cc, c), r - 1e-15);
    EXPECT_LE(reward(qq, cc + d(rng), c), r + 1e-15);
  }
}

TEST(Reward, Validation) {
  RewardConfig c;
  c.qoe_min = 3;
  EXPECT_THROW(c.validate(), DomainError);
  c = {};
  c.w_qoe = 1.2;
  EXPECT_THROW(c.validate(), DomainError);
}

TEST(StateSpace, RowMajorIndexing) {
  const StateSpace sp({2, 3});
  EXPECT_EQ(sp.size(), 12u);
  JointState s{{QoeState{1}, QoeState{1}}, InterfaceId{0}};
  EXPECT_EQ(sp.index(s), 0u);
  s.current = InterfaceId{1};
  EXPECT_EQ(sp.index(s), 1u);
  s = {{QoeState{1}, QoeState{2}}, InterfaceId{0}};
  EXPECT_EQ(sp.index(s), 2u);
  s = {{QoeState{2}, QoeState{1}}, InterfaceId{0}};
  EXPECT_EQ(sp.index(s), 6u);
  for (std::size_t i = 0; i < sp.size(); ++i) EXPECT_EQ(sp.index(sp.state(i)), i);
  EXPECT_EQ(sp.label(11), "2,3|1");
}

TEST(QUpdate, WorkedExample) {
  QTable q(2, 2);
  q.value(0, 1) = 0.2;
  q.value(1, 0) = 0.6;
  q.value(1, 1) = 0.1;
  QLearningConfig c;
  q_update(q, 0, 1, 0.5, 1, c);
  EXPECT_NEAR(q.value(0, 1), 0.896, 1e-12);
  EXPECT_EQ(q.visits(0, 1), 1);
}

TEST(QUpdate, FullOverwriteAndFrozen) {
  QTable q(2, 2);
  q.value(0, 0) = 7.0;
  q.value(1, 1) = 3.0;
  QLearningConfig c;
  c.alpha = 1.0;
  c.gamma = 0.0;
  q_update(q, 0, 0, 0.25, 1, c);
  EXPECT_EQ(q.value(0, 0), 0.25);

  const QTable before = [&] {
    QTable t = q;
    t.visits(0, 1) += 1;
    return t;
  }();
  c.alpha = 0.0;
  c.gamma = 0.9;
  q_update(q, 0, 1, 0.8, 1, c);
  EXPECT_EQ(q, before);
}

TEST(QUpdate, InverseVisitSchedule) {
  QLearningConfig c;
  c.alpha_decay = AlphaDecay::InverseVisit;
  EXPECT_DOUBLE_EQ(effective_alpha(c, 1), 0.8);
  EXPECT_DOUBLE_EQ(effective_alpha(c, 21), 0.8 / 2.0);
  c.alpha_decay = AlphaDecay::Constant;
  EXPECT_DOUBLE_EQ(effective_alpha(c, 1000), 0.8);
}

TEST(Epsilon, DecayAndFloor) {
  QLearningConfig c;
  EXPECT_DOUBLE_EQ(c.epsilon_at(0), 0.2);
  EXPECT_NEAR(c.epsilon_at(1), 0.198, 1e-15);
  EXPECT_DOUBLE_EQ(c.epsilon_at(10000), 0.01);
}

TEST(Select, ExploitAndTies) {
  QTable q(1, 2);
  q.value(0, 0) = 0.9;
  q.value(0, 1) = 0.1;
  std::mt19937_64 rng(0);
  EXPECT_EQ(select_action(q, 0, InterfaceId{1}, SelectMode::Exploit, rng).target.index, 0);
  q.value(0, 0) = 0.5;
  q.value(0, 1) = 0.5;
  EXPECT_EQ(select_action(q, 0, InterfaceId{1}, SelectMode::Exploit, rng).target.index, 1);
  EXPECT_EQ(select_action(q, 0, InterfaceId{0}, SelectMode::Exploit, rng).target.index, 0);

  QTable three(1, 3);
  three.value(0, 0) = 0.1;
  three.value(0, 1) = 0.7;
  three.value(0, 2) = 0.7;
  EXPECT_EQ(greedy_action(three, 0, InterfaceId{0}).target.index, 1);
}

TEST(Select, ExploreIsUniform) {
  QTable q(1, 2);
  q.value(0, 0) = 5.0;
  std::mt19937_64 rng(42);
  int ones = 0;
  const int draws = 10000;
  for (int i = 0; i < draws; ++i) ones += select_action(q, 0, InterfaceId{0}, SelectMode::Explore, rng).target.index;
  EXPECT_NEAR(static_cast<double>(ones) / draws, 0.5, 0.02);
}

TEST(Select, ExploitInvariantUnderAffineMaps) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1.0, 1.0), scale(0.1, 10.0);
  for (int i = 0; i < 1000; ++i) {
    QTable q(1, 3), t(1, 3);
    const double a = scale(rng), b = u(rng) * 5.0;
    for (std::size_t k = 0; k < 3; ++k) {
      q.value(0, k) = std::round(u(rng) * 4.0) / 4.0;  // coarse grid makes ties common
      t.value(0, k) = a * q.value(0, k) + b;
    }
    const InterfaceId cur{static_cast<int>(i % 3)};
    EXPECT_EQ(greedy_action(q, 0, cur), greedy_action(t, 0, cur));
  }
}

TEST(Hysteresis, Rules) {
  const HysteresisConfig h{0.1, 2};
  const InterfaceId cur{0};
  const Action other{InterfaceId{1}};
  EXPECT_EQ(decide_handoff(Action{cur}, cur, 5.0, h, 10).target, cur);
  EXPECT_EQ(decide_handoff(other, cur, 0.05, h, 10).target, cur);
  EXPECT_EQ(decide_handoff(other, cur, 0.30, h, 10).target.index, 1);
  EXPECT_EQ(decide_handoff(other, cur, 0.30, h, 1).target, cur);
}

TEST(Hysteresis, NeverTwoSwitchesWithinDwell) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> gain(0.0, 0.5);
  for (int dwell : {0, 1, 2, 5}) {
    const HysteresisConfig h{0.1, dwell};
    InterfaceId cur{0};
    int last = -1000;
    for (int t = 0; t < 2000; ++t) {
      const Action proposed{InterfaceId{static_cast<int>(rng() % 3)}};
      const Action a = decide_handoff(proposed, cur, gain(rng), h, t - last);
      if (a.target != cur) {
        EXPECT_GE(t - last, dwell);
        last = t;
        cur = a.target;
      }
    }
  }
}

TEST(M4, Rules) {
  const HysteresisConfig h{0.02, 0};
  std::vector<std::optional<double>> rnl{0.05, 0.30};
  EXPECT_EQ(m4_policy_step(rnl, InterfaceId{1}, h).target.index, 0);
  rnl = {0.2, 0.2};
  EXPECT_EQ(m4_policy_step(rnl, InterfaceId{1}, h).target.index, 1);
  rnl = {0.20, 0.21};
  EXPECT_EQ(m4_policy_step(rnl, InterfaceId{1}, h).target.index, 1);
  rnl = {std::nullopt, 0.9};
  EXPECT_EQ(m4_policy_step(rnl, InterfaceId{1}, h).target.index, 1);
}

TEST(Naive, Rules) {
  const auto w = QosWeights::delay_only();
  std::vector<QosInputs> in{{0, 0.05, 0, 0}, {0, 0.10, 0, 0}};
  EXPECT_EQ(naive_policy_step(in, w, InterfaceId{1}).target.index, 0);
  in = {{0, 0.1, 0, 0}, {0, 0.1, 0, 0}};
  EXPECT_EQ(naive_policy_step(in, w, InterfaceId{1}).target.index, 1);
  in = {{0, 0.0, 0, 0}, {0, 0.1, 0, 0}};
  EXPECT_THROW(naive_policy_step(in, w, InterfaceId{1}), DomainError);
  EXPECT_THROW(naive_policy_step(in, QosWeights{0.5, 0.4, 0, 0}, InterfaceId{1}), DomainError);
}

TEST(Naive, FullWeights) {
  const QosWeights w{0.25, 0.25, 0.25, 0.25};
  const std::vector<QosInputs> in{{2, 0.1, 0.01, 0.01}, {1, 0.05, 0.02, 0.02}};
  EXPECT_NEAR(naive_qos_score(in[0], w), 53.0, 1e-9);
  EXPECT_NEAR(naive_qos_score(in[1], w), 30.25, 1e-9);
  EXPECT_EQ(naive_policy_step(in, w, InterfaceId{1}).target.index, 0);
}

TEST(Handoffs, Counting) {
  const std::vector<int> a{0, 0, 1, 1, 0};
  EXPECT_EQ(count_handoffs(InterfaceId{0}, a), 2);
  EXPECT_EQ(count_handoffs(InterfaceId{1}, a), 3);
  EXPECT_EQ(count_handoffs(InterfaceId{0}, std::vector<int>{}), 0);
}

TEST(Oracle, DegenerateCases) {
  const std::vector<std::vector<int>> dominant{{3, 3, 3, 3}, {1, 2, 1, 2}};
  EXPECT_EQ(count_handoffs(InterfaceId{0}, oracle_policy(dominant, InterfaceId{0})), 0);
  EXPECT_EQ(count_handoffs(InterfaceId{1}, oracle_policy(dominant, InterfaceId{1})), 1);
  const std::vector<std::vector<int>> same{{1, 2, 3, 2}, {1, 2, 3, 2}};
  EXPECT_EQ(count_handoffs(InterfaceId{1}, oracle_policy(same, InterfaceId{1})), 0);
}

TEST(Oracle, MatchesExhaustiveSearch) {
  std::mt19937_64 rng(17);
  for (int c = 0; c < 300; ++c) {
    const std::size_t len = 1 + rng() % 10;
    std::vector<std::vector<int>> st(2, std::vector<int>(len));
    for (auto& s : st)
      for (int& v : s) v = 1 + static_cast<int>(rng() % 3);
    const int start = static_cast<int>(rng() % 2);
    const auto plan = oracle_policy(st, InterfaceId{start});
    for (std::size_t t = 0; t < len; ++t) EXPECT_EQ(st[plan[t]][t], std::max(st[0][t], st[1][t]));
    EXPECT_EQ(count_handoffs(InterfaceId{start}, plan), oracle::exhaustive_min_handoffs(st, start));
  }
}

TEST(ValueIteration, MyopicAndGeometric) {
  const auto m = fixture::ring_mdp();
  const auto v = value_iteration(m, 0.0, 1e-12);
  for (std::size_t s = 0; s < m.states; ++s) EXPECT_DOUBLE_EQ(v.utility[s], std::max(m.r(s, 0), m.r(s, 1)));

  Mdp one(1, 1);
  one.p(0, 0, 0) = 1.0;
  one.r(0, 0) = 1.0;
  EXPECT_NEAR(value_iteration(one, 0.95, 1e-12).utility[0], 20.0, 1e-9);
}

TEST(ValueIteration, MatchesLinearSolveOfGreedyPolicy) {
  const auto m = fixture::ring_mdp();
  const double g = fixture::kRingGamma;
  const auto v = value_iteration(m, g, 1e-12);
  // (I - g P_pi) U = R_pi for the policy value iteration returns
  std::vector<std::vector<double>> a(m.states, std::vector<double>(m.states, 0.0));
  std::vector<double> b(m.states);
  for (std::size_t s = 0; s < m.states; ++s) {
    const auto act = v.policy[s];
    for (std::size_t n = 0; n < m.states; ++n) a[s][n] = (s == n ? 1.0 : 0.0) - g * m.p(act, s, n);
    b[s] = m.r(s, act);
  }
  const auto u = oracle::solve(a, b);
  for (std::size_t s = 0; s < m.states; ++s) EXPECT_NEAR(v.utility[s], u[s], 1e-9);
}

TEST(ValueIteration, ThreeStateChain) {
  // 0 -> 1 -> 2 -> 2, reward only in state 2: U2 = 1/(1-g), U1 = g U2, U0 = g^2 U2
  Mdp m(3, 1);
  m.p(0, 0, 1) = 1.0;
  m.p(0, 1, 2) = 1.0;
  m.p(0, 2, 2) = 1.0;
  m.r(2, 0) = 1.0;
  const auto v = value_iteration(m, 0.9, 1e-12);
  EXPECT_NEAR(v.utility[2], 10.0, 1e-9);
  EXPECT_NEAR(v.utility[1], 9.0, 1e-9);
  EXPECT_NEAR(v.utility[0], 8.1, 1e-9);
}

TEST(ValueIteration, RejectsBadModels) {
  Mdp m(2, 1);
  m.p(0, 0, 0) = 0.5;
  m.p(0, 1, 1) = 1.0;
  EXPECT_THROW(value_iteration(m, 0.9, 1e-9), DomainError);
  m.p(0, 0, 1) = 0.5;
  EXPECT_THROW(value_iteration(m, 1.0, 1e-9), DomainError);
}

TEST(QLearning, ConvergesToBellmanFixedPoint) {
  const auto m = fixture::ring_mdp();
  QLearningConfig c;
  c.gamma = fixture::kRingGamma;
  c.alpha_decay = AlphaDecay::InverseVisit;
  const auto q = fixture::learn(m, c, 100000, 1);
  const auto v = value_iteration(m, c.gamma, 1e-10);
  for (std::size_t s = 0; s < m.states; ++s) {
    for (std::size_t a = 0; a < m.actions; ++a) EXPECT_NEAR(q.value(s, a), v.q[s * m.actions + a], 0.05);
    EXPECT_NEAR(q.max_value(s), v.utility[s], 0.05);
  }
}
