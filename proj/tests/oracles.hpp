#pragma once

// Slow, obviously-correct reference computations used by the tests. None of
// these reuse library code beyond plain data types.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <vector>

#include "qoelab/hmm.hpp"

namespace oracle {

inline double normal_pdf(double x, double mean, double var) {
  return std::exp(-0.5 * (x - mean) * (x - mean) / var) / std::sqrt(2.0 * std::numbers::pi * var);
}

// Filtered beliefs by summing the joint probability of every hidden path.
// Exponential in the length; fine for N <= 3, T <= 6.
inline std::vector<std::vector<double>> brute_force_filter(const qoelab::HmmModel& m, const std::vector<double>& obs) {
  const std::size_t n = m.state_count();
  std::vector<std::vector<double>> beliefs;
  for (std::size_t len = 1; len <= obs.size(); ++len) {
    std::vector<double> mass(n, 0.0);
    std::vector<std::size_t> path(len, 0);
    for (;;) {
      double p = m.prior[path[0]] * normal_pdf(obs[0], m.emissions[path[0]].mean, m.emissions[path[0]].variance);
      for (std::size_t t = 1; t < len; ++t)
        p *= m.transitions(path[t - 1], path[t]) *
             normal_pdf(obs[t], m.emissions[path[t]].mean, m.emissions[path[t]].variance);
      mass[path[len - 1]] += p;
      std::size_t pos = 0;
      while (pos < len && ++path[pos] == n) path[pos++] = 0;
      if (pos == len) break;
    }
    double total = 0.0;
    for (double v : mass) total += v;
    for (double& v : mass) v /= total;
    beliefs.push_back(mass);
  }
  return beliefs;
}

// Total observation likelihood, again by path enumeration.
inline double brute_force_evidence(const qoelab::HmmModel& m, const std::vector<double>& obs) {
  const std::size_t n = m.state_count();
  const std::size_t len = obs.size();
  std::vector<std::size_t> path(len, 0);
  double total = 0.0;
  for (;;) {
    double p = m.prior[path[0]] * normal_pdf(obs[0], m.emissions[path[0]].mean, m.emissions[path[0]].variance);
    for (std::size_t t = 1; t < len; ++t)
      p *= m.transitions(path[t - 1], path[t]) *
           normal_pdf(obs[t], m.emissions[path[t]].mean, m.emissions[path[t]].variance);
    total += p;
    std::size_t pos = 0;
    while (pos < len && ++path[pos] == n) path[pos++] = 0;
    if (pos == len) break;
  }
  return total;
}

// Stationary distribution by repeated multiplication.
inline std::vector<double> stationary(const qoelab::TransitionMatrix& tm, int iterations = 100000) {
  const std::size_t n = tm.size();
  std::vector<double> pi(n, 1.0 / static_cast<double>(n)), next(n);
  for (int it = 0; it < iterations; ++it) {
    std::fill(next.begin(), next.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) next[j] += pi[i] * tm(i, j);
    pi.swap(next);
  }
  return pi;
}

// Solves A x = b by Gaussian elimination with partial pivoting.
inline std::vector<double> solve(std::vector<std::vector<double>> a, std::vector<double> b) {
  const std::size_t n = b.size();
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < n; ++r)
      if (std::abs(a[r][c]) > std::abs(a[piv][c])) piv = r;
    std::swap(a[c], a[piv]);
    std::swap(b[c], b[piv]);
    for (std::size_t r = c + 1; r < n; ++r) {
      const double f = a[r][c] / a[c][c];
      for (std::size_t k = c; k < n; ++k) a[r][k] -= f * a[c][k];
      b[r] -= f * b[c];
    }
  }
  std::vector<double> x(n);
  for (std::size_t r = n; r-- > 0;) {
    double s = b[r];
    for (std::size_t k = r + 1; k < n; ++k) s -= a[r][k] * x[k];
    x[r] = s / a[r][r];
  }
  return x;
}

// Fewest switches over every attachment sequence that sits on a
// max-state interface at each epoch; -1 if none exists. 2^T enumeration.
inline int exhaustive_min_handoffs(const std::vector<std::vector<int>>& states, int start) {
  const std::size_t len = states[0].size();
  const std::size_t ifs = states.size();
  int best = std::numeric_limits<int>::max();
  std::vector<std::size_t> plan(len, 0);
  for (;;) {
    bool ok = true;
    for (std::size_t t = 0; t < len && ok; ++t) {
      int top = 0;
      for (std::size_t i = 0; i < ifs; ++i) top = std::max(top, states[i][t]);
      ok = states[plan[t]][t] == top;
    }
    if (ok) {
      int h = 0;
      std::size_t prev = static_cast<std::size_t>(start);
      for (std::size_t t = 0; t < len; ++t) {
        h += plan[t] != prev ? 1 : 0;
        prev = plan[t];
      }
      best = std::min(best, h);
    }
    std::size_t pos = 0;
    while (pos < len && ++plan[pos] == ifs) plan[pos++] = 0;
    if (pos == len) break;
  }
  return best == std::numeric_limits<int>::max() ? -1 : best;
}

}  // namespace oracle
