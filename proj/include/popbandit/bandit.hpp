#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <numeric>
#include <random>
#include <stdexcept>
#include <vector>

#include "space.hpp"

namespace popbandit {

/// Time-varying multiple-play EXP3 (TV.EXP3.M) state.
struct BanditState {
  int n_arms = 0;   // C
  int plays = 0;    // B
  int horizon = 0;  // T
  std::vector<double> weights;
  double gamma = 1.0;
  double alpha = 1.0;
  int round = 0;

  /// Capping threshold (1/B - gamma/C) / (1 - gamma).
  [[nodiscard]] double eta() const {
    return (1.0 / plays - gamma / n_arms) / (1.0 - gamma);
  }
};

struct CapResult {
  std::vector<double> capped_weights;
  std::vector<int> s0;
  double nu = 0.0;

  [[nodiscard]] bool capped(int arm) const {
    return std::find(s0.begin(), s0.end(), arm) != s0.end();
  }
};

inline BanditState new_bandit(int n_arms, int plays, int horizon) {
  if (n_arms < 2) throw std::invalid_argument("bandit needs at least 2 arms");
  if (plays < 1 || plays > n_arms) throw std::invalid_argument("bandit plays must lie in [1, n_arms]");
  if (horizon < 1) throw std::invalid_argument("bandit horizon must be >= 1");

  BanditState s;
  s.n_arms = n_arms;
  s.plays = plays;
  s.horizon = horizon;
  s.weights.assign(static_cast<std::size_t>(n_arms), 1.0);
  s.alpha = 1.0 / horizon;
  if (plays == n_arms) {
    s.gamma = 1.0;
  } else {
    const double C = n_arms, B = plays, T = horizon;
    s.gamma = std::min(1.0, std::sqrt(C * std::log(C / B) / ((std::numbers::e - 1.0) * B * T)));
  }
  return s;
}

/// EXP3.M weight capping. When the largest weight would push some p_c above 1,
/// find nu with nu/eta = sum_{w>=nu} nu + sum_{w<nu} w and cap those arms at nu.
inline CapResult cap_weights(const BanditState& state) {
  CapResult r{state.weights, {}, 0.0};
  if (state.gamma >= 1.0) return r;

  const auto& w = state.weights;
  const double eta = state.eta();
  const double total = std::accumulate(w.begin(), w.end(), 0.0);
  if (*std::max_element(w.begin(), w.end()) < eta * total) return r;

  // Exact piecewise-linear solve: with the k largest capped,
  // nu = eta * rest / (1 - eta * k), valid when w_(k) >= nu > w_(k+1).
  std::vector<int> order(w.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) { return w[a] > w[b] || (w[a] == w[b] && a < b); });

  double rest = total;
  double nu = -1.0;
  std::size_t k = 0;
  for (k = 1; k <= order.size(); ++k) {
    rest -= w[order[k - 1]];
    const double denom = 1.0 - eta * static_cast<double>(k);
    if (denom <= 0.0) break;
    const double cand = eta * rest / denom;
    const double upper = w[order[k - 1]];
    const double lower = k < order.size() ? w[order[k]] : 0.0;
    if (cand <= upper && cand > lower) {
      nu = cand;
      break;
    }
  }
  if (nu <= 0.0) throw std::runtime_error("cap_weights: no consistent cap value");

  r.nu = nu;
  for (std::size_t i = 0; i < k; ++i) {
    r.s0.push_back(order[i]);
    r.capped_weights[static_cast<std::size_t>(order[i])] = nu;
  }
  std::sort(r.s0.begin(), r.s0.end());
  return r;
}

/// p_c = B((1-gamma) w_c / sum w + gamma / C) on the capped weights.
inline std::vector<double> arm_probabilities(const BanditState& state, const CapResult& cap) {
  const auto& w = cap.capped_weights;
  const double total = std::accumulate(w.begin(), w.end(), 0.0);
  std::vector<double> p(w.size());
  for (std::size_t c = 0; c < w.size(); ++c) {
    p[c] = state.plays * ((1.0 - state.gamma) * w[c] / total + state.gamma / state.n_arms);
    p[c] = std::min(p[c], 1.0);  // absorbs rounding on capped arms
  }
  return p;
}

/// Dependent rounding: draws exactly `plays` distinct indices, arm c included
/// with probability p[c].
inline std::vector<int> depround(int plays, std::vector<double> p, Rng& rng) {
  constexpr double kTol = 1e-6;
  constexpr double kInt = 1e-12;
  const double total = std::accumulate(p.begin(), p.end(), 0.0);
  if (std::abs(total - plays) > kTol) throw std::invalid_argument("depround: probabilities must sum to plays");
  for (double v : p)
    if (!(v >= -kInt && v <= 1.0 + kInt)) throw std::invalid_argument("depround: probability outside [0,1]");

  auto fractional = [&](std::size_t i) { return p[i] > kInt && p[i] < 1.0 - kInt; };
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  for (;;) {
    std::size_t i = p.size(), j = p.size();
    for (std::size_t c = 0; c < p.size(); ++c) {
      if (!fractional(c)) continue;
      if (i == p.size()) {
        i = c;
      } else {
        j = c;
        break;
      }
    }
    if (j == p.size()) break;

    const double up = std::min(1.0 - p[i], p[j]);
    const double down = std::min(p[i], 1.0 - p[j]);
    if (unit(rng) < down / (up + down)) {
      p[i] += up;
      p[j] -= up;
    } else {
      p[i] -= down;
      p[j] += down;
    }
  }

  // Rounding leftovers: keep the `plays` largest.
  std::vector<int> idx(p.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return p[a] > p[b]; });
  idx.resize(static_cast<std::size_t>(plays));
  std::sort(idx.begin(), idx.end());
  return idx;
}

struct BatchSelection {
  std::vector<int> arms;
  std::vector<double> p;
  CapResult cap;
};

inline BatchSelection select_batch(const BanditState& state, Rng& rng) {
  if (state.round >= state.horizon) throw std::logic_error("select_batch: bandit horizon exhausted");
  BatchSelection sel;
  sel.cap = cap_weights(state);
  sel.p = arm_probabilities(state, sel.cap);
  sel.arms = depround(state.plays, sel.p, rng);
  return sel;
}

/// Weight update from rewards g (arm -> [0,1]) observed on the selected arms.
/// Capped arms receive only the additive share.
inline BanditState update(BanditState state, const BatchSelection& sel, const std::map<int, double>& g) {
  if (state.round >= state.horizon) throw std::logic_error("update: bandit horizon exhausted");
  for (const auto& [arm, reward] : g) {
    if (std::find(sel.arms.begin(), sel.arms.end(), arm) == sel.arms.end())
      throw std::invalid_argument("update: reward given for an arm that was not played");
    if (!(reward >= 0.0 && reward <= 1.0)) throw std::invalid_argument("update: reward outside [0,1]");
  }

  const auto& w = sel.cap.capped_weights;
  const double total = std::accumulate(w.begin(), w.end(), 0.0);
  const double share = std::numbers::e * state.alpha / state.n_arms * total;
  const double rate = state.plays * state.gamma / state.n_arms;

  for (int c = 0; c < state.n_arms; ++c) {
    const auto uc = static_cast<std::size_t>(c);
    if (sel.cap.capped(c)) {
      state.weights[uc] = w[uc] + share;
      continue;
    }
    double g_hat = 0.0;
    if (auto it = g.find(c); it != g.end()) g_hat = it->second / sel.p[uc];
    state.weights[uc] = w[uc] * std::exp(rate * g_hat) + share;
  }

  const double wmax = *std::max_element(state.weights.begin(), state.weights.end());
  if (wmax > 1e100)
    for (auto& v : state.weights) v /= wmax;
  ++state.round;
  return state;
}

}  // namespace popbandit
