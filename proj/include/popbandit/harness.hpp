#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <numbers>
#include <numeric>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "bandit.hpp"
#include "space.hpp"
#include "strategies.hpp"

namespace popbandit {

// ---------------------------------------------------------------------------
// Synthetic objectives
// ---------------------------------------------------------------------------

struct SyntheticObjective {
  std::string name;
  std::function<double(const Config&, int round)> eval;
  std::function<double(int round)> optimum;
};

/// Round (1-based) of the k-th of V evenly spaced change points over T rounds.
inline int change_point(int k, int n_changes, int horizon) { return k * horizon / (n_changes + 1); }

/// Number of change points at or before `round`.
inline int changes_before(int round, int n_changes, int horizon) {
  int n = 0;
  for (int k = 1; k <= n_changes; ++k) n += round >= change_point(k, n_changes, horizon) ? 1 : 0;
  return n;
}

/// x in [0, π/2], h in {sin, cos}.
inline SearchSpace sincos_space() {
  return SearchSpace({{"x", 0.0, std::numbers::pi / 2.0}}, {{"h", {"sin", "cos"}}});
}

namespace detail {
inline double sincos_value(const Config& c, bool swapped) {
  const bool is_sin = c.h.at(0) == "sin";
  return (is_sin != swapped) ? std::sin(c.x.at(0)) : std::cos(c.x.at(0));
}
}  // namespace detail

inline SyntheticObjective sincos_objective() {
  return {"sincos", [](const Config& c, int) { return detail::sincos_value(c, false); }, [](int) { return 1.0; }};
}

/// sincos whose categories swap roles at V evenly spaced rounds.
inline SyntheticObjective changepoint_objective(int n_changes, int horizon) {
  if (n_changes < 0 || n_changes >= horizon) throw std::invalid_argument("changepoint_objective: need 0 <= V < T");
  return {"sincos-switch",
          [=](const Config& c, int round) {
            return detail::sincos_value(c, changes_before(round, n_changes, horizon) % 2 == 1);
          },
          [](int) { return 1.0; }};
}

inline SyntheticObjective make_objective(const std::string& name, int horizon) {
  if (name == "sincos") return sincos_objective();
  if (name == "sincos-switch") return changepoint_objective(1, horizon);
  throw std::invalid_argument("unknown objective '" + name + "'");
}

// ---------------------------------------------------------------------------
// Population loop
// ---------------------------------------------------------------------------

struct Agent {
  Config config;
  double cumulative_score = 0.0;
  double last_score = 0.0;
  int lineage = 0;
};

struct RunRow {
  int round = 0;
  int agent = 0;
  Config config;
  double f = 0.0;
  double regret = 0.0;
  double cum_regret = 0.0;
};

struct RunRecord {
  StrategyKind strategy = StrategyKind::Random;
  std::uint64_t seed = 0;
  std::vector<RunRow> rows;
  /// Population regret summed over all evaluations up to each round.
  std::vector<double> cumulative_regret;
};

struct RunOptions {
  Pb2Options pb2;
};

class InvariantBreach : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Evaluate, record, exploit, explore; repeated for `rounds` rounds. The
/// bandit sees each round's category rewards before the next selection.
/// Random is plain random search: every agent is redrawn each round.
inline RunRecord run_experiment(const SearchSpace& space, const SyntheticObjective& objective, StrategyKind strategy,
                                int population, int rounds, double quantile, std::uint64_t seed,
                                const RunOptions& opt = {}) {
  if (population < 2) throw std::invalid_argument("run_experiment: population must be >= 2");
  if (rounds < 1) throw std::invalid_argument("run_experiment: rounds must be >= 1");
  space.validate();

  Rng rng(seed);
  RunRecord rec;
  rec.strategy = strategy;
  rec.seed = seed;

  std::vector<int> everyone(static_cast<std::size_t>(population));
  std::iota(everyone.begin(), everyone.end(), 0);
  std::vector<Agent> agents(static_cast<std::size_t>(population));
  for (auto& d : explore_random(space, everyone, rng)) {
    agents[static_cast<std::size_t>(d.agent)].config = std::move(d.config);
    agents[static_cast<std::size_t>(d.agent)].lineage = d.agent;
  }

  std::optional<BanditState> bandit;
  if (uses_bandit(strategy) && space.n_arms() >= 2) {
    const int plays = std::min(replacements_per_round(population, quantile), space.n_arms());
    bandit = new_bandit(space.n_arms(), plays, rounds);
  }
  std::optional<BatchSelection> pending;
  std::map<int, int> pending_agents;

  Dataset data;
  double cum = 0.0;
  for (int t = 1; t <= rounds; ++t) {
    const std::size_t first_obs = data.size();
    for (int b = 0; b < population; ++b) {
      auto& ag = agents[static_cast<std::size_t>(b)];
      const double f = objective.eval(ag.config, t);
      if (!std::isfinite(f)) throw InvariantBreach("objective returned a non-finite value");
      const double regret = objective.optimum(t) - f;
      ag.cumulative_score += f;
      ag.last_score = f;
      data.append({t, b, ag.config, ag.cumulative_score, f});
      cum += regret;
      rec.rows.push_back({t, b, ag.config, f, regret, cum});
    }
    rec.cumulative_regret.push_back(cum);

    if (pending && bandit) {
      const auto norm = normalize_rewards(data);
      std::map<int, std::pair<double, int>> per_arm;
      for (const auto& [agent, arm] : pending_agents) {
        auto& acc = per_arm[arm];
        acc.first += norm[first_obs + static_cast<std::size_t>(agent)];
        acc.second += 1;
      }
      std::map<int, double> g;
      for (const auto& [arm, acc] : per_arm) g[arm] = acc.first / acc.second;
      bandit = update(*bandit, *pending, g);
      pending.reset();
      pending_agents.clear();
    }

    // random search redraws the whole population; the others truncate
    std::vector<Replacement> swaps;
    std::vector<int> losers;
    std::vector<Config> parents;
    if (strategy == StrategyKind::Random) {
      losers = everyone;
    } else {
      std::vector<double> scores;
      for (const auto& ag : agents) scores.push_back(ag.last_score);
      swaps = exploit_truncation(scores, quantile, rng);
    }
    for (const auto& [loser, winner] : swaps) {
      const Agent& w = agents[static_cast<std::size_t>(winner)];
      Agent& l = agents[static_cast<std::size_t>(loser)];
      l.cumulative_score = w.cumulative_score;
      l.lineage = w.lineage;
      losers.push_back(loser);
      parents.push_back(w.config);
    }

    ExploreResult res;
    switch (strategy) {
      case StrategyKind::Random: res.decision = explore_random(space, losers, rng); break;
      case StrategyKind::PBT: res.decision = explore_pbt(losers, parents, space, rng); break;
      case StrategyKind::PB2Rand: res.decision = explore_pb2_rand(data, losers, space, t, opt.pb2, rng); break;
      case StrategyKind::PB2Mult:
        res = explore_pb2_mult(data, bandit ? &*bandit : nullptr, losers, space, t, opt.pb2, rng);
        break;
      case StrategyKind::PB2Mix:
        res = explore_pb2_mix(data, bandit ? &*bandit : nullptr, losers, space, t, opt.pb2, rng);
        break;
    }

    if (res.decision.size() != losers.size()) throw InvariantBreach("explore returned the wrong number of configs");
    for (auto& d : res.decision) {
      if (!validate_config(space, d.config)) throw InvariantBreach("explore produced an invalid config");
      agents[static_cast<std::size_t>(d.agent)].config = std::move(d.config);
    }
    if (res.selection) {
      pending = std::move(res.selection);
      pending_agents = std::move(res.agent_arm);
    }
  }
  return rec;
}

// ---------------------------------------------------------------------------
// Standalone bandit simulation
// ---------------------------------------------------------------------------

struct BanditInstance {
  int n_arms = 2;
  std::function<double(int round, int arm)> mean;  // Bernoulli reward means
};

/// Best arm pays 0.9, the others 0.1; after the k-th of V change points the
/// best arm is k mod C.
inline BanditInstance switching_bernoulli(int n_arms, int horizon, int n_changes) {
  return {n_arms, [=](int round, int arm) {
            const int best = changes_before(round, n_changes, horizon) % n_arms;
            return arm == best ? 0.9 : 0.1;
          }};
}

enum class BanditPolicy { TvExp3M, Uniform };

struct BanditSimResult {
  std::vector<double> regret;          // per round, mean over seeds
  std::vector<double> best_inclusion;  // per round, fraction of seeds playing a best arm

  /// Mean of `series` over rounds (lo, hi], 1-based.
  static double window_mean(const std::vector<double>& series, int lo, int hi) {
    double s = 0.0;
    for (int t = lo + 1; t <= hi; ++t) s += series[static_cast<std::size_t>(t - 1)];
    return s / (hi - lo);
  }
  [[nodiscard]] double cumulative() const { return std::accumulate(regret.begin(), regret.end(), 0.0); }
};

/// Runs the bandit alone on `inst`; regret per round is the gap between the
/// top-B arm means and the played arms' means.
inline BanditSimResult bandit_sim(const BanditInstance& inst, int plays, int horizon,
                                  const std::vector<std::uint64_t>& seeds, BanditPolicy policy = BanditPolicy::TvExp3M) {
  BanditSimResult out;
  out.regret.assign(static_cast<std::size_t>(horizon), 0.0);
  out.best_inclusion.assign(static_cast<std::size_t>(horizon), 0.0);
  if (seeds.empty()) return out;

  for (auto seed : seeds) {
    Rng rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    BanditState st = new_bandit(inst.n_arms, plays, horizon);
    const std::vector<double> uniform_p(static_cast<std::size_t>(inst.n_arms),
                                        static_cast<double>(plays) / inst.n_arms);
    for (int t = 1; t <= horizon; ++t) {
      std::vector<double> means(static_cast<std::size_t>(inst.n_arms));
      for (int c = 0; c < inst.n_arms; ++c) means[static_cast<std::size_t>(c)] = inst.mean(t, c);
      std::vector<double> sorted = means;
      std::sort(sorted.rbegin(), sorted.rend());
      const double best_sum = std::accumulate(sorted.begin(), sorted.begin() + plays, 0.0);
      const double best_mean = sorted.front();

      BatchSelection sel;
      if (policy == BanditPolicy::TvExp3M) {
        sel = select_batch(st, rng);
      } else {
        sel.arms = depround(plays, uniform_p, rng);
      }

      double got = 0.0;
      bool has_best = false;
      std::map<int, double> g;
      for (int arm : sel.arms) {
        const double m = means[static_cast<std::size_t>(arm)];
        got += m;
        has_best = has_best || m == best_mean;
        g[arm] = unit(rng) < m ? 1.0 : 0.0;
      }
      if (policy == BanditPolicy::TvExp3M) st = update(st, sel, g);

      out.regret[static_cast<std::size_t>(t - 1)] += best_sum - got;
      out.best_inclusion[static_cast<std::size_t>(t - 1)] += has_best ? 1.0 : 0.0;
    }
  }
  const double n = static_cast<double>(seeds.size());
  for (auto& v : out.regret) v /= n;
  for (auto& v : out.best_inclusion) v /= n;
  return out;
}

}  // namespace popbandit
