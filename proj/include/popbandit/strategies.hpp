#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "acquisition.hpp"
#include "bandit.hpp"
#include "gp.hpp"
#include "space.hpp"

namespace popbandit {

enum class StrategyKind { Random, PBT, PB2Rand, PB2Mult, PB2Mix };

inline constexpr std::array<StrategyKind, 5> kAllStrategies = {StrategyKind::Random, StrategyKind::PBT,
                                                               StrategyKind::PB2Rand, StrategyKind::PB2Mult,
                                                               StrategyKind::PB2Mix};

inline std::string to_string(StrategyKind k) {
  switch (k) {
    case StrategyKind::Random: return "random";
    case StrategyKind::PBT: return "pbt";
    case StrategyKind::PB2Rand: return "pb2-rand";
    case StrategyKind::PB2Mult: return "pb2-mult";
    case StrategyKind::PB2Mix: return "pb2-mix";
  }
  return "?";
}

inline StrategyKind parse_strategy(const std::string& name) {
  for (auto k : kAllStrategies)
    if (to_string(k) == name) return k;
  throw std::invalid_argument("unknown strategy '" + name + "'");
}

inline bool uses_bandit(StrategyKind k) { return k == StrategyKind::PB2Mult || k == StrategyKind::PB2Mix; }

struct AgentConfig {
  int agent = 0;
  Config config;
};

using ExploreDecision = std::vector<AgentConfig>;

/// Decision plus the bandit draw that produced its categories, kept for the
/// delayed reward update.
struct ExploreResult {
  ExploreDecision decision;
  std::optional<BatchSelection> selection;
  std::map<int, int> agent_arm;  // agents whose category came from `selection`
};

struct Pb2Options {
  AcquisitionConfig acq;
  FitOptions fit;
  GpHyperparams init;
  std::map<std::string, std::pair<double, double>> bound_overrides;

  [[nodiscard]] GpBounds bounds(std::size_t continuous_dims) const {
    GpBounds b = GpBounds::defaults(continuous_dims);
    for (const auto& [name, range] : bound_overrides) {
      auto it = std::find_if(kHyperNames.begin(), kHyperNames.end(), [&](const char* n) { return name == n; });
      if (it == kHyperNames.end()) throw std::invalid_argument("unknown GP bound '" + name + "'");
      const auto i = static_cast<std::size_t>(it - kHyperNames.begin());
      const auto [lo, hi] = range;
      bool ok = lo >= 0.0 && lo < hi && std::isfinite(hi);
      if (i == kEps1 || i == kEps2) ok = ok && hi < 1.0;
      else if (i == kLambda) ok = ok && hi <= 1.0;
      else ok = ok && lo > 0.0;  // scale parameters
      if (!ok) throw std::invalid_argument("invalid GP bound range for '" + name + "'");
      b.lower[i] = range.first;
      b.upper[i] = range.second;
    }
    return b;
  }
};

// ---------------------------------------------------------------------------
// GP inputs
// ---------------------------------------------------------------------------

inline GpPoint to_gp_point(const std::vector<double>& x, std::span<const ContinuousParam> dims, std::vector<int> h,
                           double t) {
  GpPoint p;
  p.x.resize(static_cast<Eigen::Index>(dims.size()));
  for (std::size_t i = 0; i < dims.size(); ++i) p.x(static_cast<Eigen::Index>(i)) = dims[i].to_unit(x[i]);
  p.h = std::move(h);
  p.t = t;
  return p;
}

/// Unit-scaled GP training set with min-max normalized rewards as targets.
/// Categorical codes are included only when `with_categories` is set.
inline std::pair<std::vector<GpPoint>, Eigen::VectorXd> gp_training_set(const Dataset& data, const SearchSpace& space,
                                                                        std::span<const ContinuousParam> dims,
                                                                        bool with_categories) {
  std::vector<GpPoint> pts;
  Eigen::VectorXd y(static_cast<Eigen::Index>(data.size()));
  if (data.empty()) return {pts, y};
  const auto norm = normalize_rewards(data);
  pts.reserve(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& o = data[i];
    pts.push_back(to_gp_point(o.config.x, dims, with_categories ? space.encode(o.config.h) : std::vector<int>{},
                              static_cast<double>(o.round)));
    y(static_cast<Eigen::Index>(i)) = norm[i];
  }
  return {pts, y};
}

inline GpModel fit_model(const Dataset& data, const SearchSpace& space, std::span<const ContinuousParam> dims,
                         KernelKind kind, const Pb2Options& opt, Rng& rng) {
  auto [pts, y] = gp_training_set(data, space, dims, kind == KernelKind::Mixed);
  const GpBounds bounds = opt.bounds(dims.size());
  const GpHyperparams init = bounds.clip(opt.init);
  const std::uint64_t fit_seed = rng();
  const FitResult res = fit(pts, y, init, kind, bounds, fit_seed, opt.fit);
  return GpModel(std::move(pts), std::move(y), res.theta, kind, bounds, opt.fit.window);
}

// ---------------------------------------------------------------------------
// Explore strategies
// ---------------------------------------------------------------------------

inline ExploreDecision explore_random(const SearchSpace& space, const std::vector<int>& agents, Rng& rng) {
  ExploreDecision out;
  for (int a : agents) {
    Config c;
    c.h = space.sample_assignment(rng);
    c.x = space.sample_continuous(c.h, rng);
    out.push_back({a, std::move(c)});
  }
  return out;
}

inline constexpr double kPbtResampleProb = 0.25;
inline constexpr std::array<double, 2> kPbtFactors = {0.8, 1.2};

/// PBT perturbation of each parent: resample with probability 0.25, otherwise
/// keep the category and scale continuous values by 0.8 or 1.2 (clipped).
inline ExploreDecision explore_pbt(const std::vector<int>& agents, const std::vector<Config>& parents,
                                   const SearchSpace& space, Rng& rng) {
  if (agents.size() != parents.size()) throw std::invalid_argument("explore_pbt: one parent per agent required");
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> factor(0, kPbtFactors.size() - 1);

  ExploreDecision out;
  for (std::size_t k = 0; k < agents.size(); ++k) {
    const Config& parent = parents[k];
    Config c;
    for (std::size_t i = 0; i < space.categorical.size(); ++i) {
      const auto& choices = space.categorical[i].choices;
      std::uniform_int_distribution<std::size_t> pick(0, choices.size() - 1);
      c.h.push_back(unit(rng) < kPbtResampleProb ? choices[pick(rng)] : parent.h.at(i));
    }
    const auto& dims = space.continuous_for(c.h);
    const bool same_dims = &dims == &space.continuous_for(parent.h) && parent.x.size() == dims.size();
    for (std::size_t i = 0; i < dims.size(); ++i) {
      std::uniform_real_distribution<double> u(dims[i].lower, dims[i].upper);
      if (!same_dims || unit(rng) < kPbtResampleProb) {
        c.x.push_back(u(rng));
      } else {
        c.x.push_back(std::clamp(parent.x[i] * kPbtFactors[factor(rng)], dims[i].lower, dims[i].upper));
      }
    }
    out.push_back({agents[k], std::move(c)});
  }
  return out;
}

inline void require_shared_continuous(const SearchSpace& space, const char* who) {
  if (!space.shared_continuous())
    throw std::invalid_argument(std::string(who) + " needs one continuous list shared by all categories");
}

/// Categories uniform at random; continuous values from a category-blind
/// time-varying GP.
inline ExploreDecision explore_pb2_rand(const Dataset& data, const std::vector<int>& agents, const SearchSpace& space,
                                        int t, const Pb2Options& opt, Rng& rng) {
  require_shared_continuous(space, "pb2-rand");
  ExploreDecision out;
  for (int a : agents) out.push_back({a, Config{{}, space.sample_assignment(rng)}});
  if (agents.empty()) return out;

  const GpModel model = fit_model(data, space, space.continuous, KernelKind::Continuous, opt, rng);
  auto xs = select_batch_continuous(model, space.continuous, {}, static_cast<int>(agents.size()), t, opt.acq, rng);
  for (std::size_t k = 0; k < out.size(); ++k) out[k].config.x = std::move(xs[k]);
  return out;
}

/// Draws one arm per agent from the bandit: DepRound over min(n, C) distinct
/// arms (ascending, in agent order), extra agents sampled in proportion to the
/// capped weights.
inline ExploreResult assign_categories(const BanditState* bandit, const std::vector<int>& agents,
                                       const SearchSpace& space, Rng& rng) {
  ExploreResult res;
  if (agents.empty()) return res;
  if (space.n_arms() < 2 || bandit == nullptr) {
    for (int a : agents) res.decision.push_back({a, Config{{}, space.sample_assignment(rng)}});
    return res;
  }

  BatchSelection sel = select_batch(*bandit, rng);
  std::vector<int> arms = sel.arms;
  if (arms.size() < agents.size()) {
    const auto& w = sel.cap.capped_weights;
    std::discrete_distribution<int> extra(w.begin(), w.end());
    while (arms.size() < agents.size()) arms.push_back(extra(rng));
  }
  for (std::size_t k = 0; k < agents.size(); ++k) {
    res.decision.push_back({agents[k], Config{{}, space.arm_assignment(arms[k])}});
    res.agent_arm[agents[k]] = arms[k];
  }
  res.selection = std::move(sel);
  return res;
}

/// Bandit-chosen categories, one GP per selected category on that
/// category's observations only. Fewer than two observations fall back to
/// uniform sampling.
inline ExploreResult explore_pb2_mult(const Dataset& data, const BanditState* bandit, const std::vector<int>& agents,
                                      const SearchSpace& space, int t, const Pb2Options& opt, Rng& rng) {
  ExploreResult res = assign_categories(bandit, agents, space, rng);

  std::map<Assignment, std::vector<std::size_t>> groups;
  for (std::size_t k = 0; k < res.decision.size(); ++k) groups[res.decision[k].config.h].push_back(k);

  for (const auto& [h, members] : groups) {
    const auto& dims = space.continuous_for(h);
    const Dataset subset = filter_by_category(data, h);
    if (subset.size() < 2) {
      for (auto k : members) res.decision[k].config.x = space.sample_continuous(h, rng);
      continue;
    }
    const GpModel model = fit_model(subset, space, dims, KernelKind::Continuous, opt, rng);
    auto xs = select_batch_continuous(model, dims, {}, static_cast<int>(members.size()), t, opt.acq, rng);
    for (std::size_t j = 0; j < members.size(); ++j) res.decision[members[j]].config.x = std::move(xs[j]);
  }
  return res;
}

/// Bandit-chosen categories, one joint GP with the λ-mixed kernel; each pick
/// queries with its agent's category fixed and pending picks are shared.
inline ExploreResult explore_pb2_mix(const Dataset& data, const BanditState* bandit, const std::vector<int>& agents,
                                     const SearchSpace& space, int t, const Pb2Options& opt, Rng& rng) {
  require_shared_continuous(space, "pb2-mix");
  ExploreResult res = assign_categories(bandit, agents, space, rng);
  if (agents.empty()) return res;

  const GpModel model = fit_model(data, space, space.continuous, KernelKind::Mixed, opt, rng);
  std::vector<std::vector<int>> fixed_h;
  for (const auto& d : res.decision) fixed_h.push_back(space.encode(d.config.h));
  auto xs = select_batch_continuous(model, space.continuous, fixed_h, static_cast<int>(agents.size()), t, opt.acq,
                                    rng);
  for (std::size_t k = 0; k < res.decision.size(); ++k) res.decision[k].config.x = std::move(xs[k]);
  return res;
}

// ---------------------------------------------------------------------------
// Exploit
// ---------------------------------------------------------------------------

struct Replacement {
  int loser = 0;
  int winner = 0;

  friend bool operator==(const Replacement&, const Replacement&) = default;
};

/// Truncation selection: the bottom ceil(q·B) agents each copy a uniformly
/// drawn member of the top ceil(q·B). Ties rank the lower agent index higher.
inline std::vector<Replacement> exploit_truncation(const std::vector<double>& scores, double quantile, Rng& rng) {
  const int n = static_cast<int>(scores.size());
  if (n < 2) throw std::invalid_argument("exploit_truncation: population needs at least 2 agents");
  if (!(quantile > 0.0 && quantile <= 0.5)) throw std::invalid_argument("exploit_truncation: quantile must lie in (0, 0.5]");

  const int k = std::max(1, static_cast<int>(std::ceil(quantile * n - 1e-9)));
  std::vector<int> rank(static_cast<std::size_t>(n));
  std::iota(rank.begin(), rank.end(), 0);
  std::stable_sort(rank.begin(), rank.end(), [&](int a, int b) { return scores[a] > scores[b]; });

  std::uniform_int_distribution<int> pick(0, k - 1);
  std::vector<Replacement> out;
  for (int i = n - k; i < n; ++i) out.push_back({rank[static_cast<std::size_t>(i)], rank[static_cast<std::size_t>(pick(rng))]});
  std::sort(out.begin(), out.end(), [](const Replacement& a, const Replacement& b) { return a.loser < b.loser; });
  return out;
}

inline int replacements_per_round(int population, double quantile) {
  return std::max(1, static_cast<int>(std::ceil(quantile * population - 1e-9)));
}

}  // namespace popbandit
