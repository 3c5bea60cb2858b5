#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "gp.hpp"
#include "space.hpp"

namespace popbandit {

struct AcquisitionConfig {
  double c1 = 0.2;
  double c2 = 0.4;
  int n_candidates = 1000;
  int n_refine_steps = 20;
  double refine_radius = 0.1;  // unit-cube half-width of each golden-section bracket

  void validate() const {
    if (c1 < 0.0 || c2 < 0.0) throw std::invalid_argument("acquisition: c1 and c2 must be >= 0");
    if (n_candidates < 1) throw std::invalid_argument("acquisition: n_candidates must be >= 1");
    if (n_refine_steps < 0) throw std::invalid_argument("acquisition: n_refine_steps must be >= 0");
  }
};

/// β_t = c1 + c2 ln t, clamped at zero.
inline double beta(int t, const AcquisitionConfig& cfg) {
  if (t < 1) throw std::invalid_argument("beta: t must be >= 1");
  return std::max(0.0, cfg.c1 + cfg.c2 * std::log(static_cast<double>(t)));
}

namespace detail {

/// Upper confidence score with the mean from `mean_model` and the spread from
/// `var_model` (the same data plus pending picks).
class UcbScorer {
 public:
  UcbScorer(const GpModel& mean_model, const GpModel& var_model, double sqrt_beta)
      : mean_model_(mean_model), var_model_(var_model), sqrt_beta_(sqrt_beta) {}

  [[nodiscard]] std::vector<double> operator()(const std::vector<GpPoint>& qs) const {
    const auto mu = mean_model_.posterior_batch(qs);
    const auto sd = var_model_.posterior_batch(qs);
    std::vector<double> s(qs.size());
    for (std::size_t i = 0; i < qs.size(); ++i) s[i] = mu[i].mean + sqrt_beta_ * std::sqrt(sd[i].var);
    return s;
  }

  [[nodiscard]] double operator()(const GpPoint& q) const { return (*this)(std::vector<GpPoint>{q}).front(); }

 private:
  const GpModel& mean_model_;
  const GpModel& var_model_;
  double sqrt_beta_;
};

/// Coordinate-wise golden-section polish of `best`; only strict improvements stick.
inline void refine(GpPoint& best, double& best_score, const UcbScorer& score, const AcquisitionConfig& cfg) {
  constexpr double kInvPhi = 0.6180339887498949;
  for (Eigen::Index i = 0; i < best.x.size(); ++i) {
    double lo = std::max(0.0, best.x(i) - cfg.refine_radius);
    double hi = std::min(1.0, best.x(i) + cfg.refine_radius);
    GpPoint probe = best;
    auto eval_at = [&](double v) {
      probe.x(i) = v;
      return score(probe);
    };
    double a = hi - kInvPhi * (hi - lo);
    double b = lo + kInvPhi * (hi - lo);
    double fa = eval_at(a);
    double fb = eval_at(b);
    for (int s = 0; s < cfg.n_refine_steps; ++s) {
      if (fa >= fb) {
        hi = b;
        b = a;
        fb = fa;
        a = hi - kInvPhi * (hi - lo);
        fa = eval_at(a);
      } else {
        lo = a;
        a = b;
        fa = fb;
        b = lo + kInvPhi * (hi - lo);
        fb = eval_at(b);
      }
    }
    const double v = fa >= fb ? a : b;
    const double fv = std::max(fa, fb);
    if (fv > best_score) {
      best.x(i) = v;
      best_score = fv;
    }
  }
}

}  // namespace detail

/// Sequential batch UCB: pick b maximizes μ_{t,1}(x) + √β_t σ_{t,b}(x), where
/// σ_{t,b} includes picks 1..b-1 as pending points at round t+1. `fixed_h`
/// carries one categorical code vector per pick, or is empty for a
/// category-blind model. Returns points on the original scale of `dims`.
inline std::vector<std::vector<double>> select_batch_continuous(const GpModel& model,
                                                                std::span<const ContinuousParam> dims,
                                                                const std::vector<std::vector<int>>& fixed_h,
                                                                int n_picks, int t, const AcquisitionConfig& cfg,
                                                                Rng& rng) {
  cfg.validate();
  if (!fixed_h.empty() && static_cast<int>(fixed_h.size()) != n_picks)
    throw std::invalid_argument("select_batch_continuous: fixed_h must have one entry per pick");

  const double sqrt_beta = std::sqrt(beta(std::max(t, 1), cfg));
  const double query_t = static_cast<double>(t + 1);
  const auto d = static_cast<Eigen::Index>(dims.size());
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  std::vector<std::vector<double>> out;
  GpModel var_model = model;
  for (int b = 0; b < n_picks; ++b) {
    const std::vector<int> h = fixed_h.empty() ? std::vector<int>{} : fixed_h[static_cast<std::size_t>(b)];
    if (d == 0) {
      out.emplace_back();
      continue;
    }

    std::vector<GpPoint> cands(static_cast<std::size_t>(cfg.n_candidates));
    for (auto& c : cands) {
      c.x.resize(d);
      for (Eigen::Index i = 0; i < d; ++i) c.x(i) = unit(rng);
      c.h = h;
      c.t = query_t;
    }

    detail::UcbScorer score(model, var_model, sqrt_beta);
    const auto scores = score(cands);
    std::size_t best_idx = 0;
    for (std::size_t i = 1; i < scores.size(); ++i)
      if (scores[i] > scores[best_idx]) best_idx = i;
    GpPoint best = cands[best_idx];
    double best_score = scores[best_idx];
    detail::refine(best, best_score, score, cfg);

    std::vector<double> x(dims.size());
    for (std::size_t i = 0; i < dims.size(); ++i) {
      x[i] = std::clamp(dims[i].from_unit(best.x(static_cast<Eigen::Index>(i))), dims[i].lower, dims[i].upper);
      if (!dims[i].contains(x[i]) || !std::isfinite(x[i]))
        throw std::runtime_error("select_batch_continuous: pick outside bounds");
    }
    out.push_back(std::move(x));
    if (b + 1 < n_picks) var_model = var_model.with_pending(best);
  }
  return out;
}

}  // namespace popbandit
