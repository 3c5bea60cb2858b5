#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <optional>
#include <ostream>
#include <random>
#include <stdexcept>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "space.hpp"

namespace popbandit {

// ---------------------------------------------------------------------------
// Hyperparameters
// ---------------------------------------------------------------------------

enum HyperIndex : std::size_t { kEps1 = 0, kEps2, kLengthscale, kSigma1, kSigma2, kLambda, kNoise, kNumHyper };

inline constexpr std::array<const char*, kNumHyper> kHyperNames = {"eps1",   "eps2",   "lengthscale", "sigma1",
                                                                   "sigma2", "lambda", "noise"};

using HyperVector = std::array<double, kNumHyper>;

struct GpHyperparams {
  double eps1 = 0.1;         // time forgetting, continuous factor
  double eps2 = 0.1;         // time forgetting, categorical factor
  double lengthscale = 1.0;  // shared, on unit-scaled inputs
  double sigma1 = 1.0;       // continuous amplitude
  double sigma2 = 1.0;       // categorical amplitude
  double lambda = 0.5;       // 0 = sum kernel, 1 = product kernel
  double noise = 0.01;       // observation noise variance

  [[nodiscard]] HyperVector to_array() const { return {eps1, eps2, lengthscale, sigma1, sigma2, lambda, noise}; }
  static GpHyperparams from_array(const HyperVector& a) { return {a[0], a[1], a[2], a[3], a[4], a[5], a[6]}; }

  [[nodiscard]] bool valid() const {
    return eps1 >= 0.0 && eps1 < 1.0 && eps2 >= 0.0 && eps2 < 1.0 && lengthscale > 0.0 && sigma1 > 0.0 &&
           sigma2 > 0.0 && lambda >= 0.0 && lambda <= 1.0 && noise > 0.0;
  }
};

/// Box used both as the uniform hyperprior and as the projection set for fitting.
struct GpBounds {
  HyperVector lower{0.0, 0.0, 1e-3, 1e-3, 1e-3, 0.0, 1e-6};
  HyperVector upper{0.5, 0.5, 10.0, 10.0, 10.0, 1.0, 1.0};

  /// Lengthscale capped at ten unit-cube diameters.
  static GpBounds defaults(std::size_t continuous_dims) {
    GpBounds b;
    b.upper[kLengthscale] = 10.0 * std::sqrt(static_cast<double>(std::max<std::size_t>(continuous_dims, 1)));
    return b;
  }

  [[nodiscard]] GpHyperparams clip(const GpHyperparams& theta) const {
    auto a = theta.to_array();
    for (std::size_t i = 0; i < kNumHyper; ++i) a[i] = std::clamp(a[i], lower[i], upper[i]);
    return GpHyperparams::from_array(a);
  }
};

// ---------------------------------------------------------------------------
// Kernels
// ---------------------------------------------------------------------------

/// Continuous-only (time-varying, category blind) or the λ-mixed kernel.
enum class KernelKind { Continuous, Mixed };

/// Which hyperparameters a kernel kind depends on.
inline std::array<bool, kNumHyper> active_hyperparams(KernelKind kind) {
  if (kind == KernelKind::Continuous) return {true, false, true, true, false, false, true};
  return {true, true, true, true, true, true, true};
}

/// A GP input: unit-scaled continuous vector, categorical codes, round index.
struct GpPoint {
  Eigen::VectorXd x;
  std::vector<int> h;
  double t = 0.0;
};

inline double k_continuous(const Eigen::VectorXd& x, const Eigen::VectorXd& xp, double sigma1, double lengthscale) {
  return sigma1 * std::exp(-(x - xp).squaredNorm() / lengthscale);
}

/// (sigma2 / n_dims) * (number of matching categorical dims).
inline double k_categorical(const std::vector<int>& h, const std::vector<int>& hp, double sigma2) {
  if (h.empty()) return sigma2;
  int matches = 0;
  for (std::size_t i = 0; i < h.size(); ++i) matches += h[i] == hp[i] ? 1 : 0;
  return sigma2 * matches / static_cast<double>(h.size());
}

inline double k_time(double t, double tp, double eps) { return std::pow(1.0 - eps, std::abs(t - tp) / 2.0); }

/// d/d eps of (1-eps)^{lag/2}; zero at zero lag.
inline double k_time_deps(double t, double tp, double eps) {
  const double half_lag = std::abs(t - tp) / 2.0;
  if (half_lag == 0.0) return 0.0;
  return -half_lag * std::pow(1.0 - eps, half_lag - 1.0);
}

inline double k_mixed(const GpPoint& a, const GpPoint& b, const GpHyperparams& th) {
  const double kxt = k_continuous(a.x, b.x, th.sigma1, th.lengthscale) * k_time(a.t, b.t, th.eps1);
  const double kht = k_categorical(a.h, b.h, th.sigma2) * k_time(a.t, b.t, th.eps2);
  return (1.0 - th.lambda) * (kxt + kht) + th.lambda * kxt * kht;
}

inline double kernel(const GpPoint& a, const GpPoint& b, const GpHyperparams& th, KernelKind kind) {
  if (kind == KernelKind::Continuous)
    return k_continuous(a.x, b.x, th.sigma1, th.lengthscale) * k_time(a.t, b.t, th.eps1);
  return k_mixed(a, b, th);
}

/// Entrywise partials of the kernel w.r.t. each hyperparameter (noise excluded).
inline HyperVector kernel_grad(const GpPoint& a, const GpPoint& b, const GpHyperparams& th, KernelKind kind) {
  HyperVector g{};
  const double d2 = (a.x - b.x).squaredNorm();
  const double kc = th.sigma1 * std::exp(-d2 / th.lengthscale);
  const double kt1 = k_time(a.t, b.t, th.eps1);
  const double dkt1 = k_time_deps(a.t, b.t, th.eps1);
  const double dkc_dl = d2 / (th.lengthscale * th.lengthscale) * kc;
  const double dkc_ds1 = kc / th.sigma1;

  if (kind == KernelKind::Continuous) {
    g[kEps1] = kc * dkt1;
    g[kLengthscale] = kt1 * dkc_dl;
    g[kSigma1] = kt1 * dkc_ds1;
    return g;
  }

  const double kcat = k_categorical(a.h, b.h, th.sigma2);
  const double kt2 = k_time(a.t, b.t, th.eps2);
  const double dkt2 = k_time_deps(a.t, b.t, th.eps2);
  const double kxt = kc * kt1;
  const double kht = kcat * kt2;
  const double lam = th.lambda;

  // chain rule through (1-λ)(kxt + kht) + λ kxt kht
  const double dz_dkxt = (1.0 - lam) + lam * kht;
  const double dz_dkht = (1.0 - lam) + lam * kxt;

  g[kEps1] = dz_dkxt * kc * dkt1;
  g[kEps2] = dz_dkht * kcat * dkt2;
  g[kLengthscale] = dz_dkxt * kt1 * dkc_dl;
  g[kSigma1] = dz_dkxt * kt1 * dkc_ds1;
  g[kSigma2] = dz_dkht * kt2 * (kcat / th.sigma2);
  g[kLambda] = -(kxt + kht) + kxt * kht;
  return g;
}

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

struct Posterior {
  double mean = 0.0;
  double var = 0.0;
};

inline constexpr std::size_t kDefaultWindow = 200;

/// Exact GP on the most recent `window` points. Immutable after construction.
class GpModel {
 public:
  GpModel(std::vector<GpPoint> points, Eigen::VectorXd targets, GpHyperparams theta, KernelKind kind,
          GpBounds bounds = GpBounds::defaults(1), std::size_t window = kDefaultWindow)
      : theta_(theta), kind_(kind), bounds_(bounds) {
    if (static_cast<Eigen::Index>(points.size()) != targets.size())
      throw std::invalid_argument("GpModel: points/targets size mismatch");
    if (!theta.valid()) throw std::invalid_argument("GpModel: hyperparameters out of range");
    const std::size_t drop = points.size() > window ? points.size() - window : 0;
    points_.assign(std::make_move_iterator(points.begin() + static_cast<std::ptrdiff_t>(drop)),
                   std::make_move_iterator(points.end()));
    y_ = targets.tail(static_cast<Eigen::Index>(points_.size()));
    factor();
  }

  [[nodiscard]] std::size_t size() const { return points_.size(); }
  [[nodiscard]] const GpHyperparams& theta() const { return theta_; }
  [[nodiscard]] KernelKind kind() const { return kind_; }
  [[nodiscard]] const GpBounds& bounds() const { return bounds_; }
  [[nodiscard]] const std::vector<GpPoint>& points() const { return points_; }
  [[nodiscard]] const Eigen::VectorXd& targets() const { return y_; }
  [[nodiscard]] double jitter() const { return jitter_; }

  /// Time-augmented Gram matrix without the noise term.
  [[nodiscard]] Eigen::MatrixXd gram() const {
    const auto n = static_cast<Eigen::Index>(points_.size());
    Eigen::MatrixXd k(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j <= i; ++j)
        k(i, j) = k(j, i) = kernel(points_[static_cast<std::size_t>(i)], points_[static_cast<std::size_t>(j)],
                                   theta_, kind_);
    return k;
  }

  /// K + (noise + jitter) I, the matrix actually factored.
  [[nodiscard]] Eigen::MatrixXd covariance() const {
    Eigen::MatrixXd k = gram();
    k.diagonal().array() += theta_.noise + jitter_;
    return k;
  }

  [[nodiscard]] const Eigen::MatrixXd& chol_lower() const { return chol_; }

  [[nodiscard]] Posterior posterior(const GpPoint& q) const { return posterior_batch({q}).front(); }

  [[nodiscard]] std::vector<Posterior> posterior_batch(const std::vector<GpPoint>& queries) const {
    std::vector<Posterior> out(queries.size());
    const auto n = static_cast<Eigen::Index>(points_.size());
    const auto m = static_cast<Eigen::Index>(queries.size());
    if (n == 0) {
      for (std::size_t j = 0; j < queries.size(); ++j) out[j] = {0.0, kernel(queries[j], queries[j], theta_, kind_)};
      return out;
    }
    Eigen::MatrixXd kq(n, m);
    for (Eigen::Index j = 0; j < m; ++j)
      for (Eigen::Index i = 0; i < n; ++i)
        kq(i, j) = kernel(points_[static_cast<std::size_t>(i)], queries[static_cast<std::size_t>(j)], theta_, kind_);
    const Eigen::VectorXd mean = kq.transpose() * alpha_;
    const Eigen::MatrixXd v = chol_.triangularView<Eigen::Lower>().solve(kq);
    const Eigen::VectorXd reduction = v.colwise().squaredNorm().transpose();
    for (Eigen::Index j = 0; j < m; ++j) {
      const auto& q = queries[static_cast<std::size_t>(j)];
      const double prior = kernel(q, q, theta_, kind_);
      out[static_cast<std::size_t>(j)] = {mean(j), std::max(0.0, prior - reduction(j))};
    }
    return out;
  }

  /// ln p_hyp for the uniform box prior over the active hyperparameters.
  [[nodiscard]] double log_prior() const {
    const auto active = active_hyperparams(kind_);
    double lp = 0.0;
    for (std::size_t i = 0; i < kNumHyper; ++i)
      if (active[i]) lp -= std::log(bounds_.upper[i] - bounds_.lower[i]);
    return lp;
  }

  /// Gaussian log evidence of the targets plus ln p_hyp.
  [[nodiscard]] double log_marginal() const {
    if (points_.empty()) throw std::logic_error("log_marginal: empty dataset");
    const double n = static_cast<double>(points_.size());
    const double log_det = 2.0 * chol_.diagonal().array().log().sum();
    return -0.5 * y_.dot(alpha_) - 0.5 * log_det - 0.5 * n * std::log(2.0 * std::numbers::pi) + log_prior();
  }

  /// dL/dθ_i = ½ tr[(ααᵀ - K⁻¹) dK/dθ_i]; the uniform prior contributes nothing.
  [[nodiscard]] HyperVector grad_log_marginal() const {
    if (points_.empty()) throw std::logic_error("grad_log_marginal: empty dataset");
    const auto n = static_cast<Eigen::Index>(points_.size());
    Eigen::MatrixXd k_inv = Eigen::MatrixXd::Identity(n, n);
    chol_.triangularView<Eigen::Lower>().solveInPlace(k_inv);
    chol_.triangularView<Eigen::Lower>().transpose().solveInPlace(k_inv);
    const Eigen::MatrixXd a = alpha_ * alpha_.transpose() - k_inv;

    HyperVector g{};
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j <= i; ++j) {
        const auto dk =
            kernel_grad(points_[static_cast<std::size_t>(i)], points_[static_cast<std::size_t>(j)], theta_, kind_);
        const double w = i == j ? a(i, i) : 2.0 * a(i, j);
        for (std::size_t p = 0; p < kNoise; ++p) g[p] += w * dk[p];
      }
    }
    for (std::size_t p = 0; p < kNoise; ++p) g[p] *= 0.5;
    g[kNoise] = 0.5 * a.trace();
    return g;
  }

  /// Same model with `q` appended as a pending evaluation (target 0). Only the
  /// variance of the result is meaningful.
  [[nodiscard]] GpModel with_pending(const GpPoint& q) const {
    GpModel m = *this;
    m.points_.push_back(q);
    m.y_.conservativeResize(m.y_.size() + 1);
    m.y_(m.y_.size() - 1) = 0.0;
    m.factor();
    return m;
  }

  /// Debug dump of the Gram matrix.
  void write_gram_csv(std::ostream& os) const {
    const Eigen::MatrixXd k = gram();
    os.precision(10);
    for (Eigen::Index i = 0; i < k.rows(); ++i) {
      for (Eigen::Index j = 0; j < k.cols(); ++j) os << (j ? "," : "") << k(i, j);
      os << '\n';
    }
  }

 private:
  void factor() {
    const auto n = static_cast<Eigen::Index>(points_.size());
    if (n == 0) {
      chol_.resize(0, 0);
      alpha_.resize(0);
      return;
    }
    Eigen::MatrixXd k = gram();
    k.diagonal().array() += theta_.noise;
    for (double jitter = 0.0; jitter <= 1e-4 * 1.000001; jitter = jitter == 0.0 ? 1e-10 : jitter * 10.0) {
      Eigen::MatrixXd kj = k;
      kj.diagonal().array() += jitter;
      Eigen::LLT<Eigen::MatrixXd> llt(kj);
      if (llt.info() == Eigen::Success) {
        jitter_ = jitter;
        chol_ = llt.matrixL();
        alpha_ = llt.solve(y_);
        return;
      }
    }
    throw std::runtime_error("GpModel: Cholesky failed after jitter escalation");
  }

  std::vector<GpPoint> points_;
  Eigen::VectorXd y_;
  GpHyperparams theta_;
  KernelKind kind_;
  GpBounds bounds_;
  Eigen::MatrixXd chol_;
  Eigen::VectorXd alpha_;
  double jitter_ = 0.0;
};

// ---------------------------------------------------------------------------
// MAP fitting
// ---------------------------------------------------------------------------

struct FitOptions {
  int restarts = 3;
  int max_iter = 100;
  double grad_tol = 1e-5;
  std::size_t window = kDefaultWindow;
};

struct FitResult {
  GpHyperparams theta;
  double log_marginal = -std::numeric_limits<double>::infinity();
  bool warning = false;  // every restart failed; theta is the init
};

namespace detail {

/// θ-independent pairwise structure of a training window: squared distances,
/// categorical match fractions and round lags.
struct PairCache {
  Eigen::MatrixXd d2, match, half_lag;
  Eigen::MatrixXi lag_id;           // index into `half_lags`
  std::vector<double> half_lags;    // distinct values of half_lag
  Eigen::VectorXd y;

  PairCache(const std::vector<GpPoint>& pts, const Eigen::VectorXd& targets, std::size_t window) {
    const std::size_t drop = pts.size() > window ? pts.size() - window : 0;
    const auto n = static_cast<Eigen::Index>(pts.size() - drop);
    y = targets.tail(n);
    d2.resize(n, n);
    match.resize(n, n);
    half_lag.resize(n, n);
    lag_id.resize(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto& a = pts[drop + static_cast<std::size_t>(i)];
      for (Eigen::Index j = 0; j <= i; ++j) {
        const auto& b = pts[drop + static_cast<std::size_t>(j)];
        d2(i, j) = d2(j, i) = (a.x - b.x).squaredNorm();
        match(i, j) = match(j, i) = k_categorical(a.h, b.h, 1.0);
        const double hl = std::abs(a.t - b.t) / 2.0;
        half_lag(i, j) = half_lag(j, i) = hl;
        auto it = std::find(half_lags.begin(), half_lags.end(), hl);
        if (it == half_lags.end()) it = half_lags.insert(half_lags.end(), hl);
        lag_id(i, j) = lag_id(j, i) = static_cast<int>(it - half_lags.begin());
      }
    }
  }

  /// (1 - eps)^{half_lag} for every pair.
  [[nodiscard]] Eigen::ArrayXXd time_factor(double eps) const {
    std::vector<double> table(half_lags.size());
    for (std::size_t k = 0; k < table.size(); ++k) table[k] = std::pow(1.0 - eps, half_lags[k]);
    return lag_id.unaryExpr([&](int k) { return table[static_cast<std::size_t>(k)]; }).array();
  }
};

/// One factorization of the cached covariance at θ. `grad()` reuses it.
class CachedEval {
 public:
  CachedEval(const PairCache& c, const GpHyperparams& th, KernelKind kind, const GpBounds& bounds)
      : c_(c), th_(th), kind_(kind) {
    kxt_ = th.sigma1 * (-c.d2.array() / th.lengthscale).exp() * c.time_factor(th.eps1);
    Eigen::MatrixXd k;
    if (kind == KernelKind::Continuous) {
      k = kxt_.matrix();
    } else {
      kht_ = th.sigma2 * c.match.array() * c.time_factor(th.eps2);
      k = ((1.0 - th.lambda) * (kxt_ + kht_) + th.lambda * kxt_ * kht_).matrix();
    }
    k.diagonal().array() += th.noise;
    llt_.compute(k);
    ok_ = llt_.info() == Eigen::Success;
    for (double jitter = 1e-10; !ok_ && jitter <= 1e-4 * 1.000001; jitter *= 10.0) {
      Eigen::MatrixXd kj = k;
      kj.diagonal().array() += jitter;
      llt_.compute(kj);
      ok_ = llt_.info() == Eigen::Success;
    }
    if (!ok_) return;
    alpha_ = llt_.solve(c.y);
    double lp = 0.0;
    const auto active = active_hyperparams(kind);
    for (std::size_t i = 0; i < kNumHyper; ++i)
      if (active[i]) lp -= std::log(bounds.upper[i] - bounds.lower[i]);
    lml_ = -0.5 * c.y.dot(alpha_) - llt_.matrixLLT().diagonal().array().log().sum() -
           0.5 * static_cast<double>(c.y.size()) * std::log(2.0 * std::numbers::pi) + lp;
    ok_ = std::isfinite(lml_);
  }

  [[nodiscard]] bool ok() const { return ok_; }
  [[nodiscard]] double log_marginal() const { return lml_; }

  [[nodiscard]] HyperVector grad() const {
    const auto n = c_.y.size();
    Eigen::MatrixXd l_inv = Eigen::MatrixXd::Identity(n, n);
    llt_.matrixL().solveInPlace(l_inv);
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
    a.selfadjointView<Eigen::Lower>().rankUpdate(l_inv.transpose(), -1.0);
    a.selfadjointView<Eigen::Lower>().rankUpdate(alpha_, 1.0);
    a.triangularView<Eigen::StrictlyUpper>() = a.transpose();
    const auto aa = a.array();

    // every partial is an elementwise product with A, so reduce to weighted sums
    const auto& th = th_;
    HyperVector g{};
    const Eigen::ArrayXXd wx =
        kind_ == KernelKind::Continuous ? Eigen::ArrayXXd(aa * kxt_)
                                        : Eigen::ArrayXXd(aa * kxt_ * ((1.0 - th.lambda) + th.lambda * kht_));
    g[kSigma1] = 0.5 * wx.sum() / th.sigma1;
    g[kLengthscale] = 0.5 * (wx * c_.d2.array()).sum() / (th.lengthscale * th.lengthscale);
    g[kEps1] = -0.5 * (wx * c_.half_lag.array()).sum() / (1.0 - th.eps1);
    if (kind_ == KernelKind::Mixed) {
      const Eigen::ArrayXXd wh = aa * kht_ * ((1.0 - th.lambda) + th.lambda * kxt_);
      g[kSigma2] = 0.5 * wh.sum() / th.sigma2;
      g[kEps2] = -0.5 * (wh * c_.half_lag.array()).sum() / (1.0 - th.eps2);
      g[kLambda] = 0.5 * (aa * (kxt_ * kht_ - kxt_ - kht_)).sum();
    }
    g[kNoise] = 0.5 * a.trace();
    return g;
  }

 private:
  const PairCache& c_;
  GpHyperparams th_;
  KernelKind kind_;
  Eigen::ArrayXXd kxt_, kht_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
  Eigen::VectorXd alpha_;
  double lml_ = 0.0;
  bool ok_ = false;
};

/// Projected gradient ascent with Armijo backtracking, gradient preconditioned
/// by the squared box widths.
inline std::optional<FitResult> ascend(const PairCache& cache, GpHyperparams start, KernelKind kind,
                                       const GpBounds& bounds, const FitOptions& opt) {
  const auto active = active_hyperparams(kind);
  constexpr std::array<bool, kNumHyper> log_scale = {false, false, true, true, true, false, true};
  HyperVector th = bounds.clip(start).to_array();
  double step = 1.0;

  CachedEval cur(cache, GpHyperparams::from_array(th), kind, bounds);
  if (!cur.ok()) return std::nullopt;
  double lml = cur.log_marginal();
  HyperVector grad = cur.grad();

  for (int it = 0; it < opt.max_iter; ++it) {
    HyperVector dir{};
    double pg_norm = 0.0;
    for (std::size_t i = 0; i < kNumHyper; ++i) {
      if (!active[i]) continue;
      const double scale = log_scale[i] ? th[i] : bounds.upper[i] - bounds.lower[i];
      const double d2 = scale * scale;
      // projected gradient: the unit step clipped to the box, mapped back to gradient units
      const double pg = (std::clamp(th[i] + d2 * grad[i], bounds.lower[i], bounds.upper[i]) - th[i]) / d2;
      pg_norm = std::max(pg_norm, std::abs(pg));
      dir[i] = grad[i] * d2;
    }
    if (pg_norm < opt.grad_tol) break;

    bool accepted = false;
    for (int ls = 0; ls < 40; ++ls, step *= 0.5) {
      HyperVector cand = th;
      double predicted = 0.0;
      for (std::size_t i = 0; i < kNumHyper; ++i) {
        if (!active[i]) continue;
        cand[i] = std::clamp(th[i] + step * dir[i], bounds.lower[i], bounds.upper[i]);
        predicted += grad[i] * (cand[i] - th[i]);
      }
      if (predicted <= 0.0) continue;
      CachedEval next(cache, GpHyperparams::from_array(cand), kind, bounds);
      if (next.ok() && next.log_marginal() >= lml + 1e-4 * predicted) {
        th = cand;
        lml = next.log_marginal();
        grad = next.grad();
        accepted = true;
        break;
      }
    }
    if (!accepted) break;
    step = std::min(step * 2.0, 1.0);
  }
  return FitResult{GpHyperparams::from_array(th), lml, false};
}

}  // namespace detail

/// MAP fit: local ascent from `init` plus `restarts` ascents from uniform
/// random starts in the box. Fewer than two points returns `init`.
inline FitResult fit(const std::vector<GpPoint>& pts, const Eigen::VectorXd& y, const GpHyperparams& init,
                     KernelKind kind, const GpBounds& bounds, std::uint64_t seed, FitOptions opt = {}) {
  if (pts.size() < 2) return {init, -std::numeric_limits<double>::infinity(), false};

  Rng rng(seed);
  const auto active = active_hyperparams(kind);
  const detail::PairCache cache(pts, y, opt.window);
  std::optional<FitResult> best;
  for (int r = 0; r <= opt.restarts; ++r) {
    GpHyperparams start = init;
    if (r > 0) {
      auto a = init.to_array();
      for (std::size_t i = 0; i < kNumHyper; ++i) {
        if (!active[i]) continue;
        std::uniform_real_distribution<double> u(bounds.lower[i], bounds.upper[i]);
        a[i] = u(rng);
      }
      start = GpHyperparams::from_array(a);
    }
    auto res = detail::ascend(cache, start, kind, bounds, opt);
    if (res && (!best || res->log_marginal > best->log_marginal)) best = res;
  }
  if (!best) return {init, -std::numeric_limits<double>::infinity(), true};
  return *best;
}

}  // namespace popbandit
