#include <cmath>
#include <numbers>
#include <random>

#include <Eigen/Dense>
#include <gtest/gtest.h>

#include "popbandit/cli.hpp"
#include "popbandit/gp.hpp"

using namespace popbandit;

namespace {

GpPoint pt(std::vector<double> x, std::vector<int> h, double t) {
  GpPoint p;
  p.x = Eigen::Map<Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(x.size()));
  p.h = std::move(h);
  p.t = t;
  return p;
}

struct Problem {
  std::vector<GpPoint> pts;
  Eigen::VectorXd y;
};

Problem random_problem(Rng& rng, int n, int d, int cat_dims, int choices, int max_round) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> z(0.0, 1.0);
  Problem p;
  p.y.resize(n);
  for (int i = 0; i < n; ++i) {
    GpPoint q;
    q.x.resize(d);
    for (int j = 0; j < d; ++j) q.x(j) = u(rng);
    for (int j = 0; j < cat_dims; ++j) q.h.push_back(static_cast<int>(rng() % static_cast<unsigned>(choices)));
    q.t = 1 + static_cast<int>(rng() % static_cast<unsigned>(max_round));
    p.pts.push_back(q);
    p.y(i) = z(rng);
  }
  return p;
}

/// Independent re-statement of the mixed kernel, written directly from the formulas.
double ref_kernel(const GpPoint& a, const GpPoint& b, const GpHyperparams& th, bool mixed) {
  double d2 = 0.0;
  for (Eigen::Index i = 0; i < a.x.size(); ++i) d2 += (a.x(i) - b.x(i)) * (a.x(i) - b.x(i));
  const double lag = std::abs(a.t - b.t);
  const double kxt = th.sigma1 * std::exp(-d2 / th.lengthscale) * std::pow(1 - th.eps1, lag / 2);
  if (!mixed) return kxt;
  double match = 0.0;
  for (std::size_t i = 0; i < a.h.size(); ++i) match += a.h[i] == b.h[i];
  const double kht = th.sigma2 / static_cast<double>(a.h.size()) * match * std::pow(1 - th.eps2, lag / 2);
  return (1 - th.lambda) * (kxt + kht) + th.lambda * kxt * kht;
}

/// Dense multivariate normal log density through LU, not Cholesky.
double mvn_log_density(const Eigen::VectorXd& y, const Eigen::MatrixXd& cov) {
  Eigen::FullPivLU<Eigen::MatrixXd> lu(cov);
  const double quad = y.dot(lu.solve(y));
  const double log_det = std::log(std::abs(lu.determinant()));
  return -0.5 * quad - 0.5 * log_det - 0.5 * static_cast<double>(y.size()) * std::log(2 * std::numbers::pi);
}

GpHyperparams random_theta(Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto in = [&](double lo, double hi) { return lo + (hi - lo) * u(rng); };
  return {in(0.0, 0.5), in(0.0, 0.5), in(0.1, 3), in(0.2, 3), in(0.2, 3), in(0, 1), in(0.01, 0.5)};
}

}  // namespace

TEST(Kernels, Continuous) {
  const Eigen::Vector2d a(0.3, 0.7), b(0.1, 0.2);
  EXPECT_DOUBLE_EQ(k_continuous(a, a, 1.0, 0.5), 1.0);
  const double d2 = (a - b).squaredNorm();
  EXPECT_NEAR(k_continuous(a, b, 2.0, d2), 0.7357588823428847, 1e-12);
  EXPECT_NEAR(k_continuous(a, b, 1.7, 1e12), 1.7, 1e-9);
  EXPECT_DOUBLE_EQ(k_continuous(a, b, 1.3, 0.4), k_continuous(b, a, 1.3, 0.4));
}

TEST(Kernels, Categorical) {
  EXPECT_DOUBLE_EQ(k_categorical({1}, {1}, 1.0), 1.0);
  EXPECT_DOUBLE_EQ(k_categorical({1}, {0}, 1.0), 0.0);
  EXPECT_DOUBLE_EQ(k_categorical({0, 2}, {0, 1}, 2.0), 1.0);
}

TEST(Kernels, Time) {
  EXPECT_DOUBLE_EQ(k_time(4, 4, 0.3), 1.0);
  EXPECT_DOUBLE_EQ(k_time(1, 9, 0.0), 1.0);
  EXPECT_NEAR(k_time(3, 5, 0.19), 0.81, 1e-12);
  double prev = 1.0;
  for (int lag = 1; lag < 20; ++lag) {
    const double k = k_time(0, lag, 0.2);
    EXPECT_LT(k, prev);
    prev = k;
  }
}

TEST(Kernels, Mixed) {
  const auto a = pt({0.2, 0.4}, {1}, 3), b = pt({0.5, 0.1}, {0}, 1);
  GpHyperparams th{0.2, 0.3, 0.7, 1.3, 0.8, 0.0, 0.1};
  const double kxt = k_continuous(a.x, b.x, th.sigma1, th.lengthscale) * k_time(3, 1, th.eps1);
  const double kht = k_categorical(a.h, b.h, th.sigma2) * k_time(3, 1, th.eps2);
  EXPECT_DOUBLE_EQ(k_mixed(a, b, th), kxt + kht);
  th.lambda = 1.0;
  EXPECT_DOUBLE_EQ(k_mixed(a, b, th), kxt * kht);

  GpHyperparams unit{0.2, 0.3, 0.7, 1.0, 1.0, 0.35, 0.1};
  EXPECT_NEAR(k_mixed(a, a, unit), (1 - 0.35) * 2 + 0.35, 1e-12);
  EXPECT_DOUBLE_EQ(k_mixed(a, b, unit), k_mixed(b, a, unit));
}

TEST(Kernels, GramIsPositiveSemidefinite) {
  Rng rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    auto p = random_problem(rng, 60, 2, 2, 3, 15);
    const GpModel m(p.pts, p.y, random_theta(rng), KernelKind::Mixed);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m.gram());
    EXPECT_GE(es.eigenvalues().minCoeff(), -1e-8);
  }
}

TEST(KernelGrad, LambdaEntryWithEqualFactors) {
  // identical inputs with sigma1 = sigma2 = k make k_xt = k_ht = k
  const auto a = pt({0.3}, {0}, 2);
  const GpHyperparams th{0.1, 0.1, 1.0, 0.6, 0.6, 0.4, 0.1};
  EXPECT_NEAR(kernel_grad(a, a, th, KernelKind::Mixed)[kLambda], -2 * 0.6 + 0.6 * 0.6, 1e-12);
}

TEST(Posterior, EmptyDataIsPrior) {
  const GpHyperparams th{0.1, 0.2, 0.5, 1.5, 0.7, 0.3, 0.05};
  const GpModel m({}, Eigen::VectorXd(0), th, KernelKind::Mixed);
  const auto q = pt({0.4}, {1}, 5);
  const auto post = m.posterior(q);
  EXPECT_EQ(post.mean, 0.0);
  EXPECT_DOUBLE_EQ(post.var, k_mixed(q, q, th));
}

TEST(Posterior, SingleObservationClosedForm) {
  const GpHyperparams th{0.1, 0.2, 0.5, 1.5, 0.7, 0.3, 0.05};
  const auto z = pt({0.4, 0.9}, {1}, 3);
  Eigen::VectorXd y(1);
  y << 0.8;
  const GpModel m({z}, y, th, KernelKind::Mixed);
  const double k11 = k_mixed(z, z, th);
  const auto post = m.posterior(z);
  EXPECT_NEAR(post.mean, k11 * 0.8 / (k11 + th.noise), 1e-12);
  EXPECT_NEAR(post.var, k11 - k11 * k11 / (k11 + th.noise), 1e-12);
}

TEST(Posterior, StationaryReductionMatchesReference) {
  Rng rng(4);
  for (int trial = 0; trial < 10; ++trial) {
    auto p = random_problem(rng, 25, 2, 1, 3, 10);
    auto th = random_theta(rng);
    th.eps1 = th.eps2 = 0.0;
    const GpModel m(p.pts, p.y, th, KernelKind::Mixed);

    // stationary reference: same inputs with every round collapsed to 0
    const auto n = static_cast<Eigen::Index>(p.pts.size());
    Eigen::MatrixXd k(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j) {
        auto a = p.pts[static_cast<std::size_t>(i)], b = p.pts[static_cast<std::size_t>(j)];
        a.t = b.t = 0;
        k(i, j) = ref_kernel(a, b, th, true) + (i == j ? th.noise : 0.0);
      }
    const Eigen::MatrixXd k_inv = k.inverse();
    for (int q = 0; q < 5; ++q) {
      auto query = random_problem(rng, 1, 2, 1, 3, 20).pts.front();
      Eigen::VectorXd kq(n);
      for (Eigen::Index i = 0; i < n; ++i) {
        auto a = p.pts[static_cast<std::size_t>(i)];
        auto b = query;
        a.t = b.t = 0;
        kq(i) = ref_kernel(a, b, th, true);
      }
      const auto post = m.posterior(query);
      auto q0 = query;
      q0.t = 0;
      EXPECT_NEAR(post.mean, kq.dot(k_inv * p.y), 1e-10);
      EXPECT_NEAR(post.var, ref_kernel(q0, q0, th, true) - kq.dot(k_inv * kq), 1e-10);
    }
  }
}

TEST(Posterior, VarianceNeverGrowsWithData) {
  Rng rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    const auto th = random_theta(rng);
    auto p = random_problem(rng, 15, 2, 1, 2, 6);
    const auto queries = random_problem(rng, 10, 2, 1, 2, 8).pts;
    for (int n = 1; n < 15; ++n) {
      std::vector<GpPoint> a(p.pts.begin(), p.pts.begin() + n), b(p.pts.begin(), p.pts.begin() + n + 1);
      const GpModel ma(a, p.y.head(n), th, KernelKind::Mixed), mb(b, p.y.head(n + 1), th, KernelKind::Mixed);
      for (const auto& q : queries) EXPECT_LE(mb.posterior(q).var, ma.posterior(q).var + 1e-10);
    }
  }
}

TEST(GpModel, CholeskyReconstructsCovariance) {
  Rng rng(8);
  auto p = random_problem(rng, 40, 3, 2, 3, 12);
  const GpModel m(p.pts, p.y, random_theta(rng), KernelKind::Mixed);
  const Eigen::MatrixXd& l = m.chol_lower();
  const Eigen::MatrixXd c = m.covariance();
  EXPECT_LT((l * l.transpose() - c).norm() / c.norm(), 1e-8);
}

TEST(GpModel, JitterRescuesDuplicateInputs) {
  std::vector<GpPoint> pts(30, pt({0.5}, {0}, 1));
  const GpHyperparams th{0.0, 0.0, 1.0, 1.0, 1.0, 0.5, 1e-18};
  const GpModel m(pts, Eigen::VectorXd::Ones(30), th, KernelKind::Mixed);
  EXPECT_GT(m.jitter(), 0.0);
  EXPECT_LE(m.jitter(), 1e-4);
}

TEST(GpModel, SlidingWindowKeepsRecentPoints) {
  Rng rng(2);
  auto p = random_problem(rng, 250, 1, 1, 2, 5);
  const GpModel m(p.pts, p.y, GpHyperparams{}, KernelKind::Mixed);
  ASSERT_EQ(m.size(), kDefaultWindow);
  EXPECT_EQ(m.targets()(0), p.y(50));
  EXPECT_EQ(m.targets()(199), p.y(249));
}

TEST(LogMarginal, SinglePointZeroTarget) {
  const GpHyperparams th{0.1, 0.2, 0.5, 1.5, 0.7, 0.3, 0.05};
  const auto z = pt({0.4}, {1}, 3);
  const GpModel m({z}, Eigen::VectorXd::Zero(1), th, KernelKind::Mixed);
  const double k11 = k_mixed(z, z, th);
  EXPECT_NEAR(m.log_marginal(),
              -0.5 * std::log(k11 + th.noise) - 0.5 * std::log(2 * std::numbers::pi) + m.log_prior(), 1e-12);
}

TEST(LogMarginal, MatchesDenseGaussianDensity) {
  Rng rng(31);
  for (int trial = 0; trial < 50; ++trial) {
    const bool mixed = trial % 2 == 0;
    auto p = random_problem(rng, 2 + static_cast<int>(rng() % 20), 2, mixed ? 2 : 0, 3, 8);
    const auto th = random_theta(rng);
    const GpModel m(p.pts, p.y, th, mixed ? KernelKind::Mixed : KernelKind::Continuous);
    const auto n = static_cast<Eigen::Index>(p.pts.size());
    Eigen::MatrixXd cov(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j)
        cov(i, j) = ref_kernel(p.pts[static_cast<std::size_t>(i)], p.pts[static_cast<std::size_t>(j)], th, mixed) +
                    (i == j ? th.noise : 0.0);
    EXPECT_NEAR(m.log_marginal() - m.log_prior(), mvn_log_density(p.y, cov), 1e-8);
  }
}

TEST(LogMarginal, DoublingNoiseOnPureNoiseData) {
  Rng rng(5);
  auto p = random_problem(rng, 12, 1, 1, 2, 4);
  GpHyperparams th{0.0, 0.0, 1.0, 1e-14, 1e-14, 0.5, 0.2};
  const double a = GpModel(p.pts, p.y, th, KernelKind::Mixed).log_marginal();
  th.noise = 0.4;
  const double b = GpModel(p.pts, p.y, th, KernelKind::Mixed).log_marginal();
  const double yy = p.y.squaredNorm();
  EXPECT_NEAR(b - a, -6.0 * std::log(2.0) - 0.5 * yy * (1 / 0.4 - 1 / 0.2), 1e-9);
}

TEST(GradLogMarginal, MatchesFiniteDifferences) {
  Rng rng(77);
  for (int trial = 0; trial < 100; ++trial) {
    const auto g = cli::random_grad_instance(rng);
    for (auto kind : {KernelKind::Mixed, KernelKind::Continuous}) {
      const auto analytic = GpModel(g.points, g.y, g.theta, kind).grad_log_marginal();
      const auto numeric = cli::numeric_gradient(g, kind);
      for (std::size_t p = 0; p < kNumHyper; ++p)
        EXPECT_LT(cli::grad_relative_error(analytic[p], numeric[p]), 1e-4) << kHyperNames[p] << " trial " << trial;
    }
  }
}

TEST(GradLogMarginal, TwelvePointMixedDataset) {
  Rng rng(1212);
  auto p = random_problem(rng, 12, 2, 1, 3, 6);
  const cli::GradInstance g{p.pts, p.y, {0.2, 0.3, 0.8, 1.2, 0.9, 0.4, 0.1}};
  const auto analytic = GpModel(g.points, g.y, g.theta, KernelKind::Mixed).grad_log_marginal();
  const auto numeric = cli::numeric_gradient(g, KernelKind::Mixed);
  for (std::size_t i = 0; i < kNumHyper; ++i) EXPECT_LT(cli::grad_relative_error(analytic[i], numeric[i]), 1e-4);
}

TEST(GradLogMarginal, TimeGradientVanishesWithinOneRound) {
  Rng rng(3);
  auto p = random_problem(rng, 10, 2, 1, 2, 1);
  const auto g = GpModel(p.pts, p.y, random_theta(rng), KernelKind::Mixed).grad_log_marginal();
  EXPECT_EQ(g[kEps1], 0.0);
  EXPECT_EQ(g[kEps2], 0.0);
}

TEST(GradLogMarginal, InactiveHyperparamsHaveZeroGradient) {
  Rng rng(9);
  auto p = random_problem(rng, 10, 2, 0, 2, 5);
  const auto g = GpModel(p.pts, p.y, random_theta(rng), KernelKind::Continuous).grad_log_marginal();
  EXPECT_EQ(g[kEps2], 0.0);
  EXPECT_EQ(g[kSigma2], 0.0);
  EXPECT_EQ(g[kLambda], 0.0);
}

TEST(Fit, FewerThanTwoPointsReturnsInit) {
  const GpHyperparams init{0.3, 0.2, 0.9, 1.1, 0.8, 0.6, 0.05};
  const auto r = fit({pt({0.1}, {0}, 1)}, Eigen::VectorXd::Ones(1), init, KernelKind::Mixed, GpBounds::defaults(1), 1);
  EXPECT_EQ(r.theta.to_array(), init.to_array());
}

TEST(Fit, ImprovesOnInitAndRespectsBounds) {
  Rng rng(14);
  for (int trial = 0; trial < 10; ++trial) {
    auto p = random_problem(rng, 20, 2, 1, 2, 8);
    const auto bounds = GpBounds::defaults(2);
    const auto init = bounds.clip(random_theta(rng));
    const auto r = fit(p.pts, p.y, init, KernelKind::Mixed, bounds, 100 + trial);
    const double before = GpModel(p.pts, p.y, init, KernelKind::Mixed, bounds).log_marginal();
    EXPECT_GE(r.log_marginal, before - 1e-9);
    EXPECT_NEAR(r.log_marginal, GpModel(p.pts, p.y, r.theta, KernelKind::Mixed, bounds).log_marginal(), 1e-9);
    const auto a = r.theta.to_array();
    for (std::size_t i = 0; i < kNumHyper; ++i) {
      EXPECT_GE(a[i], bounds.lower[i]);
      EXPECT_LE(a[i], bounds.upper[i]);
    }
  }
}

TEST(Fit, LocalAscentIsDeterministic) {
  Rng rng(15);
  auto p = random_problem(rng, 15, 1, 1, 2, 5);
  FitOptions opt;
  opt.restarts = 0;
  const auto a = fit(p.pts, p.y, GpHyperparams{}, KernelKind::Mixed, GpBounds::defaults(1), 7, opt);
  const auto b = fit(p.pts, p.y, GpHyperparams{}, KernelKind::Mixed, GpBounds::defaults(1), 8, opt);
  EXPECT_EQ(a.theta.to_array(), b.theta.to_array());
}

TEST(Fit, RecoversStationaryForgettingRates) {
  // 20 datasets sampled from the stationary (eps = 0) mixed kernel
  int small = 0;
  for (int run = 0; run < 20; ++run) {
    Rng rng(500 + run);
    auto p = random_problem(rng, 40, 1, 1, 2, 10);
    const GpHyperparams truth{0.0, 0.0, 0.3, 1.0, 1.0, 0.5, 0.01};
    const GpModel prior(p.pts, Eigen::VectorXd::Zero(40), truth, KernelKind::Mixed);
    std::normal_distribution<double> z(0.0, 1.0);
    Eigen::VectorXd e(40);
    for (auto& v : e) v = z(rng);
    const Eigen::VectorXd y = prior.chol_lower() * e;
    const auto r = fit(p.pts, y, GpHyperparams{}, KernelKind::Mixed, GpBounds::defaults(1), 900 + run);
    small += (r.theta.eps1 <= 0.2 && r.theta.eps2 <= 0.2) ? 1 : 0;
  }
  EXPECT_GE(small, 16);
}

TEST(Fit, CachedEvaluationAgreesWithModel) {
  Rng rng(44);
  for (int trial = 0; trial < 20; ++trial) {
    const auto kind = trial % 2 ? KernelKind::Continuous : KernelKind::Mixed;
    auto p = random_problem(rng, 30, 2, 1, 3, 7);
    const auto th = random_theta(rng);
    const auto bounds = GpBounds::defaults(2);
    const GpModel m(p.pts, p.y, th, kind, bounds);
    const detail::PairCache cache(p.pts, p.y, kDefaultWindow);
    const detail::CachedEval ev(cache, th, kind, bounds);
    ASSERT_TRUE(ev.ok());
    EXPECT_NEAR(ev.log_marginal(), m.log_marginal(), 1e-9);
    const auto g = m.grad_log_marginal();
    const auto cg = ev.grad();
    for (std::size_t i = 0; i < kNumHyper; ++i) EXPECT_NEAR(cg[i], g[i], 1e-8 * (1 + std::abs(g[i])));
  }
}
