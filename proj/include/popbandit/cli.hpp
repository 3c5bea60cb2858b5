#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "gp.hpp"
#include "harness.hpp"
#include "space.hpp"
#include "strategies.hpp"

namespace popbandit::cli {

namespace fs = std::filesystem;
using nlohmann::json;

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitRuntime = 3;

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Ten significant digits.
inline std::string num(double v) {
  std::ostringstream os;
  os << std::setprecision(10) << v;
  return os.str();
}

// ---------------------------------------------------------------------------
// Run configuration
// ---------------------------------------------------------------------------

struct RunConfig {
  SearchSpace space;
  std::string objective = "sincos";
  std::vector<StrategyKind> strategies;
  int population = 4;
  int rounds = 50;
  std::vector<std::uint64_t> seeds;
  double quantile = 0.25;
  RunOptions options;
  fs::path output = "out";
};

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::string> strategy;
};

namespace detail {

template <typename T>
T field(const json& j, const char* name) {
  if (!j.contains(name)) throw ConfigError(std::string("missing field '") + name + "'");
  try {
    return j.at(name).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("field '") + name + "' has the wrong type");
  }
}

template <typename T>
T field_or(const json& j, const char* name, T fallback) {
  return j.contains(name) ? field<T>(j, name) : fallback;
}

inline void check_objective_space(const SearchSpace& space, const std::string& objective) {
  const bool ok = space.shared_continuous() && space.continuous.size() == 1 && space.categorical.size() == 1 &&
                  std::all_of(space.categorical[0].choices.begin(), space.categorical[0].choices.end(),
                              [](const std::string& c) { return c == "sin" || c == "cos"; });
  if (!ok) throw ConfigError("space is incompatible with objective '" + objective + "'");
}

}  // namespace detail

/// `multi` accepts "strategies" (list) in addition to "strategy".
inline RunConfig parse_run_config(const json& j, const Overrides& ov, bool multi) {
  using detail::field;
  using detail::field_or;
  RunConfig rc;
  try {
    rc.objective = field<std::string>(j, "objective");
    rc.population = field_or<int>(j, "B", 4);
    rc.rounds = field_or<int>(j, "T_rounds", 50);
    rc.quantile = field_or<double>(j, "quantile", 0.25);
    rc.seeds = field<std::vector<std::uint64_t>>(j, "seeds");
    rc.output = field_or<std::string>(j, "output", "out");

    if (ov.strategy) {
      rc.strategies = {parse_strategy(*ov.strategy)};
    } else if (multi && j.contains("strategies")) {
      for (const auto& s : field<std::vector<std::string>>(j, "strategies")) rc.strategies.push_back(parse_strategy(s));
    } else {
      rc.strategies = {parse_strategy(field<std::string>(j, "strategy"))};
    }
    if (rc.strategies.empty()) throw ConfigError("field 'strategies' is empty");
    if (ov.seed) rc.seeds = {*ov.seed};
    if (ov.out) rc.output = *ov.out;
    if (rc.seeds.empty()) throw ConfigError("field 'seeds' is empty");
    if (rc.population < 2) throw ConfigError("field 'B' must be >= 2");
    if (rc.rounds < 1) throw ConfigError("field 'T_rounds' must be >= 1");
    if (!(rc.quantile > 0.0 && rc.quantile <= 0.5)) throw ConfigError("field 'quantile' must lie in (0, 0.5]");

    rc.space = j.contains("space") ? SearchSpace::from_json(j.at("space")) : sincos_space();
    make_objective(rc.objective, rc.rounds);
    detail::check_objective_space(rc.space, rc.objective);

    auto& pb2 = rc.options.pb2;
    if (j.contains("acquisition")) {
      const auto& a = j.at("acquisition");
      pb2.acq.c1 = field_or<double>(a, "c1", pb2.acq.c1);
      pb2.acq.c2 = field_or<double>(a, "c2", pb2.acq.c2);
      pb2.acq.n_candidates = field_or<int>(a, "n_candidates", pb2.acq.n_candidates);
      pb2.acq.n_refine_steps = field_or<int>(a, "n_refine_steps", pb2.acq.n_refine_steps);
      pb2.acq.validate();
    }
    if (j.contains("gp")) {
      const auto& g = j.at("gp");
      pb2.fit.restarts = field_or<int>(g, "restarts", pb2.fit.restarts);
      if (g.contains("bounds"))
        for (const auto& [name, range] : g.at("bounds").items())
          pb2.bound_overrides[name] = {range.at(0).get<double>(), range.at(1).get<double>()};
      (void)pb2.bounds(1);  // validates override names and ranges
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  return rc;
}

inline json load_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config '" + path.string() + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("invalid JSON: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Output
// ---------------------------------------------------------------------------

/// Writes via a temporary sibling and renames on success.
inline void write_atomic(const fs::path& path, const std::string& content) {
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  if (ec) throw IoError("cannot create directory '" + path.parent_path().string() + "': " + ec.message());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write '" + tmp.string() + "'");
    out << content;
    if (!out.flush()) {
      fs::remove(tmp, ec);
      throw IoError("write failed for '" + tmp.string() + "'");
    }
  }
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw IoError("cannot rename into '" + path.string() + "'");
  }
}

inline std::string join_assignment(const Assignment& h) {
  std::string s;
  for (std::size_t i = 0; i < h.size(); ++i) s += (i ? "|" : "") + h[i];
  return s;
}

/// Columns: round, agent, strategy, seed, h, x_0..x_{d-1}, f, regret, cum_regret.
inline std::string runs_csv(const RunRecord& rec, std::size_t dims) {
  std::ostringstream os;
  os << "round,agent,strategy,seed,h";
  for (std::size_t i = 0; i < dims; ++i) os << ",x_" << i;
  os << ",f,regret,cum_regret\n";
  for (const auto& r : rec.rows) {
    os << r.round << ',' << r.agent << ',' << to_string(rec.strategy) << ',' << rec.seed << ','
       << join_assignment(r.config.h);
    for (std::size_t i = 0; i < dims; ++i) os << ',' << (i < r.config.x.size() ? num(r.config.x[i]) : "");
    os << ',' << num(r.f) << ',' << num(r.regret) << ',' << num(r.cum_regret) << '\n';
  }
  return os.str();
}

struct SeriesStats {
  std::vector<double> mean;
  std::vector<double> sem;
};

inline SeriesStats cumulative_stats(const std::vector<RunRecord>& recs) {
  SeriesStats s;
  if (recs.empty()) return s;
  const std::size_t n_rounds = recs.front().cumulative_regret.size();
  const double n = static_cast<double>(recs.size());
  for (std::size_t t = 0; t < n_rounds; ++t) {
    double sum = 0.0, sq = 0.0;
    for (const auto& r : recs) sum += r.cumulative_regret[t];
    const double m = sum / n;
    for (const auto& r : recs) sq += (r.cumulative_regret[t] - m) * (r.cumulative_regret[t] - m);
    s.mean.push_back(m);
    s.sem.push_back(recs.size() > 1 ? std::sqrt(sq / (n - 1.0)) / std::sqrt(n) : 0.0);
  }
  return s;
}

inline std::string summary_csv(const std::vector<RunRecord>& recs) {
  const auto s = cumulative_stats(recs);
  std::ostringstream os;
  os << "round,mean_cum_regret,sem_cum_regret,n_seeds\n";
  for (std::size_t t = 0; t < s.mean.size(); ++t)
    os << t + 1 << ',' << num(s.mean[t]) << ',' << num(s.sem[t]) << ',' << recs.size() << '\n';
  return os.str();
}

// ---------------------------------------------------------------------------
// Execution
// ---------------------------------------------------------------------------

/// POPBANDIT_THREADS if set and positive, else the core count.
inline unsigned thread_budget() {
  if (const char* env = std::getenv("POPBANDIT_THREADS")) {
    const int v = std::atoi(env);
    if (v > 0) return static_cast<unsigned>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs fn(i) for i in [0, n) on up to `threads` workers; rethrows the first
/// failure by index.
template <typename Fn>
void parallel_for(std::size_t n, unsigned threads, Fn&& fn) {
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const unsigned k = std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(n, 1)));
  if (k <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned i = 0; i < k; ++i) pool.emplace_back(worker);
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

inline std::vector<RunRecord> run_seeds(const RunConfig& rc, StrategyKind strategy) {
  const auto objective = make_objective(rc.objective, rc.rounds);
  std::vector<RunRecord> recs(rc.seeds.size());
  parallel_for(rc.seeds.size(), thread_budget(), [&](std::size_t i) {
    recs[i] = run_experiment(rc.space, objective, strategy, rc.population, rc.rounds, rc.quantile, rc.seeds[i],
                             rc.options);
  });
  return recs;
}

template <typename Body>
int guarded(std::ostream& err, Body&& body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "runtime error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

inline std::string runs_filename(StrategyKind s, std::uint64_t seed) {
  return to_string(s) + "_seed" + std::to_string(seed) + ".csv";
}

/// One runs CSV per seed plus `<strategy>_summary.csv`.
inline int cmd_run(const fs::path& config_path, const Overrides& ov, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const RunConfig rc = parse_run_config(load_json(config_path), ov, false);
    const StrategyKind strategy = rc.strategies.front();
    const auto recs = run_seeds(rc, strategy);
    const std::size_t dims = rc.space.max_continuous_dims();
    for (const auto& r : recs) write_atomic(rc.output / runs_filename(strategy, r.seed), runs_csv(r, dims));
    write_atomic(rc.output / (to_string(strategy) + "_summary.csv"), summary_csv(recs));

    const auto s = cumulative_stats(recs);
    out << to_string(strategy) << ": final cumulative regret " << num(s.mean.back()) << " +/- " << num(s.sem.back())
        << " (" << recs.size() << " seeds)\n";
    return kExitOk;
  });
}

/// Wide `compare.csv`: round plus one mean cumulative-regret column per strategy.
inline int cmd_compare(const fs::path& config_path, const Overrides& ov, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const RunConfig rc = parse_run_config(load_json(config_path), ov, true);
    std::vector<SeriesStats> stats;
    for (auto s : rc.strategies) stats.push_back(cumulative_stats(run_seeds(rc, s)));

    std::ostringstream os;
    os << "round";
    for (auto s : rc.strategies) os << ',' << to_string(s);
    os << '\n';
    for (int t = 0; t < rc.rounds; ++t) {
      os << t + 1;
      for (const auto& st : stats) os << ',' << num(st.mean[static_cast<std::size_t>(t)]);
      os << '\n';
    }
    write_atomic(rc.output / "compare.csv", os.str());

    std::vector<std::size_t> order(rc.strategies.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return stats[a].mean.back() < stats[b].mean.back(); });
    out << "final cumulative regret (best first):\n";
    for (auto i : order)
      out << "  " << to_string(rc.strategies[i]) << ' ' << num(stats[i].mean.back()) << " +/- "
          << num(stats[i].sem.back()) << '\n';
    return kExitOk;
  });
}

// ---------------------------------------------------------------------------
// Gradient check
// ---------------------------------------------------------------------------

struct GradInstance {
  std::vector<GpPoint> points;
  Eigen::VectorXd y;
  GpHyperparams theta;
};

/// Random mixed dataset (N <= 15) with hyperparameters away from the box edges.
inline GradInstance random_grad_instance(Rng& rng) {
  std::uniform_int_distribution<int> n_pts(2, 15), n_dims(1, 3), n_cat(1, 2), n_choice(2, 3), round(1, 6);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto in = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

  GradInstance g;
  const int n = n_pts(rng), d = n_dims(rng), c = n_cat(rng), k = n_choice(rng);
  g.y.resize(n);
  for (int i = 0; i < n; ++i) {
    GpPoint p;
    p.x.resize(d);
    for (int j = 0; j < d; ++j) p.x(j) = unit(rng);
    for (int j = 0; j < c; ++j) p.h.push_back(std::uniform_int_distribution<int>(0, k - 1)(rng));
    p.t = round(rng);
    g.points.push_back(std::move(p));
    g.y(i) = normal(rng);
  }
  g.theta = {in(0.05, 0.45), in(0.05, 0.45), in(0.2, 3.0), in(0.3, 3.0), in(0.3, 3.0), in(0.05, 0.95), in(0.01, 0.5)};
  return g;
}

inline double grad_relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-3});
}

/// Central differences of log_marginal, one per hyperparameter.
inline HyperVector numeric_gradient(const GradInstance& g, KernelKind kind, double step = 1e-6) {
  HyperVector out{};
  const auto base = g.theta.to_array();
  for (std::size_t p = 0; p < kNumHyper; ++p) {
    auto hi = base, lo = base;
    hi[p] += step;
    lo[p] -= step;
    const double fh = GpModel(g.points, g.y, GpHyperparams::from_array(hi), kind).log_marginal();
    const double fl = GpModel(g.points, g.y, GpHyperparams::from_array(lo), kind).log_marginal();
    out[p] = (fh - fl) / (2.0 * step);
  }
  return out;
}

inline json instance_json(const GradInstance& g) {
  json pts = json::array();
  for (const auto& p : g.points)
    pts.push_back({{"x", std::vector<double>(p.x.data(), p.x.data() + p.x.size())}, {"h", p.h}, {"t", p.t}});
  const auto th = g.theta.to_array();
  json theta;
  for (std::size_t i = 0; i < kNumHyper; ++i) theta[kHyperNames[i]] = th[i];
  return {{"points", pts}, {"y", std::vector<double>(g.y.data(), g.y.data() + g.y.size())}, {"theta", theta}};
}

struct GradcheckOptions {
  int instances = 100;
  double tolerance = 1e-4;
  bool flip_lambda = false;  // mutation fixture: negate the λ partial
};

inline int cmd_gradcheck(std::uint64_t seed, const GradcheckOptions& opt, std::ostream& out, std::ostream& err) {
  Rng rng(seed);
  HyperVector worst{};
  std::optional<GradInstance> offender;
  for (int i = 0; i < opt.instances; ++i) {
    const GradInstance g = random_grad_instance(rng);
    HyperVector analytic = GpModel(g.points, g.y, g.theta, KernelKind::Mixed).grad_log_marginal();
    if (opt.flip_lambda) analytic[kLambda] = -analytic[kLambda];
    const HyperVector numeric = numeric_gradient(g, KernelKind::Mixed);
    for (std::size_t p = 0; p < kNumHyper; ++p) {
      const double e = grad_relative_error(analytic[p], numeric[p]);
      worst[p] = std::max(worst[p], e);
      if (e >= opt.tolerance && !offender) offender = g;
    }
  }
  bool ok = true;
  for (std::size_t p = 0; p < kNumHyper; ++p) {
    out << std::left << std::setw(12) << kHyperNames[p] << " max_rel_err " << num(worst[p]) << '\n';
    ok = ok && worst[p] < opt.tolerance;
  }
  if (!ok) {
    err << "gradient check failed; first offending instance:\n" << instance_json(*offender).dump(2) << '\n';
    return kExitFailure;
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// Bandit simulation
// ---------------------------------------------------------------------------

struct BanditSimArgs {
  int arms = 2;
  int plays = 1;
  int horizon = 500;
  int changes = 0;
  int seeds = 50;
  std::optional<fs::path> csv;
};

/// Late-half per-round regret at least 25% below the first quarter.
inline bool sublinear_proxy(const BanditSimResult& r, int horizon, double* early = nullptr, double* late = nullptr) {
  const double e = BanditSimResult::window_mean(r.regret, 0, horizon / 4);
  const double l = BanditSimResult::window_mean(r.regret, horizon / 2, horizon);
  if (early) *early = e;
  if (late) *late = l;
  return l <= 0.75 * e;
}

inline int cmd_banditsim(const BanditSimArgs& a, std::ostream& out, std::ostream& err) {
  try {
    new_bandit(a.arms, a.plays, a.horizon);
    if (a.changes < 0 || a.changes >= a.horizon) throw std::invalid_argument("V must satisfy 0 <= V < T");
    if (a.seeds < 1) throw std::invalid_argument("seeds must be >= 1");
    if (a.horizon < 4) throw std::invalid_argument("T must be >= 4");
  } catch (const std::invalid_argument& e) {
    err << "invalid flags: " << e.what() << '\n';
    return kExitConfig;
  }
  return guarded(err, [&] {
    std::vector<std::uint64_t> seeds(static_cast<std::size_t>(a.seeds));
    std::iota(seeds.begin(), seeds.end(), 0);
    const auto inst = switching_bernoulli(a.arms, a.horizon, a.changes);
    const auto tv = bandit_sim(inst, a.plays, a.horizon, seeds);
    const auto uni = bandit_sim(inst, a.plays, a.horizon, seeds, BanditPolicy::Uniform);

    if (a.csv) {
      std::ostringstream os;
      os << "round,regret,cum_regret,best_inclusion,uniform_regret\n";
      double cum = 0.0;
      for (int t = 0; t < a.horizon; ++t) {
        const auto i = static_cast<std::size_t>(t);
        cum += tv.regret[i];
        os << t + 1 << ',' << num(tv.regret[i]) << ',' << num(cum) << ',' << num(tv.best_inclusion[i]) << ','
           << num(uni.regret[i]) << '\n';
      }
      write_atomic(*a.csv, os.str());
    }

    double early = 0.0, late = 0.0;
    const bool pass = sublinear_proxy(tv, a.horizon, &early, &late);
    out << "cumulative regret: tv.exp3.m " << num(tv.cumulative()) << ", uniform " << num(uni.cumulative()) << '\n';
    out << "sublinear-proxy: " << (pass ? "pass" : "fail") << " (early " << num(early) << ", late " << num(late)
        << ")\n";
    if (a.changes > 0) {
      const double freq = BanditSimResult::window_mean(tv.best_inclusion, a.horizon * 3 / 4, a.horizon);
      out << "tracking-frequency: " << num(freq) << " (final quarter, current best arm)\n";
    }
    return kExitOk;
  });
}

}  // namespace popbandit::cli
