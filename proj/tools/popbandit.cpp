#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "popbandit/cli.hpp"

namespace cli = popbandit::cli;

int main(int argc, char** argv) {
  CLI::App app{"Population-based bandit hyperparameter optimization"};
  app.require_subcommand(1);

  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  std::optional<std::string> strategy;
  auto add_run_flags = [&](CLI::App* sub) {
    sub->add_option("config", config, "JSON run config")->required();
    sub->add_option("--seed", seed, "Run a single seed instead of the config's list");
    sub->add_option("--out", out_dir, "Output directory");
    sub->add_option("--strategy", strategy, "random | pbt | pb2-rand | pb2-mult | pb2-mix");
  };
  auto* run = app.add_subcommand("run", "Run one strategy over every seed");
  add_run_flags(run);
  auto* compare = app.add_subcommand("compare", "Run several strategies on identical seeds");
  add_run_flags(compare);

  std::uint64_t grad_seed = 0;
  cli::GradcheckOptions grad_opt;
  std::string fault;
  auto* gradcheck = app.add_subcommand("gradcheck", "Check analytic LML gradients against finite differences");
  gradcheck->add_option("--seed", grad_seed, "RNG seed");
  gradcheck->add_option("--instances", grad_opt.instances, "Number of random instances");
  gradcheck->add_option("--inject-fault", fault, "Test fixture: 'lambda-sign' negates the lambda partial")
      ->check(CLI::IsMember({"lambda-sign"}));

  cli::BanditSimArgs sim;
  std::string sim_csv;
  auto* banditsim = app.add_subcommand("bandit-sim", "Run TV.EXP3.M alone on a switching Bernoulli instance");
  banditsim->add_option("-C,--arms", sim.arms, "Number of arms");
  banditsim->add_option("-B,--plays", sim.plays, "Arms played per round");
  banditsim->add_option("-T,--horizon", sim.horizon, "Rounds");
  banditsim->add_option("-V,--changes", sim.changes, "Number of change points");
  banditsim->add_option("--seeds", sim.seeds, "Number of seeds");
  banditsim->add_option("--csv", sim_csv, "Write per-round regret CSV here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : cli::kExitConfig;
  }

  const cli::Overrides ov{seed, out_dir, strategy};
  if (*run) return cli::cmd_run(config, ov, std::cout, std::cerr);
  if (*compare) return cli::cmd_compare(config, ov, std::cout, std::cerr);
  if (*gradcheck) {
    grad_opt.flip_lambda = fault == "lambda-sign";
    return cli::cmd_gradcheck(grad_seed, grad_opt, std::cout, std::cerr);
  }
  if (!sim_csv.empty()) sim.csv = sim_csv;
  return cli::cmd_banditsim(sim, std::cout, std::cerr);
}
