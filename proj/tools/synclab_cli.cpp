// synclab: train, verify and compare from the command line.

#include <iostream>

#include <CLI11.hpp>

#include "synclab/runner.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Sync-GRPO desk laboratory"};
  app.require_subcommand(1);

  std::string config;
  std::vector<std::string> overrides;
  auto* train = app.add_subcommand("train", "run one training job");
  train->add_option("--config", config, "YAML run config")->required();
  train->add_option("--set", overrides, "dotted override, e.g. grpo.steps=50")->take_all();

  synclab::VerifyOptions verify_opts;
  auto* verify = app.add_subcommand("verify", "run a theory verification suite");
  verify->add_option("--suite", verify_opts.suite, "theorem1|snr|truncated|mills|stability|all");
  verify->add_option("--seed", verify_opts.seed, "base seed");
  verify->add_option("--csv", verify_opts.csv_path, "report path");
  verify->add_flag("--inject-failure", verify_opts.inject_failure,
                   "append a row that must fail (harness check)");

  synclab::CompareOptions cmp;
  double target = 0.0;
  auto* compare = app.add_subcommand("compare", "paired runs; trajectories to reach a reward level");
  compare->add_option("--a", cmp.config_a, "baseline config")->required();
  compare->add_option("--b", cmp.config_b, "candidate config")->required();
  auto* target_opt = compare->add_option("--target", target, "absolute reward level");
  compare->add_option("--target-fraction", cmp.target_fraction,
                      "fraction of run a's final reward, used without --target");
  compare->add_option("--set", cmp.overrides, "override applied to both configs")->take_all();
  compare->add_option("--csv", cmp.csv_path, "convergence CSV path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? synclab::kExitOk : synclab::kExitUsage;
  }

  if (*train) return synclab::cli_train(config, overrides, std::cout, std::cerr);
  if (*verify) return synclab::cli_verify(verify_opts, std::cout, std::cerr);
  if (*target_opt) cmp.target = target;
  return synclab::cli_compare(cmp, std::cout, std::cerr);
}
