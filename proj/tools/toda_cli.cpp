// toda_cli: run, campaign and validate commands on JSON configs.

#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "toda/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Periodic loop Toda solitons by rational dressing"};
  app.require_subcommand(1);

  toda::Overrides overrides;
  std::uint64_t seed = 0;
  double fd_step = 0.0;
  auto* seed_opt = app.add_option("--seed", seed, "override the campaign seed")->check(CLI::NonNegativeNumber);
  auto* step_opt = app.add_option("--fd-step", fd_step, "override the finite-difference step")->check(CLI::PositiveNumber);
  app.add_flag("--quiet", overrides.quiet, "suppress the per-check summary");

  std::string path;
  auto* run = app.add_subcommand("run", "evaluate a solution on a grid, export it and run the checks");
  auto* camp = app.add_subcommand("campaign", "run the randomized check campaign");
  auto* val = app.add_subcommand("validate", "load and validate a config without running it");
  for (auto* sub : {run, camp, val}) {
    sub->add_option("config", path, "config file")->required();
    sub->fallthrough();
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return toda::kExitInvalid;
  }
  if (*seed_opt) overrides.seed = seed;
  if (*step_opt) overrides.fd_step = fd_step;

  if (run->parsed()) return toda::run_command(path, overrides, std::cout, std::cerr);
  if (camp->parsed()) return toda::campaign_command(path, overrides, std::cout, std::cerr);
  return toda::validate_command(path, overrides, std::cout, std::cerr);
}
