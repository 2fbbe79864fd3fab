#include <cstdint>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "homoglab/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"homoglab: quantitative homogenization workbench"};
  std::string command, config;
  homoglab::RunFlags flags;
  std::string out;
  int count = 0;
  app.add_option("command", command, "corrector | homogenize | rho | rate | lipschitz | w1p | boundary | flatness | lemma-fuzz")
      ->required()
      ->check(CLI::IsMember(homoglab::command_names()));
  app.add_option("config", config, "experiment config file")->required()->check(CLI::ExistingFile);
  app.add_flag("--strict", flags.strict, "exit 3 when a pass flag fails");
  app.add_option("--seed", flags.seed, "random seed");
  app.add_option("--out", out, "output directory (overrides [output] dir)");
  app.add_flag("--override-resolution", flags.override_resolution, "skip the h <= eps/8 resolution rule");
  app.add_option("--count", count, "lemma-fuzz instances per case")->check(CLI::PositiveNumber);
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }
  if (!out.empty()) flags.out = out;
  if (count > 0) flags.count = count;
  return homoglab::run(command, std::filesystem::path(config), flags);
}
