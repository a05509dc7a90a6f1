// Copyright 2026 The posvit Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "posvit/errors.hpp"
#include "posvit/experiment.hpp"
#include "posvit/recipes.hpp"

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

struct CommandArgs {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string output_dir;
  std::vector<double> mask_ratios;
};

const char* describe(const std::string& command) {
  if (command == "train") return "Joint classification + positional-label training";
  if (command == "eval") return "Evaluate a checkpoint";
  if (command == "gradcheck") return "Finite-difference check of the joint loss gradient";
  if (command == "finetune") return "MAE pretraining (or a pretrained checkpoint) then fine-tuning with PE";
  if (command == "pretrain-mae") return "MAE pretraining with the positional head, one run per mask ratio";
  if (command == "ablate-pe") return "Grid over {no PE, PE} x {none, APL, RPL}";
  if (command == "sweep-lambda") return "Sweep the position-loss weight over 0..1.25";
  if (command == "ablate-augment") return "Grid over crop / horizontal / vertical flip with APL and RPL";
  return "";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"posvit: positional-label self-supervision for vision transformers"};
  app.require_subcommand(1);
  app.fallthrough(false);

  CommandArgs args;
  for (const std::string& name : posvit::command_names()) {
    CLI::App* sub = app.add_subcommand(name, describe(name));
    sub->add_option("--config", args.config_path, "Experiment configuration (JSON)")->check(CLI::ExistingFile);
    sub->add_option("--set", args.overrides, "Override a configuration key (key=value)")->take_all();
    sub->add_option("--output", args.output_dir, "Output directory (same as --set output_dir=...)");
    if (name == "pretrain-mae") {
      sub->add_option("--mask-ratio", args.mask_ratios, "Mask ratio; repeat for several runs")
          ->check(CLI::Range(0.0, 0.999999));
    }
  }

  if (argc > 1 && argv[1][0] != '-') {
    const auto& names = posvit::command_names();
    if (std::find(names.begin(), names.end(), argv[1]) == names.end()) {
      std::cerr << "error: unknown command '" << argv[1] << "'\n\n" << app.help();
      return kExitUsage;
    }
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  posvit::ExperimentConfig config;
  try {
    std::vector<std::string> overrides = args.overrides;
    if (!args.output_dir.empty()) overrides.push_back("output_dir=" + args.output_dir);
    config = posvit::load_experiment(args.config_path, overrides);
  } catch (const posvit::ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    posvit::RecipeOptions options;
    options.mask_ratios = args.mask_ratios;
    return posvit::run_command(command, config, options, std::cout);
  } catch (const posvit::ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}
