/*
 * Copyright (c) 2026 The eegalign Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <iostream>

#include <CLI11.hpp>

#include "eegalign/cli.hpp"

namespace cli = eegalign::cli;

int main(int argc, char** argv) {
  CLI::App app{"eegalign: instruction-aligned EEG decoding (synthesis, pretraining, tuning, evaluation)"};
  app.require_subcommand(1, 1);
  app.footer(cli::help_footer());

  cli::Options options;
  std::uint64_t seed = 0;
  std::string levels = "none,task,task_and_targets";
  std::string instruction;
  std::vector<CLI::Option*> seed_flags;
  CLI::Option* instruction_flag = nullptr;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", options.config_path, "INI config file (defaults when omitted)");
    sub->add_option("--out", options.out, "output directory (receives run.json)")->required();
    seed_flags.push_back(sub->add_option("--seed", seed, "override [train] seed"));
    sub->add_option("--threads", options.threads, "worker threads; 1 is the deterministic mode")
        ->capture_default_str();
    sub->add_flag("--force", options.force, "reuse a non-empty output directory");
  };
  auto needs_data = [&](CLI::App* sub) {
    sub->add_option("--data", options.data, "ETRIAL corpus directory")->required();
  };
  auto needs_model = [&](CLI::App* sub, bool required) {
    auto* opt = sub->add_option("--checkpoint", options.checkpoint, "input checkpoint");
    if (required) opt->required();
    sub->add_option("--store", options.store, "EMBTXT embedding store (pseudo-embeddings when omitted)");
  };

  auto* synth = app.add_subcommand("synth", "write a synthetic ETRIAL corpus from the [data] section");
  common(synth);

  auto* pretrain = app.add_subcommand("pretrain", "self-supervised pretraining (resumes from --checkpoint)");
  common(pretrain);
  needs_data(pretrain);
  pretrain->add_option("--checkpoint", options.checkpoint, "pretraining checkpoint to resume");

  auto* tune = app.add_subcommand("tune", "instruction tuning on top of a pretrained (or tuned, to resume) checkpoint");
  common(tune);
  needs_data(tune);
  needs_model(tune, true);

  auto* eval = app.add_subcommand("eval", "balanced accuracy and kappa on the test split per instruction level");
  common(eval);
  needs_data(eval);
  needs_model(eval, true);
  eval->add_option("--levels", levels, "comma-separated: none,task,task_and_targets")->capture_default_str();

  auto* infer = app.add_subcommand("infer", "predict one trial; prints the class and per-class scores");
  common(infer);
  needs_data(infer);
  needs_model(infer, true);
  infer->add_option("--trial", options.trial, "trial id within --data")->required();
  instruction_flag = infer->add_option("--instruction", instruction, "catalog instruction text (default: task and targets)");

  auto* dump = app.add_subcommand("dump", "write test-split embeddings and prototypes as CSV");
  common(dump);
  needs_data(dump);
  needs_model(dump, true);
  dump->add_option("--levels", levels, "comma-separated instruction levels")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << cli::error_line("usage", cli::kExitUsage, e.what()) << std::endl;
    return cli::kExitUsage;
  }

  CLI::App* chosen = app.get_subcommands().front();
  for (auto* flag : seed_flags) {
    if (flag->count()) options.seed = seed;
  }
  if (instruction_flag->count()) options.instruction = instruction;
  try {
    if (chosen == eval || chosen == dump) options.levels = cli::parse_levels(levels);
  } catch (const eegalign::Error& e) {
    std::cerr << cli::error_line("usage", cli::kExitUsage, e.what()) << std::endl;
    return cli::kExitUsage;
  }
  return cli::run(chosen->get_name(), options, std::cout, std::cerr);
}
