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

#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "eegalign/common.hpp"
#include "eegalign/config.hpp"
#include "eegalign/instruct.hpp"

// Command implementations behind the eegalign binary. The executable only
// parses flags; everything here is callable (and tested) in-process.
namespace eegalign::cli {

struct Options {
  std::string config_path;  // empty: built-in defaults
  std::string out;          // output directory, required
  std::optional<std::uint64_t> seed;
  std::size_t threads = 1;
  bool force = false;
  std::string data;        // ETRIAL corpus directory
  std::string checkpoint;  // input checkpoint
  std::string store;       // EMBTXT embedding store
  std::vector<InstructionLevel> levels = {InstructionLevel::none, InstructionLevel::task,
                                          InstructionLevel::task_and_targets};
  std::optional<std::string> instruction;
  std::string trial;  // trial id within --data
};

inline constexpr int kExitOk = 0;
inline constexpr int kExitInternal = 1;
inline constexpr int kExitUsage = 2;

/// Distinct nonzero code per error kind.
int exit_code(ErrorKind kind) noexcept;
/// "code  meaning" lines, for --help.
std::string exit_code_table();
/// Exit codes followed by every config key with its default.
std::string help_footer();

std::vector<InstructionLevel> parse_levels(std::string_view csv);

/// Config from --config (or defaults) with the --seed override applied.
RunConfig resolve_config(const Options& options);

/// Each command writes its artifacts and exactly one run.json into
/// options.out, and prints a short human summary to `log`.
void cmd_synth(const Options& options, std::ostream& log);
void cmd_pretrain(const Options& options, std::ostream& log);
void cmd_tune(const Options& options, std::ostream& log);
void cmd_eval(const Options& options, std::ostream& log);
void cmd_infer(const Options& options, std::ostream& log);
void cmd_dump(const Options& options, std::ostream& log);

/// Dispatches by name; on failure writes one JSON line to `err` and returns
/// the matching exit code.
int run(std::string_view command, const Options& options, std::ostream& log, std::ostream& err);

/// {"error":kind,"exit_code":n,"message":...} on a single line.
std::string error_line(std::string_view kind, int code, std::string_view message);

}  // namespace eegalign::cli
