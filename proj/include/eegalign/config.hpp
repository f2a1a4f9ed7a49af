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

#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "eegalign/data.hpp"
#include "eegalign/train.hpp"

namespace eegalign {

/// Everything a run needs, one struct per config-file section.
struct RunConfig {
  PreprocessOptions signal;        // [signal]
  TokenizerConfig tokenizer;       // [tokenizer] (d comes from [encoder])
  EncoderConfig encoder;           // [encoder]
  InstructConfig instruct;         // [instruct]
  TrainConfig train;               // [train]; mask_* keys live in [signal]
  SynthSpec synth;                 // [data]
  SplitPlan split;                 // [data]

  ModelConfig model() const;
  void validate() const;
};

struct ConfigKey {
  std::string section;
  std::string key;
  std::string help;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;

  std::string path() const { return section + "." + key; }
};

/// Every documented key, in file order.
const std::vector<ConfigKey>& config_schema();

/// INI text with [section] headers and key = value lines. Unknown or
/// malformed keys fail with the section and key in the message.
RunConfig parse_config(std::string_view text, const std::string& origin = "<memory>");
RunConfig load_config(const std::string& path);
std::string to_ini(const RunConfig& config);

/// "section.key" -> value for every schema key, and back. Values round-trip
/// exactly (shortest round-trip decimal for reals).
std::map<std::string, std::string> flatten(const RunConfig& config);
RunConfig unflatten(const std::map<std::string, std::string>& values);

/// Help text listing every key with its default.
std::string config_reference();

}  // namespace eegalign
