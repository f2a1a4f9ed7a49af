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

#include <string>
#include <vector>

#include "eegalign/signal.hpp"

namespace eegalign::etrial {

inline constexpr int kFormatVersion = 1;

/// Reads an ETRIAL v1 corpus: <dir>/manifest.json plus one little-endian
/// float32 C x T row-major binary per trial. Trials come back in manifest
/// order.
std::vector<RawTrial> read_corpus(const std::string& dir);

/// Writes the corpus under dir (created if needed). Binary files are
/// data/<6-digit index>.f32 so that output bytes depend only on trial content
/// and order.
void write_corpus(const std::string& dir, const std::vector<RawTrial>& trials);

}  // namespace eegalign::etrial
