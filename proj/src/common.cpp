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

#include "eegalign/common.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

namespace eegalign {

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::invalid_argument: return "invalid_argument";
    case ErrorKind::missing_file: return "missing_file";
    case ErrorKind::dimension_mismatch: return "dimension_mismatch";
    case ErrorKind::unresolvable_instruction: return "unresolvable_instruction";
    case ErrorKind::missing_label: return "missing_label";
    case ErrorKind::format: return "format";
    case ErrorKind::version_mismatch: return "version_mismatch";
    case ErrorKind::io: return "io";
    case ErrorKind::numeric: return "numeric";
  }
  return "unknown";
}

double Rng::normal() {
  // u1 in (0, 1] keeps the log finite
  const double u1 = static_cast<double>((engine_() >> 11) + 1) * 0x1.0p-53;
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::string Rng::state() const {
  std::ostringstream os;
  os << engine_;
  return os.str();
}

void Rng::set_state(const std::string& text) {
  std::istringstream is(text);
  is >> engine_;
  if (is.fail()) fail(ErrorKind::format, "corrupt generator state");
}

}  // namespace eegalign
