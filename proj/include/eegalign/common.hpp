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
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace eegalign {

/// Failure categories. The CLI maps each one to a distinct exit code.
enum class ErrorKind {
  invalid_argument,
  missing_file,
  dimension_mismatch,
  unresolvable_instruction,
  missing_label,
  format,
  version_mismatch,
  io,
  numeric,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

// The literal overload keeps hot-path checks from building a string.
inline void require(bool ok, const char* what) {
  if (!ok) fail(ErrorKind::invalid_argument, what);
}
inline void require(bool ok, const std::string& what) {
  if (!ok) fail(ErrorKind::invalid_argument, what);
}

const char* to_string(ErrorKind kind) noexcept;

/// splitmix64 finalizer; also used to derive independent substreams.
constexpr std::uint64_t splitmix64(std::uint64_t& state) noexcept {
  state += 0x9E3779B97F4A7C15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Mixes a seed with up to three stream identifiers into a new seed.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a,
                                    std::uint64_t b = 0,
                                    std::uint64_t c = 0) noexcept {
  std::uint64_t s = seed;
  std::uint64_t out = splitmix64(s);
  for (std::uint64_t v : {a, b, c}) {
    s ^= v + 0x632BE59BD9B4E019ULL + (out << 6) + (out >> 2);
    out = splitmix64(s);
  }
  return out;
}

/// 64-bit FNV-1a over raw bytes.
constexpr std::uint64_t fnv1a64(std::string_view bytes) noexcept {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 0x100000001B3ULL;
  }
  return h;
}

/// Seeded generator. The engine is std::mt19937_64 (portable output); the
/// uniform and normal transforms are implemented here so that draws are
/// identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n).
  std::size_t index(std::size_t n) {
    return static_cast<std::size_t>(uniform() * static_cast<double>(n));
  }

  /// Standard normal via Box-Muller (one draw per call, no cached spare).
  double normal();

  std::string state() const;
  void set_state(const std::string& text);

 private:
  std::mt19937_64 engine_;
};

}  // namespace eegalign
