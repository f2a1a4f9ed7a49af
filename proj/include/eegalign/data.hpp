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

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "eegalign/model.hpp"
#include "eegalign/signal.hpp"

namespace eegalign {

/// One synthetic class: a sinusoidal carrier whose amplitude peaks around a
/// montage electrode.
struct SynthClass {
  std::string name;
  double carrier_hz = 10.0;
  std::string center = "Cz";

  /// "name:carrier:electrode", e.g. "Left:6:C4".
  static SynthClass parse(std::string_view text);
  std::string to_string() const;
};

struct SynthSpec {
  std::string dataset = "BCIC-IV2a";
  std::vector<SynthClass> classes = {
      {"Left", 6.0, "C4"}, {"Right", 10.0, "C3"}, {"Foot", 14.0, "Cz"}, {"Tongue", 20.0, "FCz"}};
  std::size_t subjects = 8;
  std::size_t trials_per_subject_per_class = 10;
  double duration_s = 2.0;
  double noise_sigma = 1.0;
  double gain_lo = 0.5;
  double gain_hi = 1.5;
  /// Gaussian width (chord distance on the unit sphere) of the spatial bump.
  double spatial_width = 0.5;
  /// Amplitude floor of the spatial weight away from the center electrode.
  double spatial_floor = 0.3;

  void validate() const;
  /// Per-channel weight vector of class c over the montage.
  std::vector<double> spatial_weights(std::size_t c, const Montage65& montage) const;
};

/// Trials ordered subject-major, then repetition, then class. Gain is drawn
/// per subject and phase per trial from substreams of seed, so the corpus is
/// a pure function of (spec, seed).
std::vector<RawTrial> generate_synthetic(const SynthSpec& spec, std::uint64_t seed);

enum class SplitMode { cross_subject, multi_subject };

const char* to_string(SplitMode mode);
SplitMode parse_split_mode(std::string_view text);

struct SplitPlan {
  SplitMode mode = SplitMode::cross_subject;
  /// Share of subjects (cross-subject) or of each subject's trials
  /// (multi-subject) kept for train/val.
  double train_fraction = 0.8;
  double val_fraction = 0.2;
  /// Cross-subject only: explicit count of leading train/val subjects,
  /// overriding train_fraction.
  std::optional<std::size_t> subject_boundary;

  void validate() const;
};

/// Corpus indices per partition, each in corpus order.
struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
};

/// Subjects in order of first appearance; the leading ones form train/val,
/// the rest test. Validation is the trailing subjects of the train/val set.
SplitIndices split_cross_subject(const std::vector<RawTrial>& corpus, const SplitPlan& plan);
/// Per subject in manifest order: leading trials train/val (the last of them
/// validation), trailing trials test.
SplitIndices split_multi_subject(const std::vector<RawTrial>& corpus, const SplitPlan& plan);
SplitIndices split(const std::vector<RawTrial>& corpus, const SplitPlan& plan);

/// Preprocessing + segmentation of one trial into model input.
SegmentStack prepare_trial(const RawTrial& trial, const PreprocessOptions& options,
                           std::size_t window = kWindowSamples);

}  // namespace eegalign
