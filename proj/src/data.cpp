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

#include "eegalign/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <numbers>
#include <set>

namespace eegalign {

SynthClass SynthClass::parse(std::string_view text) {
  const auto a = text.find(':');
  const auto b = a == std::string_view::npos ? a : text.find(':', a + 1);
  if (b == std::string_view::npos || a == 0 || b + 1 >= text.size()) {
    fail(ErrorKind::invalid_argument,
         "synthetic class \"" + std::string(text) + "\" is not name:carrier:electrode");
  }
  SynthClass c;
  c.name = std::string(text.substr(0, a));
  const std::string hz(text.substr(a + 1, b - a - 1));
  try {
    std::size_t used = 0;
    c.carrier_hz = std::stod(hz, &used);
    if (used != hz.size()) throw std::invalid_argument(hz);
  } catch (const std::exception&) {
    fail(ErrorKind::invalid_argument, "synthetic class \"" + std::string(text) + "\": bad carrier " + hz);
  }
  c.center = std::string(text.substr(b + 1));
  return c;
}

std::string SynthClass::to_string() const {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, carrier_hz);
  return name + ":" + std::string(buf, end) + ":" + center;
}

void SynthSpec::validate() const {
  require(!dataset.empty(), "synth: dataset name is empty");
  require(!classes.empty(), "synth: no classes");
  require(subjects >= 1 && trials_per_subject_per_class >= 1, "synth: counts must be at least 1");
  require(duration_s > 0.0, "synth: duration must be positive");
  require(noise_sigma >= 0.0, "synth: noise_sigma must be nonnegative");
  require(0.0 < gain_lo && gain_lo <= gain_hi, "synth: need 0 < gain_lo <= gain_hi");
  require(spatial_width > 0.0 && spatial_floor >= 0.0 && spatial_floor <= 1.0,
          "synth: bad spatial weighting");
  std::set<std::string> names;
  std::set<double> carriers;
  for (const auto& c : classes) {
    require(names.insert(c.name).second, "synth: duplicate class " + c.name);
    require(carriers.insert(c.carrier_hz).second, "synth: duplicate carrier for class " + c.name);
    require(c.carrier_hz > 0.0 && c.carrier_hz < kSampleRate / 2.0,
            "synth: carrier of class " + c.name + " must lie below Nyquist");
    require(Montage65::standard().index_of(c.center).has_value(),
            "synth: unknown center electrode " + c.center + " for class " + c.name);
  }
}

std::vector<double> SynthSpec::spatial_weights(std::size_t c, const Montage65& montage) const {
  const Vec3 center = montage.positions()[*montage.index_of(classes.at(c).center)];
  std::vector<double> w;
  w.reserve(montage.size());
  for (const auto& p : montage.positions()) {
    const double d = distance(p, center);
    w.push_back(spatial_floor + (1.0 - spatial_floor) * std::exp(-d * d / (2.0 * spatial_width * spatial_width)));
  }
  return w;
}

std::vector<RawTrial> generate_synthetic(const SynthSpec& spec, std::uint64_t seed) {
  spec.validate();
  const Montage65& montage = Montage65::standard();
  const auto samples = static_cast<Eigen::Index>(std::llround(spec.duration_s * kSampleRate));
  const auto channels = static_cast<Eigen::Index>(montage.size());
  const std::uint64_t tag = fnv1a64(spec.dataset);

  std::vector<std::vector<double>> weights;
  for (std::size_t c = 0; c < spec.classes.size(); ++c) weights.push_back(spec.spatial_weights(c, montage));

  std::vector<RawTrial> out;
  out.reserve(spec.subjects * spec.trials_per_subject_per_class * spec.classes.size());
  char buf[64];
  for (std::size_t s = 0; s < spec.subjects; ++s) {
    Rng subject_rng(derive_seed(seed, tag, s + 1));
    const double gain = subject_rng.uniform(spec.gain_lo, spec.gain_hi);
    std::snprintf(buf, sizeof buf, "S%02zu", s + 1);
    const std::string subject = buf;
    std::size_t ordinal = 0;
    for (std::size_t r = 0; r < spec.trials_per_subject_per_class; ++r) {
      for (std::size_t c = 0; c < spec.classes.size(); ++c, ++ordinal) {
        Rng rng(derive_seed(seed, tag, s + 1, ordinal + 1));
        const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
        const double omega = 2.0 * std::numbers::pi * spec.classes[c].carrier_hz / kSampleRate;
        RawTrial t;
        t.channel_names = montage.names();
        t.sample_rate = kSampleRate;
        t.subject_id = subject;
        t.label = spec.classes[c].name;
        t.dataset = spec.dataset;
        std::snprintf(buf, sizeof buf, "-T%04zu", ordinal);
        t.trial_id = spec.dataset + "-" + subject + buf;
        t.data.resize(channels, samples);
        for (Eigen::Index ch = 0; ch < channels; ++ch) {
          const double amp = gain * weights[c][static_cast<std::size_t>(ch)];
          for (Eigen::Index i = 0; i < samples; ++i) {
            const double v = amp * std::sin(omega * static_cast<double>(i) + phase) + spec.noise_sigma * rng.normal();
            t.data(ch, i) = static_cast<float>(v);
          }
        }
        out.push_back(std::move(t));
      }
    }
  }
  return out;
}

const char* to_string(SplitMode mode) {
  return mode == SplitMode::cross_subject ? "cross_subject" : "multi_subject";
}

SplitMode parse_split_mode(std::string_view text) {
  if (text == "cross_subject") return SplitMode::cross_subject;
  if (text == "multi_subject") return SplitMode::multi_subject;
  fail(ErrorKind::invalid_argument,
       "unknown split mode \"" + std::string(text) + "\" (expected cross_subject or multi_subject)");
}

void SplitPlan::validate() const {
  require(train_fraction > 0.0 && train_fraction < 1.0, "split: train_fraction must lie in (0, 1)");
  require(val_fraction > 0.0 && val_fraction < 1.0, "split: val_fraction must lie in (0, 1)");
}

namespace {

std::size_t rounded_count(double fraction, std::size_t n) {
  return static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
}

// subject id -> corpus indices, subjects in order of first appearance
std::vector<std::pair<std::string, std::vector<std::size_t>>> group_by_subject(
    const std::vector<RawTrial>& corpus) {
  std::vector<std::pair<std::string, std::vector<std::size_t>>> groups;
  std::map<std::string, std::size_t> slot;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    auto [it, fresh] = slot.emplace(corpus[i].subject_id, groups.size());
    if (fresh) groups.emplace_back(corpus[i].subject_id, std::vector<std::size_t>{});
    groups[it->second].second.push_back(i);
  }
  return groups;
}

}  // namespace

SplitIndices split_cross_subject(const std::vector<RawTrial>& corpus, const SplitPlan& plan) {
  plan.validate();
  const auto groups = group_by_subject(corpus);
  const std::size_t n = groups.size();
  if (n < 3) {
    fail(ErrorKind::invalid_argument,
         "cross-subject split needs at least 3 subjects, corpus has " + std::to_string(n));
  }
  const std::size_t n_tv = plan.subject_boundary ? *plan.subject_boundary : rounded_count(plan.train_fraction, n);
  if (n_tv < 2 || n_tv >= n) {
    fail(ErrorKind::invalid_argument, "cross-subject split: " + std::to_string(n_tv) + " of " +
                                          std::to_string(n) +
                                          " subjects for train/val leaves a partition empty");
  }
  const std::size_t n_val = std::clamp<std::size_t>(rounded_count(plan.val_fraction, n_tv), 1, n_tv - 1);

  std::vector<int> role(corpus.size());
  for (std::size_t g = 0; g < n; ++g) {
    const int r = g >= n_tv ? 2 : (g >= n_tv - n_val ? 1 : 0);
    for (auto i : groups[g].second) role[i] = r;
  }
  SplitIndices out;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    (role[i] == 0 ? out.train : role[i] == 1 ? out.val : out.test).push_back(i);
  }
  return out;
}

SplitIndices split_multi_subject(const std::vector<RawTrial>& corpus, const SplitPlan& plan) {
  plan.validate();
  require(!corpus.empty(), "multi-subject split: empty corpus");
  std::vector<int> role(corpus.size());
  for (const auto& [subject, trials] : group_by_subject(corpus)) {
    const std::size_t n = trials.size();
    if (n < 4) {
      fail(ErrorKind::invalid_argument, "multi-subject split: subject " + subject + " has " +
                                            std::to_string(n) + " trials, need at least 4");
    }
    const auto n_tv = std::clamp<std::size_t>(
        static_cast<std::size_t>(std::floor(plan.train_fraction * static_cast<double>(n))), 2, n - 1);
    const std::size_t n_val = std::clamp<std::size_t>(rounded_count(plan.val_fraction, n_tv), 1, n_tv - 1);
    for (std::size_t k = 0; k < n; ++k) role[trials[k]] = k >= n_tv ? 2 : (k >= n_tv - n_val ? 1 : 0);
  }
  SplitIndices out;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    (role[i] == 0 ? out.train : role[i] == 1 ? out.val : out.test).push_back(i);
  }
  return out;
}

SplitIndices split(const std::vector<RawTrial>& corpus, const SplitPlan& plan) {
  return plan.mode == SplitMode::cross_subject ? split_cross_subject(corpus, plan)
                                               : split_multi_subject(corpus, plan);
}

SegmentStack prepare_trial(const RawTrial& trial, const PreprocessOptions& options, std::size_t window) {
  const RawTrial clean = preprocess(trial, Montage65::standard(), options);
  const auto segments = segment(clean, window);
  if (segments.empty()) {
    fail(ErrorKind::dimension_mismatch, "trial " + trial.trial_id + " is shorter than one " +
                                            std::to_string(window) + "-sample window");
  }
  return to_segment_stack(segments);
}

}  // namespace eegalign
