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

#include <Eigen/Core>

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "eegalign/common.hpp"

namespace eegalign {

inline constexpr std::size_t kMontageChannels = 65;
inline constexpr double kSampleRate = 200.0;
inline constexpr std::size_t kWindowSamples = 100;

template <typename T>
using SignalMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// One multichannel recording. data is channels x samples, in microvolts.
template <typename T>
struct BasicRawTrial {
  std::vector<std::string> channel_names;
  double sample_rate = 0.0;
  SignalMatrix<T> data;
  std::string subject_id;
  std::optional<std::string> label;
  std::string trial_id;
  /// Catalog key used to look up instructions and targets for this trial.
  std::string dataset;

  std::size_t channels() const { return static_cast<std::size_t>(data.rows()); }
  std::size_t samples() const { return static_cast<std::size_t>(data.cols()); }

  /// Throws unless the row count matches the channel names, the rate is
  /// positive and every sample is finite.
  void validate() const;
};

using RawTrial = BasicRawTrial<float>;

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  double norm() const;
  friend double distance(const Vec3& a, const Vec3& b);
};

/// The 65-electrode 10-10 layout every trial is mapped onto.
class Montage65 {
 public:
  /// Parses "name x y z" lines; '#' starts a comment. Positions are
  /// renormalized onto the unit sphere.
  static Montage65 parse(std::string_view text);
  static Montage65 load(const std::string& path);
  /// The bundled layout (data/montage65.txt, compiled in).
  static const Montage65& standard();

  const std::vector<std::string>& names() const { return names_; }
  const std::vector<Vec3>& positions() const { return positions_; }
  std::optional<std::size_t> index_of(std::string_view name) const;
  std::size_t size() const { return names_.size(); }

 private:
  std::vector<std::string> names_;
  std::vector<Vec3> positions_;
};

/// Inverse-distance weights for one montage electrode: at most three source
/// channels, weights summing to one.
struct InterpolationWeights {
  std::vector<std::size_t> sources;
  std::vector<double> weights;
};

/// Weights for each target electrode given source electrode positions.
std::vector<InterpolationWeights> interpolation_weights(
    const std::vector<Vec3>& targets, const std::vector<Vec3>& sources);

/// Maps a trial onto the montage. Source channel positions come from
/// source_positions first, then from the montage itself by name.
template <typename T>
BasicRawTrial<T> interpolate_montage(const BasicRawTrial<T>& trial,
                                     const Montage65& montage,
                                     const std::map<std::string, Vec3>& source_positions = {});

/// FFT-domain decimation. Upsampling is rejected.
template <typename T>
BasicRawTrial<T> resample(const BasicRawTrial<T>& trial, double target_rate);

/// Zero-phase brick-wall filter: keeps bins whose frequency lies in [lo, hi].
template <typename T>
BasicRawTrial<T> bandpass(const BasicRawTrial<T>& trial, double lo, double hi);

/// A fixed-length 65-channel window of a trial.
template <typename T>
struct BasicSegment {
  SignalMatrix<T> data;
  std::string trial_id;
  std::size_t index = 0;

  std::size_t samples() const { return static_cast<std::size_t>(data.cols()); }
};

using Segment = BasicSegment<float>;

/// Non-overlapping windows; the trailing remainder is dropped.
template <typename T>
std::vector<BasicSegment<T>> segment(const BasicRawTrial<T>& trial,
                                     std::size_t window_samples = kWindowSamples);

struct BandMask {
  double f_min = 0.0;
  double f_max = 0.0;
};

/// f_min uniform over [cutoff_lo, cutoff_hi - band_width].
BandMask sample_mask_band(Rng& rng, double cutoff_lo = 1.0, double cutoff_hi = 50.0,
                          double band_width = 6.0);

/// Zeroes, per channel, the real-FFT bins whose center frequency lies in
/// [f_min, f_max] and transforms back.
template <typename T>
BasicSegment<T> spectral_mask(const BasicSegment<T>& segment, const BandMask& band,
                              double sample_rate = kSampleRate);

struct PreprocessOptions {
  double target_rate = kSampleRate;
  double band_lo = 0.3;
  double band_hi = 40.0;
  bool filter = true;
};

/// Montage interpolation (skipped when the channels already match the
/// montage), resampling and band-pass filtering, in that order.
template <typename T>
BasicRawTrial<T> preprocess(const BasicRawTrial<T>& trial, const Montage65& montage,
                            const PreprocessOptions& options,
                            const std::map<std::string, Vec3>& source_positions = {});

}  // namespace eegalign
