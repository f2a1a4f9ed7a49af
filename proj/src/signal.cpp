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

#include "eegalign/signal.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "eegalign/fft.hpp"
#include "eegalign_resources.hpp"

namespace eegalign {

template <typename T>
void BasicRawTrial<T>::validate() const {
  if (channel_names.size() != channels()) {
    fail(ErrorKind::dimension_mismatch,
         "trial " + trial_id + ": " + std::to_string(channels()) + " data rows but " +
             std::to_string(channel_names.size()) + " channel names");
  }
  if (!(sample_rate > 0.0)) {
    fail(ErrorKind::invalid_argument, "trial " + trial_id + ": sample_rate must be positive");
  }
  if (!data.allFinite()) {
    fail(ErrorKind::numeric, "trial " + trial_id + ": non-finite samples");
  }
}

double Vec3::norm() const { return std::sqrt(x * x + y * y + z * z); }

double distance(const Vec3& a, const Vec3& b) {
  const double dx = a.x - b.x, dy = a.y - b.y, dz = a.z - b.z;
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

Montage65 Montage65::parse(std::string_view text) {
  Montage65 m;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  std::set<std::string> seen;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream fields(line);
    std::string name;
    if (!(fields >> name)) continue;
    Vec3 p;
    if (!(fields >> p.x >> p.y >> p.z)) {
      fail(ErrorKind::format, "montage line " + std::to_string(line_no) + ": expected name x y z");
    }
    const double n = p.norm();
    if (!(n > 0.0)) {
      fail(ErrorKind::format, "montage line " + std::to_string(line_no) + ": zero position");
    }
    p = {p.x / n, p.y / n, p.z / n};
    if (!seen.insert(name).second) {
      fail(ErrorKind::format, "montage: duplicate electrode " + name);
    }
    m.names_.push_back(name);
    m.positions_.push_back(p);
  }
  if (m.names_.size() != kMontageChannels) {
    fail(ErrorKind::format, "montage must list exactly 65 electrodes, got " +
                                std::to_string(m.names_.size()));
  }
  return m;
}

Montage65 Montage65::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::missing_file, "cannot open montage file " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

const Montage65& Montage65::standard() {
  static const Montage65 m = parse(resources::montage65);
  return m;
}

std::optional<std::size_t> Montage65::index_of(std::string_view name) const {
  auto it = std::find(names_.begin(), names_.end(), name);
  if (it == names_.end()) return std::nullopt;
  return static_cast<std::size_t>(it - names_.begin());
}

std::vector<InterpolationWeights> interpolation_weights(const std::vector<Vec3>& targets,
                                                        const std::vector<Vec3>& sources) {
  require(!sources.empty(), "interpolation needs at least one source channel");
  constexpr std::size_t kNeighbours = 3;
  constexpr double kCoincident = 1e-12;
  std::vector<InterpolationWeights> out;
  out.reserve(targets.size());
  std::vector<std::size_t> order(sources.size());
  std::vector<double> dist(sources.size());
  for (const auto& target : targets) {
    for (std::size_t i = 0; i < sources.size(); ++i) dist[i] = distance(target, sources[i]);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return dist[a] < dist[b]; });
    InterpolationWeights w;
    if (dist[order[0]] <= kCoincident) {
      w.sources = {order[0]};
      w.weights = {1.0};
    } else {
      const std::size_t k = std::min(kNeighbours, sources.size());
      double total = 0.0;
      for (std::size_t j = 0; j < k; ++j) {
        w.sources.push_back(order[j]);
        w.weights.push_back(1.0 / dist[order[j]]);
        total += w.weights.back();
      }
      for (auto& v : w.weights) v /= total;
    }
    out.push_back(std::move(w));
  }
  return out;
}

template <typename T>
BasicRawTrial<T> interpolate_montage(const BasicRawTrial<T>& trial, const Montage65& montage,
                                     const std::map<std::string, Vec3>& source_positions) {
  trial.validate();
  require(trial.channels() >= 1, "interpolate_montage: trial has no channels");
  std::vector<Vec3> sources;
  sources.reserve(trial.channels());
  for (const auto& name : trial.channel_names) {
    if (auto it = source_positions.find(name); it != source_positions.end()) {
      sources.push_back(it->second);
    } else if (auto idx = montage.index_of(name)) {
      sources.push_back(montage.positions()[*idx]);
    } else {
      fail(ErrorKind::invalid_argument, "no position for source channel " + name);
    }
  }
  const auto weights = interpolation_weights(montage.positions(), sources);

  BasicRawTrial<T> out = trial;
  out.channel_names = montage.names();
  out.data = SignalMatrix<T>::Zero(static_cast<Eigen::Index>(montage.size()), trial.data.cols());
  for (std::size_t ch = 0; ch < weights.size(); ++ch) {
    const auto& w = weights[ch];
    if (w.sources.size() == 1) {
      out.data.row(ch) = trial.data.row(w.sources[0]);
      continue;
    }
    for (std::size_t j = 0; j < w.sources.size(); ++j) {
      out.data.row(ch) += static_cast<T>(w.weights[j]) * trial.data.row(w.sources[j]);
    }
  }
  return out;
}

template <typename T>
BasicRawTrial<T> resample(const BasicRawTrial<T>& trial, double target_rate) {
  require(target_rate > 0.0, "resample: target rate must be positive");
  if (target_rate > trial.sample_rate) {
    fail(ErrorKind::invalid_argument, "resample: upsampling from " +
                                          std::to_string(trial.sample_rate) + " Hz to " +
                                          std::to_string(target_rate) + " Hz is not supported");
  }
  if (target_rate == trial.sample_rate) return trial;

  const std::size_t n_in = trial.samples();
  const auto n_out = static_cast<std::size_t>(
      std::floor(static_cast<long double>(n_in) * target_rate / trial.sample_rate + 1e-9L));
  BasicRawTrial<T> out = trial;
  out.sample_rate = target_rate;
  out.data.resize(trial.data.rows(), static_cast<Eigen::Index>(n_out));
  if (n_out == 0) return out;

  const std::size_t keep = n_out / 2 + 1;
  const T scale = static_cast<T>(n_out) / static_cast<T>(n_in);
  for (Eigen::Index ch = 0; ch < trial.data.rows(); ++ch) {
    auto spectrum = fft::rfft<T>({trial.data.row(ch).data(), n_in});
    std::vector<std::complex<T>> kept(keep);
    for (std::size_t k = 0; k < keep && k < spectrum.size(); ++k) kept[k] = spectrum[k] * scale;
    // the output Nyquist bin has no unambiguous real counterpart; drop it
    if (n_out % 2 == 0) kept[keep - 1] = {};
    auto signal = fft::irfft<T>(kept, n_out);
    std::copy(signal.begin(), signal.end(), out.data.row(ch).data());
  }
  return out;
}

template <typename T>
BasicRawTrial<T> bandpass(const BasicRawTrial<T>& trial, double lo, double hi) {
  const double nyquist = trial.sample_rate / 2.0;
  if (hi > nyquist) {
    fail(ErrorKind::invalid_argument, "bandpass: upper edge " + std::to_string(hi) +
                                          " Hz exceeds Nyquist " + std::to_string(nyquist));
  }
  require(lo >= 0.0 && lo < hi, "bandpass: need 0 <= lo < hi");
  BasicRawTrial<T> out = trial;
  const std::size_t n = trial.samples();
  if (n == 0) return out;
  for (Eigen::Index ch = 0; ch < trial.data.rows(); ++ch) {
    auto spectrum = fft::rfft<T>({trial.data.row(ch).data(), n});
    for (std::size_t k = 0; k < spectrum.size(); ++k) {
      const double f = fft::bin_frequency(k, n, trial.sample_rate);
      if (f < lo || f > hi) spectrum[k] = {};
    }
    auto signal = fft::irfft<T>(spectrum, n);
    std::copy(signal.begin(), signal.end(), out.data.row(ch).data());
  }
  return out;
}

template <typename T>
std::vector<BasicSegment<T>> segment(const BasicRawTrial<T>& trial, std::size_t window_samples) {
  require(window_samples > 0, "segment: window must be positive");
  if (trial.channels() != kMontageChannels) {
    fail(ErrorKind::dimension_mismatch, "segment: trial " + trial.trial_id + " has " +
                                            std::to_string(trial.channels()) +
                                            " channels, expected 65");
  }
  if (trial.sample_rate != kSampleRate) {
    fail(ErrorKind::invalid_argument, "segment: trial " + trial.trial_id + " is at " +
                                          std::to_string(trial.sample_rate) +
                                          " Hz, expected 200 Hz");
  }
  const std::size_t count = trial.samples() / window_samples;
  std::vector<BasicSegment<T>> out;
  out.reserve(count);
  const auto w = static_cast<Eigen::Index>(window_samples);
  for (std::size_t i = 0; i < count; ++i) {
    out.push_back({trial.data.middleCols(static_cast<Eigen::Index>(i) * w, w), trial.trial_id, i});
  }
  return out;
}

BandMask sample_mask_band(Rng& rng, double cutoff_lo, double cutoff_hi, double band_width) {
  require(band_width > 0.0, "sample_mask_band: band width must be positive");
  if (band_width > cutoff_hi - cutoff_lo) {
    fail(ErrorKind::invalid_argument, "sample_mask_band: band width " +
                                          std::to_string(band_width) +
                                          " Hz exceeds the cutoff range");
  }
  const double span = cutoff_hi - cutoff_lo - band_width;
  const double f_min = span > 0.0 ? cutoff_lo + span * rng.uniform() : cutoff_lo;
  return {f_min, f_min + band_width};
}

template <typename T>
BasicSegment<T> spectral_mask(const BasicSegment<T>& segment, const BandMask& band,
                              double sample_rate) {
  require(band.f_min > 0.0 && band.f_min < band.f_max && band.f_max <= sample_rate / 2.0,
          "spectral_mask: band must satisfy 0 < f_min < f_max <= Nyquist");
  BasicSegment<T> out = segment;
  const std::size_t n = segment.samples();
  if (n == 0) return out;
  // Zeroing rfft bin k removes the real sinusoid (c/n)*Re(X_k e^{i2pikt/n}),
  // c = 1 at DC/Nyquist and 2 elsewhere. A band covers a handful of bins, so
  // projecting those out directly is exact and far cheaper than a round trip.
  const Eigen::MatrixXd x = segment.data.template cast<double>();
  Eigen::MatrixXd removed = Eigen::MatrixXd::Zero(x.rows(), x.cols());
  Eigen::VectorXd c(static_cast<Eigen::Index>(n)), s(static_cast<Eigen::Index>(n));
  for (std::size_t k = 0; k <= n / 2; ++k) {
    const double f = fft::bin_frequency(k, n, sample_rate);
    if (f < band.f_min || f > band.f_max) continue;
    const bool edge = k == 0 || 2 * k == n;
    for (std::size_t t = 0; t < n; ++t) {
      const double theta = 2.0 * std::numbers::pi * static_cast<double>(k * t % n) / static_cast<double>(n);
      c(static_cast<Eigen::Index>(t)) = std::cos(theta);
      s(static_cast<Eigen::Index>(t)) = std::sin(theta);
    }
    const double w = (edge ? 1.0 : 2.0) / static_cast<double>(n);
    removed += w * (x * c) * c.transpose();
    if (!edge) removed += w * (x * s) * s.transpose();
  }
  out.data = (x - removed).template cast<T>();
  return out;
}

template <typename T>
BasicRawTrial<T> preprocess(const BasicRawTrial<T>& trial, const Montage65& montage,
                            const PreprocessOptions& options,
                            const std::map<std::string, Vec3>& source_positions) {
  trial.validate();
  BasicRawTrial<T> out = trial.channel_names == montage.names()
                             ? trial
                             : interpolate_montage(trial, montage, source_positions);
  out = resample(out, options.target_rate);
  if (options.filter) out = bandpass(out, options.band_lo, options.band_hi);
  return out;
}

#define EEGALIGN_INSTANTIATE_SIGNAL(T)                                                       \
  template struct BasicRawTrial<T>;                                                          \
  template BasicRawTrial<T> interpolate_montage(const BasicRawTrial<T>&, const Montage65&,  \
                                                const std::map<std::string, Vec3>&);         \
  template BasicRawTrial<T> resample(const BasicRawTrial<T>&, double);                       \
  template BasicRawTrial<T> bandpass(const BasicRawTrial<T>&, double, double);               \
  template std::vector<BasicSegment<T>> segment(const BasicRawTrial<T>&, std::size_t);       \
  template BasicSegment<T> spectral_mask(const BasicSegment<T>&, const BandMask&, double);   \
  template BasicRawTrial<T> preprocess(const BasicRawTrial<T>&, const Montage65&,            \
                                       const PreprocessOptions&,                             \
                                       const std::map<std::string, Vec3>&);

EEGALIGN_INSTANTIATE_SIGNAL(float)
EEGALIGN_INSTANTIATE_SIGNAL(double)

#undef EEGALIGN_INSTANTIATE_SIGNAL

}  // namespace eegalign
