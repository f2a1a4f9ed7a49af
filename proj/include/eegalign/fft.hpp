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

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

namespace eegalign::fft {

/// Real-to-complex forward transform. Returns n/2 + 1 bins (unnormalized).
template <typename T>
std::vector<std::complex<T>> rfft(std::span<const T> signal);

/// Inverse of rfft for a length-n signal; includes the 1/n normalization.
template <typename T>
std::vector<T> irfft(std::span<const std::complex<T>> spectrum, std::size_t n);

/// Center frequency of bin k for an n-point transform at sample_rate.
inline double bin_frequency(std::size_t k, std::size_t n, double sample_rate) {
  return static_cast<double>(k) * sample_rate / static_cast<double>(n);
}

}  // namespace eegalign::fft
