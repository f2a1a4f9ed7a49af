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

#include "eegalign/fft.hpp"

#include <fftw3.h>

#include <map>
#include <mutex>
#include <type_traits>
#include <utility>

#include "eegalign/common.hpp"

namespace eegalign::fft {
namespace {

// Single-precision transforms run through the double plans: float32 FFTW
// round-trips drift by a few ulps, which at |x| ~ 3 already exceeds 1e-6.
//
// FFTW planning is not thread-safe; execution of an existing plan on new
// arrays is. Plans are created once per (length, direction) and kept for the
// lifetime of the process.
std::mutex plan_mutex;

template <typename T>
struct Fftw;

template <>
struct Fftw<double> {
  using plan = fftw_plan;
  using complex = fftw_complex;
  static plan forward(int n) {
    std::vector<double> in(n);
    std::vector<complex> out(n / 2 + 1);
    return fftw_plan_dft_r2c_1d(n, in.data(), out.data(),
                                FFTW_ESTIMATE | FFTW_UNALIGNED);
  }
  static plan backward(int n) {
    std::vector<complex> in(n / 2 + 1);
    std::vector<double> out(n);
    return fftw_plan_dft_c2r_1d(n, in.data(), out.data(),
                                FFTW_ESTIMATE | FFTW_UNALIGNED);
  }
  static void run_forward(plan p, double* in, complex* out) {
    fftw_execute_dft_r2c(p, in, out);
  }
  static void run_backward(plan p, complex* in, double* out) {
    fftw_execute_dft_c2r(p, in, out);
  }
};

template <typename T>
typename Fftw<T>::plan get_plan(std::size_t n, bool forward) {
  static std::map<std::pair<std::size_t, bool>, typename Fftw<T>::plan> cache;
  std::lock_guard lock(plan_mutex);
  auto key = std::make_pair(n, forward);
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;
  auto p = forward ? Fftw<T>::forward(static_cast<int>(n))
                   : Fftw<T>::backward(static_cast<int>(n));
  if (p == nullptr) fail(ErrorKind::numeric, "FFT planning failed");
  cache.emplace(key, p);
  return p;
}

}  // namespace

template <typename T>
std::vector<std::complex<T>> rfft(std::span<const T> signal) {
  const std::size_t n = signal.size();
  require(n > 0, "rfft: empty signal");
  std::vector<double> in(signal.begin(), signal.end());
  std::vector<std::complex<double>> out(n / 2 + 1);
  Fftw<double>::run_forward(get_plan<double>(n, true), in.data(),
                            reinterpret_cast<fftw_complex*>(out.data()));
  if constexpr (std::is_same_v<T, double>) {
    return out;
  } else {
    return {out.begin(), out.end()};
  }
}

template <typename T>
std::vector<T> irfft(std::span<const std::complex<T>> spectrum, std::size_t n) {
  require(n > 0 && spectrum.size() == n / 2 + 1,
          "irfft: spectrum size must be n/2 + 1");
  std::vector<std::complex<double>> in(spectrum.begin(), spectrum.end());
  std::vector<double> out(n);
  Fftw<double>::run_backward(get_plan<double>(n, false),
                             reinterpret_cast<fftw_complex*>(in.data()),
                             out.data());
  const double scale = 1.0 / static_cast<double>(n);
  std::vector<T> result(n);
  for (std::size_t i = 0; i < n; ++i) result[i] = static_cast<T>(out[i] * scale);
  return result;
}

template std::vector<std::complex<float>> rfft(std::span<const float>);
template std::vector<std::complex<double>> rfft(std::span<const double>);
template std::vector<float> irfft(std::span<const std::complex<float>>, std::size_t);
template std::vector<double> irfft(std::span<const std::complex<double>>, std::size_t);
}  // namespace eegalign::fft
