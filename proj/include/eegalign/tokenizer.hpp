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
#include <span>
#include <string>
#include <vector>

#include "eegalign/nn.hpp"
#include "eegalign/signal.hpp"

namespace eegalign {

struct TokenizerConfig {
  std::size_t d = 256;
  std::size_t channels = kMontageChannels;
  std::size_t window = kWindowSamples;
  std::size_t temporal_kernel = 40;
  std::size_t padding = 20;
  std::size_t pool = 10;
  double bn_eps = 1e-5;
  double bn_momentum = 0.1;

  /// Temporal conv output length: window + 2 * padding - kernel + 1.
  std::size_t conv_length() const { return window + 2 * padding - temporal_kernel + 1; }
  std::size_t tokens_per_segment() const { return conv_length() / pool; }
  /// Raw samples reconstructed per token; the window must split evenly.
  std::size_t slice_width() const { return window / tokens_per_segment(); }
  void validate() const;
};

struct TokenOrigin {
  std::string trial_id;
  std::size_t segment = 0;
  std::size_t position = 0;
};

struct TokenSequence {
  nn::Matrix tokens;  // N x d
  std::vector<TokenOrigin> provenance;

  std::size_t size() const { return static_cast<std::size_t>(tokens.rows()); }
};

struct TokenizerCache {
  std::vector<const nn::Matrix*> inputs;
  std::vector<nn::Matrix> spatial;  // d x window, per segment
  std::vector<nn::Matrix> normalized;  // d x conv_length, per segment
  Eigen::VectorXd inv_std;
  bool training = false;
};

/// Temporal convolution (1 x kernel, time padding only), depthwise spatial
/// convolution collapsing the channel axis, batch normalization and average
/// pooling. Both convolutions are linear, so they are evaluated spatial-first;
/// the result is identical to the temporal-first order including biases.
class Tokenizer {
 public:
  Tokenizer() = default;
  explicit Tokenizer(const TokenizerConfig& config);

  void init(Rng& rng);

  /// Tokens for a batch of segments (each channels x window), stacked in
  /// segment order: rows [s * T, (s + 1) * T) belong to segment s. Training
  /// mode normalizes with batch statistics and updates the running ones.
  nn::Matrix forward(std::span<const nn::Matrix> segments, bool training, TokenizerCache* cache);
  void backward(const nn::Matrix& dtokens, const TokenizerCache& cache);
  void visit(const std::string& prefix, const nn::ParamVisitor& fn);

  const TokenizerConfig& config() const { return config_; }

  nn::Param temporal_weight;  // d x kernel
  nn::Param temporal_bias;    // 1 x d
  nn::Param spatial_weight;   // d x channels
  nn::Param spatial_bias;     // 1 x d
  nn::Param bn_gain;          // 1 x d
  nn::Param bn_shift;         // 1 x d
  Eigen::VectorXd running_mean;
  Eigen::VectorXd running_var;

 private:
  TokenizerConfig config_;
};

/// Tokenizes the segments of one trial (inference or training mode).
TokenSequence tokenize(std::span<const BasicSegment<double>> segments, Tokenizer& tokenizer,
                       bool training);

}  // namespace eegalign
