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
#include <utility>
#include <vector>

#include "eegalign/nn.hpp"
#include "eegalign/tokenizer.hpp"

namespace eegalign {

struct EncoderConfig {
  std::size_t layers = 2;
  std::size_t d = 256;
  std::size_t heads = 8;
  std::size_t ff_scale = 4;
  double dropout = 0.1;
  double mask_ratio = 0.5;
  double lambda_ctx = 1.0;
  double lambda_cau = 1.0;
  /// Length of the learned positional table; longer sequences are rejected.
  std::size_t max_tokens = 80;
  std::size_t decoder_hidden = 256;

  void validate() const;
};

/// Token positions replaced by the mask embedding, sorted ascending.
struct MaskSpec {
  std::vector<std::size_t> positions;

  bool contains(std::size_t i) const;
  std::size_t size() const { return positions.size(); }
};

/// round(ratio * n) distinct positions drawn uniformly without replacement.
MaskSpec sample_mask(std::size_t n, double ratio, Rng& rng);

/// Copy of tokens with the rows in mask replaced by mask_embedding.
nn::Matrix apply_mask(const nn::Matrix& tokens, const MaskSpec& mask,
                      const nn::RowVector& mask_embedding);

std::pair<TokenSequence, MaskSpec> apply_random_mask(const TokenSequence& tokens, double ratio,
                                                     Rng& rng, const nn::RowVector& mask_embedding);

/// Raw reconstruction targets: row i is the (channels x slice_width) window
/// under token i, flattened channel-major.
nn::Matrix target_slices(std::span<const nn::Matrix> segments, const TokenizerConfig& config);

struct DecoderCache {
  nn::Matrix input;
  nn::Matrix hidden_pre;
  nn::Matrix hidden;
};

/// g(z) = W2 sigma(W1 z + b1) + b2, shared by both branches.
class Decoder {
 public:
  Decoder() = default;
  Decoder(std::size_t d, std::size_t hidden, std::size_t out);

  void init(Rng& rng);
  nn::Matrix forward(const nn::Matrix& states, DecoderCache* cache) const;
  nn::Matrix backward(const nn::Matrix& dy, const DecoderCache& cache);
  void visit(const std::string& prefix, const nn::ParamVisitor& fn);

  std::size_t output_dim() const { return fc2.out_features(); }

  nn::Linear fc1, fc2;
};

/// Single-state decode reshaped to channels x slice_width.
nn::Matrix decode(const nn::RowVector& state, const Decoder& decoder, std::size_t channels);

struct BranchCache {
  nn::StackCache stack;
};

/// Bidirectional and causal transformer stacks over a shared learned
/// positional table, plus the learnable mask embedding.
class DualEncoder {
 public:
  DualEncoder() = default;
  explicit DualEncoder(const EncoderConfig& config);

  void init(Rng& rng);
  nn::Matrix bidirectional_forward(const nn::Matrix& tokens, Rng* dropout_rng, BranchCache* cache) const;
  nn::Matrix causal_forward(const nn::Matrix& tokens, Rng* dropout_rng, BranchCache* cache) const;
  /// Gradients w.r.t. the branch input tokens (positional grads accumulate).
  nn::Matrix bidirectional_backward(const nn::Matrix& dstates, const BranchCache& cache);
  nn::Matrix causal_backward(const nn::Matrix& dstates, const BranchCache& cache);
  /// Rows [0, N) from the bidirectional branch, [N, 2N) from the causal one.
  nn::Matrix encode_for_tuning(const nn::Matrix& tokens) const;
  void visit(const std::string& prefix, const nn::ParamVisitor& fn);

  const EncoderConfig& config() const { return config_; }

  nn::Param positional;  // max_tokens x d
  nn::Param mask_token;  // 1 x d
  nn::TransformerStack bidirectional;
  nn::TransformerStack causal;

 private:
  nn::Matrix add_positions(const nn::Matrix& tokens) const;
  void accumulate_position_grad(const nn::Matrix& dinput);

  EncoderConfig config_;
};

/// Mean squared reconstruction over masked positions only.
double loss_ctx(const nn::Matrix& states, const MaskSpec& mask, const nn::Matrix& targets,
                const Decoder& decoder);
/// Next-slice loss: state i is decoded against target i + 1.
double loss_cau(const nn::Matrix& states, const nn::Matrix& targets, const Decoder& decoder);
double pretrain_loss(double ctx, double cau, const EncoderConfig& config);

/// Loss value plus its gradient w.r.t. the decoded rows. Decoder parameter
/// gradients are accumulated; the returned matrix is d loss / d states.
struct LossGrad {
  double loss = 0.0;
  nn::Matrix dstates;
};
LossGrad loss_ctx_backward(const nn::Matrix& states, const MaskSpec& mask,
                           const nn::Matrix& targets, Decoder& decoder, double weight);
LossGrad loss_cau_backward(const nn::Matrix& states, const nn::Matrix& targets, Decoder& decoder,
                           double weight);

}  // namespace eegalign
