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
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "eegalign/encoder.hpp"
#include "eegalign/instruct.hpp"
#include "eegalign/tokenizer.hpp"

namespace eegalign {

struct ModelConfig {
  TokenizerConfig tokenizer;
  EncoderConfig encoder;
  InstructConfig instruct;

  /// Checks each part plus cross-part consistency (shared d).
  void validate() const;
};

/// Which of the three pretraining perturbations are active.
struct PretrainSwitches {
  bool frequency = true;  // spectral band masking of the tokenizer input
  bool random = true;     // mask tokens, bidirectional reconstruction
  bool causal = true;     // next-slice prediction, causal branch

  void validate() const;
};

struct SpectralMaskConfig {
  double cutoff_lo = 1.0;
  double cutoff_hi = 50.0;
  double band_width = 6.0;
};

/// A trial's segments as float64 matrices (channels x window each).
using SegmentStack = std::vector<nn::Matrix>;

struct PretrainStats {
  double loss = 0.0;
  double ctx = 0.0;
  double cau = 0.0;
};

/// One labelled tuning example with its resolved conditioning.
struct TuneExample {
  const SegmentStack* segments = nullptr;
  nn::RowVector instruction;  // e_ins
  std::string label;
  const PrototypeBank* bank = nullptr;
};

/// Every learnable piece of the pipeline.
class Model {
 public:
  Model() = default;
  /// classifier_labels is required (and only used) for the softmax head.
  explicit Model(const ModelConfig& config, std::vector<std::string> classifier_labels = {});

  void init(std::uint64_t seed);
  void visit(const nn::ParamVisitor& fn);
  void zero_grad();

  /// Mean joint reconstruction loss over the batch; gradients accumulate.
  PretrainStats pretrain_batch(std::span<const SegmentStack* const> trials, const PretrainSwitches& switches,
                               const SpectralMaskConfig& spectral, Rng& rng);
  /// Same objective in inference mode (running batch statistics, no
  /// dropout, no gradients); masks still come from rng.
  PretrainStats pretrain_eval(std::span<const SegmentStack* const> trials, const PretrainSwitches& switches,
                              const SpectralMaskConfig& spectral, Rng& rng);
  /// Mean alignment (or cross-entropy) loss over the batch; gradients accumulate.
  double tune_batch(std::span<const TuneExample> batch, Rng& rng);

  /// Inference path: m = [bidirectional; causal] states for one trial.
  nn::Matrix encode(const SegmentStack& segments);
  /// h for one trial under instruction e_ins (inference mode).
  nn::RowVector embed(const SegmentStack& segments, const nn::RowVector& instruction);
  Prediction predict(const SegmentStack& segments, const nn::RowVector& instruction,
                     const PrototypeBank& bank);
  Prediction predict_from_embedding(const nn::RowVector& h, const PrototypeBank& bank) const;

  const ModelConfig& config() const { return config_; }

  Tokenizer tokenizer;
  DualEncoder encoder;
  Decoder decoder;
  Film film;
  QFormer qformer;
  Head head;
  std::optional<LabelClassifier> classifier;

 private:
  PretrainStats pretrain_pass(std::span<const SegmentStack* const> trials, const PretrainSwitches& switches,
                              const SpectralMaskConfig& spectral, Rng& rng, bool training);

  ModelConfig config_;
};

/// Converts float segments to the model's float64 stack.
SegmentStack to_segment_stack(std::span<const Segment> segments);

}  // namespace eegalign
