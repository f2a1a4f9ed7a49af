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
#include <string>
#include <vector>

#include "eegalign/config.hpp"
#include "eegalign/model.hpp"
#include "eegalign/train.hpp"

// Fixtures shared by the unit suites and the acceptance runner.
namespace eegalign::testing {

inline nn::Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed, double scale = 1.0) {
  Rng rng(seed);
  nn::Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.normal();
  return m;
}

inline nn::RowVector random_row(Eigen::Index cols, std::uint64_t seed, double scale = 1.0) {
  return random_matrix(1, cols, seed, scale);
}

/// 2 layers, d = 16, two queries, no dropout: small enough for exhaustive
/// finite differences.
inline ModelConfig tiny_model_config() {
  ModelConfig c;
  c.tokenizer.d = 16;
  c.encoder.d = 16;
  c.encoder.layers = 2;
  c.encoder.heads = 2;
  c.encoder.dropout = 0.0;
  c.encoder.max_tokens = 20;
  c.encoder.decoder_hidden = 16;
  c.instruct.queries = 2;
  c.instruct.qformer_layers = 2;
  c.instruct.qformer_heads = 2;
  c.instruct.head_hidden = 16;
  return c;
}

/// Random 65 x 100 segments (amplitude keeps the loss scale, and with it
/// finite-difference round-off, small).
inline std::vector<SegmentStack> random_trials(std::size_t trials, std::size_t segments, std::uint64_t seed,
                                               double amplitude = 0.1) {
  std::vector<SegmentStack> out(trials);
  for (std::size_t t = 0; t < trials; ++t) {
    for (std::size_t s = 0; s < segments; ++s) {
      out[t].push_back(random_matrix(kMontageChannels, kWindowSamples, derive_seed(seed, t, s), amplitude));
    }
  }
  return out;
}

/// Central-difference check of the joint pretraining loss for the given
/// switches (spectral masks and token masks replayed from a fixed seed).
inline GradCheckResult check_pretrain_gradients(const PretrainSwitches& switches, std::uint64_t seed,
                                                std::size_t per_tensor = 12) {
  Model model(tiny_model_config());
  model.init(seed);
  const auto trials = random_trials(2, 2, derive_seed(seed, 11));
  std::vector<const SegmentStack*> batch;
  for (const auto& t : trials) batch.push_back(&t);
  const SpectralMaskConfig spectral;
  const std::uint64_t mask_seed = derive_seed(seed, 12);

  model.zero_grad();
  Rng rng(mask_seed);
  model.pretrain_batch(batch, switches, spectral, rng);
  auto params = collect_params(model);
  // instruction-side parameters are not part of this objective
  std::erase_if(params, [](const auto& p) {
    return !(p.first.starts_with("tokenizer.") || p.first.starts_with("encoder.") || p.first.starts_with("decoder."));
  });
  GradCheckOptions options;
  options.per_tensor = per_tensor;
  options.seed = seed;
  return grad_check(
      params,
      [&] {
        Rng replay(mask_seed);
        Model& m = model;
        // loss only: gradients are discarded by the harness
        return m.pretrain_batch(batch, switches, spectral, replay).loss;
      },
      options);
}

/// Same for the instruction-tuning alignment loss through the whole model
/// (tokenizer to head, every group trainable).
inline GradCheckResult check_alignment_gradients(std::uint64_t seed, std::size_t per_tensor = 12) {
  Model model(tiny_model_config());
  model.init(seed);
  const auto trials = random_trials(2, 2, derive_seed(seed, 21));
  const TextEncoder encoder{nullptr, seed, kDefaultTextDim};
  const PrototypeBank bank = PrototypeBank::build({"Left", "Right", "Foot"}, encoder);
  const std::vector<TuneExample> batch = {
      {&trials[0], encoder("Decode motor imagery").vector, "Left", &bank},
      {&trials[1], encoder("Decode (Left vs Right vs Foot) motor imagery").vector, "Foot", &bank},
  };
  model.zero_grad();
  Rng rng(derive_seed(seed, 22));
  model.tune_batch(batch, rng);
  const auto params = collect_params(model);
  GradCheckOptions options;
  options.per_tensor = per_tensor;
  options.seed = seed;
  return grad_check(
      params,
      [&] {
        Rng replay(derive_seed(seed, 22));
        return model.tune_batch(batch, replay);
      },
      options);
}

/// The desk-scale end-to-end configuration: 8 subjects, 4 classes, tiny
/// encoder, 5 + 20 epochs, 6 train/val and 2 test subjects.
inline RunConfig end_to_end_config(std::uint64_t seed) {
  RunConfig c;
  c.encoder.d = 32;
  c.encoder.heads = 4;
  c.encoder.layers = 2;
  c.encoder.max_tokens = 40;
  c.encoder.decoder_hidden = 64;
  c.instruct.queries = 4;
  c.instruct.qformer_layers = 2;
  c.instruct.qformer_heads = 4;
  c.instruct.head_hidden = 64;
  c.train.batch_size = 16;
  c.train.pretrain_epochs = 5;
  c.train.tune_epochs = 20;
  c.train.seed = seed;
  c.split.train_fraction = 0.75;
  return c;
}

}  // namespace eegalign::testing
