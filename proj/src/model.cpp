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

#include "eegalign/model.hpp"

#include <cmath>

namespace eegalign {

using nn::Matrix;
using nn::RowVector;

void ModelConfig::validate() const {
  tokenizer.validate();
  encoder.validate();
  if (tokenizer.d != encoder.d) {
    fail(ErrorKind::dimension_mismatch, "model: tokenizer d " + std::to_string(tokenizer.d) +
                                            " != encoder d " + std::to_string(encoder.d));
  }
  instruct.validate(encoder.d);
}

void PretrainSwitches::validate() const {
  require(random || causal, "pretrain: random and causal masking are both off, no objective left");
}

Model::Model(const ModelConfig& config, std::vector<std::string> classifier_labels)
    : tokenizer((config.validate(), config.tokenizer)),
      encoder(config.encoder),
      decoder(config.encoder.d, config.encoder.decoder_hidden,
              config.tokenizer.channels * config.tokenizer.slice_width()),
      film(config.encoder.d, config.instruct.text_dim),
      qformer(config.encoder.d, config.instruct),
      head(config.encoder.d, config.instruct.head_hidden, config.instruct.text_dim),
      config_(config) {
  if (config.instruct.head == HeadKind::softmax) {
    classifier.emplace(config.instruct.text_dim, std::move(classifier_labels));
  }
}

void Model::init(std::uint64_t seed) {
  Rng r0(derive_seed(seed, 1)), r1(derive_seed(seed, 2)), r2(derive_seed(seed, 3)),
      r3(derive_seed(seed, 4)), r4(derive_seed(seed, 5)), r5(derive_seed(seed, 6)),
      r6(derive_seed(seed, 7));
  tokenizer.init(r0);
  encoder.init(r1);
  decoder.init(r2);
  film.init(r3, config_.instruct.film_gamma_init);
  qformer.init(r4);
  head.init(r5);
  if (classifier) classifier->init(r6);
}

void Model::visit(const nn::ParamVisitor& fn) {
  tokenizer.visit("tokenizer", fn);
  encoder.visit("encoder", fn);
  decoder.visit("decoder", fn);
  film.visit("film", fn);
  qformer.visit("qformer", fn);
  head.visit("head", fn);
  if (classifier) classifier->visit("classifier", fn);
}

void Model::zero_grad() {
  visit([](const std::string&, nn::Param& p) { p.zero_grad(); });
}

PretrainStats Model::pretrain_batch(std::span<const SegmentStack* const> trials,
                                    const PretrainSwitches& switches, const SpectralMaskConfig& spectral,
                                    Rng& rng) {
  return pretrain_pass(trials, switches, spectral, rng, true);
}

PretrainStats Model::pretrain_eval(std::span<const SegmentStack* const> trials,
                                   const PretrainSwitches& switches, const SpectralMaskConfig& spectral,
                                   Rng& rng) {
  return pretrain_pass(trials, switches, spectral, rng, false);
}

PretrainStats Model::pretrain_pass(std::span<const SegmentStack* const> trials,
                                   const PretrainSwitches& switches, const SpectralMaskConfig& spectral,
                                   Rng& rng, bool training) {
  switches.validate();
  require(!trials.empty(), "pretrain: empty batch");
  const auto per = static_cast<Eigen::Index>(config_.tokenizer.tokens_per_segment());

  // tokenizer inputs: spectrally perturbed copies; targets stay original
  std::vector<Matrix> inputs;
  std::vector<Eigen::Index> offsets;
  for (const SegmentStack* stack : trials) {
    offsets.push_back(static_cast<Eigen::Index>(inputs.size()) * per);
    for (const Matrix& seg : *stack) {
      if (switches.frequency) {
        const BandMask band = sample_mask_band(rng, spectral.cutoff_lo, spectral.cutoff_hi, spectral.band_width);
        inputs.push_back(spectral_mask(BasicSegment<double>{seg, {}, 0}, band, kSampleRate).data);
      } else {
        inputs.push_back(seg);
      }
    }
  }

  TokenizerCache tcache;
  const Matrix tokens = tokenizer.forward(inputs, training, training ? &tcache : nullptr);
  Matrix dtokens = Matrix::Zero(tokens.rows(), tokens.cols());
  const double weight = 1.0 / static_cast<double>(trials.size());
  Rng* dropout = training ? &rng : nullptr;
  const auto& ec = config_.encoder;

  PretrainStats stats;
  for (std::size_t b = 0; b < trials.size(); ++b) {
    const SegmentStack& stack = *trials[b];
    const auto n = static_cast<Eigen::Index>(stack.size()) * per;
    require(n > 0, "pretrain: trial without segments");
    const Matrix x = tokens.middleRows(offsets[b], n);
    const Matrix targets = target_slices(stack, config_.tokenizer);

    if (switches.random) {
      const MaskSpec mask = sample_mask(static_cast<std::size_t>(n), ec.mask_ratio, rng);
      const Matrix masked = apply_mask(x, mask, encoder.mask_token.value.row(0));
      if (training) {
        BranchCache cache;
        const Matrix states = encoder.bidirectional_forward(masked, dropout, &cache);
        const LossGrad g = loss_ctx_backward(states, mask, targets, decoder, ec.lambda_ctx * weight);
        Matrix din = encoder.bidirectional_backward(g.dstates, cache);
        for (auto i : mask.positions) {
          const auto r = static_cast<Eigen::Index>(i);
          encoder.mask_token.grad.row(0) += din.row(r);
          din.row(r).setZero();
        }
        dtokens.middleRows(offsets[b], n) += din;
        stats.ctx += g.loss * weight;
      } else {
        stats.ctx += loss_ctx(encoder.bidirectional_forward(masked, nullptr, nullptr), mask, targets, decoder) * weight;
      }
    }
    if (switches.causal) {
      if (training) {
        BranchCache cache;
        const Matrix states = encoder.causal_forward(x, dropout, &cache);
        const LossGrad g = loss_cau_backward(states, targets, decoder, ec.lambda_cau * weight);
        dtokens.middleRows(offsets[b], n) += encoder.causal_backward(g.dstates, cache);
        stats.cau += g.loss * weight;
      } else {
        stats.cau += loss_cau(encoder.causal_forward(x, nullptr, nullptr), targets, decoder) * weight;
      }
    }
  }
  if (training) tokenizer.backward(dtokens, tcache);
  stats.loss = (switches.random ? ec.lambda_ctx * stats.ctx : 0.0) +
               (switches.causal ? ec.lambda_cau * stats.cau : 0.0);
  return stats;
}

double Model::tune_batch(std::span<const TuneExample> batch, Rng& rng) {
  require(!batch.empty(), "tune: empty batch");
  const auto per = static_cast<Eigen::Index>(config_.tokenizer.tokens_per_segment());
  std::vector<Matrix> inputs;
  std::vector<Eigen::Index> offsets;
  for (const auto& ex : batch) {
    offsets.push_back(static_cast<Eigen::Index>(inputs.size()) * per);
    inputs.insert(inputs.end(), ex.segments->begin(), ex.segments->end());
  }
  TokenizerCache tcache;
  const Matrix tokens = tokenizer.forward(inputs, true, &tcache);
  Matrix dtokens = Matrix::Zero(tokens.rows(), tokens.cols());
  const double weight = 1.0 / static_cast<double>(batch.size());

  double total = 0.0;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const TuneExample& ex = batch[b];
    const auto n = static_cast<Eigen::Index>(ex.segments->size()) * per;
    require(n > 0, "tune: trial without segments");
    const Matrix x = tokens.middleRows(offsets[b], n);

    BranchCache bi_cache, cau_cache;
    Matrix m(2 * n, x.cols());
    m.topRows(n) = encoder.bidirectional_forward(x, &rng, &bi_cache);
    m.bottomRows(n) = encoder.causal_forward(x, &rng, &cau_cache);
    FilmCache fcache;
    QFormerCache qcache;
    HeadCache hcache;
    const Matrix conditioned = film.forward(m, ex.instruction, &fcache);
    const Matrix queries = qformer.forward(conditioned, &qcache);
    const RowVector h = head.forward(queries, &hcache);

    AlignmentGrad g;
    if (classifier) {
      g = classifier->loss_backward(h, ex.label, weight);
    } else {
      require(ex.bank != nullptr, "tune: example without prototype bank");
      g = alignment_loss_backward(h, ex.label, *ex.bank);
      g.dh *= weight;
    }
    if (!std::isfinite(g.loss)) fail(ErrorKind::numeric, "tune: non-finite loss");
    total += g.loss * weight;

    const Matrix dm = film.backward(qformer.backward(head.backward(g.dh, hcache), qcache), fcache);
    dtokens.middleRows(offsets[b], n) += encoder.bidirectional_backward(dm.topRows(n), bi_cache);
    dtokens.middleRows(offsets[b], n) += encoder.causal_backward(dm.bottomRows(n), cau_cache);
  }
  tokenizer.backward(dtokens, tcache);
  return total;
}

Matrix Model::encode(const SegmentStack& segments) {
  require(!segments.empty(), "encode: trial without segments");
  return encoder.encode_for_tuning(tokenizer.forward(segments, false, nullptr));
}

RowVector Model::embed(const SegmentStack& segments, const RowVector& instruction) {
  const Matrix m = encode(segments);
  return head.forward(qformer.forward(film.forward(m, instruction, nullptr), nullptr), nullptr);
}

Prediction Model::predict_from_embedding(const RowVector& h, const PrototypeBank& bank) const {
  return classifier ? classifier->predict(h, bank) : eegalign::predict(h, bank);
}

Prediction Model::predict(const SegmentStack& segments, const RowVector& instruction,
                          const PrototypeBank& bank) {
  return predict_from_embedding(embed(segments, instruction), bank);
}

SegmentStack to_segment_stack(std::span<const Segment> segments) {
  SegmentStack out;
  out.reserve(segments.size());
  for (const auto& s : segments) out.push_back(s.data.cast<double>());
  return out;
}

}  // namespace eegalign
