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

#include "eegalign/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace eegalign {

using nn::Matrix;

void EncoderConfig::validate() const {
  require(layers >= 1, "encoder: need at least one layer");
  require(heads >= 1 && d % heads == 0, "encoder: d must be divisible by heads");
  require(mask_ratio > 0.0 && mask_ratio < 1.0, "encoder: mask_ratio must lie in (0, 1)");
  require(lambda_ctx >= 0.0 && lambda_cau >= 0.0, "encoder: loss weights must be nonnegative");
  require(dropout >= 0.0 && dropout < 1.0, "encoder: dropout must lie in [0, 1)");
  require(max_tokens >= 1 && ff_scale >= 1 && decoder_hidden >= 1, "encoder: sizes must be positive");
}

bool MaskSpec::contains(std::size_t i) const {
  return std::binary_search(positions.begin(), positions.end(), i);
}

MaskSpec sample_mask(std::size_t n, double ratio, Rng& rng) {
  require(n > 0, "random mask: empty token sequence");
  require(ratio > 0.0 && ratio < 1.0, "random mask: ratio must lie in (0, 1)");
  const auto count = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(n)));
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  // partial Fisher-Yates: the first `count` entries become a uniform sample
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t j = i + rng.index(n - i);
    std::swap(idx[i], idx[j]);
  }
  MaskSpec spec{{idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(count)}};
  std::sort(spec.positions.begin(), spec.positions.end());
  return spec;
}

Matrix apply_mask(const Matrix& tokens, const MaskSpec& mask, const nn::RowVector& mask_embedding) {
  Matrix out = tokens;
  for (auto i : mask.positions) out.row(static_cast<Eigen::Index>(i)) = mask_embedding;
  return out;
}

std::pair<TokenSequence, MaskSpec> apply_random_mask(const TokenSequence& tokens, double ratio,
                                                     Rng& rng, const nn::RowVector& mask_embedding) {
  MaskSpec spec = sample_mask(tokens.size(), ratio, rng);
  TokenSequence out{apply_mask(tokens.tokens, spec, mask_embedding), tokens.provenance};
  return {std::move(out), std::move(spec)};
}

Matrix target_slices(std::span<const Matrix> segments, const TokenizerConfig& config) {
  const auto per = static_cast<Eigen::Index>(config.tokens_per_segment());
  const auto width = static_cast<Eigen::Index>(config.slice_width());
  const auto channels = static_cast<Eigen::Index>(config.channels);
  Matrix out(static_cast<Eigen::Index>(segments.size()) * per, channels * width);
  for (std::size_t s = 0; s < segments.size(); ++s) {
    const Matrix& x = segments[s];
    for (Eigen::Index j = 0; j < per; ++j) {
      const Eigen::Index row = static_cast<Eigen::Index>(s) * per + j;
      for (Eigen::Index c = 0; c < channels; ++c) {
        out.row(row).segment(c * width, width) = x.row(c).segment(j * width, width);
      }
    }
  }
  return out;
}

// Decoder

Decoder::Decoder(std::size_t d, std::size_t hidden, std::size_t out)
    : fc1(d, hidden, true, nn::ParamGroup::other), fc2(hidden, out, true, nn::ParamGroup::other) {}

void Decoder::init(Rng& rng) {
  fc1.init(rng);
  fc2.init(rng);
}

Matrix Decoder::forward(const Matrix& states, DecoderCache* cache) const {
  Matrix pre = fc1.forward(states);
  Matrix hidden = nn::gelu(pre);
  Matrix y = fc2.forward(hidden);
  if (cache) {
    cache->input = states;
    cache->hidden_pre = std::move(pre);
    cache->hidden = std::move(hidden);
  }
  return y;
}

Matrix Decoder::backward(const Matrix& dy, const DecoderCache& cache) {
  Matrix dhidden = fc2.backward(cache.hidden, dy);
  return fc1.backward(cache.input, nn::gelu_backward(cache.hidden_pre, dhidden));
}

void Decoder::visit(const std::string& prefix, const nn::ParamVisitor& fn) {
  fc1.visit(prefix + ".fc1", fn);
  fc2.visit(prefix + ".fc2", fn);
}

Matrix decode(const nn::RowVector& state, const Decoder& decoder, std::size_t channels) {
  Matrix flat = decoder.forward(Matrix(state), nullptr);
  const auto c = static_cast<Eigen::Index>(channels);
  require(flat.cols() % c == 0, "decode: output size not divisible by channel count");
  return Eigen::Map<const Matrix>(flat.data(), c, flat.cols() / c);
}

// DualEncoder

DualEncoder::DualEncoder(const EncoderConfig& config)
    : bidirectional(config.layers, config.d, config.heads, config.d * config.ff_scale,
                    config.dropout, false, nn::ParamGroup::transformer),
      causal(config.layers, config.d, config.heads, config.d * config.ff_scale, config.dropout,
             true, nn::ParamGroup::transformer),
      config_(config) {
  config_.validate();
  positional.resize(static_cast<Eigen::Index>(config.max_tokens),
                    static_cast<Eigen::Index>(config.d), nn::ParamGroup::other);
  mask_token.resize(1, static_cast<Eigen::Index>(config.d), nn::ParamGroup::other);
}

void DualEncoder::init(Rng& rng) {
  nn::init_normal(positional, rng, 0.02);
  nn::init_normal(mask_token, rng, 0.02);
  bidirectional.init(rng);
  causal.init(rng);
}

Matrix DualEncoder::add_positions(const Matrix& tokens) const {
  if (tokens.rows() > positional.value.rows()) {
    fail(ErrorKind::dimension_mismatch, "encoder: " + std::to_string(tokens.rows()) +
                                            " tokens exceed max_tokens " +
                                            std::to_string(positional.value.rows()));
  }
  if (tokens.cols() != positional.value.cols()) {
    fail(ErrorKind::dimension_mismatch, "encoder: token width " + std::to_string(tokens.cols()) +
                                            " != d " + std::to_string(positional.value.cols()));
  }
  return tokens + positional.value.topRows(tokens.rows());
}

void DualEncoder::accumulate_position_grad(const Matrix& dinput) {
  positional.grad.topRows(dinput.rows()) += dinput;
}

Matrix DualEncoder::bidirectional_forward(const Matrix& tokens, Rng* dropout_rng,
                                          BranchCache* cache) const {
  return bidirectional.forward(add_positions(tokens), dropout_rng, cache ? &cache->stack : nullptr);
}

Matrix DualEncoder::causal_forward(const Matrix& tokens, Rng* dropout_rng, BranchCache* cache) const {
  return causal.forward(add_positions(tokens), dropout_rng, cache ? &cache->stack : nullptr);
}

Matrix DualEncoder::bidirectional_backward(const Matrix& dstates, const BranchCache& cache) {
  Matrix dinput = bidirectional.backward(dstates, cache.stack);
  accumulate_position_grad(dinput);
  return dinput;
}

Matrix DualEncoder::causal_backward(const Matrix& dstates, const BranchCache& cache) {
  Matrix dinput = causal.backward(dstates, cache.stack);
  accumulate_position_grad(dinput);
  return dinput;
}

Matrix DualEncoder::encode_for_tuning(const Matrix& tokens) const {
  Matrix m(2 * tokens.rows(), tokens.cols());
  m.topRows(tokens.rows()) = bidirectional_forward(tokens, nullptr, nullptr);
  m.bottomRows(tokens.rows()) = causal_forward(tokens, nullptr, nullptr);
  return m;
}

void DualEncoder::visit(const std::string& prefix, const nn::ParamVisitor& fn) {
  fn(prefix + ".positional", positional);
  fn(prefix + ".mask_token", mask_token);
  bidirectional.visit(prefix + ".bidirectional", fn);
  causal.visit(prefix + ".causal", fn);
}

// Losses

namespace {

Matrix gather_rows(const Matrix& m, std::span<const std::size_t> rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(static_cast<Eigen::Index>(rows[i]));
  return out;
}

void check_targets(const Matrix& states, const Matrix& targets, const Decoder& decoder) {
  if (targets.rows() != states.rows() ||
      targets.cols() != static_cast<Eigen::Index>(decoder.output_dim())) {
    fail(ErrorKind::dimension_mismatch, "reconstruction targets are " +
                                            std::to_string(targets.rows()) + "x" +
                                            std::to_string(targets.cols()) + " for " +
                                            std::to_string(states.rows()) + " states");
  }
}

}  // namespace

double loss_ctx(const Matrix& states, const MaskSpec& mask, const Matrix& targets,
                const Decoder& decoder) {
  require(mask.size() > 0, "loss_ctx: empty mask");
  check_targets(states, targets, decoder);
  Matrix recon = decoder.forward(gather_rows(states, mask.positions), nullptr);
  return (recon - gather_rows(targets, mask.positions)).squaredNorm() /
         static_cast<double>(mask.size());
}

double loss_cau(const Matrix& states, const Matrix& targets, const Decoder& decoder) {
  require(states.rows() >= 2, "loss_cau: need at least two tokens");
  check_targets(states, targets, decoder);
  const auto n = states.rows();
  Matrix recon = decoder.forward(states.topRows(n - 1), nullptr);
  return (recon - targets.bottomRows(n - 1)).squaredNorm() / static_cast<double>(n - 1);
}

double pretrain_loss(double ctx, double cau, const EncoderConfig& config) {
  return config.lambda_ctx * ctx + config.lambda_cau * cau;
}

LossGrad loss_ctx_backward(const Matrix& states, const MaskSpec& mask, const Matrix& targets,
                           Decoder& decoder, double weight) {
  require(mask.size() > 0, "loss_ctx: empty mask");
  check_targets(states, targets, decoder);
  DecoderCache cache;
  Matrix diff = decoder.forward(gather_rows(states, mask.positions), &cache) -
                gather_rows(targets, mask.positions);
  const double count = static_cast<double>(mask.size());
  LossGrad out;
  out.loss = diff.squaredNorm() / count;
  Matrix dmasked = decoder.backward(diff * (2.0 * weight / count), cache);
  out.dstates = Matrix::Zero(states.rows(), states.cols());
  for (std::size_t i = 0; i < mask.size(); ++i) {
    out.dstates.row(static_cast<Eigen::Index>(mask.positions[i])) = dmasked.row(static_cast<Eigen::Index>(i));
  }
  return out;
}

LossGrad loss_cau_backward(const Matrix& states, const Matrix& targets, Decoder& decoder,
                           double weight) {
  require(states.rows() >= 2, "loss_cau: need at least two tokens");
  check_targets(states, targets, decoder);
  const auto n = states.rows();
  DecoderCache cache;
  Matrix diff = decoder.forward(states.topRows(n - 1), &cache) - targets.bottomRows(n - 1);
  const double count = static_cast<double>(n - 1);
  LossGrad out;
  out.loss = diff.squaredNorm() / count;
  out.dstates = Matrix::Zero(states.rows(), states.cols());
  out.dstates.topRows(n - 1) = decoder.backward(diff * (2.0 * weight / count), cache);
  return out;
}

}  // namespace eegalign
