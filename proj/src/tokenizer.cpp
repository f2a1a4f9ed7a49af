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

#include "eegalign/tokenizer.hpp"

#include <cmath>

namespace eegalign {

using nn::Matrix;

void TokenizerConfig::validate() const {
  require(d > 0 && channels > 0 && window > 0 && temporal_kernel > 0 && pool > 0,
          "tokenizer: sizes must be positive");
  require(window + 2 * padding >= temporal_kernel, "tokenizer: kernel longer than padded window");
  require(tokens_per_segment() > 0, "tokenizer: window too short for one token");
  require(window % tokens_per_segment() == 0,
          "tokenizer: window must split evenly into per-token slices");
}

Tokenizer::Tokenizer(const TokenizerConfig& config) : config_(config) {
  config_.validate();
  const auto d = static_cast<Eigen::Index>(config.d);
  temporal_weight.resize(d, static_cast<Eigen::Index>(config.temporal_kernel), nn::ParamGroup::other);
  temporal_bias.resize(1, d, nn::ParamGroup::other);
  spatial_weight.resize(d, static_cast<Eigen::Index>(config.channels), nn::ParamGroup::other);
  spatial_bias.resize(1, d, nn::ParamGroup::other);
  bn_gain.resize(1, d, nn::ParamGroup::other);
  bn_gain.value.setOnes();
  bn_shift.resize(1, d, nn::ParamGroup::other);
  running_mean = Eigen::VectorXd::Zero(d);
  running_var = Eigen::VectorXd::Ones(d);
}

void Tokenizer::init(Rng& rng) {
  nn::init_normal(temporal_weight, rng, 1.0 / std::sqrt(static_cast<double>(config_.temporal_kernel)));
  nn::init_normal(spatial_weight, rng, 1.0 / std::sqrt(static_cast<double>(config_.channels)));
  temporal_bias.value.setZero();
  spatial_bias.value.setZero();
}

Matrix Tokenizer::forward(std::span<const Matrix> segments, bool training, TokenizerCache* cache) {
  const auto d = static_cast<Eigen::Index>(config_.d);
  const auto window = static_cast<Eigen::Index>(config_.window);
  const auto kernel = static_cast<Eigen::Index>(config_.temporal_kernel);
  const auto pad = static_cast<Eigen::Index>(config_.padding);
  const auto length = static_cast<Eigen::Index>(config_.conv_length());
  const auto pool = static_cast<Eigen::Index>(config_.pool);
  const auto tokens = static_cast<Eigen::Index>(config_.tokens_per_segment());
  const auto count = static_cast<Eigen::Index>(segments.size());

  // bias of the fused conv pair: spatial(temporal bias) + spatial bias
  const Eigen::VectorXd fused_bias =
      (temporal_bias.value.row(0).transpose().array() * spatial_weight.value.rowwise().sum().array())
          .matrix() +
      spatial_bias.value.row(0).transpose();

  std::vector<Matrix> spatial(segments.size());
  std::vector<Matrix> conv(segments.size());
  for (Eigen::Index s = 0; s < count; ++s) {
    const Matrix& x = segments[s];
    if (x.rows() != static_cast<Eigen::Index>(config_.channels) || x.cols() != window) {
      fail(ErrorKind::dimension_mismatch,
           "tokenize: segment is " + std::to_string(x.rows()) + "x" + std::to_string(x.cols()) +
               ", expected " + std::to_string(config_.channels) + "x" + std::to_string(window));
    }
    spatial[s].noalias() = spatial_weight.value * x;
    Matrix& v = conv[s];
    v.resize(d, length);
    for (Eigen::Index m = 0; m < d; ++m) {
      const double* u = spatial[s].row(m).data();
      const double* w = temporal_weight.value.row(m).data();
      for (Eigen::Index t = 0; t < length; ++t) {
        // input index of kernel tap k is t + k - pad
        const Eigen::Index k_lo = std::max<Eigen::Index>(0, pad - t);
        const Eigen::Index k_hi = std::min<Eigen::Index>(kernel, window + pad - t);
        double acc = fused_bias(m);
        for (Eigen::Index k = k_lo; k < k_hi; ++k) acc += w[k] * u[t + k - pad];
        v(m, t) = acc;
      }
    }
  }

  Eigen::VectorXd mean(d), var(d);
  if (training) {
    require(count > 0, "tokenize: empty batch in training mode");
    const double total = static_cast<double>(count * length);
    mean.setZero();
    for (const auto& v : conv) mean += v.rowwise().sum();
    mean /= total;
    var.setZero();
    for (const auto& v : conv) var += (v.colwise() - mean).array().square().rowwise().sum().matrix();
    var /= total;
    const double unbiased = total > 1 ? total / (total - 1) : 1.0;
    running_mean = (1 - config_.bn_momentum) * running_mean + config_.bn_momentum * mean;
    running_var = (1 - config_.bn_momentum) * running_var + config_.bn_momentum * unbiased * var;
  } else {
    mean = running_mean;
    var = running_var;
  }
  const Eigen::VectorXd inv_std = (var.array() + config_.bn_eps).rsqrt().matrix();

  Matrix out(count * tokens, d);
  std::vector<Matrix> normalized(segments.size());
  for (Eigen::Index s = 0; s < count; ++s) {
    Matrix& xhat = normalized[s];
    xhat = ((conv[s].colwise() - mean).array().colwise() * inv_std.array()).matrix();
    for (Eigen::Index m = 0; m < d; ++m) {
      const double g = bn_gain.value(0, m), b = bn_shift.value(0, m);
      for (Eigen::Index j = 0; j < tokens; ++j) {
        out(s * tokens + j, m) = g * xhat.row(m).segment(j * pool, pool).mean() + b;
      }
    }
  }
  if (cache) {
    cache->inputs.clear();
    for (const auto& x : segments) cache->inputs.push_back(&x);
    cache->spatial = std::move(spatial);
    cache->normalized = std::move(normalized);
    cache->inv_std = inv_std;
    cache->training = training;
  }
  return out;
}

void Tokenizer::backward(const Matrix& dtokens, const TokenizerCache& cache) {
  const auto d = static_cast<Eigen::Index>(config_.d);
  const auto window = static_cast<Eigen::Index>(config_.window);
  const auto kernel = static_cast<Eigen::Index>(config_.temporal_kernel);
  const auto pad = static_cast<Eigen::Index>(config_.padding);
  const auto length = static_cast<Eigen::Index>(config_.conv_length());
  const auto pool = static_cast<Eigen::Index>(config_.pool);
  const auto tokens = static_cast<Eigen::Index>(config_.tokens_per_segment());
  const auto count = static_cast<Eigen::Index>(cache.normalized.size());
  const double inv_pool = 1.0 / static_cast<double>(pool);

  // gradient w.r.t. the normalized maps (positions past the last pool are unused)
  std::vector<Matrix> dxhat(cache.normalized.size());
  Eigen::VectorXd sum_d = Eigen::VectorXd::Zero(d), sum_dx = Eigen::VectorXd::Zero(d);
  for (Eigen::Index s = 0; s < count; ++s) {
    Matrix dy = Matrix::Zero(d, length);
    for (Eigen::Index j = 0; j < tokens; ++j) {
      for (Eigen::Index m = 0; m < d; ++m) {
        dy.row(m).segment(j * pool, pool).setConstant(dtokens(s * tokens + j, m) * inv_pool);
      }
    }
    bn_gain.grad.row(0) += dy.cwiseProduct(cache.normalized[s]).rowwise().sum().transpose();
    bn_shift.grad.row(0) += dy.rowwise().sum().transpose();
    dxhat[s] = dy.array().colwise() * bn_gain.value.row(0).transpose().array();
    sum_d += dxhat[s].rowwise().sum();
    sum_dx += dxhat[s].cwiseProduct(cache.normalized[s]).rowwise().sum();
  }
  const double total = static_cast<double>(count * length);

  Eigen::VectorXd dfused = Eigen::VectorXd::Zero(d);
  for (Eigen::Index s = 0; s < count; ++s) {
    Matrix dv;
    if (cache.training) {
      dv = ((dxhat[s].colwise() - sum_d / total).array() -
            cache.normalized[s].array().colwise() * (sum_dx / total).array())
               .colwise() *
           cache.inv_std.array();
    } else {
      dv = dxhat[s].array().colwise() * cache.inv_std.array();
    }
    dfused += dv.rowwise().sum();

    Matrix du = Matrix::Zero(d, window);
    for (Eigen::Index m = 0; m < d; ++m) {
      const double* u = cache.spatial[s].row(m).data();
      const double* w = temporal_weight.value.row(m).data();
      double* dw = temporal_weight.grad.row(m).data();
      double* dum = du.row(m).data();
      for (Eigen::Index t = 0; t < length; ++t) {
        const double g = dv(m, t);
        if (g == 0.0) continue;
        const Eigen::Index k_lo = std::max<Eigen::Index>(0, pad - t);
        const Eigen::Index k_hi = std::min<Eigen::Index>(kernel, window + pad - t);
        for (Eigen::Index k = k_lo; k < k_hi; ++k) {
          dw[k] += g * u[t + k - pad];
          dum[t + k - pad] += g * w[k];
        }
      }
    }
    spatial_weight.grad.noalias() += du * cache.inputs[s]->transpose();
  }
  // fused_bias = temporal_bias * rowsum(spatial_weight) + spatial_bias
  const Eigen::VectorXd row_sums = spatial_weight.value.rowwise().sum();
  temporal_bias.grad.row(0) += (dfused.array() * row_sums.array()).matrix().transpose();
  spatial_bias.grad.row(0) += dfused.transpose();
  spatial_weight.grad.colwise() += (dfused.array() * temporal_bias.value.row(0).transpose().array()).matrix();
}

void Tokenizer::visit(const std::string& prefix, const nn::ParamVisitor& fn) {
  fn(prefix + ".temporal_weight", temporal_weight);
  fn(prefix + ".temporal_bias", temporal_bias);
  fn(prefix + ".spatial_weight", spatial_weight);
  fn(prefix + ".spatial_bias", spatial_bias);
  fn(prefix + ".bn_gain", bn_gain);
  fn(prefix + ".bn_shift", bn_shift);
}

TokenSequence tokenize(std::span<const BasicSegment<double>> segments, Tokenizer& tokenizer,
                       bool training) {
  std::vector<Matrix> inputs;
  inputs.reserve(segments.size());
  for (const auto& s : segments) inputs.emplace_back(s.data);
  TokenSequence seq;
  seq.tokens = tokenizer.forward(inputs, training, nullptr);
  const std::size_t per = tokenizer.config().tokens_per_segment();
  for (const auto& s : segments) {
    for (std::size_t j = 0; j < per; ++j) seq.provenance.push_back({s.trial_id, s.index, j});
  }
  return seq;
}

}  // namespace eegalign
