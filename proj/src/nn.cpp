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

#include "eegalign/nn.hpp"

#include <cmath>
#include <numbers>

namespace eegalign::nn {

void init_normal(Param& p, Rng& rng, double stddev) {
  for (Eigen::Index i = 0; i < p.value.size(); ++i) p.value.data()[i] = stddev * rng.normal();
}

Matrix gelu(const Matrix& x) {
  return x.unaryExpr([](double v) { return 0.5 * v * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0)); });
}

Matrix gelu_backward(const Matrix& x, const Matrix& dy) {
  const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
  Matrix dx(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double v = x.data()[i];
    const double cdf = 0.5 * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0));
    const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
    dx.data()[i] = dy.data()[i] * (cdf + v * pdf);
  }
  return dx;
}

// Linear

Linear::Linear(std::size_t in, std::size_t out, bool bias, ParamGroup group) : has_bias(bias) {
  weight.resize(static_cast<Eigen::Index>(in), static_cast<Eigen::Index>(out), group);
  if (has_bias) this->bias.resize(1, static_cast<Eigen::Index>(out), group);
}

void Linear::init(Rng& rng) {
  const double fan = static_cast<double>(weight.value.rows() + weight.value.cols());
  init_normal(weight, rng, std::sqrt(2.0 / fan));
  if (has_bias) bias.value.setZero();
}

Matrix Linear::forward(const Matrix& x) const {
  Matrix y = x * weight.value;
  if (has_bias) y.rowwise() += bias.value.row(0);
  return y;
}

Matrix Linear::backward(const Matrix& x, const Matrix& dy) {
  if (weight.trainable) weight.grad.noalias() += x.transpose() * dy;
  if (has_bias && bias.trainable) bias.grad.row(0) += dy.colwise().sum();
  return dy * weight.value.transpose();
}

void Linear::visit(const std::string& prefix, const ParamVisitor& fn) {
  fn(prefix + ".weight", weight);
  if (has_bias) fn(prefix + ".bias", bias);
}

// LayerNorm

LayerNorm::LayerNorm(std::size_t dim, ParamGroup group) {
  gain.resize(1, static_cast<Eigen::Index>(dim), group);
  gain.value.setOnes();
  shift.resize(1, static_cast<Eigen::Index>(dim), group);
}

Matrix LayerNorm::forward(const Matrix& x, LayerNormCache* cache) const {
  const auto n = x.rows();
  const double dim = static_cast<double>(x.cols());
  Matrix xhat(n, x.cols());
  Eigen::VectorXd inv_std(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double mean = x.row(i).sum() / dim;
    const double var = (x.row(i).array() - mean).square().sum() / dim;
    inv_std(i) = 1.0 / std::sqrt(var + eps);
    xhat.row(i) = (x.row(i).array() - mean) * inv_std(i);
  }
  Matrix y = xhat.array().rowwise() * gain.value.row(0).array();
  y.rowwise() += shift.value.row(0);
  if (cache) {
    cache->normalized = std::move(xhat);
    cache->inv_std = std::move(inv_std);
  }
  return y;
}

Matrix LayerNorm::backward(const Matrix& dy, const LayerNormCache& cache) {
  const auto& xhat = cache.normalized;
  if (gain.trainable) gain.grad.row(0) += (dy.array() * xhat.array()).colwise().sum().matrix();
  if (shift.trainable) shift.grad.row(0) += dy.colwise().sum();
  Matrix dxhat = dy.array().rowwise() * gain.value.row(0).array();
  const double dim = static_cast<double>(dy.cols());
  Matrix dx(dy.rows(), dy.cols());
  for (Eigen::Index i = 0; i < dy.rows(); ++i) {
    const double mean_d = dxhat.row(i).sum() / dim;
    const double mean_dx = dxhat.row(i).dot(xhat.row(i)) / dim;
    dx.row(i) = cache.inv_std(i) *
                (dxhat.row(i).array() - mean_d - xhat.row(i).array() * mean_dx).matrix();
  }
  return dx;
}

void LayerNorm::visit(const std::string& prefix, const ParamVisitor& fn) {
  fn(prefix + ".gain", gain);
  fn(prefix + ".shift", shift);
}

// Attention

Matrix softmax_rows(const Matrix& scores, bool causal) {
  Matrix p = Matrix::Zero(scores.rows(), scores.cols());
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    const Eigen::Index limit = causal ? std::min(i + 1, scores.cols()) : scores.cols();
    const double peak = scores.row(i).head(limit).maxCoeff();
    double total = 0.0;
    for (Eigen::Index j = 0; j < limit; ++j) {
      p(i, j) = std::exp(scores(i, j) - peak);
      total += p(i, j);
    }
    p.row(i).head(limit) /= total;
  }
  return p;
}

Matrix softmax_rows_backward(const Matrix& probs, const Matrix& dprobs) {
  Matrix ds = probs.cwiseProduct(dprobs);
  const Eigen::VectorXd inner = ds.rowwise().sum();
  ds -= (probs.array().colwise() * inner.array()).matrix();
  return ds;
}

MultiHeadAttention::MultiHeadAttention(std::size_t dim, std::size_t heads, ParamGroup group)
    : query(dim, dim, true, group),
      key(dim, dim, true, group),
      value(dim, dim, true, group),
      output(dim, dim, true, group),
      heads_(heads) {
  require(heads > 0 && dim % heads == 0, "attention: dim must be divisible by heads");
}

void MultiHeadAttention::init(Rng& rng) {
  query.init(rng);
  key.init(rng);
  value.init(rng);
  output.init(rng);
}

Matrix MultiHeadAttention::forward(const Matrix& x, bool causal, AttentionCache* cache) const {
  const auto dim = x.cols();
  const auto head_dim = dim / static_cast<Eigen::Index>(heads_);
  const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));
  Matrix q = query.forward(x);
  Matrix k = key.forward(x);
  Matrix v = value.forward(x);
  Matrix context(x.rows(), dim);
  std::vector<Matrix> probs;
  probs.reserve(heads_);
  for (std::size_t h = 0; h < heads_; ++h) {
    const auto off = static_cast<Eigen::Index>(h) * head_dim;
    Matrix scores = q.middleCols(off, head_dim) * k.middleCols(off, head_dim).transpose() * scale;
    Matrix p = softmax_rows(scores, causal);
    context.middleCols(off, head_dim).noalias() = p * v.middleCols(off, head_dim);
    probs.push_back(std::move(p));
  }
  Matrix y = output.forward(context);
  if (cache) {
    cache->input = x;
    cache->q = std::move(q);
    cache->k = std::move(k);
    cache->v = std::move(v);
    cache->probs = std::move(probs);
    cache->context = std::move(context);
  }
  return y;
}

Matrix MultiHeadAttention::backward(const Matrix& dy, const AttentionCache& cache) {
  const auto dim = cache.input.cols();
  const auto head_dim = dim / static_cast<Eigen::Index>(heads_);
  const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));
  Matrix dcontext = output.backward(cache.context, dy);
  Matrix dq(dy.rows(), dim), dk(dy.rows(), dim), dv(dy.rows(), dim);
  for (std::size_t h = 0; h < heads_; ++h) {
    const auto off = static_cast<Eigen::Index>(h) * head_dim;
    const Matrix& p = cache.probs[h];
    const auto dctx = dcontext.middleCols(off, head_dim);
    Matrix dp = dctx * cache.v.middleCols(off, head_dim).transpose();
    dv.middleCols(off, head_dim).noalias() = p.transpose() * dctx;
    Matrix ds = softmax_rows_backward(p, dp) * scale;
    dq.middleCols(off, head_dim).noalias() = ds * cache.k.middleCols(off, head_dim);
    dk.middleCols(off, head_dim).noalias() = ds.transpose() * cache.q.middleCols(off, head_dim);
  }
  Matrix dx = query.backward(cache.input, dq);
  dx += key.backward(cache.input, dk);
  dx += value.backward(cache.input, dv);
  return dx;
}

void MultiHeadAttention::visit(const std::string& prefix, const ParamVisitor& fn) {
  query.visit(prefix + ".query", fn);
  key.visit(prefix + ".key", fn);
  value.visit(prefix + ".value", fn);
  output.visit(prefix + ".output", fn);
}

// Feed-forward

FeedForward::FeedForward(std::size_t dim, std::size_t hidden, ParamGroup group)
    : up(dim, hidden, true, group), down(hidden, dim, true, group) {}

void FeedForward::init(Rng& rng) {
  up.init(rng);
  down.init(rng);
}

Matrix FeedForward::forward(const Matrix& x, FeedForwardCache* cache) const {
  Matrix pre = up.forward(x);
  Matrix hidden = gelu(pre);
  Matrix y = down.forward(hidden);
  if (cache) {
    cache->input = x;
    cache->hidden_pre = std::move(pre);
    cache->hidden = std::move(hidden);
  }
  return y;
}

Matrix FeedForward::backward(const Matrix& dy, const FeedForwardCache& cache) {
  Matrix dhidden = down.backward(cache.hidden, dy);
  return up.backward(cache.input, gelu_backward(cache.hidden_pre, dhidden));
}

void FeedForward::visit(const std::string& prefix, const ParamVisitor& fn) {
  up.visit(prefix + ".up", fn);
  down.visit(prefix + ".down", fn);
}

Matrix Dropout::apply(const Matrix& x, Rng* rng, Matrix* mask) const {
  if (rng == nullptr || rate <= 0.0) return x;
  Matrix m(x.rows(), x.cols());
  const double keep = 1.0 - rate;
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng->uniform() < keep ? 1.0 / keep : 0.0;
  Matrix y = x.cwiseProduct(m);
  if (mask) *mask = std::move(m);
  return y;
}

// Transformer

TransformerBlock::TransformerBlock(std::size_t dim, std::size_t heads, std::size_t ff_hidden,
                                   double dropout_rate, ParamGroup group)
    : ln1(dim, group), ln2(dim, group), attn(dim, heads, group), ffn(dim, ff_hidden, group) {
  dropout.rate = dropout_rate;
}

void TransformerBlock::init(Rng& rng) {
  attn.init(rng);
  ffn.init(rng);
}

Matrix TransformerBlock::forward(const Matrix& x, bool causal, Rng* dropout_rng,
                                 BlockCache* cache) const {
  Matrix a = attn.forward(ln1.forward(x, cache ? &cache->ln1 : nullptr), causal,
                          cache ? &cache->attn : nullptr);
  a = dropout.apply(a, dropout_rng, cache ? &cache->drop_attn : nullptr);
  Matrix x1 = x + a;
  Matrix f = ffn.forward(ln2.forward(x1, cache ? &cache->ln2 : nullptr),
                         cache ? &cache->ffn : nullptr);
  f = dropout.apply(f, dropout_rng, cache ? &cache->drop_ffn : nullptr);
  return x1 + f;
}

Matrix TransformerBlock::backward(const Matrix& dy, const BlockCache& cache) {
  Matrix df = cache.drop_ffn.size() ? Matrix(dy.cwiseProduct(cache.drop_ffn)) : dy;
  Matrix dx1 = dy + ln2.backward(ffn.backward(df, cache.ffn), cache.ln2);
  Matrix da = cache.drop_attn.size() ? Matrix(dx1.cwiseProduct(cache.drop_attn)) : dx1;
  return dx1 + ln1.backward(attn.backward(da, cache.attn), cache.ln1);
}

void TransformerBlock::visit(const std::string& prefix, const ParamVisitor& fn) {
  ln1.visit(prefix + ".ln1", fn);
  attn.visit(prefix + ".attn", fn);
  ln2.visit(prefix + ".ln2", fn);
  ffn.visit(prefix + ".ffn", fn);
}

TransformerStack::TransformerStack(std::size_t layers, std::size_t dim, std::size_t heads,
                                   std::size_t ff_hidden, double dropout, bool causal,
                                   ParamGroup group)
    : final_norm(dim, group), causal_(causal) {
  blocks.reserve(layers);
  for (std::size_t i = 0; i < layers; ++i) blocks.emplace_back(dim, heads, ff_hidden, dropout, group);
}

void TransformerStack::init(Rng& rng) {
  for (auto& b : blocks) b.init(rng);
}

Matrix TransformerStack::forward(const Matrix& x, Rng* dropout_rng, StackCache* cache) const {
  if (cache) cache->blocks.resize(blocks.size());
  Matrix h = x;
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    h = blocks[i].forward(h, causal_, dropout_rng, cache ? &cache->blocks[i] : nullptr);
  }
  return final_norm.forward(h, cache ? &cache->final_norm : nullptr);
}

Matrix TransformerStack::backward(const Matrix& dy, const StackCache& cache) {
  Matrix d = final_norm.backward(dy, cache.final_norm);
  for (std::size_t i = blocks.size(); i-- > 0;) d = blocks[i].backward(d, cache.blocks[i]);
  return d;
}

void TransformerStack::visit(const std::string& prefix, const ParamVisitor& fn) {
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    blocks[i].visit(prefix + ".block" + std::to_string(i), fn);
  }
  final_norm.visit(prefix + ".final_norm", fn);
}

}  // namespace eegalign::nn
