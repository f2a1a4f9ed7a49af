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

#include <Eigen/Core>

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "eegalign/common.hpp"

// Layers with explicit forward caches and hand-written backward passes.
// Activations are row-major (rows = tokens). backward() accumulates into
// Param::grad and returns the gradient with respect to the layer input.
namespace eegalign::nn {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic>;

/// Optimizer groups. The two encoder transformers train at a reduced rate
/// during instruction tuning.
enum class ParamGroup { transformer, other };

struct Param {
  Matrix value;
  Matrix grad;
  ParamGroup group = ParamGroup::other;
  bool trainable = true;

  void resize(Eigen::Index rows, Eigen::Index cols, ParamGroup g) {
    value = Matrix::Zero(rows, cols);
    grad = Matrix::Zero(rows, cols);
    group = g;
  }
  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
  Eigen::Index size() const { return value.size(); }
};

using ParamVisitor = std::function<void(const std::string& name, Param& param)>;

void init_normal(Param& p, Rng& rng, double stddev);

// Element-wise GELU, erf form: x * Phi(x).
Matrix gelu(const Matrix& x);
Matrix gelu_backward(const Matrix& x, const Matrix& dy);
inline constexpr const char* kActivationTag = "gelu_erf";

/// y = x W + b with W stored in x out.
class Linear {
 public:
  Linear() = default;
  Linear(std::size_t in, std::size_t out, bool bias, ParamGroup group);

  void init(Rng& rng);
  Matrix forward(const Matrix& x) const;
  Matrix backward(const Matrix& x, const Matrix& dy);
  void visit(const std::string& prefix, const ParamVisitor& fn);

  std::size_t in_features() const { return static_cast<std::size_t>(weight.value.rows()); }
  std::size_t out_features() const { return static_cast<std::size_t>(weight.value.cols()); }

  Param weight;
  Param bias;
  bool has_bias = true;
};

struct LayerNormCache {
  Matrix normalized;
  Eigen::VectorXd inv_std;
};

/// Per-row normalization over the feature axis.
class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(std::size_t dim, ParamGroup group);

  Matrix forward(const Matrix& x, LayerNormCache* cache) const;
  Matrix backward(const Matrix& dy, const LayerNormCache& cache);
  void visit(const std::string& prefix, const ParamVisitor& fn);

  Param gain;
  Param shift;
  double eps = 1e-5;
};

struct AttentionCache {
  Matrix input;
  Matrix q, k, v;
  std::vector<Matrix> probs;  // one (n x n) matrix per head
  Matrix context;
};

/// Multi-head self-attention with an optional causal mask (position i
/// attends to positions <= i only).
class MultiHeadAttention {
 public:
  MultiHeadAttention() = default;
  MultiHeadAttention(std::size_t dim, std::size_t heads, ParamGroup group);

  void init(Rng& rng);
  Matrix forward(const Matrix& x, bool causal, AttentionCache* cache) const;
  Matrix backward(const Matrix& dy, const AttentionCache& cache);
  void visit(const std::string& prefix, const ParamVisitor& fn);

  std::size_t heads() const { return heads_; }

  Linear query, key, value, output;

 private:
  std::size_t heads_ = 1;
};

/// Row softmax of scores; with causal set, entries j > i are exactly zero.
Matrix softmax_rows(const Matrix& scores, bool causal);
/// dS given P = softmax(S) and dP.
Matrix softmax_rows_backward(const Matrix& probs, const Matrix& dprobs);

struct FeedForwardCache {
  Matrix input;
  Matrix hidden_pre;
  Matrix hidden;
};

class FeedForward {
 public:
  FeedForward() = default;
  FeedForward(std::size_t dim, std::size_t hidden, ParamGroup group);

  void init(Rng& rng);
  Matrix forward(const Matrix& x, FeedForwardCache* cache) const;
  Matrix backward(const Matrix& dy, const FeedForwardCache& cache);
  void visit(const std::string& prefix, const ParamVisitor& fn);

  Linear up, down;
};

/// Inverted dropout. A null generator or zero rate disables it.
struct Dropout {
  double rate = 0.0;

  Matrix apply(const Matrix& x, Rng* rng, Matrix* mask) const;
};

struct BlockCache {
  LayerNormCache ln1, ln2;
  AttentionCache attn;
  FeedForwardCache ffn;
  Matrix drop_attn, drop_ffn;  // empty when dropout was inactive
};

/// Pre-norm transformer block: x + Attn(LN(x)), then + FFN(LN(.)).
class TransformerBlock {
 public:
  TransformerBlock() = default;
  TransformerBlock(std::size_t dim, std::size_t heads, std::size_t ff_hidden, double dropout,
                   ParamGroup group);

  void init(Rng& rng);
  Matrix forward(const Matrix& x, bool causal, Rng* dropout_rng, BlockCache* cache) const;
  Matrix backward(const Matrix& dy, const BlockCache& cache);
  void visit(const std::string& prefix, const ParamVisitor& fn);

  LayerNorm ln1, ln2;
  MultiHeadAttention attn;
  FeedForward ffn;
  Dropout dropout;
};

struct StackCache {
  std::vector<BlockCache> blocks;
  LayerNormCache final_norm;
};

/// Block stack followed by a final LayerNorm.
class TransformerStack {
 public:
  TransformerStack() = default;
  TransformerStack(std::size_t layers, std::size_t dim, std::size_t heads, std::size_t ff_hidden,
                   double dropout, bool causal, ParamGroup group);

  void init(Rng& rng);
  Matrix forward(const Matrix& x, Rng* dropout_rng, StackCache* cache) const;
  Matrix backward(const Matrix& dy, const StackCache& cache);
  void visit(const std::string& prefix, const ParamVisitor& fn);

  bool causal() const { return causal_; }

  std::vector<TransformerBlock> blocks;
  LayerNorm final_norm;

 private:
  bool causal_ = false;
};

}  // namespace eegalign::nn
