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
#include <string>
#include <string_view>
#include <vector>

#include "eegalign/nn.hpp"
#include "eegalign/textembed.hpp"

namespace eegalign {

/// prototype: cosine alignment with target text embeddings (the default).
/// softmax: label-ID cross-entropy head, used only for the ablation that
/// drops target text embeddings.
enum class HeadKind { prototype, softmax };

struct InstructConfig {
  std::size_t text_dim = kDefaultTextDim;
  std::size_t queries = 8;
  std::size_t qformer_layers = 4;
  std::size_t qformer_heads = 8;
  bool query_self_attention = true;
  std::size_t ff_scale = 4;
  std::size_t head_hidden = 256;
  HeadKind head = HeadKind::prototype;
  /// Initial bias of the FiLM scale half; tanh(1) keeps early gamma near 0.76.
  double film_gamma_init = 1.0;

  void validate(std::size_t d) const;
};

struct FilmCache {
  nn::Matrix input;
  nn::RowVector instruction;
  nn::RowVector activation;  // tanh output, [gamma | beta]
};

/// (gamma, beta) = tanh(e_ins W + b), split in two d-sized halves, broadcast
/// over all token rows: out = gamma * m + beta.
class Film {
 public:
  Film() = default;
  Film(std::size_t d, std::size_t text_dim);

  void init(Rng& rng, double gamma_init);
  nn::RowVector coefficients(const nn::RowVector& instruction) const;
  nn::Matrix forward(const nn::Matrix& m, const nn::RowVector& instruction, FilmCache* cache) const;
  nn::Matrix backward(const nn::Matrix& dy, const FilmCache& cache);
  void visit(const std::string& prefix, const nn::ParamVisitor& fn);

  std::size_t d() const { return static_cast<std::size_t>(bias.value.cols() / 2); }

  nn::Param weight;  // text_dim x 2d
  nn::Param bias;    // 1 x 2d
};

nn::Matrix film_condition(const nn::Matrix& m, const nn::RowVector& instruction, const Film& film);

struct QFormerLayerCache {
  nn::LayerNormCache ln_self, ln_cross, ln_ffn;
  nn::AttentionCache self_attn;
  nn::Matrix memory;        // conditioned EEG tokens
  nn::Matrix query_normed;  // LN(Q) feeding W_Q
  nn::Matrix q, k, v;
  nn::Matrix probs;  // N_q x M cross-attention weights
  nn::FeedForwardCache ffn;
};

/// Optional query self-attention, single-head cross-attention
/// softmax(LN(Q) W_Q (m W_K)^T / sqrt(d)) m W_V with a residual, then a
/// pre-norm feed-forward block.
class QFormerLayer {
 public:
  QFormerLayer() = default;
  QFormerLayer(std::size_t d, std::size_t heads, std::size_t ff_hidden, bool self_attention);

  void init(Rng& rng);
  nn::Matrix forward(const nn::Matrix& queries, const nn::Matrix& memory, QFormerLayerCache* cache) const;
  /// Returns d queries; adds d memory into dmemory.
  nn::Matrix backward(const nn::Matrix& dy, const QFormerLayerCache& cache, nn::Matrix& dmemory);
  void visit(const std::string& prefix, const nn::ParamVisitor& fn);

  bool has_self_attention = true;
  nn::LayerNorm ln_self;
  nn::MultiHeadAttention self_attn;
  nn::LayerNorm ln_cross;
  nn::Param w_query, w_key, w_value;  // d x d
  nn::LayerNorm ln_ffn;
  nn::FeedForward ffn;
};

struct QFormerCache {
  std::vector<QFormerLayerCache> layers;
  nn::LayerNormCache final_norm;
};

class QFormer {
 public:
  QFormer() = default;
  QFormer(std::size_t d, const InstructConfig& config);

  void init(Rng& rng);
  nn::Matrix forward(const nn::Matrix& memory, QFormerCache* cache) const;
  /// Gradient w.r.t. the memory rows.
  nn::Matrix backward(const nn::Matrix& dqueries, const QFormerCache& cache);
  void visit(const std::string& prefix, const nn::ParamVisitor& fn);

  nn::Param queries;  // N_q x d
  std::vector<QFormerLayer> layers;
  nn::LayerNorm final_norm;
};

struct HeadCache {
  nn::Matrix pooled;
  nn::Matrix hidden_pre;
  nn::Matrix hidden;
  Eigen::Index queries = 0;
};

/// Mean over queries, then a two-layer perceptron into the text space.
class Head {
 public:
  Head() = default;
  Head(std::size_t d, std::size_t hidden, std::size_t text_dim);

  void init(Rng& rng);
  nn::RowVector forward(const nn::Matrix& queries, HeadCache* cache) const;
  nn::Matrix backward(const nn::RowVector& dh, const HeadCache& cache);
  void visit(const std::string& prefix, const nn::ParamVisitor& fn);

  nn::Linear fc1, fc2;
};

nn::RowVector aggregate_head(const nn::Matrix& queries, const Head& head);

/// Ordered class names with their unit-norm target embeddings.
struct PrototypeBank {
  std::vector<std::string> classes;
  nn::Matrix prototypes;  // |C| x k

  static PrototypeBank build(const std::vector<std::string>& classes, const TextEncoder& encoder);
  std::optional<std::size_t> index_of(std::string_view name) const;
  std::size_t size() const { return classes.size(); }
  void validate() const;
};

double cosine(const nn::RowVector& a, const nn::RowVector& b);

/// (1/|C|) (1 - cos(h, e_y)).
double alignment_loss(const nn::RowVector& h, const std::string& label, const PrototypeBank& bank);

struct AlignmentGrad {
  double loss = 0.0;
  nn::RowVector dh;
};
AlignmentGrad alignment_loss_backward(const nn::RowVector& h, const std::string& label,
                                      const PrototypeBank& bank);

struct Prediction {
  std::string label;
  std::size_t index = 0;
  std::vector<double> scores;  // cosine per class, bank order
};

/// Nearest prototype by cosine; ties go to the earlier class.
Prediction predict(const nn::RowVector& h, const PrototypeBank& bank);

/// Label-ID head for the cross-entropy ablation.
class LabelClassifier {
 public:
  LabelClassifier() = default;
  LabelClassifier(std::size_t text_dim, std::vector<std::string> labels);

  void init(Rng& rng);
  nn::RowVector logits(const nn::RowVector& h) const;
  /// Mean cross-entropy is the caller's job; this returns -log p(label) and
  /// accumulates its gradient scaled by weight, returning d/dh.
  AlignmentGrad loss_backward(const nn::RowVector& h, const std::string& label, double weight);
  double loss(const nn::RowVector& h, const std::string& label) const;
  /// argmax over the logits of the bank's classes.
  Prediction predict(const nn::RowVector& h, const PrototypeBank& bank) const;
  void visit(const std::string& prefix, const nn::ParamVisitor& fn);

  const std::vector<std::string>& labels() const { return labels_; }

  nn::Linear linear;

 private:
  std::size_t label_index(const std::string& label) const;
  std::vector<std::string> labels_;
};

enum class InstructionLevel { none, task, task_and_targets };

const char* to_string(InstructionLevel level);
InstructionLevel parse_instruction_level(std::string_view text);

/// dataset -> (task instruction, task-and-targets instruction, targets).
class InstructionCatalog {
 public:
  struct Entry {
    std::string name;
    std::string task;
    std::string task_and_targets;
    std::vector<std::string> targets;
  };

  static InstructionCatalog parse(std::string_view json_text, const std::string& origin = "<memory>");
  static InstructionCatalog load(const std::string& path);
  /// The bundled catalog (data/catalog.json, compiled in).
  static const InstructionCatalog& standard();
  std::string to_json() const;

  const Entry& entry(const std::string& dataset) const;
  bool contains(const std::string& dataset) const;
  std::string instruction(const std::string& dataset, InstructionLevel level) const;
  const std::string& no_instruction() const { return no_instruction_; }
  const std::vector<Entry>& entries() const { return entries_; }

 private:
  std::string no_instruction_ = "Default";
  std::vector<Entry> entries_;
};

}  // namespace eegalign
