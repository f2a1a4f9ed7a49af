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

#include "eegalign/instruct.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "eegalign_resources.hpp"

namespace eegalign {

using nn::Matrix;
using nn::RowVector;

void InstructConfig::validate(std::size_t d) const {
  require(text_dim > 0, "instruct: text_dim must be positive");
  require(queries >= 1, "instruct: need at least one query");
  require(qformer_layers >= 1, "instruct: need at least one Q-Former layer");
  require(!query_self_attention || (qformer_heads >= 1 && d % qformer_heads == 0),
          "instruct: d must be divisible by qformer_heads");
  require(ff_scale >= 1 && head_hidden >= 1, "instruct: sizes must be positive");
}

// FiLM

Film::Film(std::size_t d, std::size_t text_dim) {
  weight.resize(static_cast<Eigen::Index>(text_dim), static_cast<Eigen::Index>(2 * d), nn::ParamGroup::other);
  bias.resize(1, static_cast<Eigen::Index>(2 * d), nn::ParamGroup::other);
}

void Film::init(Rng& rng, double gamma_init) {
  nn::init_normal(weight, rng, 1.0 / std::sqrt(static_cast<double>(weight.value.rows())));
  bias.value.setZero();
  bias.value.leftCols(bias.value.cols() / 2).setConstant(gamma_init);
}

RowVector Film::coefficients(const RowVector& instruction) const {
  if (instruction.size() != weight.value.rows()) {
    fail(ErrorKind::dimension_mismatch, "FiLM: instruction embedding has " +
                                            std::to_string(instruction.size()) + " values, expected " +
                                            std::to_string(weight.value.rows()));
  }
  RowVector pre = instruction * weight.value + bias.value.row(0);
  return pre.array().tanh().matrix();
}

Matrix Film::forward(const Matrix& m, const RowVector& instruction, FilmCache* cache) const {
  const auto dim = static_cast<Eigen::Index>(d());
  if (m.cols() != dim) {
    fail(ErrorKind::dimension_mismatch, "FiLM: token width " + std::to_string(m.cols()) +
                                            " != d " + std::to_string(dim));
  }
  RowVector act = coefficients(instruction);
  Matrix out = m.array().rowwise() * act.head(dim).array();
  out.rowwise() += act.tail(dim);
  if (cache) {
    cache->input = m;
    cache->instruction = instruction;
    cache->activation = std::move(act);
  }
  return out;
}

Matrix Film::backward(const Matrix& dy, const FilmCache& cache) {
  const auto dim = static_cast<Eigen::Index>(d());
  const RowVector& act = cache.activation;
  RowVector dact(2 * dim);
  dact.head(dim) = dy.cwiseProduct(cache.input).colwise().sum();
  dact.tail(dim) = dy.colwise().sum();
  RowVector dpre = dact.array() * (1.0 - act.array().square());
  weight.grad.noalias() += cache.instruction.transpose() * dpre;
  bias.grad.row(0) += dpre;
  return dy.array().rowwise() * act.head(dim).array();
}

void Film::visit(const std::string& prefix, const nn::ParamVisitor& fn) {
  fn(prefix + ".weight", weight);
  fn(prefix + ".bias", bias);
}

Matrix film_condition(const Matrix& m, const RowVector& instruction, const Film& film) {
  return film.forward(m, instruction, nullptr);
}

// Q-Former

QFormerLayer::QFormerLayer(std::size_t d, std::size_t heads, std::size_t ff_hidden,
                           bool self_attention)
    : has_self_attention(self_attention),
      ln_cross(d, nn::ParamGroup::other),
      ln_ffn(d, nn::ParamGroup::other),
      ffn(d, ff_hidden, nn::ParamGroup::other) {
  if (has_self_attention) {
    ln_self = nn::LayerNorm(d, nn::ParamGroup::other);
    self_attn = nn::MultiHeadAttention(d, heads, nn::ParamGroup::other);
  }
  const auto dim = static_cast<Eigen::Index>(d);
  w_query.resize(dim, dim, nn::ParamGroup::other);
  w_key.resize(dim, dim, nn::ParamGroup::other);
  w_value.resize(dim, dim, nn::ParamGroup::other);
}

void QFormerLayer::init(Rng& rng) {
  if (has_self_attention) self_attn.init(rng);
  const double s = 1.0 / std::sqrt(static_cast<double>(w_query.value.rows()));
  nn::init_normal(w_query, rng, s);
  nn::init_normal(w_key, rng, s);
  nn::init_normal(w_value, rng, s);
  ffn.init(rng);
}

Matrix QFormerLayer::forward(const Matrix& queries, const Matrix& memory,
                             QFormerLayerCache* cache) const {
  require(memory.rows() > 0, "Q-Former: empty memory");
  Matrix q0 = queries;
  if (has_self_attention) {
    q0 += self_attn.forward(ln_self.forward(queries, cache ? &cache->ln_self : nullptr), false,
                            cache ? &cache->self_attn : nullptr);
  }
  Matrix qn = ln_cross.forward(q0, cache ? &cache->ln_cross : nullptr);
  Matrix q = qn * w_query.value;
  Matrix k = memory * w_key.value;
  Matrix v = memory * w_value.value;
  const double scale = 1.0 / std::sqrt(static_cast<double>(q.cols()));
  Matrix probs = nn::softmax_rows(q * k.transpose() * scale, false);
  Matrix q1 = q0 + probs * v;
  Matrix out = q1 + ffn.forward(ln_ffn.forward(q1, cache ? &cache->ln_ffn : nullptr),
                                cache ? &cache->ffn : nullptr);
  if (cache) {
    cache->memory = memory;
    cache->query_normed = std::move(qn);
    cache->q = std::move(q);
    cache->k = std::move(k);
    cache->v = std::move(v);
    cache->probs = std::move(probs);
  }
  return out;
}

Matrix QFormerLayer::backward(const Matrix& dy, const QFormerLayerCache& cache, Matrix& dmemory) {
  Matrix dq1 = dy + ln_ffn.backward(ffn.backward(dy, cache.ffn), cache.ln_ffn);

  const double scale = 1.0 / std::sqrt(static_cast<double>(cache.q.cols()));
  Matrix dprobs = dq1 * cache.v.transpose();
  Matrix dv = cache.probs.transpose() * dq1;
  Matrix ds = nn::softmax_rows_backward(cache.probs, dprobs) * scale;
  Matrix dq = ds * cache.k;
  Matrix dk = ds.transpose() * cache.q;
  w_query.grad.noalias() += cache.query_normed.transpose() * dq;
  w_key.grad.noalias() += cache.memory.transpose() * dk;
  w_value.grad.noalias() += cache.memory.transpose() * dv;
  dmemory.noalias() += dk * w_key.value.transpose();
  dmemory.noalias() += dv * w_value.value.transpose();
  Matrix dq0 = dq1 + ln_cross.backward(dq * w_query.value.transpose(), cache.ln_cross);

  if (!has_self_attention) return dq0;
  return dq0 + ln_self.backward(self_attn.backward(dq0, cache.self_attn), cache.ln_self);
}

void QFormerLayer::visit(const std::string& prefix, const nn::ParamVisitor& fn) {
  if (has_self_attention) {
    ln_self.visit(prefix + ".ln_self", fn);
    self_attn.visit(prefix + ".self_attn", fn);
  }
  ln_cross.visit(prefix + ".ln_cross", fn);
  fn(prefix + ".w_query", w_query);
  fn(prefix + ".w_key", w_key);
  fn(prefix + ".w_value", w_value);
  ln_ffn.visit(prefix + ".ln_ffn", fn);
  ffn.visit(prefix + ".ffn", fn);
}

QFormer::QFormer(std::size_t d, const InstructConfig& config) : final_norm(d, nn::ParamGroup::other) {
  config.validate(d);
  queries.resize(static_cast<Eigen::Index>(config.queries), static_cast<Eigen::Index>(d),
                 nn::ParamGroup::other);
  layers.reserve(config.qformer_layers);
  for (std::size_t i = 0; i < config.qformer_layers; ++i) {
    layers.emplace_back(d, config.qformer_heads, d * config.ff_scale, config.query_self_attention);
  }
}

void QFormer::init(Rng& rng) {
  nn::init_normal(queries, rng, 1.0);
  for (auto& l : layers) l.init(rng);
}

Matrix QFormer::forward(const Matrix& memory, QFormerCache* cache) const {
  if (cache) cache->layers.resize(layers.size());
  Matrix q = queries.value;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    q = layers[i].forward(q, memory, cache ? &cache->layers[i] : nullptr);
  }
  return final_norm.forward(q, cache ? &cache->final_norm : nullptr);
}

Matrix QFormer::backward(const Matrix& dqueries, const QFormerCache& cache) {
  Matrix dq = final_norm.backward(dqueries, cache.final_norm);
  Matrix dmemory = Matrix::Zero(cache.layers.front().memory.rows(), cache.layers.front().memory.cols());
  for (std::size_t i = layers.size(); i-- > 0;) dq = layers[i].backward(dq, cache.layers[i], dmemory);
  queries.grad += dq;
  return dmemory;
}

void QFormer::visit(const std::string& prefix, const nn::ParamVisitor& fn) {
  fn(prefix + ".queries", queries);
  for (std::size_t i = 0; i < layers.size(); ++i) layers[i].visit(prefix + ".layer" + std::to_string(i), fn);
  final_norm.visit(prefix + ".final_norm", fn);
}

// Head

Head::Head(std::size_t d, std::size_t hidden, std::size_t text_dim)
    : fc1(d, hidden, true, nn::ParamGroup::other), fc2(hidden, text_dim, true, nn::ParamGroup::other) {}

void Head::init(Rng& rng) {
  fc1.init(rng);
  fc2.init(rng);
}

RowVector Head::forward(const Matrix& queries, HeadCache* cache) const {
  Matrix pooled = queries.colwise().mean();
  Matrix pre = fc1.forward(pooled);
  Matrix hidden = nn::gelu(pre);
  RowVector h = fc2.forward(hidden).row(0);
  if (cache) {
    cache->pooled = std::move(pooled);
    cache->hidden_pre = std::move(pre);
    cache->hidden = std::move(hidden);
    cache->queries = queries.rows();
  }
  return h;
}

Matrix Head::backward(const RowVector& dh, const HeadCache& cache) {
  Matrix dhidden = fc2.backward(cache.hidden, Matrix(dh));
  Matrix dpooled = fc1.backward(cache.pooled, nn::gelu_backward(cache.hidden_pre, dhidden));
  return dpooled.replicate(cache.queries, 1) / static_cast<double>(cache.queries);
}

void Head::visit(const std::string& prefix, const nn::ParamVisitor& fn) {
  fc1.visit(prefix + ".fc1", fn);
  fc2.visit(prefix + ".fc2", fn);
}

RowVector aggregate_head(const Matrix& queries, const Head& head) { return head.forward(queries, nullptr); }

// Prototypes and alignment

PrototypeBank PrototypeBank::build(const std::vector<std::string>& classes, const TextEncoder& encoder) {
  PrototypeBank bank;
  bank.classes = classes;
  bank.prototypes.resize(static_cast<Eigen::Index>(classes.size()),
                         static_cast<Eigen::Index>(encoder.output_dim()));
  for (std::size_t i = 0; i < classes.size(); ++i) {
    bank.prototypes.row(static_cast<Eigen::Index>(i)) = encoder(classes[i]).vector;
  }
  bank.validate();
  return bank;
}

std::optional<std::size_t> PrototypeBank::index_of(std::string_view name) const {
  auto it = std::find(classes.begin(), classes.end(), name);
  if (it == classes.end()) return std::nullopt;
  return static_cast<std::size_t>(it - classes.begin());
}

void PrototypeBank::validate() const {
  require(!classes.empty(), "prototype bank: no classes");
  require(std::set<std::string>(classes.begin(), classes.end()).size() == classes.size(),
          "prototype bank: duplicate class names");
  require(prototypes.rows() == static_cast<Eigen::Index>(classes.size()),
          "prototype bank: one prototype per class required");
  for (Eigen::Index i = 0; i < prototypes.rows(); ++i) {
    if (std::abs(prototypes.row(i).norm() - 1.0) > 1e-5) {
      fail(ErrorKind::numeric, "prototype bank: prototype for " + classes[static_cast<std::size_t>(i)] +
                                   " is not unit norm");
    }
  }
}

double cosine(const RowVector& a, const RowVector& b) { return a.dot(b) / (a.norm() * b.norm()); }

namespace {

std::size_t require_label(const PrototypeBank& bank, const std::string& label) {
  auto idx = bank.index_of(label);
  if (!idx) fail(ErrorKind::missing_label, "label \"" + label + "\" has no prototype");
  return *idx;
}

void require_nonzero(const RowVector& h) {
  if (!(h.norm() > 0.0)) fail(ErrorKind::numeric, "aggregated embedding has zero norm");
}

}  // namespace

double alignment_loss(const RowVector& h, const std::string& label, const PrototypeBank& bank) {
  const std::size_t y = require_label(bank, label);
  require_nonzero(h);
  return (1.0 - cosine(h, bank.prototypes.row(static_cast<Eigen::Index>(y)))) /
         static_cast<double>(bank.size());
}

AlignmentGrad alignment_loss_backward(const RowVector& h, const std::string& label,
                                      const PrototypeBank& bank) {
  const std::size_t y = require_label(bank, label);
  require_nonzero(h);
  const RowVector e = bank.prototypes.row(static_cast<Eigen::Index>(y));
  const double n = h.norm();
  const double he = h.dot(e);
  const double classes = static_cast<double>(bank.size());
  AlignmentGrad out;
  out.loss = (1.0 - he / (n * e.norm())) / classes;
  // d cos / d h for unit e
  const RowVector dcos = e / n - (he / (n * n * n)) * h;
  out.dh = -dcos / classes;
  return out;
}

Prediction predict(const RowVector& h, const PrototypeBank& bank) {
  require_nonzero(h);
  require(bank.size() > 0, "predict: empty prototype bank");
  Prediction p;
  p.scores.reserve(bank.size());
  for (std::size_t c = 0; c < bank.size(); ++c) {
    p.scores.push_back(cosine(h, bank.prototypes.row(static_cast<Eigen::Index>(c))));
    if (p.scores[c] > p.scores[p.index]) p.index = c;
  }
  p.label = bank.classes[p.index];
  return p;
}

// Label-ID classifier

LabelClassifier::LabelClassifier(std::size_t text_dim, std::vector<std::string> labels)
    : linear(text_dim, labels.size(), true, nn::ParamGroup::other), labels_(std::move(labels)) {
  require(!labels_.empty(), "label classifier: no labels");
}

void LabelClassifier::init(Rng& rng) { linear.init(rng); }

std::size_t LabelClassifier::label_index(const std::string& label) const {
  auto it = std::find(labels_.begin(), labels_.end(), label);
  if (it == labels_.end()) fail(ErrorKind::missing_label, "label \"" + label + "\" unknown to classifier");
  return static_cast<std::size_t>(it - labels_.begin());
}

RowVector LabelClassifier::logits(const RowVector& h) const { return linear.forward(Matrix(h)).row(0); }

double LabelClassifier::loss(const RowVector& h, const std::string& label) const {
  const RowVector z = logits(h);
  const double peak = z.maxCoeff();
  const double lse = peak + std::log((z.array() - peak).exp().sum());
  return lse - z(static_cast<Eigen::Index>(label_index(label)));
}

AlignmentGrad LabelClassifier::loss_backward(const RowVector& h, const std::string& label, double weight) {
  const auto y = static_cast<Eigen::Index>(label_index(label));
  const Matrix hm(h);
  const RowVector z = linear.forward(hm).row(0);
  const double peak = z.maxCoeff();
  RowVector p = (z.array() - peak).exp().matrix();
  const double total = p.sum();
  p /= total;
  AlignmentGrad out;
  out.loss = -std::log(p(y));
  Matrix dz = p;
  dz(0, y) -= 1.0;
  dz *= weight;
  out.dh = linear.backward(hm, dz).row(0);
  return out;
}

Prediction LabelClassifier::predict(const RowVector& h, const PrototypeBank& bank) const {
  const RowVector z = logits(h);
  Prediction p;
  for (std::size_t c = 0; c < bank.size(); ++c) {
    p.scores.push_back(z(static_cast<Eigen::Index>(label_index(bank.classes[c]))));
    if (p.scores[c] > p.scores[p.index]) p.index = c;
  }
  p.label = bank.classes[p.index];
  return p;
}

void LabelClassifier::visit(const std::string& prefix, const nn::ParamVisitor& fn) {
  linear.visit(prefix + ".linear", fn);
}

// Catalog

const char* to_string(InstructionLevel level) {
  switch (level) {
    case InstructionLevel::none: return "none";
    case InstructionLevel::task: return "task";
    case InstructionLevel::task_and_targets: return "task_and_targets";
  }
  return "none";
}

InstructionLevel parse_instruction_level(std::string_view text) {
  if (text == "none") return InstructionLevel::none;
  if (text == "task") return InstructionLevel::task;
  if (text == "task_and_targets") return InstructionLevel::task_and_targets;
  fail(ErrorKind::invalid_argument, "unknown instruction level \"" + std::string(text) +
                                        "\" (expected none, task or task_and_targets)");
}

InstructionCatalog InstructionCatalog::parse(std::string_view json_text, const std::string& origin) {
  InstructionCatalog c;
  try {
    const auto doc = nlohmann::json::parse(json_text);
    c.no_instruction_ = doc.value("no_instruction", std::string("Default"));
    std::set<std::string> names;
    for (const auto& e : doc.at("datasets")) {
      Entry entry{e.at("name").get<std::string>(), e.at("task").get<std::string>(),
                  e.at("task_and_targets").get<std::string>(),
                  e.at("targets").get<std::vector<std::string>>()};
      if (!names.insert(entry.name).second) {
        fail(ErrorKind::format, origin + ": duplicate dataset " + entry.name);
      }
      if (entry.targets.empty()) fail(ErrorKind::format, origin + ": dataset " + entry.name + " has no targets");
      c.entries_.push_back(std::move(entry));
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::format, origin + ": " + e.what());
  }
  return c;
}

InstructionCatalog InstructionCatalog::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::missing_file, "cannot open catalog " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse(buf.str(), path);
}

const InstructionCatalog& InstructionCatalog::standard() {
  static const InstructionCatalog c = parse(resources::catalog_json, "bundled catalog");
  return c;
}

std::string InstructionCatalog::to_json() const {
  nlohmann::json doc;
  doc["version"] = 1;
  doc["no_instruction"] = no_instruction_;
  doc["datasets"] = nlohmann::json::array();
  for (const auto& e : entries_) {
    doc["datasets"].push_back({{"name", e.name},
                               {"task", e.task},
                               {"task_and_targets", e.task_and_targets},
                               {"targets", e.targets}});
  }
  return doc.dump(2);
}

bool InstructionCatalog::contains(const std::string& dataset) const {
  return std::any_of(entries_.begin(), entries_.end(), [&](const Entry& e) { return e.name == dataset; });
}

const InstructionCatalog::Entry& InstructionCatalog::entry(const std::string& dataset) const {
  for (const auto& e : entries_) {
    if (e.name == dataset) return e;
  }
  fail(ErrorKind::unresolvable_instruction, "catalog has no dataset \"" + dataset + "\"");
}

std::string InstructionCatalog::instruction(const std::string& dataset, InstructionLevel level) const {
  if (level == InstructionLevel::none) return no_instruction_;
  const auto& e = entry(dataset);
  return level == InstructionLevel::task ? e.task : e.task_and_targets;
}

}  // namespace eegalign
