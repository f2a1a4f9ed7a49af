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

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "eegalign/instruct.hpp"
#include "eegalign/train.hpp"
#include "support.hpp"

using namespace eegalign;
using eegalign::testing::random_matrix;
using eegalign::testing::random_row;
using nn::Matrix;
using nn::RowVector;

namespace {

RowVector unit(RowVector v) { return v / v.norm(); }

Film initialized_film(std::size_t d, std::size_t k, std::uint64_t seed) {
  Film f(d, k);
  Rng rng(seed);
  f.init(rng, 0.5);
  f.bias.value += random_matrix(1, static_cast<Eigen::Index>(2 * d), derive_seed(seed, 1), 0.2);
  return f;
}

InstructConfig small_instruct(std::size_t queries, std::size_t layers, bool self_attention) {
  InstructConfig c;
  c.text_dim = 12;
  c.queries = queries;
  c.qformer_layers = layers;
  c.qformer_heads = 2;
  c.query_self_attention = self_attention;
  c.head_hidden = 10;
  return c;
}

QFormer initialized_qformer(std::size_t d, const InstructConfig& c, std::uint64_t seed) {
  QFormer q(d, c);
  Rng rng(seed);
  q.init(rng);
  for (auto& l : q.layers) {
    l.ffn.up.bias.value = random_matrix(1, l.ffn.up.bias.value.cols(), derive_seed(seed, 2), 0.1);
    l.ln_cross.shift.value = random_matrix(1, static_cast<Eigen::Index>(d), derive_seed(seed, 3), 0.1);
  }
  return q;
}

double gelu_scalar(double v) { return 0.5 * v * (1.0 + std::erf(v / std::numbers::sqrt2)); }

Matrix layer_norm(const Matrix& x, const nn::LayerNorm& ln) {
  Matrix y(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double mean = x.row(i).mean();
    const double var = (x.row(i).array() - mean).square().mean();
    y.row(i) = ((x.row(i).array() - mean) / std::sqrt(var + ln.eps)).matrix().cwiseProduct(ln.gain.value.row(0)) +
               ln.shift.value.row(0);
  }
  return y;
}

Matrix affine(const Matrix& x, const nn::Linear& l) {
  Matrix y = x * l.weight.value;
  if (l.has_bias) y.rowwise() += l.bias.value.row(0);
  return y;
}

Matrix ffn(const Matrix& x, const nn::FeedForward& f) {
  return affine(affine(x, f.up).unaryExpr(&gelu_scalar), f.down);
}

PrototypeBank orthogonal_bank(std::size_t classes, std::size_t k) {
  PrototypeBank bank;
  bank.prototypes = Matrix::Zero(static_cast<Eigen::Index>(classes), static_cast<Eigen::Index>(k));
  for (std::size_t c = 0; c < classes; ++c) {
    bank.classes.push_back("class" + std::to_string(c));
    bank.prototypes(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(c)) = 1.0;
  }
  return bank;
}

PrototypeBank random_bank(std::size_t classes, std::size_t k, std::uint64_t seed) {
  PrototypeBank bank;
  bank.prototypes.resize(static_cast<Eigen::Index>(classes), static_cast<Eigen::Index>(k));
  for (std::size_t c = 0; c < classes; ++c) {
    bank.classes.push_back("c" + std::to_string(c));
    bank.prototypes.row(static_cast<Eigen::Index>(c)) = unit(random_row(static_cast<Eigen::Index>(k), seed + c));
  }
  return bank;
}

}  // namespace

TEST(Film, ZeroParametersZeroOutput) {
  Film f(8, 12);  // resize() leaves everything at zero
  const Matrix out = film_condition(random_matrix(6, 8, 1), unit(random_row(12, 2)), f);
  EXPECT_TRUE(out.isZero(0.0));
}

TEST(Film, CoefficientsMatchMatrixProductOracle) {
  const Film f = initialized_film(8, 12, 3);
  for (std::uint64_t s : {4u, 5u}) {
    const RowVector e = unit(random_row(12, s));
    RowVector expect(16);
    for (Eigen::Index j = 0; j < 16; ++j) {
      double acc = f.bias.value(0, j);
      for (Eigen::Index i = 0; i < 12; ++i) acc += e(i) * f.weight.value(i, j);
      expect(j) = std::tanh(acc);
    }
    EXPECT_LT((f.coefficients(e) - expect).cwiseAbs().maxCoeff(), 1e-14);
    const Matrix m = random_matrix(5, 8, 6);
    const Matrix out = film_condition(m, e, f);
    for (Eigen::Index r = 0; r < 5; ++r) {
      for (Eigen::Index j = 0; j < 8; ++j) EXPECT_NEAR(out(r, j), expect(j) * m(r, j) + expect(8 + j), 1e-14);
    }
  }
  EXPECT_FALSE(f.coefficients(unit(random_row(12, 4))).isApprox(f.coefficients(unit(random_row(12, 5)))));
}

TEST(Film, DifferenceIdentity) {
  const Film f = initialized_film(8, 12, 7);
  const RowVector e = unit(random_row(12, 8));
  const Matrix m1 = random_matrix(10, 8, 9), m2 = random_matrix(10, 8, 10);
  const RowVector gamma = f.coefficients(e).head(8);
  const Matrix lhs = film_condition(m1, e, f) - film_condition(m2, e, f);
  const Matrix rhs = (m1 - m2).array().rowwise() * gamma.array();
  EXPECT_LT((lhs - rhs).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Film, RejectsDimensionMismatch) {
  const Film f = initialized_film(8, 12, 11);
  EXPECT_THROW(film_condition(random_matrix(3, 7, 12), unit(random_row(12, 13)), f), Error);
  EXPECT_THROW(film_condition(random_matrix(3, 8, 12), unit(random_row(11, 13)), f), Error);
}

TEST(QFormer, SingleMemoryTokenClosedForm) {
  // One query and one key: both the self-attention and cross-attention
  // softmaxes are [1], so every layer is a fixed function of its inputs.
  for (bool self_attention : {true, false}) {
    const auto c = small_instruct(1, 2, self_attention);
    const QFormer q = initialized_qformer(8, c, 14);
    const Matrix memory = random_matrix(1, 8, 15);
    Matrix x = q.queries.value;
    for (const auto& l : q.layers) {
      if (self_attention) x = x + affine(affine(layer_norm(x, l.ln_self), l.self_attn.value), l.self_attn.output);
      x = x + memory * l.w_value.value;  // W_Q and W_K drop out
      x = x + ffn(layer_norm(x, l.ln_ffn), l.ffn);
    }
    x = layer_norm(x, q.final_norm);
    EXPECT_LT((q.forward(memory, nullptr) - x).cwiseAbs().maxCoeff(), 1e-12) << self_attention;
  }
}

TEST(QFormer, SingleMemoryTokenManyQueries) {
  const auto c = small_instruct(3, 1, false);
  const QFormer q = initialized_qformer(8, c, 16);
  const Matrix memory = random_matrix(1, 8, 17);
  QFormerCache cache;
  q.forward(memory, &cache);
  EXPECT_TRUE(cache.layers[0].probs.isOnes(0.0));
}

TEST(QFormer, AttentionRowsSumToOne) {
  const auto c = small_instruct(4, 3, true);
  const QFormer q = initialized_qformer(8, c, 18);
  QFormerCache cache;
  q.forward(random_matrix(30, 8, 19), &cache);
  for (const auto& l : cache.layers) {
    ASSERT_EQ(l.probs.rows(), 4);
    ASSERT_EQ(l.probs.cols(), 30);
    for (Eigen::Index i = 0; i < 4; ++i) EXPECT_NEAR(l.probs.row(i).sum(), 1.0, 1e-6);
    for (const auto& p : l.self_attn.probs) {
      for (Eigen::Index i = 0; i < p.rows(); ++i) EXPECT_NEAR(p.row(i).sum(), 1.0, 1e-6);
    }
  }
}

TEST(QFormer, InvariantToKeyPermutation) {
  const auto c = small_instruct(4, 3, true);
  const QFormer q = initialized_qformer(8, c, 20);
  const Matrix memory = random_matrix(25, 8, 21);
  Matrix reversed = memory.colwise().reverse();
  Matrix rotated(25, 8);
  for (Eigen::Index i = 0; i < 25; ++i) rotated.row(i) = memory.row((i + 7) % 25);
  const Matrix base = q.forward(memory, nullptr);
  EXPECT_LT((q.forward(reversed, nullptr) - base).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_LT((q.forward(rotated, nullptr) - base).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(QFormer, DefaultShape) {
  InstructConfig c;  // 8 queries, 4 layers
  EXPECT_EQ(c.queries, 8u);
  EXPECT_EQ(c.qformer_layers, 4u);
  QFormer q(256, c);
  Rng rng(22);
  q.init(rng);
  const Matrix out = q.forward(random_matrix(160, 256, 23), nullptr);
  EXPECT_EQ(out.rows(), 8);
  EXPECT_EQ(out.cols(), 256);
}

TEST(QFormer, GradientsMatchFiniteDifferences) {
  const auto c = small_instruct(3, 2, true);
  QFormer q = initialized_qformer(8, c, 24);
  Matrix memory = random_matrix(6, 8, 25);
  const Matrix r = random_matrix(3, 8, 26);
  QFormerCache cache;
  q.forward(memory, &cache);
  const Matrix dmemory = q.backward(r, cache);
  std::vector<std::pair<std::string, nn::Param*>> params;
  q.visit("qformer", [&](const std::string& n, nn::Param& p) { params.emplace_back(n, &p); });
  const auto objective = [&] { return q.forward(memory, nullptr).cwiseProduct(r).sum(); };
  const auto result = grad_check(params, objective);
  EXPECT_LT(result.max_rel_error, 1e-3) << result.worst;
  // and w.r.t. the memory rows
  const double eps = 1e-6;
  for (Eigen::Index i = 0; i < memory.size(); i += 3) {
    const double saved = memory.data()[i];
    memory.data()[i] = saved + eps;
    const double up = objective();
    memory.data()[i] = saved - eps;
    const double down = objective();
    memory.data()[i] = saved;
    EXPECT_NEAR(dmemory.data()[i], (up - down) / (2 * eps), 1e-6);
  }
}

TEST(Head, IdenticalQueriesPoolToThatVector) {
  Head head(8, 10, 12);
  Rng rng(27);
  head.init(rng);
  const RowVector v = random_row(8, 28);
  const Matrix queries = v.replicate(5, 1);
  const Matrix expect = affine(affine(Matrix(v), head.fc1).unaryExpr(&gelu_scalar), head.fc2);
  EXPECT_LT((aggregate_head(queries, head) - expect.row(0)).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Head, ZeroQueriesZeroBiasGiveZero) {
  Head head(8, 10, 12);
  Rng rng(29);
  head.init(rng);
  head.fc1.bias.value.setZero();
  head.fc2.bias.value.setZero();
  EXPECT_TRUE(aggregate_head(Matrix::Zero(4, 8), head).isZero(0.0));
}

TEST(Head, CosineLossGradientMatchesFiniteDifferences) {
  Head head(8, 10, 12);
  Rng rng(30);
  head.init(rng);
  const PrototypeBank bank = random_bank(3, 12, 31);
  Matrix queries = random_matrix(4, 8, 32);
  HeadCache cache;
  const RowVector h = head.forward(queries, &cache);
  const Matrix dq = head.backward(alignment_loss_backward(h, "c1", bank).dh, cache);
  auto objective = [&] { return alignment_loss(aggregate_head(queries, head), "c1", bank); };
  std::vector<std::pair<std::string, nn::Param*>> params;
  head.visit("head", [&](const std::string& n, nn::Param& p) { params.emplace_back(n, &p); });
  const auto result = grad_check(params, objective);
  EXPECT_LT(result.max_rel_error, 1e-3) << result.worst;
  for (Eigen::Index i = 0; i < queries.size(); ++i) {
    const double saved = queries.data()[i], eps = 1e-6;
    queries.data()[i] = saved + eps;
    const double up = objective();
    queries.data()[i] = saved - eps;
    const double down = objective();
    queries.data()[i] = saved;
    const double numeric = (up - down) / (2 * eps);
    EXPECT_LE(std::abs(dq.data()[i] - numeric), 1e-3 * std::max({std::abs(numeric), std::abs(dq.data()[i]), 1e-6}));
  }
}

TEST(Alignment, ZeroAtPrototype) {
  const PrototypeBank bank = random_bank(3, 12, 33);
  EXPECT_NEAR(alignment_loss(bank.prototypes.row(1), "c1", bank), 0.0, 1e-15);
}

TEST(Alignment, AntipodalWithTwoClasses) {
  const PrototypeBank bank = random_bank(2, 12, 34);
  EXPECT_NEAR(alignment_loss(-bank.prototypes.row(0), "c0", bank), 1.0, 1e-15);
}

TEST(Alignment, MatchesDotProductFormula) {
  const PrototypeBank bank = random_bank(5, 12, 35);
  for (std::uint64_t s = 0; s < 10; ++s) {
    const RowVector h = random_row(12, 40 + s, 3.0);
    const auto y = static_cast<Eigen::Index>(s % 5);
    double dot = 0.0, sq = 0.0;
    for (Eigen::Index i = 0; i < 12; ++i) {
      dot += h(i) * bank.prototypes(y, i);
      sq += h(i) * h(i);
    }
    const double expect = (1.0 - dot / std::sqrt(sq)) / 5.0;
    EXPECT_NEAR(alignment_loss(h, bank.classes[static_cast<std::size_t>(y)], bank), expect, 1e-14);
    EXPECT_NEAR(alignment_loss_backward(h, bank.classes[static_cast<std::size_t>(y)], bank).loss, expect, 1e-14);
  }
}

TEST(Alignment, BoundedAndZeroOnlyForPositiveMultiples) {
  for (std::size_t classes : {2u, 3u, 7u}) {
    const PrototypeBank bank = random_bank(classes, 12, 50 + classes);
    for (std::uint64_t s = 0; s < 200; ++s) {
      const double loss = alignment_loss(random_row(12, 1000 + s), "c0", bank);
      EXPECT_GE(loss, 0.0);
      EXPECT_LE(loss, 2.0 / static_cast<double>(classes) + 1e-15);
      EXPECT_GT(loss, 1e-6);
    }
    EXPECT_NEAR(alignment_loss(4.5 * bank.prototypes.row(0), "c0", bank), 0.0, 1e-15);
  }
}

TEST(Alignment, Errors) {
  const PrototypeBank bank = random_bank(3, 12, 60);
  try {
    alignment_loss(random_row(12, 61), "Tongue", bank);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::missing_label);
    EXPECT_NE(std::string(e.what()).find("Tongue"), std::string::npos);
  }
  EXPECT_THROW(alignment_loss(RowVector::Zero(12), "c0", bank), Error);
  EXPECT_THROW(predict(RowVector::Zero(12), bank), Error);
}

TEST(Predict, ExactPrototype) {
  const TextEncoder encoder{nullptr, 7, 768};
  const PrototypeBank bank = PrototypeBank::build({"Left", "Right", "Foot", "Tongue"}, encoder);
  const auto p = predict(encoder("Left").vector, bank);
  EXPECT_EQ(p.label, "Left");
  EXPECT_EQ(p.index, 0u);
  EXPECT_NEAR(p.scores[0], 1.0, 1e-12);
}

TEST(Predict, ScaleInvariant) {
  const PrototypeBank bank = random_bank(4, 12, 62);
  for (std::uint64_t s = 0; s < 20; ++s) {
    const RowVector h = random_row(12, 70 + s);
    const auto a = predict(h, bank);
    for (double alpha : {1e-3, 0.5, 8.0, 1e4}) {
      const auto b = predict(alpha * h, bank);
      EXPECT_EQ(a.label, b.label);
      for (std::size_t c = 0; c < 4; ++c) EXPECT_NEAR(a.scores[c], b.scores[c], 1e-14);
    }
  }
}

TEST(Predict, OrthogonalBankDotProduct) {
  const PrototypeBank bank = orthogonal_bank(3, 5);
  RowVector h = RowVector::Zero(5);
  h(0) = 0.9;
  h(1) = 0.1;
  const auto p = predict(h, bank);
  EXPECT_EQ(p.label, "class0");
  EXPECT_NEAR(p.scores[0], 0.9 / std::hypot(0.9, 0.1), 1e-15);
  EXPECT_NEAR(p.scores[2], 0.0, 1e-15);
}

TEST(Predict, TiesGoToEarlierClass) {
  const PrototypeBank bank = orthogonal_bank(3, 3);
  EXPECT_EQ(predict(RowVector::Ones(3), bank).label, "class0");
  RowVector h(3);
  h << 0.0, 1.0, 1.0;
  EXPECT_EQ(predict(h, bank).label, "class1");
}

TEST(PrototypeBank, BuildNormalizesAndRejectsDuplicates) {
  const TextEncoder encoder{nullptr, 3, 64};
  const PrototypeBank bank = PrototypeBank::build({"Happy", "Sad", "Neutral"}, encoder);
  EXPECT_EQ(bank.size(), 3u);
  for (Eigen::Index c = 0; c < 3; ++c) EXPECT_NEAR(bank.prototypes.row(c).norm(), 1.0, 1e-5);
  EXPECT_EQ(bank.index_of("Sad"), 1u);
  EXPECT_FALSE(bank.index_of("Angry").has_value());
  EXPECT_THROW(PrototypeBank::build({"Happy", "Happy"}, encoder), Error);
}

TEST(LabelClassifier, SoftmaxLossGradient) {
  LabelClassifier clf(12, {"a", "b", "c"});
  Rng rng(80);
  clf.init(rng);
  const RowVector h = random_row(12, 81);
  const RowVector logits = clf.logits(h);
  const double expect = -(logits(1) - std::log(logits.array().exp().sum()));
  EXPECT_NEAR(clf.loss(h, "b"), expect, 1e-12);
  clf.linear.weight.zero_grad();
  clf.linear.bias.zero_grad();
  clf.loss_backward(h, "b", 1.0);
  std::vector<std::pair<std::string, nn::Param*>> params;
  clf.visit("clf", [&](const std::string& n, nn::Param& p) { params.emplace_back(n, &p); });
  const auto result = grad_check(params, [&] { return clf.loss(h, "b"); });
  EXPECT_LT(result.max_rel_error, 1e-4) << result.worst;
}

TEST(Catalog, NoInstructionIsDefault) {
  const auto& cat = InstructionCatalog::standard();
  EXPECT_EQ(cat.no_instruction(), "Default");
  EXPECT_EQ(cat.instruction("BCIC-IV2a", InstructionLevel::none), "Default");
}

TEST(Catalog, BundledEntries) {
  const auto& cat = InstructionCatalog::standard();
  EXPECT_EQ(cat.entries().size(), 20u);
  EXPECT_EQ(cat.instruction("BCIC-IV2a", InstructionLevel::task), "Decode motor imagery");
  EXPECT_EQ(cat.instruction("BCIC-IV2a", InstructionLevel::task_and_targets),
            "Decode (Left vs Right vs Foot vs Tongue) motor imagery");
  EXPECT_EQ(cat.entry("BCIC-IV2a").targets, (std::vector<std::string>{"Left", "Right", "Foot", "Tongue"}));
  EXPECT_EQ(cat.entry("OpenBMI-MI").targets, (std::vector<std::string>{"Right", "Left"}));
  EXPECT_EQ(cat.entry("BCIC-Upperlimb").task_and_targets, "Decode (Cylindrical, Spherical, Lumbrical) hand movements");
  EXPECT_TRUE(cat.contains("Cho2017"));
  EXPECT_THROW(cat.entry("NoSuchSet"), Error);
}

TEST(Catalog, JsonRoundTrip) {
  const auto& cat = InstructionCatalog::standard();
  const auto again = InstructionCatalog::parse(cat.to_json());
  EXPECT_EQ(again.to_json(), cat.to_json());
  EXPECT_THROW(InstructionCatalog::parse("{\"datasets\": 3}"), Error);
}

TEST(InstructionLevel, ParseRoundTrip) {
  for (auto level : {InstructionLevel::none, InstructionLevel::task, InstructionLevel::task_and_targets}) {
    EXPECT_EQ(parse_instruction_level(to_string(level)), level);
  }
  EXPECT_THROW(parse_instruction_level("everything"), Error);
}
