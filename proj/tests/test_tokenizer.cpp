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

#include <cmath>

#include "eegalign/tokenizer.hpp"
#include "eegalign/train.hpp"
#include "support.hpp"

using namespace eegalign;
using eegalign::testing::random_matrix;

namespace {

TokenizerConfig small_config(std::size_t d = 8) {
  TokenizerConfig c;
  c.d = d;
  return c;
}

Tokenizer initialized(const TokenizerConfig& c, std::uint64_t seed) {
  Tokenizer tok(c);
  Rng rng(seed);
  tok.init(rng);
  return tok;
}

// Temporal convolution first (per channel, zero time padding), then the
// depthwise spatial collapse, running-stat batchnorm and average pooling,
// written straight from the definitions.
nn::Matrix oracle_tokens(const Tokenizer& tok, const nn::Matrix& x) {
  const auto& c = tok.config();
  const auto d = static_cast<Eigen::Index>(c.d);
  const auto len = static_cast<Eigen::Index>(c.conv_length());
  const auto pad = static_cast<Eigen::Index>(c.padding);
  nn::Matrix out(static_cast<Eigen::Index>(c.tokens_per_segment()), d);
  for (Eigen::Index m = 0; m < d; ++m) {
    std::vector<double> y(static_cast<std::size_t>(len), 0.0);
    for (Eigen::Index t = 0; t < len; ++t) {
      double acc = tok.spatial_bias.value(0, m);
      for (Eigen::Index ch = 0; ch < x.rows(); ++ch) {
        double u = tok.temporal_bias.value(0, m);
        for (Eigen::Index k = 0; k < static_cast<Eigen::Index>(c.temporal_kernel); ++k) {
          const Eigen::Index src = t + k - pad;
          if (src >= 0 && src < x.cols()) u += tok.temporal_weight.value(m, k) * x(ch, src);
        }
        acc += tok.spatial_weight.value(m, ch) * u;
      }
      y[static_cast<std::size_t>(t)] = tok.bn_gain.value(0, m) * (acc - tok.running_mean(m)) /
                                           std::sqrt(tok.running_var(m) + c.bn_eps) +
                                       tok.bn_shift.value(0, m);
    }
    for (Eigen::Index j = 0; j < out.rows(); ++j) {
      double s = 0.0;
      for (Eigen::Index p = 0; p < static_cast<Eigen::Index>(c.pool); ++p) s += y[static_cast<std::size_t>(j * c.pool + p)];
      out(j, m) = s / static_cast<double>(c.pool);
    }
  }
  return out;
}

}  // namespace

TEST(Tokenizer, DefaultShape) {
  TokenizerConfig c;  // d = 256, kernel 40, padding 20, pool 10
  Tokenizer tok = initialized(c, 1);
  const nn::Matrix x = random_matrix(65, 100, 2);
  const auto out = tok.forward(std::span(&x, 1), false, nullptr);
  EXPECT_EQ(out.rows(), 10);
  EXPECT_EQ(out.cols(), 256);
}

TEST(Tokenizer, ShapeLawForArbitraryWindows) {
  for (std::size_t t : {40u, 100u, 105u, 110u, 150u, 200u, 380u}) {
    TokenizerConfig c = small_config();
    c.window = t;
    EXPECT_EQ(c.tokens_per_segment(), (t + 2 * 20 - 40 + 1) / 10) << t;
    if (t % c.tokens_per_segment() != 0) {
      EXPECT_THROW(c.validate(), Error);
      continue;
    }
    Tokenizer tok = initialized(c, 3);
    const nn::Matrix x = random_matrix(65, static_cast<Eigen::Index>(t), 4);
    EXPECT_EQ(tok.forward(std::span(&x, 1), false, nullptr).rows(), static_cast<Eigen::Index>(c.tokens_per_segment()));
  }
}

TEST(Tokenizer, MatchesTemporalFirstOracle) {
  Tokenizer tok = initialized(small_config(6), 5);
  tok.temporal_bias.value = random_matrix(1, 6, 6);
  tok.spatial_bias.value = random_matrix(1, 6, 7);
  tok.bn_gain.value = random_matrix(1, 6, 8);
  tok.bn_shift.value = random_matrix(1, 6, 9);
  tok.running_mean = random_matrix(6, 1, 10);
  tok.running_var = random_matrix(6, 1, 11).cwiseAbs().array() + 0.5;
  const nn::Matrix x = random_matrix(65, 100, 12);
  const auto out = tok.forward(std::span(&x, 1), false, nullptr);
  EXPECT_LT((out - oracle_tokens(tok, x)).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Tokenizer, ZeroSegmentGivesIdenticalTokens) {
  Tokenizer tok = initialized(small_config(), 13);
  tok.bn_shift.value = random_matrix(1, 8, 14);
  const nn::Matrix x = nn::Matrix::Zero(65, 100);
  const auto out = tok.forward(std::span(&x, 1), false, nullptr);
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    EXPECT_TRUE(out.row(r) == out.row(0));
  }
  EXPECT_LT((out.row(0) - tok.bn_shift.value).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Tokenizer, InferenceIsBitwiseRepeatable) {
  Tokenizer tok = initialized(small_config(), 15);
  const nn::Matrix x = random_matrix(65, 100, 16);
  const auto a = tok.forward(std::span(&x, 1), false, nullptr);
  const auto b = tok.forward(std::span(&x, 1), false, nullptr);
  EXPECT_TRUE(a == b);
}

TEST(Tokenizer, InferenceIsAffine) {
  Tokenizer tok = initialized(small_config(), 17);
  tok.temporal_bias.value = random_matrix(1, 8, 18);
  const nn::Matrix x = random_matrix(65, 100, 19);
  const nn::Matrix zero = nn::Matrix::Zero(65, 100);
  const auto base = tok.forward(std::span(&zero, 1), false, nullptr);
  const auto fx = tok.forward(std::span(&x, 1), false, nullptr);
  for (double alpha : {-2.0, 0.5, 3.0}) {
    const nn::Matrix ax = alpha * x;
    const auto fax = tok.forward(std::span(&ax, 1), false, nullptr);
    EXPECT_LT(((fax - base) - alpha * (fx - base)).cwiseAbs().maxCoeff(), 1e-5);
  }
}

TEST(Tokenizer, TrainingModeUpdatesRunningStatistics) {
  Tokenizer tok = initialized(small_config(), 20);
  const std::vector<nn::Matrix> xs = {random_matrix(65, 100, 21), random_matrix(65, 100, 22)};
  const Eigen::VectorXd before = tok.running_mean;
  tok.forward(xs, true, nullptr);
  EXPECT_FALSE(tok.running_mean.isApprox(before));
  // training mode normalizes each feature over batch x conv positions
  TokenizerCache cache;
  tok.forward(xs, true, &cache);
  ASSERT_EQ(cache.normalized.size(), 2u);
  for (Eigen::Index m = 0; m < 8; ++m) {
    double sum = 0.0, sq = 0.0, count = 0.0;
    for (const auto& z : cache.normalized) {
      sum += z.row(m).sum();
      sq += z.row(m).squaredNorm();
      count += static_cast<double>(z.cols());
    }
    EXPECT_LT(std::abs(sum / count), 1e-10);
    EXPECT_NEAR(sq / count, 1.0, 1e-3);  // eps in the denominator
  }
}

TEST(Tokenizer, RejectsWrongSegmentShape) {
  Tokenizer tok = initialized(small_config(), 23);
  const nn::Matrix x = random_matrix(64, 100, 24);
  EXPECT_THROW(tok.forward(std::span(&x, 1), false, nullptr), Error);
}

TEST(Tokenizer, GradientsMatchFiniteDifferences) {
  for (bool training : {true, false}) {
    Tokenizer tok = initialized(small_config(4), 25);
    tok.temporal_bias.value = random_matrix(1, 4, 26, 0.1);
    const std::vector<nn::Matrix> xs = {random_matrix(65, 100, 27, 0.3), random_matrix(65, 100, 28, 0.3)};
    const nn::Matrix r = random_matrix(20, 4, 29);
    // frozen statistics keep the objective a pure function in eval mode
    const Eigen::VectorXd mean = tok.running_mean, var = tok.running_var;
    auto objective = [&] {
      tok.running_mean = mean;
      tok.running_var = var;
      return tok.forward(xs, training, nullptr).cwiseProduct(r).sum();
    };
    TokenizerCache cache;
    tok.running_mean = mean;
    tok.running_var = var;
    tok.forward(xs, training, &cache);
    tok.backward(r, cache);
    std::vector<std::pair<std::string, nn::Param*>> params;
    tok.visit("tokenizer", [&](const std::string& name, nn::Param& p) { params.emplace_back(name, &p); });
    GradCheckOptions opt;
    opt.per_tensor = 40;
    const auto result = grad_check(params, objective, opt);
    EXPECT_LT(result.max_rel_error, 1e-3) << (training ? "training " : "eval ") << result.worst;
  }
}

TEST(Tokenizer, TokenizeRecordsProvenance) {
  Tokenizer tok = initialized(small_config(), 30);
  std::vector<BasicSegment<double>> segs(2);
  for (std::size_t i = 0; i < 2; ++i) segs[i] = {random_matrix(65, 100, 31 + i), "trial-x", i};
  const auto seq = tokenize(segs, tok, false);
  ASSERT_EQ(seq.size(), 20u);
  EXPECT_EQ(seq.provenance[13].trial_id, "trial-x");
  EXPECT_EQ(seq.provenance[13].segment, 1u);
  EXPECT_EQ(seq.provenance[13].position, 3u);
}
