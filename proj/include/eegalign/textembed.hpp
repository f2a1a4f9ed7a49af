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
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>

#include "eegalign/nn.hpp"

namespace eegalign {

inline constexpr std::size_t kDefaultTextDim = 768;

enum class EmbeddingSource { store, pseudo };

struct TextEmbedding {
  std::string text;
  nn::RowVector vector;  // unit norm
  EmbeddingSource source = EmbeddingSource::store;
};

/// Sentence vectors exported by an external frozen text encoder
/// (EMBTXT v1). Immutable after load.
class EmbeddingStore {
 public:
  EmbeddingStore(std::size_t dim, std::string encoder_tag);

  /// Line 1: `dim=<k> encoder=<tag>`; then one `"text"<TAB>v1 v2 ... vk`
  /// line per entry. Texts are JSON-quoted strings.
  static EmbeddingStore parse(std::string_view content, const std::string& origin = "<memory>");
  static EmbeddingStore load(const std::string& path);
  std::string serialize() const;
  void save(const std::string& path) const;

  /// Adds an entry (normalized). Duplicate texts are rejected.
  void insert(const std::string& text, const nn::RowVector& vector);

  const nn::RowVector* find(const std::string& text) const;
  std::size_t dim() const { return dim_; }
  const std::string& encoder_tag() const { return encoder_tag_; }
  const std::map<std::string, nn::RowVector>& entries() const { return entries_; }

 private:
  std::size_t dim_;
  std::string encoder_tag_;
  std::map<std::string, nn::RowVector> entries_;
  // insertion order, kept so that save() mirrors the loaded file
  std::vector<std::string> order_;
};

/// Deterministic stand-in for a sentence encoder: Gaussian draws from a
/// splitmix64 stream seeded with fnv1a64(text) ^ seed (Box-Muller, cosine and
/// sine branches interleaved), then l2-normalized.
TextEmbedding pseudo_embed(std::string_view text, std::uint64_t seed,
                           std::size_t dim = kDefaultTextDim);

/// Store lookup with optional pseudo-embedding fallback on a miss. Without a
/// store, the fallback seed is required and determines every vector.
TextEmbedding embed(const std::string& text, const EmbeddingStore* store,
                    std::optional<std::uint64_t> fallback_seed, std::size_t dim = kDefaultTextDim);

/// Bundles the resolution policy used by training and evaluation.
struct TextEncoder {
  const EmbeddingStore* store = nullptr;
  std::optional<std::uint64_t> fallback_seed;
  std::size_t dim = kDefaultTextDim;

  TextEmbedding operator()(const std::string& text) const {
    return embed(text, store, fallback_seed, store ? store->dim() : dim);
  }
  std::size_t output_dim() const { return store ? store->dim() : dim; }
};

}  // namespace eegalign
