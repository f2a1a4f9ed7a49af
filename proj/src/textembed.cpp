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

#include "eegalign/textembed.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <sstream>

#include <nlohmann/json.hpp>

namespace eegalign {

namespace {

nn::RowVector normalized(const nn::RowVector& v, const std::string& what) {
  const double n = v.norm();
  if (!(n > 0.0) || !std::isfinite(n)) fail(ErrorKind::numeric, what + ": zero or non-finite vector");
  return v / n;
}

}  // namespace

EmbeddingStore::EmbeddingStore(std::size_t dim, std::string encoder_tag)
    : dim_(dim), encoder_tag_(std::move(encoder_tag)) {
  require(dim > 0, "embedding store: dim must be positive");
}

void EmbeddingStore::insert(const std::string& text, const nn::RowVector& vector) {
  if (static_cast<std::size_t>(vector.size()) != dim_) {
    fail(ErrorKind::dimension_mismatch, "embedding for \"" + text + "\" has " +
                                            std::to_string(vector.size()) + " values, store dim is " +
                                            std::to_string(dim_));
  }
  if (entries_.contains(text)) fail(ErrorKind::format, "duplicate embedding text \"" + text + "\"");
  entries_.emplace(text, normalized(vector, "embedding \"" + text + "\""));
  order_.push_back(text);
}

EmbeddingStore EmbeddingStore::parse(std::string_view content, const std::string& origin) {
  std::istringstream in{std::string(content)};
  std::string line;
  if (!std::getline(in, line)) fail(ErrorKind::format, origin + ": empty embedding store");
  std::size_t dim = 0;
  std::string tag;
  {
    std::istringstream header(line);
    std::string field;
    while (header >> field) {
      if (field.rfind("dim=", 0) == 0) {
        try {
          dim = std::stoul(field.substr(4));
        } catch (const std::exception&) {
          fail(ErrorKind::format, origin + ":1: bad dim field");
        }
      } else if (field.rfind("encoder=", 0) == 0) {
        tag = field.substr(8);
      }
    }
    if (dim == 0) fail(ErrorKind::format, origin + ":1: header must be `dim=<k> encoder=<tag>`");
  }
  EmbeddingStore store(dim, tag);
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      fail(ErrorKind::format, origin + ":" + std::to_string(line_no) + ": missing tab separator");
    }
    std::string text;
    try {
      text = nlohmann::json::parse(line.substr(0, tab)).get<std::string>();
    } catch (const nlohmann::json::exception&) {
      fail(ErrorKind::format, origin + ":" + std::to_string(line_no) + ": text must be a quoted string");
    }
    std::istringstream values(line.substr(tab + 1));
    std::vector<double> v;
    double x;
    while (values >> x) v.push_back(x);
    if (!values.eof()) {
      fail(ErrorKind::format, origin + ":" + std::to_string(line_no) + ": malformed number");
    }
    if (v.size() != dim) {
      fail(ErrorKind::dimension_mismatch, origin + ":" + std::to_string(line_no) + ": expected " +
                                              std::to_string(dim) + " values, got " +
                                              std::to_string(v.size()));
    }
    if (store.entries_.contains(text)) {
      fail(ErrorKind::format, origin + ":" + std::to_string(line_no) + ": duplicate text \"" + text + "\"");
    }
    store.insert(text, Eigen::Map<const nn::RowVector>(v.data(), static_cast<Eigen::Index>(v.size())));
  }
  return store;
}

EmbeddingStore EmbeddingStore::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::missing_file, "cannot open embedding store " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse(buf.str(), path);
}

std::string EmbeddingStore::serialize() const {
  std::ostringstream os;
  os << "dim=" << dim_ << " encoder=" << encoder_tag_ << '\n';
  os << std::setprecision(9);
  for (const auto& text : order_) {
    os << nlohmann::json(text).dump() << '\t';
    const auto& v = entries_.at(text);
    for (Eigen::Index i = 0; i < v.size(); ++i) os << (i ? " " : "") << v(i);
    os << '\n';
  }
  return os.str();
}

void EmbeddingStore::save(const std::string& path) const {
  std::ofstream out(path, std::ios::trunc);
  out << serialize();
  if (!out) fail(ErrorKind::io, "cannot write embedding store " + path);
}

const nn::RowVector* EmbeddingStore::find(const std::string& text) const {
  auto it = entries_.find(text);
  return it == entries_.end() ? nullptr : &it->second;
}

TextEmbedding pseudo_embed(std::string_view text, std::uint64_t seed, std::size_t dim) {
  require(!text.empty(), "pseudo_embed: empty text");
  require(dim > 0, "pseudo_embed: dim must be positive");
  std::uint64_t state = fnv1a64(text) ^ seed;
  nn::RowVector v(static_cast<Eigen::Index>(dim));
  for (std::size_t i = 0; i < dim; i += 2) {
    const double u1 = static_cast<double>((splitmix64(state) >> 11) + 1) * 0x1.0p-53;
    const double u2 = static_cast<double>(splitmix64(state) >> 11) * 0x1.0p-53;
    const double r = std::sqrt(-2.0 * std::log(u1));
    v(static_cast<Eigen::Index>(i)) = r * std::cos(2.0 * std::numbers::pi * u2);
    if (i + 1 < dim) v(static_cast<Eigen::Index>(i + 1)) = r * std::sin(2.0 * std::numbers::pi * u2);
  }
  return {std::string(text), v / v.norm(), EmbeddingSource::pseudo};
}

TextEmbedding embed(const std::string& text, const EmbeddingStore* store,
                    std::optional<std::uint64_t> fallback_seed, std::size_t dim) {
  require(!text.empty(), "embed: empty text");
  if (store) {
    if (const auto* v = store->find(text)) return {text, *v, EmbeddingSource::store};
  }
  if (!fallback_seed) {
    fail(ErrorKind::unresolvable_instruction, "no embedding for text \"" + text + "\"");
  }
  return pseudo_embed(text, *fallback_seed, store ? store->dim() : dim);
}

}  // namespace eegalign
