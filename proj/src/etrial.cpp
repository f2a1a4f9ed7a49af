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

#include "eegalign/etrial.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <nlohmann/json.hpp>

namespace eegalign::etrial {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

static_assert(sizeof(float) == 4);

void to_little_endian(std::vector<char>& bytes) {
  if constexpr (std::endian::native == std::endian::big) {
    for (std::size_t i = 0; i + 3 < bytes.size(); i += 4) {
      std::swap(bytes[i], bytes[i + 3]);
      std::swap(bytes[i + 1], bytes[i + 2]);
    }
  }
}

std::string zero_padded(std::size_t i) {
  std::ostringstream os;
  os << std::setw(6) << std::setfill('0') << i;
  return os.str();
}

}  // namespace

std::vector<RawTrial> read_corpus(const std::string& dir) {
  const fs::path root(dir);
  const fs::path manifest_path = root / "manifest.json";
  std::ifstream in(manifest_path);
  if (!in) fail(ErrorKind::missing_file, "cannot open " + manifest_path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorKind::format, manifest_path.string() + ": " + e.what());
  }
  if (doc.value("format", std::string{}) != "ETRIAL") {
    fail(ErrorKind::format, manifest_path.string() + ": not an ETRIAL manifest");
  }
  const int version = doc.value("version", 0);
  if (version != kFormatVersion) {
    fail(ErrorKind::version_mismatch, "ETRIAL version " + std::to_string(version) +
                                          " found, expected " + std::to_string(kFormatVersion));
  }

  std::vector<RawTrial> trials;
  try {
    for (const auto& entry : doc.at("trials")) {
      RawTrial t;
      t.trial_id = entry.at("trial_id").get<std::string>();
      t.subject_id = entry.at("subject_id").get<std::string>();
      if (entry.contains("label") && !entry["label"].is_null()) {
        t.label = entry["label"].get<std::string>();
      }
      t.dataset = entry.value("dataset", std::string{});
      t.channel_names = entry.at("channel_names").get<std::vector<std::string>>();
      t.sample_rate = entry.at("sample_rate").get<double>();
      const auto samples = entry.at("samples").get<std::size_t>();
      const fs::path bin = root / entry.at("path").get<std::string>();

      std::ifstream data(bin, std::ios::binary);
      if (!data) fail(ErrorKind::missing_file, "cannot open " + bin.string());
      const std::size_t count = t.channel_names.size() * samples;
      std::vector<char> bytes(count * sizeof(float));
      data.read(bytes.data(), static_cast<std::streamsize>(bytes.size()));
      if (static_cast<std::size_t>(data.gcount()) != bytes.size() ||
          data.peek() != std::char_traits<char>::eof()) {
        fail(ErrorKind::format, bin.string() + ": size does not match " +
                                    std::to_string(t.channel_names.size()) + " x " +
                                    std::to_string(samples) + " float32");
      }
      to_little_endian(bytes);
      t.data.resize(static_cast<Eigen::Index>(t.channel_names.size()),
                    static_cast<Eigen::Index>(samples));
      std::memcpy(t.data.data(), bytes.data(), bytes.size());
      t.validate();
      trials.push_back(std::move(t));
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::format, manifest_path.string() + ": " + e.what());
  }
  return trials;
}

void write_corpus(const std::string& dir, const std::vector<RawTrial>& trials) {
  const fs::path root(dir);
  std::error_code ec;
  fs::create_directories(root / "data", ec);
  if (ec) fail(ErrorKind::io, "cannot create " + (root / "data").string() + ": " + ec.message());

  json entries = json::array();
  for (std::size_t i = 0; i < trials.size(); ++i) {
    const auto& t = trials[i];
    t.validate();
    const std::string rel = "data/" + zero_padded(i) + ".f32";
    std::vector<char> bytes(static_cast<std::size_t>(t.data.size()) * sizeof(float));
    std::memcpy(bytes.data(), t.data.data(), bytes.size());
    to_little_endian(bytes);
    std::ofstream out(root / rel, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) fail(ErrorKind::io, "cannot write " + (root / rel).string());

    json e = {{"trial_id", t.trial_id},
              {"subject_id", t.subject_id},
              {"label", t.label ? json(*t.label) : json(nullptr)},
              {"dataset", t.dataset},
              {"channel_names", t.channel_names},
              {"sample_rate", t.sample_rate},
              {"samples", t.samples()},
              {"path", rel}};
    entries.push_back(std::move(e));
  }
  json doc = {{"format", "ETRIAL"}, {"version", kFormatVersion}, {"trials", std::move(entries)}};
  std::ofstream out(root / "manifest.json", std::ios::trunc);
  out << doc.dump(2) << '\n';
  if (!out) fail(ErrorKind::io, "cannot write " + (root / "manifest.json").string());
}

}  // namespace eegalign::etrial
