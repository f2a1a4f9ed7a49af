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

#include "eegalign/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <charconv>
#include <fstream>
#include <set>
#include <sstream>
#include <type_traits>

namespace eegalign {

namespace {

std::string format_real(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

std::string trim(std::string_view s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string_view::npos) return {};
  const auto b = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(a, b - a + 1));
}

std::vector<std::string> split_list(std::string_view s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    const auto comma = s.find(',', start);
    const auto end = comma == std::string_view::npos ? s.size() : comma;
    std::string item = trim(s.substr(start, end - start));
    if (!item.empty()) out.push_back(std::move(item));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) out += (i ? "," : "") + items[i];
  return out;
}

struct BadValue {
  std::string why;
};

template <typename T>
T parse_value(const std::string& text) {
  const std::string s = trim(text);
  if constexpr (std::is_same_v<T, bool>) {
    if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
    if (s == "false" || s == "0" || s == "no" || s == "off") return false;
    throw BadValue{"expected true or false"};
  } else if constexpr (std::is_same_v<T, std::string>) {
    return s;
  } else {
    T v{};
    auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || end != s.data() + s.size() || s.empty()) {
      throw BadValue{std::is_floating_point_v<T> ? "expected a number" : "expected a nonnegative integer"};
    }
    return v;
  }
}

template <typename T>
std::string format_value(const T& v) {
  if constexpr (std::is_same_v<T, bool>) {
    return v ? "true" : "false";
  } else if constexpr (std::is_same_v<T, std::string>) {
    return v;
  } else if constexpr (std::is_floating_point_v<T>) {
    return format_real(v);
  } else {
    return std::to_string(v);
  }
}

// Key bound to a field through an accessor returning a reference.
template <typename Ref>
ConfigKey field(std::string section, std::string key, std::string help, Ref ref) {
  using T = std::remove_reference_t<decltype(ref(std::declval<RunConfig&>()))>;
  ConfigKey k;
  k.section = std::move(section);
  k.key = std::move(key);
  k.help = std::move(help);
  k.get = [ref](const RunConfig& c) { return format_value<T>(ref(const_cast<RunConfig&>(c))); };
  k.set = [ref](RunConfig& c, const std::string& v) { ref(c) = parse_value<T>(v); };
  return k;
}

ConfigKey custom(std::string section, std::string key, std::string help,
                 std::function<std::string(const RunConfig&)> get,
                 std::function<void(RunConfig&, const std::string&)> set) {
  return {std::move(section), std::move(key), std::move(help), std::move(get), std::move(set)};
}

std::vector<ConfigKey> build_schema() {
  std::vector<ConfigKey> s;
  // [signal]
  s.push_back(field("signal", "target_rate", "resampling target in Hz (must not exceed the source rate)",
                    [](RunConfig& c) -> double& { return c.signal.target_rate; }));
  s.push_back(field("signal", "band_lo", "band-pass lower edge in Hz",
                    [](RunConfig& c) -> double& { return c.signal.band_lo; }));
  s.push_back(field("signal", "band_hi", "band-pass upper edge in Hz",
                    [](RunConfig& c) -> double& { return c.signal.band_hi; }));
  s.push_back(field("signal", "filter", "apply the band-pass filter",
                    [](RunConfig& c) -> bool& { return c.signal.filter; }));
  s.push_back(field("signal", "mask_cutoff_lo", "lowest frequency a spectral mask band may start at",
                    [](RunConfig& c) -> double& { return c.train.spectral.cutoff_lo; }));
  s.push_back(field("signal", "mask_cutoff_hi", "highest frequency a spectral mask band may end at",
                    [](RunConfig& c) -> double& { return c.train.spectral.cutoff_hi; }));
  s.push_back(field("signal", "mask_band_width", "width of the masked band in Hz",
                    [](RunConfig& c) -> double& { return c.train.spectral.band_width; }));
  // [tokenizer]
  s.push_back(field("tokenizer", "channels", "electrode rows per segment",
                    [](RunConfig& c) -> std::size_t& { return c.tokenizer.channels; }));
  s.push_back(field("tokenizer", "window", "segment length in samples",
                    [](RunConfig& c) -> std::size_t& { return c.tokenizer.window; }));
  s.push_back(field("tokenizer", "temporal_kernel", "temporal convolution width",
                    [](RunConfig& c) -> std::size_t& { return c.tokenizer.temporal_kernel; }));
  s.push_back(field("tokenizer", "padding", "zero padding on each side of the time axis",
                    [](RunConfig& c) -> std::size_t& { return c.tokenizer.padding; }));
  s.push_back(field("tokenizer", "pool", "average-pooling width and stride",
                    [](RunConfig& c) -> std::size_t& { return c.tokenizer.pool; }));
  s.push_back(field("tokenizer", "bn_eps", "batch-norm epsilon",
                    [](RunConfig& c) -> double& { return c.tokenizer.bn_eps; }));
  s.push_back(field("tokenizer", "bn_momentum", "batch-norm running-statistics momentum",
                    [](RunConfig& c) -> double& { return c.tokenizer.bn_momentum; }));
  // [encoder]
  s.push_back(field("encoder", "layers", "blocks per transformer branch",
                    [](RunConfig& c) -> std::size_t& { return c.encoder.layers; }));
  s.push_back(field("encoder", "d", "token width (shared with the tokenizer)",
                    [](RunConfig& c) -> std::size_t& { return c.encoder.d; }));
  s.push_back(field("encoder", "heads", "attention heads",
                    [](RunConfig& c) -> std::size_t& { return c.encoder.heads; }));
  s.push_back(field("encoder", "ff_scale", "feed-forward width as a multiple of d",
                    [](RunConfig& c) -> std::size_t& { return c.encoder.ff_scale; }));
  s.push_back(field("encoder", "dropout", "dropout rate on residual branches",
                    [](RunConfig& c) -> double& { return c.encoder.dropout; }));
  s.push_back(field("encoder", "mask_ratio", "share of tokens replaced by the mask embedding",
                    [](RunConfig& c) -> double& { return c.encoder.mask_ratio; }));
  s.push_back(field("encoder", "lambda_ctx", "weight of the masked-reconstruction loss",
                    [](RunConfig& c) -> double& { return c.encoder.lambda_ctx; }));
  s.push_back(field("encoder", "lambda_cau", "weight of the next-slice loss",
                    [](RunConfig& c) -> double& { return c.encoder.lambda_cau; }));
  s.push_back(field("encoder", "max_tokens", "length of the positional table",
                    [](RunConfig& c) -> std::size_t& { return c.encoder.max_tokens; }));
  s.push_back(field("encoder", "decoder_hidden", "hidden width of the reconstruction decoder",
                    [](RunConfig& c) -> std::size_t& { return c.encoder.decoder_hidden; }));
  // [instruct]
  s.push_back(field("instruct", "text_dim", "text embedding dimension k",
                    [](RunConfig& c) -> std::size_t& { return c.instruct.text_dim; }));
  s.push_back(field("instruct", "queries", "learnable Q-Former queries",
                    [](RunConfig& c) -> std::size_t& { return c.instruct.queries; }));
  s.push_back(field("instruct", "qformer_layers", "Q-Former layers",
                    [](RunConfig& c) -> std::size_t& { return c.instruct.qformer_layers; }));
  s.push_back(field("instruct", "qformer_heads", "heads of the query self-attention",
                    [](RunConfig& c) -> std::size_t& { return c.instruct.qformer_heads; }));
  s.push_back(field("instruct", "query_self_attention", "self-attention between queries in each layer",
                    [](RunConfig& c) -> bool& { return c.instruct.query_self_attention; }));
  s.push_back(field("instruct", "ff_scale", "Q-Former feed-forward width as a multiple of d",
                    [](RunConfig& c) -> std::size_t& { return c.instruct.ff_scale; }));
  s.push_back(field("instruct", "head_hidden", "hidden width of the aggregation head",
                    [](RunConfig& c) -> std::size_t& { return c.instruct.head_hidden; }));
  s.push_back(custom(
      "instruct", "head", "prototype (cosine alignment) or softmax (label-ID cross-entropy ablation)",
      [](const RunConfig& c) { return std::string(c.instruct.head == HeadKind::prototype ? "prototype" : "softmax"); },
      [](RunConfig& c, const std::string& v) {
        const std::string t = trim(v);
        if (t == "prototype") c.instruct.head = HeadKind::prototype;
        else if (t == "softmax") c.instruct.head = HeadKind::softmax;
        else throw BadValue{"expected prototype or softmax"};
      }));
  s.push_back(field("instruct", "film_gamma_init", "initial bias of the FiLM scale half",
                    [](RunConfig& c) -> double& { return c.instruct.film_gamma_init; }));
  // [train]
  s.push_back(field("train", "batch_size", "trials per optimizer step",
                    [](RunConfig& c) -> std::size_t& { return c.train.batch_size; }));
  s.push_back(field("train", "peak_lr", "cosine schedule start",
                    [](RunConfig& c) -> double& { return c.train.peak_lr; }));
  s.push_back(field("train", "min_lr", "cosine schedule floor",
                    [](RunConfig& c) -> double& { return c.train.min_lr; }));
  s.push_back(field("train", "weight_decay", "decoupled weight decay",
                    [](RunConfig& c) -> double& { return c.train.weight_decay; }));
  s.push_back(field("train", "beta1", "Adam first-moment decay",
                    [](RunConfig& c) -> double& { return c.train.beta1; }));
  s.push_back(field("train", "beta2", "Adam second-moment decay",
                    [](RunConfig& c) -> double& { return c.train.beta2; }));
  s.push_back(field("train", "adam_eps", "Adam denominator epsilon",
                    [](RunConfig& c) -> double& { return c.train.adam_eps; }));
  s.push_back(field("train", "pretrain_epochs", "reconstruction pretraining epochs",
                    [](RunConfig& c) -> std::size_t& { return c.train.pretrain_epochs; }));
  s.push_back(field("train", "tune_epochs", "instruction tuning epochs",
                    [](RunConfig& c) -> std::size_t& { return c.train.tune_epochs; }));
  s.push_back(field("train", "transformer_lr_scale", "lr multiplier of both transformers while tuning",
                    [](RunConfig& c) -> double& { return c.train.transformer_lr_scale; }));
  s.push_back(field("train", "other_lr_scale", "lr multiplier of all other parameters while tuning",
                    [](RunConfig& c) -> double& { return c.train.other_lr_scale; }));
  s.push_back(field("train", "grad_clip", "global gradient-norm clip, 0 disables",
                    [](RunConfig& c) -> double& { return c.train.grad_clip; }));
  s.push_back(field("train", "seed", "seed of initialization, batching, masking and dropout",
                    [](RunConfig& c) -> std::uint64_t& { return c.train.seed; }));
  s.push_back(field("train", "frequency_mask", "spectral band masking during pretraining",
                    [](RunConfig& c) -> bool& { return c.train.switches.frequency; }));
  s.push_back(field("train", "random_mask", "masked-token reconstruction branch",
                    [](RunConfig& c) -> bool& { return c.train.switches.random; }));
  s.push_back(field("train", "causal_mask", "next-slice prediction branch",
                    [](RunConfig& c) -> bool& { return c.train.switches.causal; }));
  s.push_back(custom(
      "train", "tune_levels", "instruction levels sampled while tuning (none, task, task_and_targets)",
      [](const RunConfig& c) {
        std::vector<std::string> names;
        for (auto l : c.train.tune_levels) names.emplace_back(to_string(l));
        return join(names);
      },
      [](RunConfig& c, const std::string& v) {
        c.train.tune_levels.clear();
        for (const auto& item : split_list(v)) {
          try {
            c.train.tune_levels.push_back(parse_instruction_level(item));
          } catch (const Error& e) {
            throw BadValue{e.what()};
          }
        }
      }));
  s.push_back(custom(
      "train", "trainable", "comma-separated parameter-name prefixes that train (empty: all)",
      [](const RunConfig& c) { return join(c.train.trainable); },
      [](RunConfig& c, const std::string& v) { c.train.trainable = split_list(v); }));
  // [data]
  s.push_back(field("data", "dataset", "catalog dataset name of the synthetic corpus",
                    [](RunConfig& c) -> std::string& { return c.synth.dataset; }));
  s.push_back(custom(
      "data", "classes", "comma-separated name:carrier_hz:electrode triples",
      [](const RunConfig& c) {
        std::vector<std::string> items;
        for (const auto& k : c.synth.classes) items.push_back(k.to_string());
        return join(items);
      },
      [](RunConfig& c, const std::string& v) {
        c.synth.classes.clear();
        for (const auto& item : split_list(v)) {
          try {
            c.synth.classes.push_back(SynthClass::parse(item));
          } catch (const Error& e) {
            throw BadValue{e.what()};
          }
        }
      }));
  s.push_back(field("data", "subjects", "synthetic subjects",
                    [](RunConfig& c) -> std::size_t& { return c.synth.subjects; }));
  s.push_back(field("data", "trials_per_subject_per_class", "synthetic trials per subject and class",
                    [](RunConfig& c) -> std::size_t& { return c.synth.trials_per_subject_per_class; }));
  s.push_back(field("data", "duration_s", "synthetic trial length in seconds",
                    [](RunConfig& c) -> double& { return c.synth.duration_s; }));
  s.push_back(field("data", "noise_sigma", "standard deviation of additive Gaussian noise",
                    [](RunConfig& c) -> double& { return c.synth.noise_sigma; }));
  s.push_back(field("data", "gain_lo", "lower bound of the per-subject gain",
                    [](RunConfig& c) -> double& { return c.synth.gain_lo; }));
  s.push_back(field("data", "gain_hi", "upper bound of the per-subject gain",
                    [](RunConfig& c) -> double& { return c.synth.gain_hi; }));
  s.push_back(field("data", "spatial_width", "width of the spatial weight bump (unit-sphere chord)",
                    [](RunConfig& c) -> double& { return c.synth.spatial_width; }));
  s.push_back(field("data", "spatial_floor", "spatial weight far from the class electrode",
                    [](RunConfig& c) -> double& { return c.synth.spatial_floor; }));
  s.push_back(custom(
      "data", "split", "cross_subject or multi_subject",
      [](const RunConfig& c) { return std::string(to_string(c.split.mode)); },
      [](RunConfig& c, const std::string& v) {
        try {
          c.split.mode = parse_split_mode(trim(v));
        } catch (const Error& e) {
          throw BadValue{e.what()};
        }
      }));
  s.push_back(field("data", "train_fraction", "share of subjects (cross) or trials (multi) for train/val",
                    [](RunConfig& c) -> double& { return c.split.train_fraction; }));
  s.push_back(field("data", "val_fraction", "share of train/val held out for validation",
                    [](RunConfig& c) -> double& { return c.split.val_fraction; }));
  s.push_back(custom(
      "data", "subject_boundary", "explicit train/val subject count for cross-subject splits (empty: use fraction)",
      [](const RunConfig& c) {
        return c.split.subject_boundary ? std::to_string(*c.split.subject_boundary) : std::string();
      },
      [](RunConfig& c, const std::string& v) {
        const std::string t = trim(v);
        if (t.empty()) c.split.subject_boundary.reset();
        else c.split.subject_boundary = parse_value<std::size_t>(t);
      }));
  return s;
}

}  // namespace

ModelConfig RunConfig::model() const {
  ModelConfig m{tokenizer, encoder, instruct};
  m.tokenizer.d = encoder.d;
  return m;
}

void RunConfig::validate() const {
  model().validate();
  train.validate();
  synth.validate();
  split.validate();
}

const std::vector<ConfigKey>& config_schema() {
  static const std::vector<ConfigKey> schema = build_schema();
  return schema;
}

namespace {

void assign(RunConfig& config, const ConfigKey& key, const std::string& value, const std::string& origin) {
  try {
    key.set(config, value);
  } catch (const BadValue& e) {
    fail(ErrorKind::invalid_argument,
         origin + ": [" + key.section + "] " + key.key + " = \"" + value + "\": " + e.why);
  }
}

const ConfigKey* find_key(std::string_view section, std::string_view key) {
  for (const auto& k : config_schema()) {
    if (k.section == section && k.key == key) return &k;
  }
  return nullptr;
}

}  // namespace

RunConfig parse_config(std::string_view text, const std::string& origin) {
  boost::property_tree::ptree tree;
  std::istringstream in{std::string(text)};
  try {
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    fail(ErrorKind::format, origin + ": line " + std::to_string(e.line()) + ": " + e.message());
  }
  static const std::set<std::string> sections = {"signal", "tokenizer", "encoder", "instruct", "train", "data"};
  RunConfig config;
  for (const auto& [section, body] : tree) {
    if (!sections.count(section)) {
      if (body.empty()) {
        fail(ErrorKind::invalid_argument, origin + ": key \"" + section + "\" outside any section");
      }
      fail(ErrorKind::invalid_argument, origin + ": unknown section [" + section + "]");
    }
    for (const auto& [key, value] : body) {
      const ConfigKey* k = find_key(section, key);
      if (!k) fail(ErrorKind::invalid_argument, origin + ": [" + section + "] unknown key \"" + key + "\"");
      assign(config, *k, value.data(), origin);
    }
  }
  try {
    config.validate();
  } catch (const Error& e) {
    fail(e.kind(), origin + ": " + e.what());
  }
  return config;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::missing_file, "cannot open config " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), path);
}

std::string to_ini(const RunConfig& config) {
  std::string out;
  std::string section;
  for (const auto& k : config_schema()) {
    if (k.section != section) {
      out += (section.empty() ? "[" : "\n[") + k.section + "]\n";
      section = k.section;
    }
    out += k.key + " = " + k.get(config) + "\n";
  }
  return out;
}

std::map<std::string, std::string> flatten(const RunConfig& config) {
  std::map<std::string, std::string> out;
  for (const auto& k : config_schema()) out[k.path()] = k.get(config);
  return out;
}

RunConfig unflatten(const std::map<std::string, std::string>& values) {
  RunConfig config;
  for (const auto& [path, value] : values) {
    const auto dot = path.find('.');
    const ConfigKey* k = dot == std::string::npos ? nullptr : find_key(path.substr(0, dot), path.substr(dot + 1));
    if (!k) fail(ErrorKind::format, "config snapshot: unknown key " + path);
    assign(config, *k, value, "config snapshot");
  }
  return config;
}

std::string config_reference() {
  const RunConfig defaults;
  std::string out;
  std::string section;
  for (const auto& k : config_schema()) {
    if (k.section != section) {
      out += "  [" + k.section + "]\n";
      section = k.section;
    }
    std::string line = "    " + k.key + " (default: " + k.get(defaults) + ")";
    out += line + "\n        " + k.help + "\n";
  }
  return out;
}

}  // namespace eegalign
