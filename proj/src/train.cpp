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

#include "eegalign/train.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "eegalign/config.hpp"

namespace eegalign {

using nn::Matrix;
using nn::RowVector;
using Json = nlohmann::json;

const char* to_string(Stage stage) { return stage == Stage::pretrain ? "pretrain" : "tune"; }

Stage parse_stage(std::string_view text) {
  if (text == "pretrain") return Stage::pretrain;
  if (text == "tune") return Stage::tune;
  fail(ErrorKind::format, "unknown stage \"" + std::string(text) + "\"");
}

void TrainConfig::validate() const {
  require(batch_size >= 1, "train: batch_size must be at least 1");
  require(min_lr > 0.0 && min_lr <= peak_lr, "train: need 0 < min_lr <= peak_lr");
  require(weight_decay >= 0.0, "train: weight_decay must be nonnegative");
  require(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0, "train: betas must lie in [0, 1)");
  require(adam_eps > 0.0, "train: adam_eps must be positive");
  require(transformer_lr_scale > 0.0 && other_lr_scale > 0.0, "train: lr scales must be positive");
  require(grad_clip >= 0.0, "train: grad_clip must be nonnegative");
  require(!tune_levels.empty(), "train: tune_levels is empty");
  switches.validate();
  require(spectral.cutoff_lo > 0.0 && spectral.band_width > 0.0 &&
              spectral.cutoff_lo + spectral.band_width <= spectral.cutoff_hi &&
              spectral.cutoff_hi <= kSampleRate / 2.0,
          "train: spectral mask band does not fit the cutoff range");
}

double cosine_lr(std::size_t step, std::size_t total_steps, double peak, double min) {
  require(total_steps > 0, "cosine_lr: total_steps must be positive");
  require(step <= total_steps, "cosine_lr: step beyond total_steps");
  const double phase = std::numbers::pi * static_cast<double>(step) / static_cast<double>(total_steps);
  return min + 0.5 * (peak - min) * (1.0 + std::cos(phase));
}

double schedule_lr(const TrainConfig& config, std::size_t update, std::size_t total_updates) {
  // update 0 runs at peak, the final update at min
  const std::size_t span = total_updates > 1 ? total_updates - 1 : 1;
  return cosine_lr(std::min(update, span), span, config.peak_lr, config.min_lr);
}

void adamw_update(Matrix& theta, const Matrix& grad, AdamMoments& moments, std::size_t t, double lr,
                  const AdamHyper& hyper) {
  if (moments.m.size() != theta.size()) {
    moments.m = Matrix::Zero(theta.rows(), theta.cols());
    moments.v = Matrix::Zero(theta.rows(), theta.cols());
  }
  theta *= 1.0 - lr * hyper.weight_decay;
  moments.m = hyper.beta1 * moments.m + (1.0 - hyper.beta1) * grad;
  moments.v = hyper.beta2 * moments.v + (1.0 - hyper.beta2) * grad.cwiseAbs2();
  const double c1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(t));
  theta.array() -= lr * (moments.m.array() / c1) / ((moments.v.array() / c2).sqrt() + hyper.eps);
}

void AdamW::step(const std::vector<std::pair<std::string, nn::Param*>>& params, double lr,
                 double transformer_scale, double other_scale) {
  for (const auto& [name, p] : params) {
    if (p->trainable && !p->grad.allFinite()) {
      fail(ErrorKind::numeric, "non-finite gradient in " + name + ", step aborted");
    }
  }
  ++steps_;
  for (const auto& [name, p] : params) {
    if (!p->trainable) continue;
    const double scale = p->group == nn::ParamGroup::transformer ? transformer_scale : other_scale;
    adamw_update(p->value, p->grad, moments_[name], steps_, lr * scale, hyper_);
  }
}

std::vector<std::pair<std::string, nn::Param*>> collect_params(Model& model) {
  std::vector<std::pair<std::string, nn::Param*>> out;
  model.visit([&](const std::string& name, nn::Param& p) { out.emplace_back(name, &p); });
  return out;
}

double clip_grad_norm(const std::vector<std::pair<std::string, nn::Param*>>& params, double max_norm) {
  double sq = 0.0;
  for (const auto& [name, p] : params) {
    if (p->trainable) sq += p->grad.squaredNorm();
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double s = max_norm / norm;
    for (const auto& [name, p] : params) {
      if (p->trainable) p->grad *= s;
    }
  }
  return norm;
}

GradCheckResult grad_check(const std::vector<std::pair<std::string, nn::Param*>>& params,
                           const std::function<double()>& loss, const GradCheckOptions& options) {
  GradCheckResult result;
  Rng rng(options.seed);
  // snapshot first: loss() may run a full forward/backward pass
  std::vector<nn::Matrix> grads;
  for (const auto& entry : params) grads.push_back(entry.second->grad);
  for (std::size_t t = 0; t < params.size(); ++t) {
    const auto& [name, p] = params[t];
    const auto n = static_cast<std::size_t>(p->value.size());
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    const std::size_t count = std::min(n, options.per_tensor);
    for (std::size_t i = 0; i < count; ++i) std::swap(idx[i], idx[i + rng.index(n - i)]);
    for (std::size_t i = 0; i < count; ++i) {
      double& x = p->value.data()[idx[i]];
      const double saved = x;
      x = saved + options.epsilon;
      const double up = loss();
      x = saved - options.epsilon;
      const double down = loss();
      x = saved;
      const double numeric = (up - down) / (2.0 * options.epsilon);
      const double analytic = grads[t].data()[idx[i]];
      const double rel = std::abs(analytic - numeric) /
                         std::max({std::abs(analytic), std::abs(numeric), options.floor});
      ++result.checked;
      if (rel >= result.max_rel_error || result.worst.empty()) {
        result.max_rel_error = rel;
        result.worst = name + "[" + std::to_string(idx[i]) + "]";
        result.analytic = analytic;
        result.numeric = numeric;
      }
    }
  }
  return result;
}

TextEncoder TextSource::encoder(const EmbeddingStore* store) const {
  TextEncoder enc;
  enc.dim = dim;
  if (from_store) {
    if (!store) fail(ErrorKind::missing_file, "this model was trained with an embedding store (" + encoder_tag + "); pass it with --store");
    if (store->encoder_tag() != encoder_tag) {
      fail(ErrorKind::dimension_mismatch, "embedding store encoder \"" + store->encoder_tag() +
                                              "\" differs from the training store \"" + encoder_tag + "\"");
    }
    if (store->dim() != dim) {
      fail(ErrorKind::dimension_mismatch, "embedding store dim " + std::to_string(store->dim()) +
                                              " != model text dim " + std::to_string(dim));
    }
    enc.store = store;
  } else {
    enc.fallback_seed = fallback_seed;
  }
  return enc;
}

// Checkpoint file: "EEGACKPT" | u32 version | u64 header bytes | JSON header |
// float64 tensors in header order | u64 end marker.

namespace {

constexpr char kMagic[8] = {'E', 'E', 'G', 'A', 'C', 'K', 'P', 'T'};
constexpr std::uint64_t kEndMarker = 0x444E45544B434745ULL;  // "EGCKTEND"
constexpr const char* kTokenizerVariant = "temporal_spatial_bn_avgpool";

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

template <typename T>
void put(std::string& out, T v) {
  out.append(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T get(const std::string& in, std::size_t& pos) {
  T v;
  std::memcpy(&v, in.data() + pos, sizeof v);
  pos += sizeof v;
  return v;
}

RunConfig snapshot(const ModelConfig& model, const TrainConfig& train) {
  RunConfig rc;
  rc.tokenizer = model.tokenizer;
  rc.encoder = model.encoder;
  rc.instruct = model.instruct;
  rc.train = train;
  return rc;
}

struct NamedTensor {
  std::string name;
  const Matrix* value;
};

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& checkpoint) {
  Model& model = const_cast<Model&>(checkpoint.model);
  std::vector<NamedTensor> tensors;
  std::vector<Matrix> buffers = {Matrix(model.tokenizer.running_mean.transpose()),
                                 Matrix(model.tokenizer.running_var.transpose())};
  model.visit([&](const std::string& name, nn::Param& p) { tensors.push_back({"param/" + name, &p.value}); });
  tensors.push_back({"buffer/tokenizer.running_mean", &buffers[0]});
  tensors.push_back({"buffer/tokenizer.running_var", &buffers[1]});
  for (const auto& [name, m] : checkpoint.optimizer.moments()) {
    tensors.push_back({"adam_m/" + name, &m.m});
    tensors.push_back({"adam_v/" + name, &m.v});
  }

  Json header;
  header["format"] = "eegalign-checkpoint";
  header["version"] = kCheckpointVersion;
  header["stage"] = to_string(checkpoint.state.stage);
  header["config"] = flatten(snapshot(checkpoint.model_config, checkpoint.train_config));
  header["classifier_labels"] = checkpoint.classifier_labels;
  header["activation"] = nn::kActivationTag;
  header["tokenizer_variant"] = kTokenizerVariant;
  header["epoch"] = checkpoint.state.epoch;
  header["total_steps"] = checkpoint.state.total_steps;
  header["rng_state"] = checkpoint.state.rng_state;
  header["optimizer_steps"] = checkpoint.optimizer.steps();
  Json curve = Json::array();
  for (const auto& r : checkpoint.state.curve) {
    curve.push_back({{"epoch", r.epoch}, {"split", r.split}, {"loss", r.loss}, {"lr", r.lr}});
  }
  header["curve"] = curve;
  header["catalog"] = checkpoint.catalog_json;
  header["text"] = {{"from_store", checkpoint.text.from_store},
                    {"encoder_tag", checkpoint.text.encoder_tag},
                    {"fallback_seed", checkpoint.text.fallback_seed},
                    {"dim", checkpoint.text.dim}};
  Json list = Json::array();
  for (const auto& t : tensors) list.push_back({{"name", t.name}, {"rows", t.value->rows()}, {"cols", t.value->cols()}});
  header["tensors"] = list;

  const std::string head = header.dump();
  std::string blob(kMagic, sizeof kMagic);
  put<std::uint32_t>(blob, kCheckpointVersion);
  put<std::uint64_t>(blob, head.size());
  blob += head;
  for (const auto& t : tensors) {
    blob.append(reinterpret_cast<const char*>(t.value->data()),
                static_cast<std::size_t>(t.value->size()) * sizeof(double));
  }
  put<std::uint64_t>(blob, kEndMarker);

  const std::filesystem::path target(path);
  std::filesystem::path tmp = target;
  tmp += ".partial";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::io, "cannot write checkpoint " + tmp.string());
    out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
    out.flush();
    if (!out) fail(ErrorKind::io, "short write to " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, target, ec);
  if (ec) fail(ErrorKind::io, "cannot move checkpoint into place at " + path + ": " + ec.message());
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::missing_file, "cannot open checkpoint " + path);
  std::string blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::size_t prefix = sizeof kMagic + sizeof(std::uint32_t) + sizeof(std::uint64_t);
  if (blob.size() < prefix || std::memcmp(blob.data(), kMagic, sizeof kMagic) != 0) {
    fail(ErrorKind::format, path + " is not an eegalign checkpoint");
  }
  std::size_t pos = sizeof kMagic;
  const auto version = get<std::uint32_t>(blob, pos);
  if (version != kCheckpointVersion) {
    fail(ErrorKind::version_mismatch, path + ": checkpoint version " + std::to_string(version) +
                                          ", this build reads version " + std::to_string(kCheckpointVersion));
  }
  const auto head_len = get<std::uint64_t>(blob, pos);
  if (head_len > blob.size() - pos) fail(ErrorKind::format, path + ": truncated checkpoint header");

  Checkpoint ck;
  try {
    const Json header = Json::parse(blob.substr(pos, head_len));
    pos += head_len;

    std::map<std::string, Matrix> tensors;
    for (const auto& t : header.at("tensors")) {
      const auto rows = t.at("rows").get<Eigen::Index>();
      const auto cols = t.at("cols").get<Eigen::Index>();
      const std::size_t bytes = static_cast<std::size_t>(rows * cols) * sizeof(double);
      if (rows < 0 || cols < 0 || bytes > blob.size() - pos) {
        fail(ErrorKind::format, path + ": truncated checkpoint (tensor " + t.at("name").get<std::string>() + ")");
      }
      Matrix m(rows, cols);
      std::memcpy(m.data(), blob.data() + pos, bytes);
      pos += bytes;
      tensors.emplace(t.at("name").get<std::string>(), std::move(m));
    }
    if (blob.size() - pos != sizeof(std::uint64_t) || get<std::uint64_t>(blob, pos) != kEndMarker) {
      fail(ErrorKind::format, path + ": truncated or trailing bytes after tensors");
    }

    if (header.at("activation").get<std::string>() != nn::kActivationTag ||
        header.at("tokenizer_variant").get<std::string>() != kTokenizerVariant) {
      fail(ErrorKind::version_mismatch, path + ": model variant differs from this build");
    }
    const RunConfig rc = unflatten(header.at("config").get<std::map<std::string, std::string>>());
    ck.model_config = rc.model();
    ck.train_config = rc.train;
    ck.classifier_labels = header.at("classifier_labels").get<std::vector<std::string>>();
    ck.state.stage = parse_stage(header.at("stage").get<std::string>());
    ck.state.epoch = header.at("epoch").get<std::size_t>();
    ck.state.total_steps = header.at("total_steps").get<std::size_t>();
    ck.state.rng_state = header.at("rng_state").get<std::string>();
    for (const auto& r : header.at("curve")) {
      ck.state.curve.push_back({r.at("epoch").get<std::size_t>(), r.at("split").get<std::string>(),
                                r.at("loss").get<double>(), r.at("lr").get<double>()});
    }
    ck.catalog_json = header.at("catalog").get<std::string>();
    const Json& text = header.at("text");
    ck.text = {text.at("from_store").get<bool>(), text.at("encoder_tag").get<std::string>(),
               text.at("fallback_seed").get<std::uint64_t>(), text.at("dim").get<std::size_t>()};

    ck.model = Model(ck.model_config, ck.classifier_labels);
    auto take = [&](const std::string& name, Eigen::Index rows, Eigen::Index cols) -> Matrix {
      auto it = tensors.find(name);
      if (it == tensors.end()) fail(ErrorKind::format, path + ": missing tensor " + name);
      if (it->second.rows() != rows || it->second.cols() != cols) {
        fail(ErrorKind::dimension_mismatch, path + ": tensor " + name + " has shape " +
                                                std::to_string(it->second.rows()) + "x" +
                                                std::to_string(it->second.cols()));
      }
      return std::move(it->second);
    };
    std::map<std::string, AdamMoments> moments;
    ck.model.visit([&](const std::string& name, nn::Param& p) {
      p.value = take("param/" + name, p.value.rows(), p.value.cols());
      if (tensors.count("adam_m/" + name)) {
        moments[name] = {take("adam_m/" + name, p.value.rows(), p.value.cols()),
                         take("adam_v/" + name, p.value.rows(), p.value.cols())};
      }
    });
    const auto d = static_cast<Eigen::Index>(ck.model_config.tokenizer.d);
    ck.model.tokenizer.running_mean = take("buffer/tokenizer.running_mean", 1, d).row(0).transpose();
    ck.model.tokenizer.running_var = take("buffer/tokenizer.running_var", 1, d).row(0).transpose();
    const TrainConfig& tc = ck.train_config;
    ck.optimizer = AdamW(AdamHyper{tc.beta1, tc.beta2, tc.adam_eps, tc.weight_decay});
    ck.optimizer.restore(header.at("optimizer_steps").get<std::size_t>(), std::move(moments));
  } catch (const Json::exception& e) {
    fail(ErrorKind::format, path + ": malformed checkpoint header: " + e.what());
  }
  return ck;
}

// Training loops

namespace {

std::vector<std::size_t> shuffled(std::size_t n, Rng& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
  return order;
}

bool starts_with_any(const std::string& name, const std::vector<std::string>& prefixes) {
  return std::any_of(prefixes.begin(), prefixes.end(),
                     [&](const std::string& p) { return name.rfind(p, 0) == 0; });
}

void apply_trainable(const std::vector<std::pair<std::string, nn::Param*>>& params, const TrainConfig& config) {
  for (const auto& [name, p] : params) p->trainable = config.trainable.empty() || starts_with_any(name, config.trainable);
}

std::size_t plan_total_steps(std::size_t trials, std::size_t batch, std::size_t epochs) {
  return epochs * ((trials + batch - 1) / batch);
}

void check_plan(TrainingState& state, std::size_t total) {
  if (state.total_steps == 0) state.total_steps = total;
  if (state.total_steps != total) {
    fail(ErrorKind::invalid_argument, "resume: the stage was planned for " + std::to_string(state.total_steps) +
                                          " updates but the data and config give " + std::to_string(total));
  }
}

void record(TrainingState& state, LossRecord r, const RunControl& control) {
  if (!std::isfinite(r.loss)) fail(ErrorKind::numeric, r.split + " loss became non-finite in epoch " + std::to_string(r.epoch));
  state.curve.push_back(r);
  if (control.on_record) control.on_record(r);
}

constexpr std::uint64_t kPretrainStream = 0x70726574;  // "pret"
constexpr std::uint64_t kTuneStream = 0x74756e65;      // "tune"
constexpr std::uint64_t kValStream = 0x76616c;         // "val"

}  // namespace

Checkpoint begin_pretrain(const ModelConfig& model_config, const TrainConfig& train_config) {
  train_config.validate();
  Checkpoint ck;
  ck.model_config = model_config;
  ck.train_config = train_config;
  ck.model = Model(model_config);
  ck.model.init(train_config.seed);
  ck.optimizer = AdamW(AdamHyper{train_config.beta1, train_config.beta2, train_config.adam_eps,
                                 train_config.weight_decay});
  ck.state.stage = Stage::pretrain;
  ck.state.rng_state = Rng(derive_seed(train_config.seed, kPretrainStream)).state();
  return ck;
}

void continue_pretrain(Checkpoint& ck, const std::vector<SegmentStack>& train, const std::vector<SegmentStack>& val,
                       const RunControl& control) {
  require(ck.state.stage == Stage::pretrain, "continue_pretrain: checkpoint is from the tune stage");
  require(!train.empty(), "pretrain: empty training corpus");
  const TrainConfig& cfg = ck.train_config;
  cfg.validate();
  check_plan(ck.state, plan_total_steps(train.size(), cfg.batch_size, cfg.pretrain_epochs));
  const auto params = collect_params(ck.model);
  apply_trainable(params, cfg);
  Rng rng;
  rng.set_state(ck.state.rng_state);

  while (ck.state.epoch < cfg.pretrain_epochs) {
    if (control.stop_after_epoch && ck.state.epoch >= *control.stop_after_epoch) break;
    const std::size_t epoch = ck.state.epoch + 1;
    const auto order = shuffled(train.size(), rng);
    double sum = 0.0;
    double lr = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      std::vector<const SegmentStack*> batch;
      for (std::size_t i = start; i < std::min(order.size(), start + cfg.batch_size); ++i) batch.push_back(&train[order[i]]);
      ck.model.zero_grad();
      const PretrainStats stats = ck.model.pretrain_batch(batch, cfg.switches, cfg.spectral, rng);
      if (!std::isfinite(stats.loss)) fail(ErrorKind::numeric, "pretrain loss became non-finite");
      if (cfg.grad_clip > 0.0) clip_grad_norm(params, cfg.grad_clip);
      lr = schedule_lr(cfg, ck.optimizer.steps(), ck.state.total_steps);
      ck.optimizer.step(params, lr, 1.0, 1.0);
      sum += stats.loss * static_cast<double>(batch.size());
    }
    record(ck.state, {epoch, "train", sum / static_cast<double>(train.size()), lr}, control);
    if (!val.empty()) {
      Rng val_rng(derive_seed(cfg.seed, kValStream));
      double vsum = 0.0;
      for (std::size_t start = 0; start < val.size(); start += cfg.batch_size) {
        std::vector<const SegmentStack*> batch;
        for (std::size_t i = start; i < std::min(val.size(), start + cfg.batch_size); ++i) batch.push_back(&val[i]);
        vsum += ck.model.pretrain_eval(batch, cfg.switches, cfg.spectral, val_rng).loss * static_cast<double>(batch.size());
      }
      record(ck.state, {epoch, "val", vsum / static_cast<double>(val.size()), lr}, control);
    }
    ck.state.epoch = epoch;
    ck.state.rng_state = rng.state();
  }
}

Checkpoint run_pretrain(const std::vector<SegmentStack>& train, const std::vector<SegmentStack>& val,
                        const ModelConfig& model_config, const TrainConfig& train_config, const RunControl& control) {
  Checkpoint ck = begin_pretrain(model_config, train_config);
  continue_pretrain(ck, train, val, control);
  return ck;
}

TaskTexts::TaskTexts(const InstructionCatalog& catalog, const TextEncoder& encoder)
    : catalog_(catalog), encoder_(encoder) {}

const PrototypeBank& TaskTexts::bank(const std::string& dataset) {
  auto it = banks_.find(dataset);
  if (it == banks_.end()) {
    it = banks_.emplace(dataset, PrototypeBank::build(catalog_.entry(dataset).targets, encoder_)).first;
  }
  return it->second;
}

const RowVector& TaskTexts::instruction(const std::string& dataset, InstructionLevel level) {
  const std::string text = catalog_.instruction(dataset, level);
  auto it = instructions_.find(text);
  if (it == instructions_.end()) it = instructions_.emplace(text, encoder_(text).vector).first;
  return it->second;
}

std::vector<std::string> label_space(const InstructionCatalog& catalog, const std::vector<std::string>& datasets) {
  std::vector<std::string> labels;
  for (const auto& d : datasets) {
    for (const auto& t : catalog.entry(d).targets) {
      if (std::find(labels.begin(), labels.end(), t) == labels.end()) labels.push_back(t);
    }
  }
  return labels;
}

Checkpoint begin_tune(const Checkpoint& pretrained, const InstructConfig& instruct, const TrainConfig& train_config,
                      const InstructionCatalog& catalog, const TextSource& text,
                      const std::vector<std::string>& datasets) {
  train_config.validate();
  require(!datasets.empty(), "tune: no datasets");
  if (instruct.text_dim != text.dim) {
    fail(ErrorKind::dimension_mismatch, "tune: instruct.text_dim " + std::to_string(instruct.text_dim) +
                                            " != text embedding dim " + std::to_string(text.dim));
  }
  Checkpoint ck;
  ck.model_config = pretrained.model_config;
  ck.model_config.instruct = instruct;
  ck.train_config = train_config;
  if (instruct.head == HeadKind::softmax) ck.classifier_labels = label_space(catalog, datasets);
  ck.model = Model(ck.model_config, ck.classifier_labels);
  ck.model.init(derive_seed(train_config.seed, kTuneStream));

  std::map<std::string, const nn::Param*> source;
  const_cast<Model&>(pretrained.model).visit([&](const std::string& name, nn::Param& p) { source[name] = &p; });
  ck.model.visit([&](const std::string& name, nn::Param& p) {
    if (!starts_with_any(name, {"tokenizer.", "encoder.", "decoder."})) return;
    const nn::Param* s = source.at(name);
    if (s->value.rows() != p.value.rows() || s->value.cols() != p.value.cols()) {
      fail(ErrorKind::dimension_mismatch, "tune: pretrained tensor " + name + " has a different shape");
    }
    p.value = s->value;
  });
  ck.model.tokenizer.running_mean = pretrained.model.tokenizer.running_mean;
  ck.model.tokenizer.running_var = pretrained.model.tokenizer.running_var;

  ck.optimizer = AdamW(AdamHyper{train_config.beta1, train_config.beta2, train_config.adam_eps,
                                 train_config.weight_decay});
  ck.state.stage = Stage::tune;
  ck.state.rng_state = Rng(derive_seed(train_config.seed, kTuneStream)).state();
  ck.catalog_json = catalog.to_json();
  ck.text = text;
  return ck;
}

namespace {

void check_labels(const std::vector<LabelledTrial>& trials, TaskTexts& texts, const Model& model) {
  for (const auto& t : trials) {
    if (!texts.catalog().contains(t.dataset)) {
      fail(ErrorKind::unresolvable_instruction, "trial " + t.trial_id + ": dataset \"" + t.dataset + "\" is not in the instruction catalog");
    }
    const PrototypeBank& bank = texts.bank(t.dataset);
    if (!bank.index_of(t.label)) {
      fail(ErrorKind::missing_label, "label \"" + t.label + "\" of trial " + t.trial_id +
                                         " has no prototype in dataset " + t.dataset);
    }
    if (model.classifier) {
      const auto& labels = model.classifier->labels();
      if (std::find(labels.begin(), labels.end(), t.label) == labels.end()) {
        fail(ErrorKind::missing_label, "label \"" + t.label + "\" is outside the classifier label space");
      }
    }
  }
}

}  // namespace

void continue_tune(Checkpoint& ck, const std::vector<LabelledTrial>& train, const std::vector<LabelledTrial>& val,
                   const EmbeddingStore* store, const RunControl& control) {
  require(ck.state.stage == Stage::tune, "continue_tune: checkpoint is not a tuning checkpoint");
  require(!train.empty(), "tune: empty training set");
  const TrainConfig& cfg = ck.train_config;
  cfg.validate();
  TaskTexts texts(InstructionCatalog::parse(ck.catalog_json, "checkpoint catalog"), ck.text.encoder(store));
  check_labels(train, texts, ck.model);
  check_labels(val, texts, ck.model);
  check_plan(ck.state, plan_total_steps(train.size(), cfg.batch_size, cfg.tune_epochs));
  const auto params = collect_params(ck.model);
  apply_trainable(params, cfg);
  Rng rng;
  rng.set_state(ck.state.rng_state);

  while (ck.state.epoch < cfg.tune_epochs) {
    if (control.stop_after_epoch && ck.state.epoch >= *control.stop_after_epoch) break;
    const std::size_t epoch = ck.state.epoch + 1;
    const auto order = shuffled(train.size(), rng);
    double sum = 0.0;
    double lr = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      std::vector<TuneExample> batch;
      for (std::size_t i = start; i < std::min(order.size(), start + cfg.batch_size); ++i) {
        const LabelledTrial& t = train[order[i]];
        const InstructionLevel level = cfg.tune_levels[rng.index(cfg.tune_levels.size())];
        batch.push_back({&t.segments, texts.instruction(t.dataset, level), t.label, &texts.bank(t.dataset)});
      }
      ck.model.zero_grad();
      const double loss = ck.model.tune_batch(batch, rng);
      if (cfg.grad_clip > 0.0) clip_grad_norm(params, cfg.grad_clip);
      lr = schedule_lr(cfg, ck.optimizer.steps(), ck.state.total_steps);
      ck.optimizer.step(params, lr, cfg.transformer_lr_scale, cfg.other_lr_scale);
      sum += loss * static_cast<double>(batch.size());
    }
    record(ck.state, {epoch, "train", sum / static_cast<double>(train.size()), lr}, control);
    if (!val.empty()) {
      double vsum = 0.0;
      for (const auto& t : val) {
        for (const auto level : cfg.tune_levels) {
          const RowVector h = ck.model.embed(t.segments, texts.instruction(t.dataset, level));
          vsum += ck.model.classifier ? ck.model.classifier->loss(h, t.label)
                                      : alignment_loss(h, t.label, texts.bank(t.dataset));
        }
      }
      record(ck.state,
             {epoch, "val", vsum / static_cast<double>(val.size() * cfg.tune_levels.size()), lr}, control);
    }
    ck.state.epoch = epoch;
    ck.state.rng_state = rng.state();
  }
}

Checkpoint run_tune(const std::vector<LabelledTrial>& train, const std::vector<LabelledTrial>& val,
                    const Checkpoint& pretrained, const InstructConfig& instruct, const TrainConfig& train_config,
                    const InstructionCatalog& catalog, const TextSource& text, const EmbeddingStore* store,
                    const RunControl& control) {
  std::vector<std::string> datasets;
  for (const auto* set : {&train, &val}) {
    for (const auto& t : *set) {
      if (std::find(datasets.begin(), datasets.end(), t.dataset) == datasets.end()) datasets.push_back(t.dataset);
    }
  }
  for (const auto& d : datasets) {
    if (!catalog.contains(d)) {
      fail(ErrorKind::unresolvable_instruction, "dataset \"" + d + "\" is not in the instruction catalog");
    }
  }
  Checkpoint ck = begin_tune(pretrained, instruct, train_config, catalog, text, datasets);
  continue_tune(ck, train, val, store, control);
  return ck;
}

std::string loss_curve_csv(const std::vector<LossRecord>& curve) {
  std::ostringstream out;
  out.precision(17);
  out << "epoch,split,loss,lr\n";
  for (const auto& r : curve) out << r.epoch << ',' << r.split << ',' << r.loss << ',' << r.lr << '\n';
  return out.str();
}

}  // namespace eegalign
