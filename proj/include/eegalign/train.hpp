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
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "eegalign/model.hpp"

namespace eegalign {

enum class Stage { pretrain, tune };

const char* to_string(Stage stage);
Stage parse_stage(std::string_view text);

struct TrainConfig {
  std::size_t batch_size = 32;
  double peak_lr = 1e-3;
  double min_lr = 1e-4;
  double weight_decay = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::size_t pretrain_epochs = 5;
  std::size_t tune_epochs = 20;
  /// Group scales, applied during instruction tuning. Pretraining runs every
  /// group at 1.0.
  double transformer_lr_scale = 0.1;
  double other_lr_scale = 1.0;
  /// Global gradient-norm clip; 0 disables it.
  double grad_clip = 0.0;
  std::uint64_t seed = 0;
  PretrainSwitches switches;
  SpectralMaskConfig spectral;
  /// Instruction levels drawn uniformly per example during tuning.
  std::vector<InstructionLevel> tune_levels = {InstructionLevel::task, InstructionLevel::task_and_targets};
  /// Parameter-name prefixes that train; empty means everything trains.
  std::vector<std::string> trainable;

  void validate() const;
};

/// min + (peak - min)(1 + cos(pi step / total)) / 2.
double cosine_lr(std::size_t step, std::size_t total_steps, double peak, double min);

struct AdamMoments {
  nn::Matrix m;
  nn::Matrix v;
};

struct AdamHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

/// One decoupled-weight-decay Adam update of a single tensor; t is the
/// 1-based step count used for bias correction.
void adamw_update(nn::Matrix& theta, const nn::Matrix& grad, AdamMoments& moments, std::size_t t,
                  double lr, const AdamHyper& hyper);

/// AdamW over named parameters with per-group learning-rate scales.
class AdamW {
 public:
  AdamW() = default;
  explicit AdamW(const AdamHyper& hyper) : hyper_(hyper) {}

  /// Updates every trainable parameter. A non-finite gradient anywhere
  /// aborts the step before any parameter changes.
  void step(const std::vector<std::pair<std::string, nn::Param*>>& params, double lr,
            double transformer_scale, double other_scale);

  std::size_t steps() const { return steps_; }
  const AdamHyper& hyper() const { return hyper_; }
  std::map<std::string, AdamMoments>& moments() { return moments_; }
  const std::map<std::string, AdamMoments>& moments() const { return moments_; }
  void restore(std::size_t steps, std::map<std::string, AdamMoments> moments) {
    steps_ = steps;
    moments_ = std::move(moments);
  }

 private:
  AdamHyper hyper_;
  std::size_t steps_ = 0;
  std::map<std::string, AdamMoments> moments_;
};

/// All parameters of a model in visit order.
std::vector<std::pair<std::string, nn::Param*>> collect_params(Model& model);

/// Scales gradients so their global norm is at most max_norm; returns the
/// norm before clipping.
double clip_grad_norm(const std::vector<std::pair<std::string, nn::Param*>>& params, double max_norm);

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst;  // "name[index]"
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t checked = 0;
};

struct GradCheckOptions {
  double epsilon = 1e-5;
  /// Coordinates sampled per tensor (all of them when the tensor is smaller).
  std::size_t per_tensor = 50;
  /// |a - n| / max(|a|, |n|, floor): keeps exactly-zero gradients from
  /// dividing round-off by zero.
  double floor = 1e-6;
  std::uint64_t seed = 0;
};

/// Central differences of loss() against the gradients stored in each
/// Param::grad on entry (read once, so loss() may accumulate into them).
GradCheckResult grad_check(const std::vector<std::pair<std::string, nn::Param*>>& params,
                           const std::function<double()>& loss, const GradCheckOptions& options = {});

struct LossRecord {
  std::size_t epoch = 0;  // 1-based
  std::string split;      // "train" or "val"
  double loss = 0.0;
  double lr = 0.0;  // last learning rate used in the epoch
};

/// Where text vectors come from; recorded so that evaluation resolves the
/// same instruction and prototype vectors as training.
struct TextSource {
  bool from_store = false;
  std::string encoder_tag;
  std::uint64_t fallback_seed = 0;
  std::size_t dim = kDefaultTextDim;

  /// Builds the encoder; requires a store with a matching tag when from_store.
  TextEncoder encoder(const EmbeddingStore* store) const;
};

struct TrainingState {
  Stage stage = Stage::pretrain;
  std::size_t epoch = 0;        // completed epochs
  std::size_t total_steps = 0;  // planned updates for the whole stage
  std::string rng_state;
  std::vector<LossRecord> curve;

  /// Schedule step of the most recent update, if any.
  std::optional<std::size_t> last_schedule_step(std::size_t optimizer_steps) const {
    return optimizer_steps == 0 ? std::nullopt : std::optional<std::size_t>(optimizer_steps - 1);
  }
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  ModelConfig model_config;
  TrainConfig train_config;
  std::vector<std::string> classifier_labels;
  TrainingState state;
  std::string catalog_json;  // tune stage only
  TextSource text;
  Model model;
  AdamW optimizer;
};

/// Atomic write (temporary file + rename).
void save_checkpoint(const std::string& path, const Checkpoint& checkpoint);
/// Fails on truncation, bad magic or version mismatch without returning
/// partial state.
Checkpoint load_checkpoint(const std::string& path);

/// Learning rate of optimizer update k (0-based) out of total updates.
double schedule_lr(const TrainConfig& config, std::size_t update, std::size_t total_updates);

struct RunControl {
  /// Stop once this many epochs are complete (resumable later).
  std::optional<std::size_t> stop_after_epoch;
  std::function<void(const LossRecord&)> on_record;
};

/// Fresh pretraining state: model initialized from train.seed.
Checkpoint begin_pretrain(const ModelConfig& model_config, const TrainConfig& train_config);
/// Runs (or resumes) pretraining epochs until train.pretrain_epochs.
void continue_pretrain(Checkpoint& checkpoint, const std::vector<SegmentStack>& train,
                       const std::vector<SegmentStack>& val, const RunControl& control = {});
Checkpoint run_pretrain(const std::vector<SegmentStack>& train, const std::vector<SegmentStack>& val,
                        const ModelConfig& model_config, const TrainConfig& train_config,
                        const RunControl& control = {});

/// A labelled trial ready for tuning or evaluation.
struct LabelledTrial {
  SegmentStack segments;
  std::string label;
  std::string dataset;
  std::string trial_id;
};

/// Per-dataset prototype banks and instruction vectors.
class TaskTexts {
 public:
  TaskTexts(const InstructionCatalog& catalog, const TextEncoder& encoder);

  const PrototypeBank& bank(const std::string& dataset);
  const nn::RowVector& instruction(const std::string& dataset, InstructionLevel level);
  const InstructionCatalog& catalog() const { return catalog_; }

 private:
  InstructionCatalog catalog_;
  TextEncoder encoder_;
  std::map<std::string, PrototypeBank> banks_;
  std::map<std::string, nn::RowVector> instructions_;
};

/// Every label appearing in the catalog targets of the given datasets, in
/// first-seen order (the softmax head's label space).
std::vector<std::string> label_space(const InstructionCatalog& catalog, const std::vector<std::string>& datasets);

/// Tuning state on top of a pretrained checkpoint: encoder-side parameters
/// (tokenizer, transformers, decoder, positional table, mask token, batch
/// statistics) are copied; the instruction head is freshly initialized.
Checkpoint begin_tune(const Checkpoint& pretrained, const InstructConfig& instruct,
                      const TrainConfig& train_config, const InstructionCatalog& catalog,
                      const TextSource& text, const std::vector<std::string>& datasets);
void continue_tune(Checkpoint& checkpoint, const std::vector<LabelledTrial>& train,
                   const std::vector<LabelledTrial>& val, const EmbeddingStore* store,
                   const RunControl& control = {});
Checkpoint run_tune(const std::vector<LabelledTrial>& train, const std::vector<LabelledTrial>& val,
                    const Checkpoint& pretrained, const InstructConfig& instruct,
                    const TrainConfig& train_config, const InstructionCatalog& catalog,
                    const TextSource& text, const EmbeddingStore* store, const RunControl& control = {});

/// Loss curve as CSV: epoch,split,loss,lr.
std::string loss_curve_csv(const std::vector<LossRecord>& curve);

}  // namespace eegalign
