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
#include <vector>

#include "eegalign/train.hpp"

namespace eegalign {

/// counts[t][p]: trials of true class t predicted as p.
struct ConfusionMatrix {
  std::vector<std::string> classes;
  std::vector<std::vector<std::size_t>> counts;

  std::size_t total() const;
  std::size_t support(std::size_t c) const;    // row sum
  std::size_t predicted(std::size_t c) const;  // column sum
};

ConfusionMatrix confusion_matrix(const std::vector<std::string>& y_true, const std::vector<std::string>& y_pred,
                                 const std::vector<std::string>& classes);

/// Mean recall over classes with nonzero support.
double balanced_accuracy(const ConfusionMatrix& cm);
double balanced_accuracy(const std::vector<std::string>& y_true, const std::vector<std::string>& y_pred,
                         const std::vector<std::string>& classes);

struct Kappa {
  double value = 0.0;
  /// Chance agreement was 1 (a single class everywhere); value is then 0.
  bool degenerate = false;
};

Kappa cohens_kappa(const ConfusionMatrix& cm);
Kappa cohens_kappa(const std::vector<std::string>& y_true, const std::vector<std::string>& y_pred,
                   const std::vector<std::string>& classes);

struct EvalReport {
  std::string dataset;
  InstructionLevel level = InstructionLevel::none;
  double balanced_accuracy = 0.0;
  double kappa = 0.0;
  bool kappa_degenerate = false;
  std::vector<std::optional<double>> recalls;  // per class; empty for zero support
  ConfusionMatrix confusion;
  std::size_t n_samples = 0;

  static EvalReport from_confusion(std::string dataset, InstructionLevel level, ConfusionMatrix cm);
};

std::string reports_json(const std::vector<EvalReport>& reports);
/// dataset,level,n_samples,balanced_accuracy,kappa,kappa_degenerate
std::string reports_csv(const std::vector<EvalReport>& reports);

/// Predicts every trial once per level; one report per (dataset, level), in
/// level-major order. Prototypes never change with the level.
std::vector<EvalReport> evaluate_instruction_levels(Model& model, const std::vector<LabelledTrial>& trials,
                                                    TaskTexts& texts, const std::vector<InstructionLevel>& levels);

/// Mean balanced accuracy over the reports of one level.
double mean_balanced_accuracy(const std::vector<EvalReport>& reports, InstructionLevel level);

/// CSV: id,label,level,h0..h{k-1}; one row per trial and level, then one
/// row per prototype (level "prototype", id "<dataset>/proto").
void dump_embeddings(Model& model, const std::vector<LabelledTrial>& trials, TaskTexts& texts,
                     const std::vector<InstructionLevel>& levels, const std::string& path);
std::string embeddings_csv(Model& model, const std::vector<LabelledTrial>& trials, TaskTexts& texts,
                           const std::vector<InstructionLevel>& levels);

}  // namespace eegalign
