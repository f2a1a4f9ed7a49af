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
#include <vector>

#include "eegalign/config.hpp"
#include "eegalign/data.hpp"
#include "eegalign/eval.hpp"
#include "eegalign/train.hpp"

// Glue shared by the command-line tool and the end-to-end tests.
namespace eegalign {

/// Preprocessed segments of the selected trials, in index order.
std::vector<SegmentStack> prepare_unlabelled(const std::vector<RawTrial>& corpus,
                                             const std::vector<std::size_t>& indices,
                                             const PreprocessOptions& options, std::size_t window);

/// As above, keeping label, dataset and id; unlabelled trials are an error.
std::vector<LabelledTrial> prepare_labelled(const std::vector<RawTrial>& corpus,
                                            const std::vector<std::size_t>& indices,
                                            const PreprocessOptions& options, std::size_t window);

struct ExperimentOutcome {
  Checkpoint pretrained;
  Checkpoint tuned;
  std::vector<EvalReport> reports;  // test split, one per (dataset, level)
};

/// Split, pretrain on train/val, tune on train/val, evaluate on test.
ExperimentOutcome run_experiment(const std::vector<RawTrial>& corpus, const RunConfig& config,
                                 const std::vector<InstructionLevel>& levels,
                                 const InstructionCatalog& catalog = InstructionCatalog::standard());

}  // namespace eegalign
