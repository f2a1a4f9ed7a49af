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

#include "eegalign/pipeline.hpp"

namespace eegalign {

std::vector<SegmentStack> prepare_unlabelled(const std::vector<RawTrial>& corpus,
                                             const std::vector<std::size_t>& indices,
                                             const PreprocessOptions& options, std::size_t window) {
  std::vector<SegmentStack> out;
  out.reserve(indices.size());
  for (auto i : indices) out.push_back(prepare_trial(corpus.at(i), options, window));
  return out;
}

std::vector<LabelledTrial> prepare_labelled(const std::vector<RawTrial>& corpus,
                                            const std::vector<std::size_t>& indices,
                                            const PreprocessOptions& options, std::size_t window) {
  std::vector<LabelledTrial> out;
  out.reserve(indices.size());
  for (auto i : indices) {
    const RawTrial& t = corpus.at(i);
    if (!t.label) fail(ErrorKind::missing_label, "trial " + t.trial_id + " has no label");
    out.push_back({prepare_trial(t, options, window), *t.label, t.dataset, t.trial_id});
  }
  return out;
}

ExperimentOutcome run_experiment(const std::vector<RawTrial>& corpus, const RunConfig& config,
                                 const std::vector<InstructionLevel>& levels, const InstructionCatalog& catalog) {
  config.validate();
  const SplitIndices parts = split(corpus, config.split);
  const std::size_t window = config.tokenizer.window;
  const auto train = prepare_labelled(corpus, parts.train, config.signal, window);
  const auto val = prepare_labelled(corpus, parts.val, config.signal, window);
  const auto test = prepare_labelled(corpus, parts.test, config.signal, window);

  std::vector<SegmentStack> pre_train, pre_val;
  for (const auto& t : train) pre_train.push_back(t.segments);
  for (const auto& t : val) pre_val.push_back(t.segments);

  ExperimentOutcome out;
  out.pretrained = run_pretrain(pre_train, pre_val, config.model(), config.train);
  const TextSource text{false, "", config.train.seed, config.instruct.text_dim};
  out.tuned = run_tune(train, val, out.pretrained, config.instruct, config.train, catalog, text, nullptr);
  TaskTexts texts(catalog, text.encoder(nullptr));
  out.reports = evaluate_instruction_levels(out.tuned.model, test, texts, levels);
  return out;
}

}  // namespace eegalign
