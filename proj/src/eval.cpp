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

#include "eegalign/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

namespace eegalign {

std::size_t ConfusionMatrix::total() const {
  std::size_t n = 0;
  for (const auto& row : counts) {
    for (auto v : row) n += v;
  }
  return n;
}

std::size_t ConfusionMatrix::support(std::size_t c) const {
  std::size_t n = 0;
  for (auto v : counts[c]) n += v;
  return n;
}

std::size_t ConfusionMatrix::predicted(std::size_t c) const {
  std::size_t n = 0;
  for (const auto& row : counts) n += row[c];
  return n;
}

ConfusionMatrix confusion_matrix(const std::vector<std::string>& y_true, const std::vector<std::string>& y_pred,
                                 const std::vector<std::string>& classes) {
  if (y_true.empty()) fail(ErrorKind::invalid_argument, "metrics: empty label set");
  if (y_true.size() != y_pred.size()) {
    fail(ErrorKind::dimension_mismatch, "metrics: " + std::to_string(y_true.size()) + " true labels but " +
                                            std::to_string(y_pred.size()) + " predictions");
  }
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < classes.size(); ++i) {
    if (!index.emplace(classes[i], i).second) fail(ErrorKind::invalid_argument, "metrics: duplicate class " + classes[i]);
  }
  auto lookup = [&](const std::string& label) {
    auto it = index.find(label);
    if (it == index.end()) fail(ErrorKind::missing_label, "metrics: label \"" + label + "\" is not a listed class");
    return it->second;
  };
  ConfusionMatrix cm{classes, std::vector<std::vector<std::size_t>>(classes.size(), std::vector<std::size_t>(classes.size()))};
  for (std::size_t i = 0; i < y_true.size(); ++i) ++cm.counts[lookup(y_true[i])][lookup(y_pred[i])];
  return cm;
}

double balanced_accuracy(const ConfusionMatrix& cm) {
  double sum = 0.0;
  std::size_t present = 0;
  for (std::size_t c = 0; c < cm.classes.size(); ++c) {
    const std::size_t n = cm.support(c);
    if (n == 0) continue;
    sum += static_cast<double>(cm.counts[c][c]) / static_cast<double>(n);
    ++present;
  }
  if (present == 0) fail(ErrorKind::invalid_argument, "metrics: empty confusion matrix");
  return sum / static_cast<double>(present);
}

double balanced_accuracy(const std::vector<std::string>& y_true, const std::vector<std::string>& y_pred,
                         const std::vector<std::string>& classes) {
  return balanced_accuracy(confusion_matrix(y_true, y_pred, classes));
}

Kappa cohens_kappa(const ConfusionMatrix& cm) {
  const double n = static_cast<double>(cm.total());
  if (n == 0.0) fail(ErrorKind::invalid_argument, "metrics: empty confusion matrix");
  double agree = 0.0;
  double chance = 0.0;
  for (std::size_t c = 0; c < cm.classes.size(); ++c) {
    agree += static_cast<double>(cm.counts[c][c]);
    chance += static_cast<double>(cm.support(c)) * static_cast<double>(cm.predicted(c));
  }
  const double p_o = agree / n;
  const double p_e = chance / (n * n);
  if (p_e >= 1.0) return {0.0, true};
  return {(p_o - p_e) / (1.0 - p_e), false};
}

Kappa cohens_kappa(const std::vector<std::string>& y_true, const std::vector<std::string>& y_pred,
                   const std::vector<std::string>& classes) {
  return cohens_kappa(confusion_matrix(y_true, y_pred, classes));
}

EvalReport EvalReport::from_confusion(std::string dataset, InstructionLevel level, ConfusionMatrix cm) {
  EvalReport r;
  r.dataset = std::move(dataset);
  r.level = level;
  r.balanced_accuracy = eegalign::balanced_accuracy(cm);
  const Kappa k = cohens_kappa(cm);
  r.kappa = k.value;
  r.kappa_degenerate = k.degenerate;
  for (std::size_t c = 0; c < cm.classes.size(); ++c) {
    const std::size_t n = cm.support(c);
    r.recalls.push_back(n ? std::optional<double>(static_cast<double>(cm.counts[c][c]) / static_cast<double>(n))
                          : std::nullopt);
  }
  r.n_samples = cm.total();
  r.confusion = std::move(cm);
  return r;
}

std::string reports_json(const std::vector<EvalReport>& reports) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& r : reports) {
    nlohmann::json recalls = nlohmann::json::array();
    for (const auto& v : r.recalls) recalls.push_back(v ? nlohmann::json(*v) : nlohmann::json(nullptr));
    out.push_back({{"dataset", r.dataset},
                   {"level", to_string(r.level)},
                   {"n_samples", r.n_samples},
                   {"balanced_accuracy", r.balanced_accuracy},
                   {"kappa", r.kappa},
                   {"kappa_degenerate", r.kappa_degenerate},
                   {"classes", r.confusion.classes},
                   {"recalls", recalls},
                   {"confusion", r.confusion.counts}});
  }
  return out.dump(2);
}

std::string reports_csv(const std::vector<EvalReport>& reports) {
  std::ostringstream out;
  out.precision(10);
  out << "dataset,level,n_samples,balanced_accuracy,kappa,kappa_degenerate\n";
  for (const auto& r : reports) {
    out << r.dataset << ',' << to_string(r.level) << ',' << r.n_samples << ',' << r.balanced_accuracy << ','
        << r.kappa << ',' << (r.kappa_degenerate ? "true" : "false") << '\n';
  }
  return out.str();
}

std::vector<EvalReport> evaluate_instruction_levels(Model& model, const std::vector<LabelledTrial>& trials,
                                                    TaskTexts& texts, const std::vector<InstructionLevel>& levels) {
  require(!trials.empty(), "eval: no trials");
  require(!levels.empty(), "eval: no instruction levels");
  std::vector<std::string> datasets;
  for (const auto& t : trials) {
    if (std::find(datasets.begin(), datasets.end(), t.dataset) == datasets.end()) datasets.push_back(t.dataset);
  }
  // states do not depend on the instruction; encode once per trial
  std::vector<nn::Matrix> memory;
  memory.reserve(trials.size());
  for (const auto& t : trials) memory.push_back(model.encode(t.segments));

  std::vector<EvalReport> reports;
  for (const auto level : levels) {
    for (const auto& dataset : datasets) {
      const PrototypeBank& bank = texts.bank(dataset);
      const nn::RowVector& e = texts.instruction(dataset, level);
      std::vector<std::string> truth, pred;
      for (std::size_t i = 0; i < trials.size(); ++i) {
        if (trials[i].dataset != dataset) continue;
        if (!bank.index_of(trials[i].label)) {
          fail(ErrorKind::missing_label, "label \"" + trials[i].label + "\" has no prototype in " + dataset);
        }
        const nn::RowVector h =
            model.head.forward(model.qformer.forward(model.film.forward(memory[i], e, nullptr), nullptr), nullptr);
        truth.push_back(trials[i].label);
        pred.push_back(model.predict_from_embedding(h, bank).label);
      }
      reports.push_back(EvalReport::from_confusion(dataset, level, confusion_matrix(truth, pred, bank.classes)));
    }
  }
  return reports;
}

double mean_balanced_accuracy(const std::vector<EvalReport>& reports, InstructionLevel level) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& r : reports) {
    if (r.level != level) continue;
    sum += r.balanced_accuracy;
    ++n;
  }
  require(n > 0, "no report for the requested level");
  return sum / static_cast<double>(n);
}

namespace {

void append_row(std::string& out, const std::string& id, const std::string& label, const std::string& level,
                const nn::RowVector& v) {
  out += id + ',' + label + ',' + level;
  char buf[32];
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    std::snprintf(buf, sizeof buf, ",%.9g", v(i));
    out += buf;
  }
  out += '\n';
}

}  // namespace

std::string embeddings_csv(Model& model, const std::vector<LabelledTrial>& trials, TaskTexts& texts,
                           const std::vector<InstructionLevel>& levels) {
  require(!levels.empty(), "dump: no instruction levels");
  const std::size_t k = model.config().instruct.text_dim;
  std::string out = "id,label,level";
  for (std::size_t i = 0; i < k; ++i) out += ",h" + std::to_string(i);
  out += '\n';
  std::vector<std::string> datasets;
  for (const auto& t : trials) {
    const nn::Matrix m = model.encode(t.segments);
    for (const auto level : levels) {
      const nn::RowVector h = model.head.forward(
          model.qformer.forward(model.film.forward(m, texts.instruction(t.dataset, level), nullptr), nullptr), nullptr);
      append_row(out, t.trial_id, t.label, to_string(level), h);
    }
    if (std::find(datasets.begin(), datasets.end(), t.dataset) == datasets.end()) datasets.push_back(t.dataset);
  }
  for (const auto& d : datasets) {
    const PrototypeBank& bank = texts.bank(d);
    for (std::size_t c = 0; c < bank.size(); ++c) {
      append_row(out, d + "/proto", bank.classes[c], "prototype", bank.prototypes.row(static_cast<Eigen::Index>(c)));
    }
  }
  return out;
}

void dump_embeddings(Model& model, const std::vector<LabelledTrial>& trials, TaskTexts& texts,
                     const std::vector<InstructionLevel>& levels, const std::string& path) {
  const std::string csv = embeddings_csv(model, trials, texts, levels);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::io, "cannot write embeddings to " + path);
  out << csv;
  if (!out) fail(ErrorKind::io, "short write to " + path);
}

}  // namespace eegalign
