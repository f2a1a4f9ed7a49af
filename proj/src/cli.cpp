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

#include "eegalign/cli.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "eegalign/etrial.hpp"
#include "eegalign/eval.hpp"
#include "eegalign/pipeline.hpp"

namespace eegalign::cli {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct ExitEntry {
  ErrorKind kind;
  int code;
  const char* meaning;
};

constexpr ExitEntry kExitTable[] = {
    {ErrorKind::invalid_argument, 2, "invalid argument, config value or output directory in use"},
    {ErrorKind::missing_file, 3, "missing input file (corpus, checkpoint, store, config)"},
    {ErrorKind::dimension_mismatch, 4, "dimension mismatch (channels, text dim, store vs. model)"},
    {ErrorKind::unresolvable_instruction, 5, "instruction or dataset not resolvable in the catalog"},
    {ErrorKind::missing_label, 6, "label without a prototype or class"},
    {ErrorKind::format, 7, "malformed file or config"},
    {ErrorKind::version_mismatch, 8, "checkpoint or file format version mismatch"},
    {ErrorKind::io, 9, "read/write failure"},
    {ErrorKind::numeric, 10, "non-finite values during training"},
};

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::io, "cannot write " + path.string());
  out << text;
  if (!out) fail(ErrorKind::io, "short write to " + path.string());
}

void require_file(const std::string& path, const char* flag) {
  if (path.empty()) fail(ErrorKind::invalid_argument, std::string(flag) + " is required");
  if (!fs::exists(path)) fail(ErrorKind::missing_file, std::string(flag) + ": no such file or directory: " + path);
}

// One per run; artifacts are recorded as they are written.
class Manifest {
 public:
  Manifest(std::string command, const Options& options, const RunConfig& config)
      : out_(options.out), started_(utc_now()) {
    body_["command"] = std::move(command);
    body_["config_path"] = options.config_path;
    body_["config"] = flatten(config);
    body_["seed"] = config.train.seed;
    body_["out"] = options.out;
    body_["threads"] = options.threads;
    json inputs = json::object();
    if (!options.data.empty()) inputs["data"] = options.data;
    if (!options.checkpoint.empty()) inputs["checkpoint"] = options.checkpoint;
    if (!options.store.empty()) inputs["store"] = options.store;
    if (!options.trial.empty()) inputs["trial"] = options.trial;
    if (options.instruction) inputs["instruction"] = *options.instruction;
    body_["inputs"] = inputs;
  }

  fs::path artifact(const std::string& name) {
    artifacts_.push_back(name);
    return out_ / name;
  }
  json& extra() { return body_; }

  void write() {
    body_["started_utc"] = started_;
    body_["finished_utc"] = utc_now();
    body_["artifacts"] = artifacts_;
    write_text(out_ / "run.json", body_.dump(2) + "\n");
  }

 private:
  fs::path out_;
  std::string started_;
  json body_;
  std::vector<std::string> artifacts_;
};

void prepare_out(const Options& options) {
  if (options.out.empty()) fail(ErrorKind::invalid_argument, "--out is required");
  const fs::path out(options.out);
  if (fs::exists(out)) {
    if (!fs::is_directory(out)) fail(ErrorKind::invalid_argument, "--out " + options.out + " is not a directory");
    if (!fs::is_empty(out) && !options.force) {
      fail(ErrorKind::invalid_argument, "output directory " + options.out + " is not empty; pass --force to reuse it");
    }
  }
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) fail(ErrorKind::io, "cannot create " + options.out + ": " + ec.message());
  if (options.threads == 0) fail(ErrorKind::invalid_argument, "--threads must be at least 1");
  Eigen::setNbThreads(static_cast<int>(options.threads));
}

std::vector<RawTrial> load_corpus(const Options& options) {
  require_file(options.data, "--data");
  return etrial::read_corpus(options.data);
}

Checkpoint load_input_checkpoint(const Options& options) {
  require_file(options.checkpoint, "--checkpoint");
  return load_checkpoint(options.checkpoint);
}

Checkpoint load_tuned(const Options& options) {
  Checkpoint ckpt = load_input_checkpoint(options);
  if (ckpt.state.stage != Stage::tune) {
    fail(ErrorKind::invalid_argument, options.checkpoint + " is a pretraining checkpoint; a tuned one is required");
  }
  return ckpt;
}

std::optional<EmbeddingStore> load_store(const Options& options) {
  if (options.store.empty()) return std::nullopt;
  require_file(options.store, "--store");
  return EmbeddingStore::load(options.store);
}

RunControl logging_control(std::ostream& log) {
  RunControl control;
  control.on_record = [&log](const LossRecord& r) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "epoch %zu %s loss %.6g lr %.6g", r.epoch, r.split.c_str(), r.loss, r.lr);
    log << buf << '\n';
  };
  return control;
}

std::vector<std::string> level_names(const std::vector<InstructionLevel>& levels) {
  std::vector<std::string> out;
  for (auto l : levels) out.emplace_back(to_string(l));
  return out;
}

}  // namespace

int exit_code(ErrorKind kind) noexcept {
  for (const auto& e : kExitTable) {
    if (e.kind == kind) return e.code;
  }
  return kExitInternal;
}

std::string exit_code_table() {
  std::ostringstream out;
  out << "Exit codes:\n  0  success\n  1  internal error\n";
  for (const auto& e : kExitTable) {
    out << "  " << e.code << (e.code < 10 ? "  " : " ") << to_string(e.kind) << ": " << e.meaning << '\n';
  }
  out << "Errors are reported on stderr as one JSON line: {\"error\", \"exit_code\", \"message\"}.\n";
  return out.str();
}

std::string help_footer() { return exit_code_table() + "\n" + config_reference(); }

std::vector<InstructionLevel> parse_levels(std::string_view csv) {
  std::vector<InstructionLevel> out;
  std::size_t start = 0;
  while (start <= csv.size()) {
    const std::size_t comma = std::min(csv.find(',', start), csv.size());
    const std::string_view item = csv.substr(start, comma - start);
    if (!item.empty()) {
      const InstructionLevel level = parse_instruction_level(item);
      if (std::find(out.begin(), out.end(), level) == out.end()) out.push_back(level);
    }
    start = comma + 1;
  }
  if (out.empty()) fail(ErrorKind::invalid_argument, "--levels: no instruction level given");
  return out;
}

RunConfig resolve_config(const Options& options) {
  RunConfig config;
  if (!options.config_path.empty()) {
    require_file(options.config_path, "--config");
    config = load_config(options.config_path);
  }
  if (options.seed) config.train.seed = *options.seed;
  config.validate();
  return config;
}

void cmd_synth(const Options& options, std::ostream& log) {
  const RunConfig config = resolve_config(options);
  prepare_out(options);
  Manifest manifest("synth", options, config);
  const auto trials = generate_synthetic(config.synth, config.train.seed);
  etrial::write_corpus(options.out, trials);
  manifest.artifact("manifest.json");
  for (std::size_t i = 0; i < trials.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "data/%06zu.f32", i);
    manifest.artifact(name);
  }
  std::set<std::string> subjects;
  for (const auto& t : trials) subjects.insert(t.subject_id);
  manifest.extra()["counts"] = {{"trials", trials.size()},
                                {"subjects", subjects.size()},
                                {"classes", config.synth.classes.size()}};
  manifest.write();
  log << "wrote " << trials.size() << " trials (" << subjects.size() << " subjects) to " << options.out << '\n';
}

void cmd_pretrain(const Options& options, std::ostream& log) {
  const RunConfig config = resolve_config(options);
  const auto corpus = load_corpus(options);
  std::optional<Checkpoint> resumed;
  if (!options.checkpoint.empty()) {
    resumed = load_input_checkpoint(options);
    if (resumed->state.stage != Stage::pretrain) {
      fail(ErrorKind::invalid_argument, options.checkpoint + " is not a pretraining checkpoint");
    }
  }
  prepare_out(options);
  Manifest manifest("pretrain", options, config);
  const SplitIndices parts = split(corpus, config.split);
  const std::size_t window = resumed ? resumed->model_config.tokenizer.window : config.tokenizer.window;
  const auto train = prepare_unlabelled(corpus, parts.train, config.signal, window);
  const auto val = prepare_unlabelled(corpus, parts.val, config.signal, window);
  Checkpoint ckpt = resumed ? std::move(*resumed) : begin_pretrain(config.model(), config.train);
  continue_pretrain(ckpt, train, val, logging_control(log));
  save_checkpoint(manifest.artifact("pretrain.ckpt").string(), ckpt);
  write_text(manifest.artifact("loss_curve.csv"), loss_curve_csv(ckpt.state.curve));
  manifest.extra()["counts"] = {{"train", train.size()}, {"val", val.size()}, {"epochs", ckpt.state.epoch}};
  manifest.write();
}

void cmd_tune(const Options& options, std::ostream& log) {
  const RunConfig config = resolve_config(options);
  const auto corpus = load_corpus(options);
  Checkpoint input = load_input_checkpoint(options);
  const auto store = load_store(options);
  const EmbeddingStore* store_ptr = store ? &*store : nullptr;
  prepare_out(options);
  Manifest manifest("tune", options, config);

  const SplitIndices parts = split(corpus, config.split);
  const std::size_t window = input.model_config.tokenizer.window;
  const auto train = prepare_labelled(corpus, parts.train, config.signal, window);
  const auto val = prepare_labelled(corpus, parts.val, config.signal, window);

  Checkpoint ckpt = [&]() -> Checkpoint {
    if (input.state.stage == Stage::tune) return std::move(input);
    const TextSource text = store ? TextSource{true, store->encoder_tag(), config.train.seed, store->dim()}
                                  : TextSource{false, "", config.train.seed, config.instruct.text_dim};
    std::vector<std::string> datasets;
    for (const auto& t : train) {
      if (std::find(datasets.begin(), datasets.end(), t.dataset) == datasets.end()) datasets.push_back(t.dataset);
    }
    return begin_tune(input, config.instruct, config.train, InstructionCatalog::standard(), text, datasets);
  }();
  continue_tune(ckpt, train, val, store_ptr, logging_control(log));
  save_checkpoint(manifest.artifact("tune.ckpt").string(), ckpt);
  write_text(manifest.artifact("loss_curve.csv"), loss_curve_csv(ckpt.state.curve));
  manifest.extra()["counts"] = {{"train", train.size()}, {"val", val.size()}, {"epochs", ckpt.state.epoch}};
  manifest.write();
}

void cmd_eval(const Options& options, std::ostream& log) {
  const RunConfig config = resolve_config(options);
  const auto corpus = load_corpus(options);
  Checkpoint ckpt = load_tuned(options);
  const auto store = load_store(options);
  prepare_out(options);
  Manifest manifest("eval", options, config);

  const SplitIndices parts = split(corpus, config.split);
  const auto test = prepare_labelled(corpus, parts.test, config.signal, ckpt.model_config.tokenizer.window);
  TaskTexts texts(InstructionCatalog::parse(ckpt.catalog_json, options.checkpoint),
                  ckpt.text.encoder(store ? &*store : nullptr));
  const auto reports = evaluate_instruction_levels(ckpt.model, test, texts, options.levels);
  write_text(manifest.artifact("reports.json"), reports_json(reports) + "\n");
  write_text(manifest.artifact("reports.csv"), reports_csv(reports));
  manifest.extra()["levels"] = level_names(options.levels);
  manifest.extra()["counts"] = {{"test", test.size()}};
  manifest.write();
  for (const auto& r : reports) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%s %s balanced_accuracy %.4f kappa %.4f n %zu", r.dataset.c_str(),
                  to_string(r.level), r.balanced_accuracy, r.kappa, r.n_samples);
    log << buf << '\n';
  }
}

void cmd_infer(const Options& options, std::ostream& log) {
  const RunConfig config = resolve_config(options);
  if (options.trial.empty()) fail(ErrorKind::invalid_argument, "--trial is required");
  const auto corpus = load_corpus(options);
  Checkpoint ckpt = load_tuned(options);
  const auto store = load_store(options);
  prepare_out(options);
  Manifest manifest("infer", options, config);

  const auto it = std::find_if(corpus.begin(), corpus.end(), [&](const RawTrial& t) { return t.trial_id == options.trial; });
  if (it == corpus.end()) fail(ErrorKind::invalid_argument, "--trial: no trial \"" + options.trial + "\" in " + options.data);
  const InstructionCatalog catalog = InstructionCatalog::parse(ckpt.catalog_json, options.checkpoint);
  const std::string& dataset = it->dataset;
  if (!catalog.contains(dataset)) {
    fail(ErrorKind::unresolvable_instruction, "dataset \"" + dataset + "\" is not in the checkpoint's catalog");
  }

  // The instruction must be one of the dataset's catalog strings.
  std::optional<InstructionLevel> level;
  const std::string text = options.instruction ? *options.instruction
                                               : catalog.instruction(dataset, InstructionLevel::task_and_targets);
  for (auto l : {InstructionLevel::task_and_targets, InstructionLevel::task, InstructionLevel::none}) {
    if (catalog.instruction(dataset, l) == text) {
      level = l;
      break;
    }
  }
  if (!level) {
    fail(ErrorKind::unresolvable_instruction,
         "instruction \"" + text + "\" is not a catalog instruction for dataset " + dataset);
  }

  TaskTexts texts(catalog, ckpt.text.encoder(store ? &*store : nullptr));
  const SegmentStack segments = prepare_trial(*it, config.signal, ckpt.model_config.tokenizer.window);
  const Prediction p = ckpt.model.predict(segments, texts.instruction(dataset, *level), texts.bank(dataset));
  const PrototypeBank& bank = texts.bank(dataset);
  const char* score_name = ckpt.model.classifier ? "logit" : "cosine";

  json scores = json::object();
  log << "trial " << it->trial_id << " dataset " << dataset << " level " << to_string(*level) << '\n';
  log << "predicted " << p.label << '\n';
  for (std::size_t c = 0; c < bank.size(); ++c) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "%s %s %.6f", score_name, bank.classes[c].c_str(), p.scores[c]);
    log << buf << '\n';
    scores[bank.classes[c]] = p.scores[c];
  }
  const json prediction = {{"trial", it->trial_id}, {"dataset", dataset},       {"instruction", text},
                           {"level", to_string(*level)}, {"predicted", p.label}, {"score", score_name},
                           {"scores", scores}};
  write_text(manifest.artifact("prediction.json"), prediction.dump(2) + "\n");
  manifest.write();
}

void cmd_dump(const Options& options, std::ostream& log) {
  const RunConfig config = resolve_config(options);
  const auto corpus = load_corpus(options);
  Checkpoint ckpt = load_tuned(options);
  const auto store = load_store(options);
  prepare_out(options);
  Manifest manifest("dump", options, config);

  const SplitIndices parts = split(corpus, config.split);
  const auto test = prepare_labelled(corpus, parts.test, config.signal, ckpt.model_config.tokenizer.window);
  TaskTexts texts(InstructionCatalog::parse(ckpt.catalog_json, options.checkpoint),
                  ckpt.text.encoder(store ? &*store : nullptr));
  dump_embeddings(ckpt.model, test, texts, options.levels, manifest.artifact("embeddings.csv").string());
  manifest.extra()["levels"] = level_names(options.levels);
  manifest.extra()["counts"] = {{"test", test.size()}};
  manifest.write();
  log << "wrote embeddings of " << test.size() << " trials to " << (fs::path(options.out) / "embeddings.csv").string()
      << '\n';
}

std::string error_line(std::string_view kind, int code, std::string_view message) {
  return json{{"error", kind}, {"exit_code", code}, {"message", message}}.dump();
}

int run(std::string_view command, const Options& options, std::ostream& log, std::ostream& err) {
  try {
    if (command == "synth") cmd_synth(options, log);
    else if (command == "pretrain") cmd_pretrain(options, log);
    else if (command == "tune") cmd_tune(options, log);
    else if (command == "eval") cmd_eval(options, log);
    else if (command == "infer") cmd_infer(options, log);
    else if (command == "dump") cmd_dump(options, log);
    else fail(ErrorKind::invalid_argument, "unknown command \"" + std::string(command) + "\"");
    return kExitOk;
  } catch (const Error& e) {
    const int code = exit_code(e.kind());
    err << error_line(to_string(e.kind()), code, e.what()) << std::endl;
    return code;
  } catch (const std::exception& e) {
    err << error_line("internal", kExitInternal, e.what()) << std::endl;
    return kExitInternal;
  }
}

}  // namespace eegalign::cli
