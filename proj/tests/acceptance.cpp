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

// Acceptance runner: one PASS/FAIL line per criterion, nonzero exit if any
// fails. Seeds, budgets and tolerances are fixed here, not configurable.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "eegalign/encoder.hpp"
#include "eegalign/eval.hpp"
#include "eegalign/fft.hpp"
#include "eegalign/pipeline.hpp"
#include "eegalign/signal.hpp"
#include "support.hpp"

using namespace eegalign;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

int failures = 0;

void verdict(int id, const char* name, bool ok, const std::string& detail) {
  std::printf("%s criterion %d (%s): %s\n", ok ? "PASS" : "FAIL", id, name, detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// ---------------------------------------------------------------- 1

template <typename T>
double worst_round_trip(std::uint64_t seed) {
  double worst = 0.0;
  Rng sizes(seed);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + sizes.index(1024);
    std::vector<T> x(n);
    Rng rng(derive_seed(seed, trial));
    for (auto& v : x) v = static_cast<T>(rng.normal());
    const auto back = fft::irfft<T>(fft::rfft<T>(x), n);
    for (std::size_t i = 0; i < n; ++i) worst = std::max(worst, std::abs(double(back[i]) - double(x[i])));
  }
  return worst;
}

template <typename T>
BasicSegment<T> segment_of(const std::function<double(std::size_t c, std::size_t i)>& f) {
  BasicSegment<T> s;
  s.data.resize(kMontageChannels, kWindowSamples);
  for (Eigen::Index c = 0; c < s.data.rows(); ++c) {
    for (Eigen::Index i = 0; i < s.data.cols(); ++i) s.data(c, i) = static_cast<T>(f(c, i));
  }
  return s;
}

struct SpectralCheck {
  double min_attenuation_db = 1e300;
  double max_oob_rel = 0.0;
};

// Splits each channel's spectrum into in-band and out-of-band bins and
// compares them before and after masking.
template <typename T>
void measure(const BasicSegment<T>& in, const BandMask& band, SpectralCheck& out) {
  const auto masked = spectral_mask(in, band);
  const std::size_t n = in.samples();
  for (Eigen::Index c = 0; c < in.data.rows(); ++c) {
    std::vector<double> a(n), b(n);
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = in.data(c, i);
      b[i] = masked.data(c, i);
    }
    const auto A = fft::rfft<double>(a);
    const auto B = fft::rfft<double>(b);
    double in_before = 0, in_after = 0, oob_energy = 0, oob_diff = 0;
    for (std::size_t k = 0; k < A.size(); ++k) {
      const double f = fft::bin_frequency(k, n, kSampleRate);
      if (f >= band.f_min && f <= band.f_max) {
        in_before += std::norm(A[k]);
        in_after += std::norm(B[k]);
      } else {
        oob_energy += std::norm(A[k]);
        oob_diff += std::norm(B[k] - A[k]);
      }
    }
    if (in_before > 1e-12 * (in_before + oob_energy)) {
      const double db = -10.0 * std::log10(std::max(in_after / in_before, 1e-300));
      out.min_attenuation_db = std::min(out.min_attenuation_db, db);
    }
    if (oob_energy > 0) out.max_oob_rel = std::max(out.max_oob_rel, std::sqrt(oob_diff / oob_energy));
  }
}

template <typename T>
SpectralCheck spectral_suite() {
  SpectralCheck check;
  Rng rng(101);
  for (int trial = 0; trial < 20; ++trial) {
    const BandMask band = sample_mask_band(rng);
    // tones on exact bins inside and outside the band
    const double inside = 2.0 * std::ceil(band.f_min / 2.0);
    const double outside = inside + 20.0 <= 98.0 ? inside + 20.0 : 4.0;
    const auto tone = segment_of<T>([&](std::size_t c, std::size_t i) {
      const double t = double(i) / kSampleRate;
      return (1.0 + 0.01 * c) * std::sin(2 * M_PI * inside * t) + 0.5 * std::cos(2 * M_PI * outside * t + 0.1 * c);
    });
    measure(tone, band, check);
    Rng noise(derive_seed(102, trial));
    measure(segment_of<T>([&](std::size_t, std::size_t) { return noise.normal(); }), band, check);
  }
  return check;
}

void criterion_1() {
  const auto t0 = Clock::now();
  const double rt_f = worst_round_trip<float>(1);
  const double rt_d = worst_round_trip<double>(2);
  const SpectralCheck sf = spectral_suite<float>();
  const SpectralCheck sd = spectral_suite<double>();
  const double secs = seconds_since(t0);
  const double atten = std::min(sf.min_attenuation_db, sd.min_attenuation_db);
  const double oob = std::max(sf.max_oob_rel, sd.max_oob_rel);
  const bool ok = rt_f <= 1e-6 && rt_d <= 1e-10 && atten >= 60.0 && oob <= 1e-6 && secs < 5.0;
  verdict(1, "FFT/spectral", ok,
          fmt("round trip f32 %.3g (<=1e-6) f64 %.3g (<=1e-10); attenuation >= %.1f dB (>=60); "
              "out-of-band rel %.3g (<=1e-6); %.2f s (<5)",
              rt_f, rt_d, atten, oob, secs));
}

// ---------------------------------------------------------------- 2

void criterion_2() {
  const auto t0 = Clock::now();
  EncoderConfig c;
  c.d = 16;
  c.heads = 2;
  c.layers = 2;
  c.dropout = 0.0;
  c.max_tokens = 64;
  c.decoder_hidden = 16;
  double worst = 0.0;
  std::size_t checks = 0;
  Rng rng(202);
  for (int seq = 0; seq < 100; ++seq) {
    DualEncoder enc(c);
    Rng init(derive_seed(203, seq));
    enc.init(init);
    const std::size_t n = 2 + rng.index(63);
    const nn::Matrix tokens = testing::random_matrix(n, c.d, derive_seed(204, seq));
    const nn::Matrix base = enc.causal_forward(tokens, nullptr, nullptr);
    for (int k = 0; k < 4; ++k) {
      const std::size_t p = 1 + rng.index(n - 1);  // rows >= p are perturbed
      nn::Matrix moved = tokens;
      moved.bottomRows(n - p) += testing::random_matrix(n - p, c.d, derive_seed(205, seq, k), 3.0);
      const nn::Matrix out = enc.causal_forward(moved, nullptr, nullptr);
      worst = std::max(worst, (out.topRows(p) - base.topRows(p)).cwiseAbs().maxCoeff());
      ++checks;
    }
  }
  const double secs = seconds_since(t0);
  verdict(2, "causality", worst <= 1e-12 && secs < 30.0,
          fmt("100 sequences (N <= 64), %zu perturbations, max prefix change %.3g (<=1e-12); %.2f s (<30)", checks,
              worst, secs));
}

// ---------------------------------------------------------------- 3

void criterion_3() {
  const auto t0 = Clock::now();
  struct Case {
    const char* name;
    GradCheckResult r;
  };
  std::vector<Case> cases = {
      {"loss_ctx", testing::check_pretrain_gradients({false, true, false}, 301, 20)},
      {"loss_cau", testing::check_pretrain_gradients({false, false, true}, 302, 20)},
      {"pretrain_loss", testing::check_pretrain_gradients({true, true, true}, 303, 20)},
      {"alignment_loss", testing::check_alignment_gradients(304, 20)},
  };
  const double secs = seconds_since(t0);
  bool ok = secs < 120.0;
  std::string detail;
  for (const auto& c : cases) {
    ok = ok && c.r.max_rel_error < 1e-3 && c.r.checked > 0;
    detail += fmt("%s %.3g over %zu coords (worst %s); ", c.name, c.r.max_rel_error, c.r.checked, c.r.worst.c_str());
  }
  verdict(3, "gradients", ok, detail + fmt("bound 1e-3; %.1f s (<120)", secs));
}

// ---------------------------------------------------------------- 4

// Counting straight from the label lists, no confusion matrix involved.
double brute_bacc(const std::vector<std::string>& t, const std::vector<std::string>& p,
                  const std::vector<std::string>& classes) {
  double sum = 0.0;
  std::size_t present = 0;
  for (const auto& c : classes) {
    std::size_t support = 0, hits = 0;
    for (std::size_t i = 0; i < t.size(); ++i) {
      if (t[i] != c) continue;
      ++support;
      hits += p[i] == c;
    }
    if (support == 0) continue;
    sum += double(hits) / double(support);
    ++present;
  }
  return sum / double(present);
}

double brute_kappa(const std::vector<std::string>& t, const std::vector<std::string>& p,
                   const std::vector<std::string>& classes) {
  const double n = double(t.size());
  double agree = 0.0, chance = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) agree += t[i] == p[i];
  for (const auto& c : classes) {
    const auto nt = std::count(t.begin(), t.end(), c);
    const auto np = std::count(p.begin(), p.end(), c);
    chance += double(nt) * double(np);
  }
  const double pe = chance / (n * n);
  return pe >= 1.0 ? 0.0 : (agree / n - pe) / (1.0 - pe);
}

void criterion_4() {
  Rng rng(404);
  std::size_t mismatches = 0;
  double identity_worst = 0.0;
  for (int set = 0; set < 1000; ++set) {
    const std::size_t k = 2 + rng.index(6);
    const std::size_t n = 1 + rng.index(200);
    std::vector<std::string> classes;
    for (std::size_t c = 0; c < k; ++c) classes.push_back("c" + std::to_string(c));
    std::vector<std::string> t(n), p(n);
    for (std::size_t i = 0; i < n; ++i) {
      t[i] = classes[rng.index(k)];
      p[i] = rng.uniform() < 0.5 ? t[i] : classes[rng.index(k)];
    }
    mismatches += balanced_accuracy(t, p, classes) != brute_bacc(t, p, classes);
    mismatches += cohens_kappa(t, p, classes).value != brute_kappa(t, p, classes);

    // balanced binary: equal support per class
    const std::size_t half = 1 + rng.index(100);
    std::vector<std::string> bt, bp;
    for (std::size_t i = 0; i < 2 * half; ++i) {
      bt.push_back(i < half ? "a" : "b");
      bp.push_back(rng.uniform() < 0.7 ? bt.back() : (bt.back() == "a" ? "b" : "a"));
    }
    const double b = balanced_accuracy(bt, bp, {"a", "b"});
    identity_worst = std::max(identity_worst, std::abs(cohens_kappa(bt, bp, {"a", "b"}).value - (2 * b - 1)));
  }
  // Cho2017 as a balanced binary confusion with per-class recall 0.8011
  ConfusionMatrix cm{{"left", "right"}, {{8011, 1989}, {1989, 8011}}};
  const double bacc = balanced_accuracy(cm);
  const double kappa = cohens_kappa(cm).value;
  const bool cho = std::abs(bacc - 0.8011) <= 0.0005 && std::abs(kappa - 0.6022) <= 0.0005;
  verdict(4, "metric oracles", mismatches == 0 && identity_worst <= 1e-12 && cho,
          fmt("1000 label sets, %zu exact mismatches; max |kappa - (2 BAcc - 1)| %.3g (<=1e-12); "
              "Cho2017 BAcc %.4f kappa %.4f vs 0.8011/0.6022 (+-0.0005)",
              mismatches, identity_worst, bacc, kappa));
}

// ---------------------------------------------------------------- 5, 6, 7

const std::vector<InstructionLevel> kLevels = {InstructionLevel::none, InstructionLevel::task,
                                               InstructionLevel::task_and_targets};

struct Scores {
  double bacc = 0.0;
  double kappa = 0.0;
  double none = 0.0;
  double task = 0.0;
};

// Per-level BAcc is averaged across datasets; bacc/kappa are the
// task_and_targets (default inference instruction) figures.
Scores run_seed(const std::vector<RawTrial>& corpus, const RunConfig& config) {
  const auto out = run_experiment(corpus, config, kLevels);
  Scores s;
  s.none = mean_balanced_accuracy(out.reports, InstructionLevel::none);
  s.task = mean_balanced_accuracy(out.reports, InstructionLevel::task);
  s.bacc = mean_balanced_accuracy(out.reports, InstructionLevel::task_and_targets);
  double k = 0.0;
  std::size_t n = 0;
  for (const auto& r : out.reports) {
    if (r.level != InstructionLevel::task_and_targets) continue;
    k += r.kappa;
    ++n;
  }
  s.kappa = k / double(n);
  return s;
}

std::vector<RawTrial> motor_corpus(const RunConfig& config, std::uint64_t seed) {
  return generate_synthetic(config.synth, seed);
}

std::vector<double> criterion_5() {
  const auto t0 = Clock::now();
  std::vector<double> bacc, kappa;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const RunConfig config = testing::end_to_end_config(seed);
    const Scores s = run_seed(motor_corpus(config, seed), config);
    std::printf("  e2e seed %llu: BAcc %.4f kappa %.4f\n", (unsigned long long)seed, s.bacc, s.kappa);
    bacc.push_back(s.bacc);
    kappa.push_back(s.kappa);
  }
  const double secs = seconds_since(t0);
  const double mb = median(bacc), mk = median(kappa);
  verdict(5, "end-to-end synthetic", mb >= 0.90 && mk >= 0.85 && secs <= 900.0,
          fmt("median over seeds 1-5: BAcc %.4f (>=0.90) kappa %.4f (>=0.85); %.0f s (<=900)", mb, mk, secs));
  return bacc;
}

void criterion_6() {
  std::vector<double> tt_none, tt_task;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const RunConfig config = testing::end_to_end_config(seed);
    SynthSpec mi = config.synth;
    mi.trials_per_subject_per_class = 5;
    SynthSpec ssvep = mi;
    ssvep.dataset = "OpenBMI-SSVEP";
    ssvep.classes = {{"12.0", 12.0, "Oz"}, {"08.6", 8.6, "O1"}, {"06.6", 6.6, "O2"}, {"05.4", 5.4, "POz"}};
    auto corpus = generate_synthetic(mi, seed);
    const auto more = generate_synthetic(ssvep, seed);
    corpus.insert(corpus.end(), more.begin(), more.end());
    const Scores s = run_seed(corpus, config);
    std::printf("  mixed seed %llu: none %.4f task %.4f task_and_targets %.4f\n", (unsigned long long)seed, s.none,
                s.task, s.bacc);
    tt_none.push_back(s.bacc - s.none);
    tt_task.push_back(s.bacc - s.task);
  }
  const double a = median(tt_none), b = median(tt_task);
  verdict(6, "instruction sensitivity", a >= 0.0 && b >= -0.01,
          fmt("median BAcc(task_and_targets) - BAcc(none) %+.4f (>=0); - BAcc(task) %+.4f (>=-0.01)", a, b));
}

void criterion_7(const std::vector<double>& all_on) {
  const double on = median(all_on);
  struct Off {
    const char* name;
    PretrainSwitches switches;
  };
  const std::vector<Off> offs = {{"frequency off", {false, true, true}},
                                 {"random off", {true, false, true}},
                                 {"causal off", {true, true, false}}};
  bool ok = true;
  std::string detail = fmt("all-on median %.4f; ", on);
  for (const auto& off : offs) {
    std::vector<double> bacc;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      RunConfig config = testing::end_to_end_config(seed);
      config.train.switches = off.switches;
      const Scores s = run_seed(motor_corpus(config, seed), config);
      std::printf("  ablation %s seed %llu: BAcc %.4f\n", off.name, (unsigned long long)seed, s.bacc);
      bacc.push_back(s.bacc);
    }
    const double m = median(bacc);
    ok = ok && on >= m - 0.03;
    detail += fmt("%s %.4f; ", off.name, m);
  }
  verdict(7, "ablation harness", ok, detail + "need all-on >= each - 0.03");
}

// ---------------------------------------------------------------- 8

bool same_curve(const std::vector<LossRecord>& a, const std::vector<LossRecord>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].epoch != b[i].epoch || a[i].split != b[i].split || a[i].loss != b[i].loss || a[i].lr != b[i].lr) {
      return false;
    }
  }
  return true;
}

bool same_params(Model& a, Model& b) {
  const auto pa = collect_params(a), pb = collect_params(b);
  if (pa.size() != pb.size()) return false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    if (pa[i].first != pb[i].first || !(pa[i].second->value == pb[i].second->value)) return false;
  }
  return true;
}

void criterion_8() {
  RunConfig config = testing::end_to_end_config(8);
  config.synth.subjects = 4;
  config.synth.trials_per_subject_per_class = 4;
  config.synth.duration_s = 1.0;
  config.train.pretrain_epochs = 4;
  config.train.tune_epochs = 4;
  const auto corpus = generate_synthetic(config.synth, 8);
  std::vector<std::size_t> all(corpus.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  const auto trials = prepare_labelled(corpus, all, config.signal, config.tokenizer.window);
  std::vector<SegmentStack> segments;
  for (const auto& t : trials) segments.push_back(t.segments);
  const TextSource text{false, "", 8, config.instruct.text_dim};
  const auto& catalog = InstructionCatalog::standard();

  auto pretrain = [&](const RunControl& control = {}) {
    return run_pretrain(segments, {}, config.model(), config.train, control);
  };
  auto tune = [&](const Checkpoint& pre, const RunControl& control = {}) {
    return run_tune(trials, {}, pre, config.instruct, config.train, catalog, text, nullptr, control);
  };

  // fixed seed, two independent runs
  Checkpoint pre_a = pretrain(), pre_b = pretrain();
  Checkpoint tune_a = tune(pre_a), tune_b = tune(pre_b);
  const bool repeat = same_curve(pre_a.state.curve, pre_b.state.curve) &&
                      same_curve(tune_a.state.curve, tune_b.state.curve) && same_params(tune_a.model, tune_b.model);

  // save / load / forward
  const fs::path dir = fs::path(EEGALIGN_TEST_TMP) / "acceptance";
  fs::create_directories(dir);
  save_checkpoint((dir / "tuned.ckpt").string(), tune_a);
  Checkpoint loaded = load_checkpoint((dir / "tuned.ckpt").string());
  TaskTexts texts(catalog, text.encoder(nullptr));
  bool forward = same_params(tune_a.model, loaded.model);
  for (const auto& t : trials) {
    const auto& e = texts.instruction(t.dataset, InstructionLevel::task_and_targets);
    forward = forward && tune_a.model.embed(t.segments, e) == loaded.model.embed(t.segments, e);
  }

  // stop halfway, reload, continue: identical trajectory and schedule
  RunControl stop;
  stop.stop_after_epoch = 2;
  save_checkpoint((dir / "pre_half.ckpt").string(), pretrain(stop));
  Checkpoint pre_r = load_checkpoint((dir / "pre_half.ckpt").string());
  continue_pretrain(pre_r, segments, {});
  save_checkpoint((dir / "tune_half.ckpt").string(), tune(pre_a, stop));
  Checkpoint tune_r = load_checkpoint((dir / "tune_half.ckpt").string());
  continue_tune(tune_r, trials, {}, nullptr);
  bool resume = same_curve(pre_r.state.curve, pre_a.state.curve) &&
                same_curve(tune_r.state.curve, tune_a.state.curve) && same_params(pre_r.model, pre_a.model) &&
                same_params(tune_r.model, tune_a.model) && pre_r.optimizer.steps() == pre_a.optimizer.steps() &&
                tune_r.optimizer.steps() == tune_a.optimizer.steps();
  // the lr recorded per epoch is the schedule value of that epoch's last update
  const std::size_t per_epoch = pre_a.state.total_steps / config.train.pretrain_epochs;
  for (const auto& r : pre_r.state.curve) {
    resume = resume && r.lr == schedule_lr(config.train, r.epoch * per_epoch - 1, pre_r.state.total_steps);
  }
  verdict(8, "determinism & checkpointing", repeat && forward && resume,
          fmt("repeat runs bitwise %s; save/load/forward bitwise %s; resume trajectory and schedule %s",
              repeat ? "yes" : "no", forward ? "yes" : "no", resume ? "yes" : "no"));
}

}  // namespace

int main() {
  const auto t0 = Clock::now();
  auto guarded = [](int id, const std::function<void()>& body) {
    try {
      body();
    } catch (const std::exception& e) {
      verdict(id, "exception", false, e.what());
    }
  };
  guarded(1, criterion_1);
  guarded(2, criterion_2);
  guarded(3, criterion_3);
  guarded(4, criterion_4);
  std::vector<double> all_on;
  guarded(5, [&] { all_on = criterion_5(); });
  guarded(6, criterion_6);
  guarded(7, [&] {
    if (all_on.size() != 5) throw std::runtime_error("criterion 5 runs unavailable");
    criterion_7(all_on);
  });
  guarded(8, criterion_8);
  std::printf("acceptance: %d of 8 failed, %.0f s total\n", failures, seconds_since(t0));
  return failures == 0 ? 0 : 1;
}
