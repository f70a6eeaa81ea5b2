// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The mqpool Authors
//
// One PASS/FAIL line per acceptance criterion. Exit status is nonzero when
// any criterion fails.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "mqpool/analysis.hpp"
#include "mqpool/experiments.hpp"
#include "mqpool/gradcheck.hpp"
#include "mqpool/model.hpp"
#include "mqpool/pooling.hpp"
#include "mqpool/serialization.hpp"

using namespace mqpool;
namespace fs = std::filesystem;

namespace {

// Pinned tolerances.
constexpr double kGradTol = 1e-4;
constexpr double kGradBudgetSeconds = 120.0;
constexpr std::size_t kMaskTrials = 1000;
constexpr double kReductionTol = 1e-9;
constexpr double kFocalTol = 1e-12;
constexpr double kRankingMargin = 0.03;
constexpr double kRankingBudgetSeconds = 600.0;
constexpr double kConcentrationMax = 0.25;
constexpr double kCueRatioMin = 2.0;
constexpr double kBackgroundRatioMax = 1.0;
constexpr double kProportionalTol = 1e-9;
constexpr double kShuffledMax = 0.1;

int failures = 0;

void report(int id, const char* name, bool pass, const std::string& detail) {
  std::printf("[%s] criterion %d %s: %s\n", pass ? "PASS" : "FAIL", id, name, detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Tensor random_normal(Tensor::Dims dims, Rng& rng) {
  Tensor t(std::move(dims));
  for (double& v : t.data()) v = rng.normal();
  return t;
}

Tensor random_mask(std::size_t B, std::size_t T, Rng& rng) {
  Tensor m({B, T});
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t t = 0; t < T; ++t) m(b, t) = rng.uniform() < 0.6 ? 1.0 : 0.0;
    m(b, rng.below(T)) = 1.0;
  }
  return m;
}

void criterion_gradients() {
  const auto t0 = std::chrono::steady_clock::now();
  GradSuiteOptions o;
  o.seeds = 10;
  o.tolerance = kGradTol;
  const auto cases = run_gradient_suite(o);
  const double secs = seconds_since(t0);
  double worst = 0.0;
  std::size_t failed = 0;
  for (const auto& c : cases) {
    worst = std::max(worst, c.report.max_rel_error());
    if (!c.report.pass()) ++failed;
  }
  report(1, "gradient suite", failed == 0 && secs < kGradBudgetSeconds,
         std::to_string(cases.size()) + " cases over 10 seeds, max rel err " +
             fmt("%.3e", worst) + " (< 1e-4), " + std::to_string(failed) + " failing, " +
             fmt("%.2f", secs) + " s (< 120 s)");
}

void criterion_masking() {
  Rng rng(2026, "acceptance-mask");
  std::size_t violations = 0, checks = 0;
  ModelShape shape;
  shape.audio_input = 4;
  shape.text_input = 3;
  shape.feature_size = 8;
  const MultimodalModel model = make_model(shape, "MQMHA_2_2", "AS", 1);
  for (std::size_t trial = 0; trial < kMaskTrials; ++trial) {
    const std::size_t B = 1 + rng.below(3), T = 2 + rng.below(8), K = 8;
    SequenceBatch a{random_normal({B, T, K}, rng), random_mask(B, T, rng)};
    SequenceBatch b = a;
    for (std::size_t r = 0; r < B; ++r)
      for (std::size_t t = 0; t < T; ++t)
        if (a.mask(r, t) == 0.0)
          for (std::size_t k = 0; k < K; ++k) b.features(r, t, k) = 1e4 * rng.normal();
    std::vector<PoolingConfig> cfgs;
    for (auto kind : {PoolingKind::Max, PoolingKind::Average, PoolingKind::Statistics}) {
      cfgs.push_back(static_config(kind, K));
    }
    for (const auto& name : {"AS", "SA", "MHA", "MQMHA_2_2", "MQMHA_2_4"}) {
      PoolingConfig c = variant_config(name, K, 4, rng.next_u64());
      for (auto& w : c.scorer)
        for (double& v : w.data()) v = rng.normal();
      cfgs.push_back(std::move(c));
    }
    for (const auto& c : cfgs) {
      const auto x = pool(a, c);
      const auto y = pool(b, c);
      ++checks;
      if (!(x.embedding == y.embedding) || (x.attention && !(*x.attention == *y.attention))) {
        ++violations;
      }
    }
    SequenceBatch audio{random_normal({B, T, 4}, rng), a.mask};
    SequenceBatch audio2 = audio;
    for (std::size_t r = 0; r < B; ++r)
      for (std::size_t t = 0; t < T; ++t)
        if (a.mask(r, t) == 0.0)
          for (std::size_t k = 0; k < 4; ++k) audio2.features(r, t, k) = 1e4 * rng.normal();
    SequenceBatch text{random_normal({B, 3, 3}, rng), Tensor::full({B, 3}, 1.0)};
    ++checks;
    const auto l1 = forward(audio, text, model.head, model.audio_encoder, model.text_encoder);
    const auto l2 = forward(audio2, text, model.head, model.audio_encoder, model.text_encoder);
    if (!(l1.logits == l2.logits)) ++violations;
  }
  report(2, "masking invariants", violations == 0,
         std::to_string(kMaskTrials) + " trials, " + std::to_string(checks) +
             " operator outputs compared bitwise, " + std::to_string(violations) + " differ");
}

void criterion_reductions() {
  Rng rng(7, "acceptance-reduce");
  // (a) uniform attention versus per-head statistics pooling.
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const char* name = trial % 3 == 0 ? "AS" : trial % 3 == 1 ? "MQMHA_2_2" : "MHA";
    const std::size_t K = 8;
    PoolingConfig c = variant_config(name, K, 4, trial);
    zero_scorer(c);
    SequenceBatch b{random_normal({3, 7, K}, rng), random_mask(3, 7, rng)};
    const Tensor a = pool_mqmha(b, c).embedding;
    const Tensor s = pool_statistics(b).embedding;
    const std::size_t Kh = c.head_size();
    for (std::size_t r = 0; r < 3; ++r)
      for (std::size_t q = 0; q < c.queries; ++q)
        for (std::size_t h = 0; h < c.heads; ++h)
          for (std::size_t j = 0; j < Kh; ++j) {
            const std::size_t base = (q * c.heads + h) * 2 * Kh;
            worst = std::max(worst, std::abs(a(r, base + j) - s(r, h * Kh + j)));
            worst = std::max(worst, std::abs(a(r, base + Kh + j) - s(r, K + h * Kh + j)));
          }
  }
  const bool pass_a = worst <= kReductionTol;

  // (b) named configurations produce 2QK exactly.
  bool pass_b = true;
  std::string dims;
  for (auto [v, Q] : std::vector<std::pair<NamedVariant, std::size_t>>{
           {NamedVariant::AS, 1}, {NamedVariant::SA, 2}, {NamedVariant::MHA, 1}}) {
    const PoolingConfig c = named_config(v, 16, 8, 3);
    SequenceBatch b{random_normal({2, 5, 16}, rng), random_mask(2, 5, rng)};
    const std::size_t D = pool_mqmha(b, c).embedding.dim(1);
    pass_b = pass_b && D == 2 * Q * 16 && c.output_size() == D;
    dims += to_string(v) + "=" + std::to_string(D) + " ";
  }

  // (c) gamma 0, alpha 1 focal loss against a direct cross-entropy.
  double focal_gap = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t B = 1 + rng.below(5), C = 2 + rng.below(5);
    Tensor logits = random_normal({B, C}, rng);
    for (double& v : logits.data()) v *= 4.0;
    std::vector<std::size_t> labels(B);
    for (auto& l : labels) l = rng.below(C);
    double ce = 0.0;
    for (std::size_t b = 0; b < B; ++b) {
      double top = logits(b, 0);
      for (std::size_t c = 1; c < C; ++c) top = std::max(top, logits(b, c));
      double z = 0.0;
      for (std::size_t c = 0; c < C; ++c) z += std::exp(logits(b, c) - top);
      ce += std::log(z) + top - logits(b, labels[b]);
    }
    ce /= double(B);
    const double fl = focal_loss(logits, labels, FocalLossConfig{std::vector<double>(C, 1.0), 0.0});
    focal_gap = std::max(focal_gap, std::abs(fl - ce));
  }
  const bool pass_c = focal_gap <= kFocalTol;
  report(3, "reduction identities", pass_a && pass_b && pass_c,
         "(a) uniform MQMHA vs statistics max gap " + fmt("%.2e", worst) + " (<= 1e-9); (b) " +
             dims + "(2QK); (c) focal vs CE max gap " + fmt("%.2e", focal_gap) + " (<= 1e-12)");
}

ComparisonResult criterion_ranking() {
  const SynthConfig synth;  // C=4, N=2000, T_audio=50, cue_len=5, calibrated noise
  const PipelineConfig cfg;
  const std::vector<std::string> variants{"Average", "Statistics", "AS", "MQMHA_2_2"};
  const auto t0 = std::chrono::steady_clock::now();
  ComparisonResult r = compare_pooling(synth, cfg, variants, {1, 2, 3});
  const double secs = seconds_since(t0);
  std::map<std::string, double> mean;
  for (const auto& row : r.ranking) mean[row.variant] = row.mean;
  const double mq = mean["MQMHA_2_2"], as = mean["AS"], st = mean["Statistics"],
               av = mean["Average"];
  const bool order = mq >= as && as > st && st > av;
  const bool margin = mq - av >= kRankingMargin;
  std::string detail = "noise " + fmt("%.2f", synth.noise) + ", 3 seeds, mean macro-F1 MQMHA_2_2 " +
                       fmt("%.4f", mq) + ", AS " + fmt("%.4f", as) + ", Statistics " +
                       fmt("%.4f", st) + ", Average " + fmt("%.4f", av) +
                       "; MQMHA_2_2>=AS " + (mq >= as ? "yes" : "no") + ", AS>Statistics " +
                       (as > st ? "yes" : "no") + ", Statistics>Average " +
                       (st > av ? "yes" : "no") + "; MQMHA_2_2-Average " + fmt("%.4f", mq - av) +
                       " (>= 0.03); " + fmt("%.1f", secs) + " s (< 600 s)";
  report(4, "pooling ranking", order && margin && secs < kRankingBudgetSeconds, detail);
  return r;
}

void criteria_attention(const ComparisonResult& r) {
  std::vector<double> fractions, cue, bg;
  for (const auto& run : r.runs) {
    if (run.variant != "MQMHA_2_2") continue;
    const AttentionDump dump = dev_attention(run);
    fractions.push_back(cumulative_mass(dump, 0.8).mean_fraction);
    const SalienceReport s = phoneme_salience(dump, 0.8, 1.0);
    cue.push_back(s.symbols.at("CUE").ratio);
    bg.push_back(s.symbols.at("BG").ratio);
  }
  auto list = [](const std::vector<double>& v) {
    std::string out;
    for (double x : v) out += (out.empty() ? "" : ", ") + fmt("%.3f", x);
    return out;
  };
  bool conc = !fractions.empty();
  for (double f : fractions) conc = conc && f <= kConcentrationMax;
  report(5, "attention concentration", conc,
         "corpus-mean f*(0.8) per seed [" + list(fractions) + "] (<= 0.25, cue_len/T = " +
             fmt("%.2f", double(SynthConfig{}.cue_len) / double(SynthConfig{}.audio_frames)) + ")");
  bool sal = !cue.empty();
  for (std::size_t i = 0; i < cue.size(); ++i) sal = sal && cue[i] > kCueRatioMin && bg[i] < kBackgroundRatioMax;
  report(6, "phoneme salience", sal,
         "CUE ratio per seed [" + list(cue) + "] (> 2), BG ratio [" + list(bg) + "] (< 1)");
}

void criterion_plumbing() {
  LabeledDataset d;
  d.classes = 2;
  for (std::size_t i = 0; i < 270; ++i) {
    Item it;
    it.id = "item" + std::to_string(i);
    it.label = i < 260 ? 0 : 1;
    it.audio = Tensor::full({2, 1}, double(i));
    it.audio_mask = Tensor::full({2}, 1.0);
    it.text = Tensor::full({1, 1}, 0.0);
    it.text_mask = Tensor::full({1}, 1.0);
    d.items.push_back(std::move(it));
  }
  const auto counts = subsample_majority(d, 8.0, 1).class_counts();
  const bool sub_ok = counts == std::vector<std::size_t>{80, 10};

  SynthConfig cfg;
  cfg.items = 400;
  const auto data = synth_dataset(cfg);
  const fs::path root = fs::temp_directory_path() / "mqpool_acceptance_split";
  fs::remove_all(root);
  write_dataset(balanced_dev_split(data, 20, 42).first, root / "a");
  write_dataset(balanced_dev_split(data, 20, 42).first, root / "b");
  write_dataset(balanced_dev_split(data, 20, 43).first, root / "c");
  const std::string a = read_text_file(root / "a" / "manifest.jsonl");
  const std::string b = read_text_file(root / "b" / "manifest.jsonl");
  const std::string c = read_text_file(root / "c" / "manifest.jsonl");
  fs::remove_all(root);
  const bool split_ok = a == b && a != c;
  report(7, "data plumbing", sub_ok && split_ok,
         "subsample [260,10] ratio 8 -> [" + std::to_string(counts[0]) + "," +
             std::to_string(counts[1]) + "]; same-seed dev manifests " +
             (a == b ? "byte-identical" : "differ") + ", other seed " +
             (a != c ? "differs" : "identical"));
}

void criterion_correlation() {
  SynthConfig cfg;
  cfg.items = 200;
  cfg.seed = 8;
  const auto data = synth_dataset(cfg);
  Rng rng(8, "acceptance-shuffle");
  AttentionDump prop, shuffled;
  std::vector<std::vector<double>> energy;
  for (const auto& it : data.items) {
    const std::size_t T = it.audio.dim(0);
    std::vector<double> e(it.energy->data().begin(), it.energy->data().end());
    const double total = std::accumulate(e.begin(), e.end(), 0.0);
    UtteranceAttention u;
    u.id = it.id;
    u.weights = Tensor({1, 1, T});
    for (std::size_t t = 0; t < T; ++t) u.weights[t] = e[t] / total;
    u.frames.resize(T);
    std::iota(u.frames.begin(), u.frames.end(), 0);
    prop.utterances.push_back(u);
    std::vector<std::size_t> perm(T);
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm);
    for (std::size_t t = 0; t < T; ++t) u.weights[t] = e[perm[t]] / total;
    shuffled.utterances.push_back(u);
    energy.push_back(e);
  }
  const auto p = energy_correlation(prop, energy);
  const auto s = energy_correlation(shuffled, energy);
  const bool pass = std::abs(p.mean - 1.0) <= kProportionalTol && std::abs(s.mean) < kShuffledMax;
  report(8, "correlation sanity", pass,
         "proportional mean rho " + fmt("%.12f", p.mean) + " (= 1), shuffled mean rho " +
             fmt("%+.4f", s.mean) + " (|.| < 0.1) over " + std::to_string(s.used) +
             " utterances");
}

}  // namespace

int main() {
  try {
    criterion_gradients();
    criterion_masking();
    criterion_reductions();
    const ComparisonResult r = criterion_ranking();
    criteria_attention(r);
    criterion_plumbing();
    criterion_correlation();
  } catch (const std::exception& e) {
    std::printf("[FAIL] acceptance aborted: %s\n", e.what());
    return 2;
  }
  std::printf("%d of 8 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
