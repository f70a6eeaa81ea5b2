// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The mqpool Authors
#include "mqpool/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "mqpool/errors.hpp"

namespace mqpool {

PipelineRun train_pipeline(const LabeledDataset& data, const std::string& variant,
                           const PipelineConfig& cfg, std::uint64_t seed) {
  auto [dev, rest] = balanced_dev_split(data, cfg.dev_per_class, seed);
  LabeledDataset train = subsample_majority(rest, cfg.max_ratio, seed);
  ModelShape shape = cfg.shape;
  shape.classes = data.classes;
  shape.audio_input = data.items.front().audio.dim(1);
  shape.text_input = data.items.front().text.dim(1);
  PipelineRun run{variant, seed, make_model(shape, variant, variant, seed), {}, std::move(dev), 0.0};
  run.log = run_protocol(train, run.dev, run.model, cfg.schedule, seed, cfg.options);
  run.dev_macro_f1 = evaluate(run.model, run.dev).macro_f1;
  return run;
}

ComparisonResult compare_pooling(const SynthConfig& synth, const PipelineConfig& cfg,
                                 const std::vector<std::string>& variants,
                                 const std::vector<std::uint64_t>& seeds) {
  if (variants.empty()) throw ConfigError("compare-pooling needs at least one variant");
  if (seeds.empty()) throw ConfigError("compare-pooling needs at least one seed");
  for (const auto& v : variants) variant_config(v, cfg.shape.feature_size, cfg.shape.scorer_hidden, 0);
  std::vector<LabeledDataset> data;
  for (auto s : seeds) {
    SynthConfig sc = synth;
    sc.seed = s;
    data.push_back(synth_dataset(sc));
  }
  ComparisonResult out;
  for (const auto& v : variants) {
    std::vector<double> scores;
    for (std::size_t i = 0; i < seeds.size(); ++i) {
      out.runs.push_back(train_pipeline(data[i], v, cfg, seeds[i]));
      scores.push_back(out.runs.back().dev_macro_f1);
    }
    const double n = static_cast<double>(scores.size());
    const double mean = std::accumulate(scores.begin(), scores.end(), 0.0) / n;
    double var = 0.0;
    for (double s : scores) var += (s - mean) * (s - mean);
    out.ranking.push_back({v, mean, std::sqrt(var / n), 0});
  }
  std::vector<std::size_t> order(out.ranking.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](auto a, auto b) { return out.ranking[a].mean > out.ranking[b].mean; });
  for (std::size_t r = 0; r < order.size(); ++r) out.ranking[order[r]].rank = r + 1;
  return out;
}

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::string runs_csv(const ComparisonResult& r) {
  std::ostringstream os;
  os << "variant,seed,dev_macro_f1,epochs\n";
  for (const auto& run : r.runs) {
    os << run.variant << ',' << run.seed << ',' << fmt(run.dev_macro_f1) << ','
       << run.log.epochs.size() << '\n';
  }
  return os.str();
}

std::string ranking_csv(const ComparisonResult& r) {
  std::vector<const RankingRow*> rows;
  for (const auto& row : r.ranking) rows.push_back(&row);
  std::sort(rows.begin(), rows.end(), [](auto a, auto b) { return a->rank < b->rank; });
  std::ostringstream os;
  os << "rank,variant,mean_macro_f1,std_macro_f1,seeds\n";
  const std::size_t seeds = r.ranking.empty() ? 0 : r.runs.size() / r.ranking.size();
  for (const auto* row : rows) {
    os << row->rank << ',' << row->variant << ',' << fmt(row->mean) << ',' << fmt(row->stddev)
       << ',' << seeds << '\n';
  }
  return os.str();
}

AttentionDump dev_attention(const PipelineRun& run) {
  Evaluation ev = evaluate(run.model, run.dev, 64, true);
  if (ev.audio_attention.empty()) {
    throw ContractError("variant " + run.variant + " has no attention to dump");
  }
  return make_dump(run.dev, ev.audio_attention, ev.audio_frames);
}

}  // namespace mqpool
