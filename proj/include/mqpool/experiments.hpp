// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The mqpool Authors
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mqpool/analysis.hpp"
#include "mqpool/dataset.hpp"
#include "mqpool/model.hpp"
#include "mqpool/trainer.hpp"

namespace mqpool {

/// Everything a single training run needs besides the data.
struct PipelineConfig {
  ModelShape shape;
  UnfreezeSchedule schedule = UnfreezeSchedule::desk_defaults();
  TrainingOptions options;
  std::size_t dev_per_class = 100;
  double max_ratio = 8.0;
};

struct PipelineRun {
  std::string variant;
  std::uint64_t seed = 0;
  MultimodalModel model;
  TrainingLog log;
  LabeledDataset dev;
  double dev_macro_f1 = 0.0;
};

/// Balanced dev split, majority subsampling of the rest, run_protocol with
/// the same pooling variant on both modalities.
PipelineRun train_pipeline(const LabeledDataset& data, const std::string& variant,
                           const PipelineConfig& cfg, std::uint64_t seed);

struct RankingRow {
  std::string variant;
  double mean = 0.0;
  double stddev = 0.0;  // population, over seeds
  std::size_t rank = 0;  // 1 = best
};

struct ComparisonResult {
  std::vector<PipelineRun> runs;  // variant-major
  std::vector<RankingRow> ranking;
};

/// Trains every variant on each seed's synthetic dataset. Seed s draws the
/// data from synth.seed = s; all variants see identical data per seed.
ComparisonResult compare_pooling(const SynthConfig& synth, const PipelineConfig& cfg,
                                 const std::vector<std::string>& variants,
                                 const std::vector<std::uint64_t>& seeds);

std::string runs_csv(const ComparisonResult& r);
std::string ranking_csv(const ComparisonResult& r);

/// Dev-set evaluation of a run with its audio attention dump.
AttentionDump dev_attention(const PipelineRun& run);

}  // namespace mqpool
