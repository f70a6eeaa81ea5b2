// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The mqpool Authors
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mqpool/dataset.hpp"
#include "mqpool/experiments.hpp"
#include "mqpool/gradcheck.hpp"
#include "mqpool/serialization.hpp"

namespace mqpool {

/// Every knob of every subcommand. Parsing rejects unknown keys at all
/// levels; to_json emits the fully resolved document.
struct RunConfig {
  std::uint64_t seed = 1;
  std::filesystem::path out = "out";
  std::filesystem::path dataset;     // train, eval, subsample
  std::filesystem::path checkpoint;  // eval
  std::filesystem::path dump;        // analyze
  SynthConfig synth;
  PipelineConfig pipeline;
  std::string variant = "MQMHA_2_2";
  std::vector<std::string> variants = {"Average", "Statistics", "AS", "MQMHA_2_2"};
  std::vector<std::uint64_t> seeds = {1, 2, 3};
  GradSuiteOptions gradcheck;
  double mass_threshold = 0.8;
  double smoothing = 1.0;
  std::string aggregation = "mean";
  std::vector<std::string> heatmaps;  // utterance ids to export

  static RunConfig from_json(const json& j);
  json to_json() const;
};

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitNumerical = 4;

int run_cli(int argc, char** argv);

}  // namespace mqpool
