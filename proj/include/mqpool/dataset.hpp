// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The mqpool Authors
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mqpool/tensor.hpp"

namespace mqpool {

/// Frames [start, end) carry `symbol`.
struct PhonemeSpan {
  std::string symbol;
  std::size_t start = 0;
  std::size_t end = 0;

  friend bool operator==(const PhonemeSpan&, const PhonemeSpan&) = default;
};

/// One utterance: per-modality frames [T, K] with masks [T].
struct Item {
  std::string id;
  Tensor audio;
  Tensor audio_mask;
  Tensor text;
  Tensor text_mask;
  std::size_t label = 0;
  std::vector<PhonemeSpan> phonemes;  // audio frame indices
  std::optional<Tensor> energy;       // [T_audio]
};

struct LabeledDataset {
  std::vector<Item> items;
  std::size_t classes = 0;

  /// Labels in range, ids unique, shapes consistent.
  void validate() const;
  std::vector<std::size_t> class_counts() const;
};

/// Planted-cue generator settings.
struct SynthConfig {
  std::size_t classes = 4;
  std::size_t items = 2000;
  std::size_t audio_frames = 50;
  std::size_t text_frames = 12;
  std::size_t input_size = 8;
  std::size_t cue_len = 5;
  double noise = 2.1;
  double salience = 3.0;          // cue offset on every feature
  double class_gain = 1.0;        // extra offset on the label's features
  double text_class_gain = 0.5;
  std::uint64_t seed = 1;
};

/// Background noise frames with one contiguous cue window per modality.
///
/// Cue frames have mean `salience` on every feature plus `class_gain` on
/// the features k with k % C == label, so the window's
/// mean vector is class specific while its salience is shared by all
/// classes. The text channel uses a weaker class gain. Valid audio lengths
/// are uniform in [ceil(0.8 T), T], text lengths in [max(cue_len+1,
/// ceil(0.6 T)), T]; cue starts are uniform over the admissible range.
/// Values are rounded to float so datasets survive the MQT1 round trip.
/// Audio frames are tagged "CUE"/"BG" and carry energy = mean squared value.
LabeledDataset synth_dataset(const SynthConfig& cfg);

/// Caps every class at ceil(max_ratio * min_count) items, chosen uniformly
/// without replacement from Rng(seed, "subsample"). Item order is kept.
LabeledDataset subsample_majority(const LabeledDataset& d, double max_ratio, std::uint64_t seed);

/// Exactly `per_class` items of each class go to the first dataset.
std::pair<LabeledDataset, LabeledDataset> balanced_dev_split(const LabeledDataset& d,
                                                             std::size_t per_class,
                                                             std::uint64_t seed);

/// manifest.jsonl plus tensors/ under `dir`.
void write_dataset(const LabeledDataset& d, const std::filesystem::path& dir);
LabeledDataset read_dataset(const std::filesystem::path& dir);

}  // namespace mqpool
