// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The mqpool Authors
#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mqpool/dataset.hpp"
#include "mqpool/model.hpp"

namespace mqpool {

// ---- optimizer ---------------------------------------------------------------

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

struct OptimizerState {
  AdamWConfig config;
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::uint64_t step = 0;

  /// Zero moments shaped like `params`.
  static OptimizerState zeros(std::span<Tensor* const> params, AdamWConfig config = {});
};

/// One AdamW update: decoupled decay theta *= (1 - lr*lambda), then the
/// bias-corrected Adam step.
void adamw_step(OptimizerState& state, std::span<const Tensor> grads,
                std::span<Tensor* const> params, double lr);

/// Linear warmup to eta over warmup_frac*total steps, then cosine to 0.
double lr_at(std::size_t step, std::size_t total, double warmup_frac, double eta);

// ---- batching ----------------------------------------------------------------

struct Batch {
  SequenceBatch audio;
  SequenceBatch text;
  std::vector<std::size_t> labels;
};

/// Rows padded with zeros to the longest item; padding is masked out.
Batch make_batch(const LabeledDataset& d, std::span<const std::size_t> indices);

// ---- gradual unfreezing -----------------------------------------------------

enum class TrainableSet { HeadOnly, UpperLayersPlusHead, All };

std::string to_string(TrainableSet s);

struct PhaseSpec {
  TrainableSet trainable = TrainableSet::HeadOnly;
  double lr = 1e-5;
  double warmup_fraction = 0.1;
  std::size_t max_epochs = 10;
};

struct EarlyStopping {
  std::size_t patience = 3;
  double min_delta = 1e-4;

  friend bool operator==(const EarlyStopping&, const EarlyStopping&) = default;
};

struct UnfreezeSchedule {
  std::array<PhaseSpec, 3> phases;
  EarlyStopping early_stop;
  double upper_fraction = 0.5;  // share of encoder layers opened in phase 2

  void validate() const;
  /// Learning rates 1e-5, 3e-6, 1e-6.
  static UnfreezeSchedule paper_defaults();
  /// Same ratios scaled x3000 with 30-epoch phases, for the small
  /// synthetic models.
  static UnfreezeSchedule desk_defaults();
};

/// Trainable flag per entry of parameters(model).
std::vector<bool> trainable_mask(MultimodalModel& model, TrainableSet set, double upper_fraction);

struct TrainingOptions {
  std::size_t batch_size = 32;
  double weight_decay = 0.01;
  double gamma = 2.0;
  /// Replaces the dev macro-F1 seen by early stopping, called with the
  /// phase index and the epoch within that phase.
  std::function<double(std::size_t, std::size_t)> dev_metric_override;
  /// Called after each phase's best-dev restore with the phase index.
  std::function<void(std::size_t, const MultimodalModel&)> on_phase_end;
};

struct EpochRecord {
  std::size_t epoch = 0;  // global, 1-based
  std::size_t phase = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double dev_macro_f1 = 0.0;

  friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

struct TrainingLog {
  std::vector<EpochRecord> epochs;
  std::array<double, 3> phase_best{};
  double final_dev_macro_f1 = 0.0;
  EarlyStopping early_stop;

  friend bool operator==(const TrainingLog&, const TrainingLog&) = default;
};

/// '#' header lines noting the early-stopping rule, then
/// epoch,phase,lr,train_loss,dev_macro_f1.
std::string training_log_csv(const TrainingLog& log, const UnfreezeSchedule& schedule);

TrainingLog run_protocol(const LabeledDataset& train, const LabeledDataset& dev,
                         MultimodalModel& model, const UnfreezeSchedule& schedule,
                         std::uint64_t seed, const TrainingOptions& options = {});

// ---- evaluation --------------------------------------------------------------

struct Evaluation {
  std::vector<std::size_t> predictions;
  std::vector<std::size_t> labels;
  std::vector<double> per_class_f1;
  double macro_f1 = 0.0;
  /// Audio attention per item, [Q, H, T_valid], when the audio pooler attends.
  std::vector<Tensor> audio_attention;
  std::vector<std::vector<std::size_t>> audio_frames;
};

Evaluation evaluate(const MultimodalModel& model, const LabeledDataset& d,
                    std::size_t batch_size = 64, bool keep_attention = false);

}  // namespace mqpool
