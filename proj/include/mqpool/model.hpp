// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The mqpool Authors
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mqpool/autodiff.hpp"
#include "mqpool/pooling.hpp"
#include "mqpool/rng.hpp"
#include "mqpool/tensor.hpp"

namespace mqpool {

struct DenseLayer {
  Tensor weight;  // [in, out]
  Tensor bias;    // [out]

  static DenseLayer xavier(std::size_t in, std::size_t out, Rng& rng);
};

/// Frame-wise stack of affine layers with tanh between them; the output
/// layer stays affine. layers[i] has layer index i, counted from the input.
struct ToyEncoder {
  std::size_t input_size = 0;
  std::vector<DenseLayer> layers;

  std::size_t output_size() const;
  static ToyEncoder make(std::size_t input_size, std::size_t hidden_size, std::size_t output_size,
                         std::size_t depth, Rng& rng);
};

/// Per-modality poolers, concatenation, and a two-layer tanh MLP.
struct FusionClassifier {
  PoolingConfig audio_pooling;
  PoolingConfig text_pooling;
  DenseLayer hidden;
  DenseLayer output;
  std::size_t classes = 0;

  std::size_t fused_size() const {
    return audio_pooling.output_size() + text_pooling.output_size();
  }
};

struct MultimodalModel {
  ToyEncoder audio_encoder;
  ToyEncoder text_encoder;
  FusionClassifier head;
  std::uint64_t seed = 0;

  void validate() const;
};

struct ModelShape {
  std::size_t audio_input = 8;
  std::size_t text_input = 8;
  std::size_t encoder_hidden = 32;
  std::size_t encoder_depth = 2;
  std::size_t feature_size = 16;  // K for both modalities
  std::size_t mlp_hidden = 32;
  std::size_t scorer_hidden = 16;  // p
  std::size_t classes = 4;
};

MultimodalModel make_model(const ModelShape& shape, std::string_view audio_variant,
                           std::string_view text_variant, std::uint64_t seed);

enum class ParamGroup { AudioEncoder, TextEncoder, Head };

struct ParamRef {
  std::string name;
  Tensor* value;
  ParamGroup group;
  std::size_t layer;  // encoder layer index; 0 for head blocks
};

/// Every parameter block in a fixed order.
std::vector<ParamRef> parameters(MultimodalModel& model);
std::vector<Tensor> snapshot(MultimodalModel& model);
void restore(MultimodalModel& model, const std::vector<Tensor>& values);

struct ModelTrace {
  ad::Var logits;
  std::vector<ad::Var> params;  // aligned with parameters()
  std::optional<ad::Var> audio_attention;
  std::optional<ad::Var> text_attention;
};

/// Records the forward pass. `trainable[i]` controls whether block i gets
/// an adjoint; empty means every block.
ModelTrace trace_forward(ad::Tape& tape, MultimodalModel& model, const SequenceBatch& audio,
                         const SequenceBatch& text, const std::vector<bool>& trainable = {});

struct ForwardOutput {
  Tensor logits;  // [B, C]
  std::optional<Tensor> audio_attention;
  std::optional<Tensor> text_attention;
};

ForwardOutput forward(const SequenceBatch& audio, const SequenceBatch& text,
                      const FusionClassifier& head, const ToyEncoder& audio_encoder,
                      const ToyEncoder& text_encoder);

// ---- loss and metrics --------------------------------------------------------

struct FocalLossConfig {
  std::vector<double> alpha;
  double gamma = 2.0;

  void validate(std::size_t classes) const;
};

inline constexpr double kLogGuard = 1e-12;

/// Batch mean of -alpha_c (1 - p_c)^gamma log p_c.
double focal_loss(const Tensor& logits, std::span<const std::size_t> labels,
                  const FocalLossConfig& cfg);
Tensor focal_loss_backward(const Tensor& logits, std::span<const std::size_t> labels,
                           const FocalLossConfig& cfg);
ad::Var focal_loss(ad::Var logits, std::vector<std::size_t> labels, const FocalLossConfig& cfg);

/// Inverse class frequency, scaled to mean 1.
std::vector<double> alpha_from_frequencies(std::span<const std::size_t> counts);

/// Unweighted mean of per-class F1; classes absent from both inputs score 0.
double macro_f1(std::span<const std::size_t> preds, std::span<const std::size_t> labels,
                std::size_t classes);
std::vector<double> per_class_f1(std::span<const std::size_t> preds,
                                 std::span<const std::size_t> labels, std::size_t classes);

std::vector<std::size_t> argmax_rows(const Tensor& logits);

// ---- checkpoints -------------------------------------------------------------

/// Directory of MQT1 blocks plus manifest.json.
void save_checkpoint(const MultimodalModel& model, const std::filesystem::path& dir);
MultimodalModel load_checkpoint(const std::filesystem::path& dir);

}  // namespace mqpool
