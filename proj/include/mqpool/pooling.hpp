// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The mqpool Authors
#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mqpool/tensor.hpp"

namespace mqpool {

enum class PoolingKind { Max, Average, Statistics, Attentive };

/// Attentive presets. The MQMHA_q_h entries encode (Q, H) in the name.
enum class NamedVariant { AS, SA, MHA, MQMHA_2_2, MQMHA_2_4, MQMHA_4_4 };

/// Score assigned to masked frames before the softmax.
inline constexpr double kMaskedScore = std::numeric_limits<double>::lowest();

/// Pooling operator selection plus attentive hyperparameters.
///
/// Scorer weights are stacked over (query, head):
///   depth 1: {weight [Q,H,K'], bias [Q,H]}
///   depth 2: {hidden_weight [Q,H,K',p], hidden_bias [Q,H,p],
///             out_weight [Q,H,p], out_bias [Q,H]}
/// where K' = K / H and the head split takes contiguous blocks of K'.
struct PoolingConfig {
  PoolingKind kind = PoolingKind::Average;
  std::size_t feature_size = 0;  // K
  std::size_t queries = 1;       // Q
  std::size_t heads = 1;         // H
  int scorer_depth = 1;          // n in {1, 2}
  std::size_t hidden_size = 0;   // p, used when scorer_depth == 2
  std::uint64_t seed = 0;
  std::vector<Tensor> scorer;

  std::size_t head_size() const { return feature_size / heads; }
  /// Embedding width: K, 2K or 2QK.
  std::size_t output_size() const;
  /// Throws ConfigError when the invariants do not hold.
  void validate() const;
  std::vector<std::string> scorer_names() const;
  std::vector<Tensor::Dims> scorer_dims() const;
};

struct PooledOutput {
  Tensor embedding;                  // [B, D]
  std::optional<Tensor> attention;   // [B, Q, H, T], Attentive only
  std::optional<Tensor> means;       // [B, Q, H, K']
  std::optional<Tensor> deviations;  // [B, Q, H, K']
};

PoolingConfig static_config(PoolingKind kind, std::size_t feature_size);

/// Attentive preset with Xavier-uniform scorer weights and zero biases
/// drawn from Rng(seed, "scorer").
PoolingConfig named_config(NamedVariant name, std::size_t feature_size, std::size_t hidden_size,
                           std::uint64_t seed);

/// Any pooling variant by name: Max, Average, Statistics, AS, SA, MHA,
/// MQMHA_2_2, MQMHA_2_4, MQMHA_4_4.
PoolingConfig variant_config(std::string_view name, std::size_t feature_size,
                             std::size_t hidden_size, std::uint64_t seed);
std::vector<std::string> variant_names();

std::string to_string(PoolingKind kind);
std::string to_string(NamedVariant name);
PoolingKind parse_pooling_kind(std::string_view s);
NamedVariant parse_named_variant(std::string_view s);

/// Zeroes all scorer weights and biases (uniform attention).
void zero_scorer(PoolingConfig& cfg);

// Forward operators. SequenceBatch overloads validate the batch; the
// (features, mask) overloads assume it was validated by the caller.
PooledOutput pool_max(const SequenceBatch& batch);
PooledOutput pool_average(const SequenceBatch& batch);
PooledOutput pool_statistics(const SequenceBatch& batch);
PooledOutput pool_mqmha(const SequenceBatch& batch, const PoolingConfig& cfg);
/// Dispatches on cfg.kind.
PooledOutput pool(const SequenceBatch& batch, const PoolingConfig& cfg);

PooledOutput pool_max(const Tensor& x, const Tensor& mask);
PooledOutput pool_average(const Tensor& x, const Tensor& mask);
PooledOutput pool_statistics(const Tensor& x, const Tensor& mask);

/// Frame scores [B,Q,H,T]; masked frames hold kMaskedScore.
Tensor score_frames(const SequenceBatch& batch, const PoolingConfig& cfg);
Tensor score_frames(const Tensor& x, const Tensor& mask, const PoolingConfig& cfg);

/// Softmax over the last axis; kMaskedScore slots map to exactly 0.
Tensor attention_weights(const Tensor& scores);

/// Attention-weighted mean and deviation per (q,h), concatenated q-major,
/// then h, then [mu, sigma].
PooledOutput weighted_statistics(const Tensor& x, const Tensor& mask, const Tensor& weights);

// Reverse-mode kernels. Gradients at masked positions are zero.

/// Largest-value frame per (b,k); ties go to the lowest frame index.
Tensor pool_max_backward(const Tensor& x, const Tensor& mask, const Tensor& grad_embedding);
Tensor pool_average_backward(const Tensor& x, const Tensor& mask, const Tensor& grad_embedding);
Tensor pool_statistics_backward(const Tensor& x, const Tensor& mask, const PooledOutput& out,
                                const Tensor& grad_embedding);

struct ScoreGradients {
  Tensor features;
  std::vector<Tensor> scorer;
};
ScoreGradients score_frames_backward(const Tensor& x, const Tensor& mask,
                                     const PoolingConfig& cfg, const Tensor& grad_scores);

Tensor attention_weights_backward(const Tensor& weights, const Tensor& grad_weights);

struct WeightedStatisticsGradients {
  Tensor features;
  Tensor weights;
};
WeightedStatisticsGradients weighted_statistics_backward(const Tensor& x, const Tensor& mask,
                                                         const Tensor& weights,
                                                         const PooledOutput& out,
                                                         const Tensor& grad_embedding);

/// Radicand floor used by the guarded sqrt derivative.
inline constexpr double kSqrtGuard = 1e-12;

}  // namespace mqpool
