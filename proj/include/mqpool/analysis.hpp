// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The mqpool Authors
#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "mqpool/dataset.hpp"
#include "mqpool/tensor.hpp"

namespace mqpool {

struct UtteranceAttention {
  std::string id;
  Tensor weights;                   // [Q, H, T_valid]
  std::vector<std::size_t> frames;  // item frame index of each column
  std::vector<double> energy;       // optional, aligned with frames
  std::vector<PhonemeSpan> spans;   // optional, item frame indices
};

enum class HeadAggregation { Mean, Max };

HeadAggregation parse_head_aggregation(std::string_view s);

inline constexpr double kDumpSumTolerance = 1e-9;

struct AttentionDump {
  std::vector<UtteranceAttention> utterances;

  /// Non-negative weights; every (q, h) row sums to 1 within 1e-9.
  void validate() const;
  const UtteranceAttention& find(std::string_view id) const;
  /// Per-frame weight, mean (or max) over (q, h), renormalized to sum 1.
  std::vector<double> frame_weights(std::size_t utterance,
                                    HeadAggregation agg = HeadAggregation::Mean) const;
};

/// Builds a dump from evaluated items, attaching energy and spans.
AttentionDump make_dump(const LabeledDataset& d, const std::vector<Tensor>& weights,
                        const std::vector<std::vector<std::size_t>>& frames);

/// index.json plus one MQT1 file per utterance (and per energy vector).
/// Weights are renormalized in double after reading.
void write_attention_dump(const AttentionDump& dump, const std::filesystem::path& dir);
AttentionDump read_attention_dump(const std::filesystem::path& dir);

// ---- concentration -----------------------------------------------------------

/// Smallest k/T with the k largest weights summing to >= mass.
double frame_fraction_for_mass(std::span<const double> weights, double mass);

struct ConcentrationReport {
  double mass = 0.8;
  std::vector<double> per_utterance;  // f*(mass)
  double mean_fraction = 0.0;
  /// Corpus-mean cumulative weight at frame fractions 0, 0.01, ..., 1.
  std::vector<double> curve;
};

ConcentrationReport cumulative_mass(const AttentionDump& dump, double mass = 0.8,
                                    HeadAggregation agg = HeadAggregation::Mean);
std::string concentration_csv(const ConcentrationReport& r);

// ---- energy correlation ------------------------------------------------------

double pearson(std::span<const double> a, std::span<const double> b);

struct CorrelationReport {
  double mean = 0.0;
  double stddev = 0.0;  // population
  std::size_t used = 0;
  std::size_t excluded = 0;
  std::vector<double> per_utterance;
};

/// `energy[i]` aligned with utterance i's frames. Utterances where either
/// series is constant are excluded and counted.
CorrelationReport energy_correlation(const AttentionDump& dump,
                                     const std::vector<std::vector<double>>& energy,
                                     HeadAggregation agg = HeadAggregation::Mean);
/// Uses the energy stored in the dump.
CorrelationReport energy_correlation(const AttentionDump& dump,
                                     HeadAggregation agg = HeadAggregation::Mean);
std::string correlation_csv(const CorrelationReport& r);

// ---- phoneme salience --------------------------------------------------------

inline constexpr const char* kNoSymbol = "NONE";

struct SymbolSalience {
  double prior = 0.0;
  double attended = 0.0;
  double ratio = 0.0;
  std::size_t support = 0;           // frames carrying the symbol
  std::size_t attended_support = 0;  // of those, attended
};

struct SalienceReport {
  double mass_threshold = 0.8;
  double smoothing = 1.0;
  std::map<std::string, SymbolSalience> symbols;
};

/// Attended frames are the top-weight prefix reaching mass_threshold.
/// Ratios are P(sym | attended) / P(sym | all) with add-`smoothing` counts.
SalienceReport phoneme_salience(const AttentionDump& dump,
                                const std::vector<std::vector<PhonemeSpan>>& spans,
                                double mass_threshold = 0.8, double smoothing = 1.0,
                                HeadAggregation agg = HeadAggregation::Mean);
/// Uses the spans stored in the dump.
SalienceReport phoneme_salience(const AttentionDump& dump, double mass_threshold = 0.8,
                                double smoothing = 1.0,
                                HeadAggregation agg = HeadAggregation::Mean);
std::string salience_csv(const SalienceReport& r);

// ---- heatmap -----------------------------------------------------------------

/// Header row,t0..t{T-1}; one row per (q, h) named qXhY, then a "mean" row.
std::string export_heatmap(const AttentionDump& dump, std::string_view id);

}  // namespace mqpool
