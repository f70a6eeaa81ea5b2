// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The mqpool Authors
#include "mqpool/pooling.hpp"

#include <algorithm>
#include <cmath>

#include "mqpool/errors.hpp"
#include "mqpool/rng.hpp"

namespace mqpool {

namespace {

struct Geometry {
  std::size_t batch, frames, features;
};

Geometry geometry(const Tensor& x) { return {x.dim(0), x.dim(1), x.dim(2)}; }

void check_attentive(const PoolingConfig& cfg) {
  if (cfg.kind != PoolingKind::Attentive) {
    throw ConfigError("operation requires an Attentive pooling config");
  }
  cfg.validate();
}

void check_features(const Tensor& x, const PoolingConfig& cfg) {
  if (x.rank() != 3 || x.dim(2) != cfg.feature_size) {
    throw ShapeError("features " + dims_to_string(x.dims()) + " do not match pooling width " +
                     std::to_string(cfg.feature_size));
  }
}

void xavier_fill(Tensor& t, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (double& v : t.data()) v = rng.uniform(-bound, bound);
}

// Scores for one frame part under scorer (q,h). `part` points at K' values.
double score_part(const PoolingConfig& cfg, std::size_t qh, const double* part,
                  std::vector<double>& hidden) {
  const std::size_t kp = cfg.head_size();
  if (cfg.scorer_depth == 1) {
    const double* w = cfg.scorer[0].data().data() + qh * kp;
    double e = cfg.scorer[1][qh];
    for (std::size_t k = 0; k < kp; ++k) e += w[k] * part[k];
    return e;
  }
  const std::size_t p = cfg.hidden_size;
  const double* w1 = cfg.scorer[0].data().data() + qh * kp * p;
  const double* b1 = cfg.scorer[1].data().data() + qh * p;
  const double* w2 = cfg.scorer[2].data().data() + qh * p;
  hidden.assign(b1, b1 + p);
  for (std::size_t k = 0; k < kp; ++k) {
    const double xk = part[k];
    const double* row = w1 + k * p;
    for (std::size_t j = 0; j < p; ++j) hidden[j] += xk * row[j];
  }
  double e = cfg.scorer[3][qh];
  for (std::size_t j = 0; j < p; ++j) e += w2[j] * std::max(hidden[j], 0.0);
  return e;
}

}  // namespace

std::size_t PoolingConfig::output_size() const {
  switch (kind) {
    case PoolingKind::Max:
    case PoolingKind::Average:
      return feature_size;
    case PoolingKind::Statistics:
      return 2 * feature_size;
    case PoolingKind::Attentive:
      return 2 * queries * feature_size;
  }
  return 0;
}

std::vector<std::string> PoolingConfig::scorer_names() const {
  if (kind != PoolingKind::Attentive) return {};
  if (scorer_depth == 1) return {"weight", "bias"};
  return {"hidden_weight", "hidden_bias", "out_weight", "out_bias"};
}

std::vector<Tensor::Dims> PoolingConfig::scorer_dims() const {
  if (kind != PoolingKind::Attentive) return {};
  const std::size_t kp = head_size();
  if (scorer_depth == 1) return {{queries, heads, kp}, {queries, heads}};
  return {{queries, heads, kp, hidden_size},
          {queries, heads, hidden_size},
          {queries, heads, hidden_size},
          {queries, heads}};
}

void PoolingConfig::validate() const {
  if (feature_size == 0) throw ConfigError("pooling feature size must be positive");
  if (kind != PoolingKind::Attentive) {
    if (queries != 1 || heads != 1 || !scorer.empty()) {
      throw ConfigError("static pooling takes Q=H=1 and no scorer weights");
    }
    return;
  }
  if (queries < 1 || heads < 1) throw ConfigError("attentive pooling needs Q>=1 and H>=1");
  if (feature_size % heads != 0) {
    throw ConfigError("heads H=" + std::to_string(heads) + " must divide feature size K=" +
                      std::to_string(feature_size));
  }
  if (scorer_depth != 1 && scorer_depth != 2) {
    throw ConfigError("scorer depth must be 1 or 2, got " + std::to_string(scorer_depth));
  }
  if (scorer_depth == 2 && hidden_size == 0) throw ConfigError("scorer depth 2 needs p >= 1");
  const auto expected = scorer_dims();
  if (scorer.size() != expected.size()) {
    throw ConfigError("expected " + std::to_string(expected.size()) + " scorer tensors, got " +
                      std::to_string(scorer.size()));
  }
  for (std::size_t i = 0; i < expected.size(); ++i) {
    if (scorer[i].dims() != expected[i]) {
      throw ConfigError("scorer tensor " + scorer_names()[i] + " has dims " +
                        dims_to_string(scorer[i].dims()) + ", expected " +
                        dims_to_string(expected[i]));
    }
  }
}

PoolingConfig static_config(PoolingKind kind, std::size_t feature_size) {
  if (kind == PoolingKind::Attentive) throw ConfigError("Attentive pooling needs a named config");
  PoolingConfig cfg;
  cfg.kind = kind;
  cfg.feature_size = feature_size;
  cfg.validate();
  return cfg;
}

PoolingConfig named_config(NamedVariant name, std::size_t feature_size, std::size_t hidden_size,
                           std::uint64_t seed) {
  PoolingConfig cfg;
  cfg.kind = PoolingKind::Attentive;
  cfg.feature_size = feature_size;
  cfg.hidden_size = hidden_size;
  cfg.seed = seed;
  switch (name) {
    case NamedVariant::AS:
      cfg.queries = 1, cfg.heads = 1, cfg.scorer_depth = 2;
      break;
    case NamedVariant::SA:
      cfg.queries = 2, cfg.heads = 1, cfg.scorer_depth = 2;
      break;
    case NamedVariant::MHA:
      cfg.queries = 1, cfg.heads = 2, cfg.scorer_depth = 1;
      break;
    case NamedVariant::MQMHA_2_2:
      cfg.queries = 2, cfg.heads = 2, cfg.scorer_depth = 1;
      break;
    case NamedVariant::MQMHA_2_4:
      cfg.queries = 2, cfg.heads = 4, cfg.scorer_depth = 1;
      break;
    case NamedVariant::MQMHA_4_4:
      cfg.queries = 4, cfg.heads = 4, cfg.scorer_depth = 1;
      break;
  }
  if (feature_size == 0 || feature_size % cfg.heads != 0) {
    throw ConfigError(to_string(name) + " needs H=" + std::to_string(cfg.heads) +
                      " to divide K=" + std::to_string(feature_size));
  }
  const auto dims = cfg.scorer_dims();
  for (const auto& d : dims) cfg.scorer.emplace_back(d);
  Rng rng(seed, "scorer");
  const std::size_t kp = cfg.head_size();
  if (cfg.scorer_depth == 1) {
    xavier_fill(cfg.scorer[0], kp, 1, rng);
  } else {
    xavier_fill(cfg.scorer[0], kp, hidden_size, rng);
    xavier_fill(cfg.scorer[2], hidden_size, 1, rng);
  }
  cfg.validate();
  return cfg;
}

std::vector<std::string> variant_names() {
  return {"Max", "Average", "Statistics", "AS", "SA", "MHA", "MQMHA_2_2", "MQMHA_2_4",
          "MQMHA_4_4"};
}

PoolingConfig variant_config(std::string_view name, std::size_t feature_size,
                             std::size_t hidden_size, std::uint64_t seed) {
  if (name == "Max" || name == "Average" || name == "Statistics") {
    return static_config(parse_pooling_kind(name), feature_size);
  }
  return named_config(parse_named_variant(name), feature_size, hidden_size, seed);
}

std::string to_string(PoolingKind kind) {
  switch (kind) {
    case PoolingKind::Max: return "Max";
    case PoolingKind::Average: return "Average";
    case PoolingKind::Statistics: return "Statistics";
    case PoolingKind::Attentive: return "Attentive";
  }
  return "?";
}

std::string to_string(NamedVariant name) {
  switch (name) {
    case NamedVariant::AS: return "AS";
    case NamedVariant::SA: return "SA";
    case NamedVariant::MHA: return "MHA";
    case NamedVariant::MQMHA_2_2: return "MQMHA_2_2";
    case NamedVariant::MQMHA_2_4: return "MQMHA_2_4";
    case NamedVariant::MQMHA_4_4: return "MQMHA_4_4";
  }
  return "?";
}

PoolingKind parse_pooling_kind(std::string_view s) {
  for (auto k : {PoolingKind::Max, PoolingKind::Average, PoolingKind::Statistics,
                 PoolingKind::Attentive}) {
    if (s == to_string(k)) return k;
  }
  throw ConfigError("unknown pooling kind '" + std::string(s) + "'");
}

NamedVariant parse_named_variant(std::string_view s) {
  for (auto v : {NamedVariant::AS, NamedVariant::SA, NamedVariant::MHA, NamedVariant::MQMHA_2_2,
                 NamedVariant::MQMHA_2_4, NamedVariant::MQMHA_4_4}) {
    if (s == to_string(v)) return v;
  }
  throw ConfigError("unknown pooling variant '" + std::string(s) + "'");
}

void zero_scorer(PoolingConfig& cfg) {
  for (auto& t : cfg.scorer) std::fill(t.data().begin(), t.data().end(), 0.0);
}

// ---- static pooling --------------------------------------------------------

PooledOutput pool_max(const Tensor& x, const Tensor& mask) {
  const auto [B, T, K] = geometry(x);
  Tensor y({B, K});
  for (std::size_t b = 0; b < B; ++b) {
    double* out = &y[b * K];
    bool seen = false;
    for (std::size_t t = 0; t < T; ++t) {
      if (mask[b * T + t] == 0.0) continue;
      const double* row = &x[(b * T + t) * K];
      if (!seen) {
        std::copy(row, row + K, out);
        seen = true;
        continue;
      }
      for (std::size_t k = 0; k < K; ++k) out[k] = std::max(out[k], row[k]);
    }
    if (!seen) throw EmptySequenceError("row " + std::to_string(b) + " has no valid frames", b);
  }
  return {std::move(y), std::nullopt, std::nullopt, std::nullopt};
}

PooledOutput pool_average(const Tensor& x, const Tensor& mask) {
  const auto [B, T, K] = geometry(x);
  Tensor y({B, K});
  for (std::size_t b = 0; b < B; ++b) {
    double* out = &y[b * K];
    double count = 0.0;
    for (std::size_t t = 0; t < T; ++t) {
      if (mask[b * T + t] == 0.0) continue;
      const double* row = &x[(b * T + t) * K];
      for (std::size_t k = 0; k < K; ++k) out[k] += row[k];
      count += 1.0;
    }
    if (count == 0.0) throw EmptySequenceError("row " + std::to_string(b) + " has no valid frames", b);
    for (std::size_t k = 0; k < K; ++k) out[k] /= count;
  }
  Tensor means(Tensor::Dims{B, 1, 1, K}, y.vec());
  return {std::move(y), std::nullopt, std::move(means), std::nullopt};
}

PooledOutput pool_statistics(const Tensor& x, const Tensor& mask) {
  const auto [B, T, K] = geometry(x);
  PooledOutput avg = pool_average(x, mask);
  Tensor y({B, 2 * K});
  Tensor sd({B, 1, 1, K});
  for (std::size_t b = 0; b < B; ++b) {
    const double* mu = &avg.embedding[b * K];
    double* var = &sd[b * K];
    double count = 0.0;
    for (std::size_t t = 0; t < T; ++t) {
      if (mask[b * T + t] == 0.0) continue;
      const double* row = &x[(b * T + t) * K];
      for (std::size_t k = 0; k < K; ++k) {
        const double d = row[k] - mu[k];
        var[k] += d * d;
      }
      count += 1.0;
    }
    for (std::size_t k = 0; k < K; ++k) {
      var[k] = std::sqrt(var[k] / count);
      y[b * 2 * K + k] = mu[k];
      y[b * 2 * K + K + k] = var[k];
    }
  }
  return {std::move(y), std::nullopt, std::move(avg.means), std::move(sd)};
}

PooledOutput pool_max(const SequenceBatch& batch) {
  validate_batch(batch);
  return pool_max(batch.features, batch.mask);
}

PooledOutput pool_average(const SequenceBatch& batch) {
  validate_batch(batch);
  return pool_average(batch.features, batch.mask);
}

PooledOutput pool_statistics(const SequenceBatch& batch) {
  validate_batch(batch);
  return pool_statistics(batch.features, batch.mask);
}

// ---- attentive pooling -----------------------------------------------------

Tensor score_frames(const Tensor& x, const Tensor& mask, const PoolingConfig& cfg) {
  check_attentive(cfg);
  check_features(x, cfg);
  const auto [B, T, K] = geometry(x);
  const std::size_t Q = cfg.queries, H = cfg.heads, kp = cfg.head_size();
  Tensor scores({B, Q, H, T});
  std::vector<double> hidden;
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t q = 0; q < Q; ++q) {
      for (std::size_t h = 0; h < H; ++h) {
        const std::size_t qh = q * H + h;
        double* row = &scores[((b * Q + q) * H + h) * T];
        for (std::size_t t = 0; t < T; ++t) {
          if (mask[b * T + t] == 0.0) {
            row[t] = kMaskedScore;
            continue;
          }
          row[t] = score_part(cfg, qh, &x[(b * T + t) * K + h * kp], hidden);
        }
      }
    }
  }
  return scores;
}

Tensor score_frames(const SequenceBatch& batch, const PoolingConfig& cfg) {
  validate_batch(batch);
  return score_frames(batch.features, batch.mask, cfg);
}

Tensor attention_weights(const Tensor& scores) {
  if (scores.rank() == 0) throw ShapeError("attention scores must have a frame axis");
  const std::size_t T = scores.dims().back();
  const std::size_t rows = scores.numel() / T;
  Tensor w(scores.dims());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* s = &scores[r * T];
    double* out = &w[r * T];
    double top = kMaskedScore;
    bool any = false;
    for (std::size_t t = 0; t < T; ++t) {
      if (s[t] == kMaskedScore) continue;
      top = any ? std::max(top, s[t]) : s[t];
      any = true;
    }
    if (!any) throw EmptySequenceError("attention row " + std::to_string(r) + " is fully masked", r);
    double total = 0.0;
    for (std::size_t t = 0; t < T; ++t) {
      out[t] = s[t] == kMaskedScore ? 0.0 : std::exp(s[t] - top);
      total += out[t];
    }
    for (std::size_t t = 0; t < T; ++t) out[t] /= total;
  }
  return w;
}

PooledOutput weighted_statistics(const Tensor& x, const Tensor& mask, const Tensor& weights) {
  const auto [B, T, K] = geometry(x);
  if (weights.rank() != 4 || weights.dim(0) != B || weights.dim(3) != T) {
    throw ShapeError("attention weights " + dims_to_string(weights.dims()) +
                     " do not match features " + dims_to_string(x.dims()));
  }
  const std::size_t Q = weights.dim(1), H = weights.dim(2);
  if (K % H != 0) throw ConfigError("heads must divide the feature size");
  const std::size_t kp = K / H;
  Tensor y({B, 2 * Q * K});
  Tensor mu({B, Q, H, kp});
  Tensor sd({B, Q, H, kp});
  std::vector<double> second(kp);
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t q = 0; q < Q; ++q) {
      for (std::size_t h = 0; h < H; ++h) {
        const std::size_t part = (b * Q + q) * H + h;
        const double* w = &weights[part * T];
        double* m = &mu[part * kp];
        std::fill(second.begin(), second.end(), 0.0);
        for (std::size_t t = 0; t < T; ++t) {
          if (mask[b * T + t] == 0.0) continue;
          const double* xs = &x[(b * T + t) * K + h * kp];
          for (std::size_t k = 0; k < kp; ++k) m[k] += w[t] * xs[k];
        }
        // Centered second moment: equals E[x^2] - mu^2 on the simplex and is
        // exactly zero for a single valid frame.
        for (std::size_t t = 0; t < T; ++t) {
          if (mask[b * T + t] == 0.0) continue;
          const double* xs = &x[(b * T + t) * K + h * kp];
          for (std::size_t k = 0; k < kp; ++k) {
            const double d = xs[k] - m[k];
            second[k] += w[t] * d * d;
          }
        }
        double* s = &sd[part * kp];
        double* out = &y[b * 2 * Q * K + (q * H + h) * 2 * kp];
        for (std::size_t k = 0; k < kp; ++k) {
          s[k] = std::sqrt(std::max(second[k], 0.0));
          out[k] = m[k];
          out[kp + k] = s[k];
        }
      }
    }
  }
  return {std::move(y), weights, std::move(mu), std::move(sd)};
}

PooledOutput pool_mqmha(const SequenceBatch& batch, const PoolingConfig& cfg) {
  validate_batch(batch);
  const Tensor scores = score_frames(batch.features, batch.mask, cfg);
  return weighted_statistics(batch.features, batch.mask, attention_weights(scores));
}

PooledOutput pool(const SequenceBatch& batch, const PoolingConfig& cfg) {
  switch (cfg.kind) {
    case PoolingKind::Max: return pool_max(batch);
    case PoolingKind::Average: return pool_average(batch);
    case PoolingKind::Statistics: return pool_statistics(batch);
    case PoolingKind::Attentive: return pool_mqmha(batch, cfg);
  }
  throw ConfigError("unknown pooling kind");
}

// ---- backward kernels ------------------------------------------------------

Tensor pool_max_backward(const Tensor& x, const Tensor& mask, const Tensor& grad) {
  const auto [B, T, K] = geometry(x);
  Tensor gx(x.dims());
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t k = 0; k < K; ++k) {
      std::size_t arg = T;
      for (std::size_t t = 0; t < T; ++t) {
        if (mask[b * T + t] == 0.0) continue;
        if (arg == T || x[(b * T + t) * K + k] > x[(b * T + arg) * K + k]) arg = t;
      }
      gx[(b * T + arg) * K + k] += grad[b * K + k];
    }
  }
  return gx;
}

Tensor pool_average_backward(const Tensor& x, const Tensor& mask, const Tensor& grad) {
  const auto [B, T, K] = geometry(x);
  Tensor gx(x.dims());
  for (std::size_t b = 0; b < B; ++b) {
    double count = 0.0;
    for (std::size_t t = 0; t < T; ++t) count += mask[b * T + t];
    for (std::size_t t = 0; t < T; ++t) {
      if (mask[b * T + t] == 0.0) continue;
      for (std::size_t k = 0; k < K; ++k) gx[(b * T + t) * K + k] = grad[b * K + k] / count;
    }
  }
  return gx;
}

Tensor pool_statistics_backward(const Tensor& x, const Tensor& mask, const PooledOutput& out,
                                const Tensor& grad) {
  const auto [B, T, K] = geometry(x);
  Tensor gx(x.dims());
  for (std::size_t b = 0; b < B; ++b) {
    double count = 0.0;
    for (std::size_t t = 0; t < T; ++t) count += mask[b * T + t];
    const double* mu = &out.embedding[b * 2 * K];
    const double* sigma = mu + K;
    const double* g_mu = &grad[b * 2 * K];
    const double* g_sigma = g_mu + K;
    for (std::size_t t = 0; t < T; ++t) {
      if (mask[b * T + t] == 0.0) continue;
      for (std::size_t k = 0; k < K; ++k) {
        const double guarded = std::sqrt(std::max(sigma[k] * sigma[k], kSqrtGuard));
        const double centered = x[(b * T + t) * K + k] - mu[k];
        gx[(b * T + t) * K + k] = g_mu[k] / count + g_sigma[k] * centered / (count * guarded);
      }
    }
  }
  return gx;
}

ScoreGradients score_frames_backward(const Tensor& x, const Tensor& mask,
                                     const PoolingConfig& cfg, const Tensor& grad_scores) {
  check_attentive(cfg);
  check_features(x, cfg);
  const auto [B, T, K] = geometry(x);
  const std::size_t Q = cfg.queries, H = cfg.heads, kp = cfg.head_size(), p = cfg.hidden_size;
  ScoreGradients g{Tensor(x.dims()), {}};
  for (const auto& s : cfg.scorer) g.scorer.emplace_back(s.dims());
  std::vector<double> hidden(p), g_hidden(p);
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t t = 0; t < T; ++t) {
      if (mask[b * T + t] == 0.0) continue;
      for (std::size_t q = 0; q < Q; ++q) {
        for (std::size_t h = 0; h < H; ++h) {
          const std::size_t qh = q * H + h;
          const double ge = grad_scores[((b * Q + q) * H + h) * T + t];
          if (ge == 0.0) continue;
          const double* part = &x[(b * T + t) * K + h * kp];
          double* g_part = &g.features[(b * T + t) * K + h * kp];
          if (cfg.scorer_depth == 1) {
            const double* w = cfg.scorer[0].data().data() + qh * kp;
            double* gw = g.scorer[0].data().data() + qh * kp;
            for (std::size_t k = 0; k < kp; ++k) {
              gw[k] += ge * part[k];
              g_part[k] += ge * w[k];
            }
            g.scorer[1][qh] += ge;
            continue;
          }
          const double* w1 = cfg.scorer[0].data().data() + qh * kp * p;
          const double* b1 = cfg.scorer[1].data().data() + qh * p;
          const double* w2 = cfg.scorer[2].data().data() + qh * p;
          double* gw1 = g.scorer[0].data().data() + qh * kp * p;
          double* gb1 = g.scorer[1].data().data() + qh * p;
          double* gw2 = g.scorer[2].data().data() + qh * p;
          hidden.assign(b1, b1 + p);
          for (std::size_t k = 0; k < kp; ++k) {
            for (std::size_t j = 0; j < p; ++j) hidden[j] += part[k] * w1[k * p + j];
          }
          for (std::size_t j = 0; j < p; ++j) {
            const bool active = hidden[j] > 0.0;
            gw2[j] += ge * (active ? hidden[j] : 0.0);
            g_hidden[j] = active ? ge * w2[j] : 0.0;
            gb1[j] += g_hidden[j];
          }
          for (std::size_t k = 0; k < kp; ++k) {
            double acc = 0.0;
            for (std::size_t j = 0; j < p; ++j) {
              gw1[k * p + j] += part[k] * g_hidden[j];
              acc += w1[k * p + j] * g_hidden[j];
            }
            g_part[k] += acc;
          }
          g.scorer[3][qh] += ge;
        }
      }
    }
  }
  return g;
}

Tensor attention_weights_backward(const Tensor& weights, const Tensor& grad_weights) {
  const std::size_t T = weights.dims().back();
  const std::size_t rows = weights.numel() / T;
  Tensor gs(weights.dims());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* w = &weights[r * T];
    const double* gw = &grad_weights[r * T];
    double dot = 0.0;
    for (std::size_t t = 0; t < T; ++t) dot += w[t] * gw[t];
    for (std::size_t t = 0; t < T; ++t) gs[r * T + t] = w[t] * (gw[t] - dot);
  }
  return gs;
}

WeightedStatisticsGradients weighted_statistics_backward(const Tensor& x, const Tensor& mask,
                                                         const Tensor& weights,
                                                         const PooledOutput& out,
                                                         const Tensor& grad) {
  const auto [B, T, K] = geometry(x);
  const std::size_t Q = weights.dim(1), H = weights.dim(2), kp = K / H;
  WeightedStatisticsGradients g{Tensor(x.dims()), Tensor(weights.dims())};
  std::vector<double> g_mu(kp), g_var(kp), resid(kp);
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t q = 0; q < Q; ++q) {
      for (std::size_t h = 0; h < H; ++h) {
        const std::size_t part = (b * Q + q) * H + h;
        const double* mu = &(*out.means)[part * kp];
        const double* sigma = &(*out.deviations)[part * kp];
        const double* gy = &grad[b * 2 * Q * K + (q * H + h) * 2 * kp];
        const double* w = &weights[part * T];
        // resid = sum_t w_t (x_t - mu), zero when the weights sum to one.
        std::fill(resid.begin(), resid.end(), 0.0);
        for (std::size_t t = 0; t < T; ++t) {
          if (mask[b * T + t] == 0.0) continue;
          const double* xs = &x[(b * T + t) * K + h * kp];
          for (std::size_t k = 0; k < kp; ++k) resid[k] += w[t] * (xs[k] - mu[k]);
        }
        for (std::size_t k = 0; k < kp; ++k) {
          const double radicand = std::max(sigma[k] * sigma[k], kSqrtGuard);
          g_var[k] = gy[kp + k] / (2.0 * std::sqrt(radicand));
          g_mu[k] = gy[k] - 2.0 * resid[k] * g_var[k];
        }
        double* gw = &g.weights[part * T];
        for (std::size_t t = 0; t < T; ++t) {
          if (mask[b * T + t] == 0.0) continue;
          const double* xs = &x[(b * T + t) * K + h * kp];
          double* gx = &g.features[(b * T + t) * K + h * kp];
          double acc = 0.0;
          for (std::size_t k = 0; k < kp; ++k) {
            const double d = xs[k] - mu[k];
            acc += xs[k] * g_mu[k] + d * d * g_var[k];
            gx[k] += w[t] * (g_mu[k] + 2.0 * d * g_var[k]);
          }
          gw[t] = acc;
        }
      }
    }
  }
  return g;
}

}  // namespace mqpool
