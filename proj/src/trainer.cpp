// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The mqpool Authors
#include "mqpool/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <numeric>
#include <sstream>

#include "mqpool/errors.hpp"
#include "mqpool/rng.hpp"

namespace mqpool {

// ---- optimizer ---------------------------------------------------------------

OptimizerState OptimizerState::zeros(std::span<Tensor* const> params, AdamWConfig config) {
  OptimizerState s;
  s.config = config;
  for (const Tensor* p : params) {
    s.m.emplace_back(p->dims());
    s.v.emplace_back(p->dims());
  }
  return s;
}

void adamw_step(OptimizerState& state, std::span<const Tensor> grads,
                std::span<Tensor* const> params, double lr) {
  if (grads.size() != params.size() || state.m.size() != params.size() ||
      state.v.size() != params.size()) {
    throw ShapeError("optimizer got " + std::to_string(grads.size()) + " gradients for " +
                     std::to_string(params.size()) + " parameters and " +
                     std::to_string(state.m.size()) + " moment slots");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].dims() != params[i]->dims() || state.m[i].dims() != params[i]->dims()) {
      throw ShapeError("gradient " + dims_to_string(grads[i].dims()) + " vs parameter " +
                       dims_to_string(params[i]->dims()) + " at block " + std::to_string(i));
    }
  }
  const auto& c = state.config;
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(c.beta1, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);
  const double decay = 1.0 - lr * c.weight_decay;
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i]->data();
    auto g = grads[i].data();
    auto m = state.m[i].data();
    auto v = state.v[i].data();
    for (std::size_t j = 0; j < p.size(); ++j) {
      p[j] *= decay;
      m[j] = c.beta1 * m[j] + (1.0 - c.beta1) * g[j];
      v[j] = c.beta2 * v[j] + (1.0 - c.beta2) * g[j] * g[j];
      p[j] -= lr * (m[j] / bc1) / (std::sqrt(v[j] / bc2) + c.eps);
    }
  }
}

double lr_at(std::size_t step, std::size_t total, double warmup_frac, double eta) {
  if (total == 0) throw ContractError("lr_at needs a positive step budget");
  if (step > total) {
    throw ContractError("step " + std::to_string(step) + " beyond budget " + std::to_string(total));
  }
  const double warm = warmup_frac * static_cast<double>(total);
  const double s = static_cast<double>(step);
  if (s < warm) return eta * s / warm;
  const double span = static_cast<double>(total) - warm;
  if (span <= 0.0) return eta;
  const double progress = (s - warm) / span;
  return eta * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

// ---- batching ----------------------------------------------------------------

namespace {

SequenceBatch pad_rows(const LabeledDataset& d, std::span<const std::size_t> idx, bool audio) {
  std::size_t frames = 0;
  std::size_t width = 0;
  for (auto i : idx) {
    const Tensor& x = audio ? d.items[i].audio : d.items[i].text;
    frames = std::max(frames, x.dim(0));
    width = x.dim(1);
  }
  SequenceBatch b{Tensor({idx.size(), frames, width}), Tensor({idx.size(), frames})};
  for (std::size_t r = 0; r < idx.size(); ++r) {
    const Item& it = d.items[idx[r]];
    const Tensor& x = audio ? it.audio : it.text;
    const Tensor& m = audio ? it.audio_mask : it.text_mask;
    if (x.dim(1) != width) throw ShapeError("item " + it.id + " feature width differs in batch");
    for (std::size_t t = 0; t < x.dim(0); ++t) {
      b.mask(r, t) = m[t];
      for (std::size_t k = 0; k < width; ++k) b.features(r, t, k) = x(t, k);
    }
  }
  return b;
}

}  // namespace

Batch make_batch(const LabeledDataset& d, std::span<const std::size_t> indices) {
  if (indices.empty()) throw ContractError("empty batch");
  Batch b{pad_rows(d, indices, true), pad_rows(d, indices, false), {}};
  for (auto i : indices) b.labels.push_back(d.items.at(i).label);
  return b;
}

// ---- gradual unfreezing -----------------------------------------------------

std::string to_string(TrainableSet s) {
  switch (s) {
    case TrainableSet::HeadOnly: return "head_only";
    case TrainableSet::UpperLayersPlusHead: return "upper_layers_plus_head";
    case TrainableSet::All: return "all";
  }
  return "?";
}

void UnfreezeSchedule::validate() const {
  const TrainableSet expected[] = {TrainableSet::HeadOnly, TrainableSet::UpperLayersPlusHead,
                                   TrainableSet::All};
  for (std::size_t i = 0; i < 3; ++i) {
    const auto& p = phases[i];
    if (p.trainable != expected[i]) {
      throw ConfigError("phase " + std::to_string(i + 1) + " must train " +
                        to_string(expected[i]) + ", got " + to_string(p.trainable));
    }
    if (!(p.lr > 0.0) || !(p.warmup_fraction >= 0.0 && p.warmup_fraction < 1.0) ||
        p.max_epochs == 0) {
      throw ConfigError("phase " + std::to_string(i + 1) +
                        " needs lr > 0, warmup in [0, 1) and max_epochs >= 1");
    }
  }
  if (early_stop.patience == 0 || !(early_stop.min_delta >= 0.0)) {
    throw ConfigError("early stopping needs patience >= 1 and min_delta >= 0");
  }
  if (!(upper_fraction > 0.0 && upper_fraction <= 1.0)) {
    throw ConfigError("upper_fraction must be in (0, 1]");
  }
}

UnfreezeSchedule UnfreezeSchedule::paper_defaults() {
  UnfreezeSchedule s;
  s.phases = {PhaseSpec{TrainableSet::HeadOnly, 1e-5, 0.1, 10},
              PhaseSpec{TrainableSet::UpperLayersPlusHead, 3e-6, 0.1, 10},
              PhaseSpec{TrainableSet::All, 1e-6, 0.1, 10}};
  return s;
}

UnfreezeSchedule UnfreezeSchedule::desk_defaults() {
  UnfreezeSchedule s = paper_defaults();
  for (auto& p : s.phases) {
    p.lr *= 3000.0;
    p.max_epochs = 30;
  }
  return s;
}

std::vector<bool> trainable_mask(MultimodalModel& model, TrainableSet set, double upper_fraction) {
  const auto refs = parameters(model);
  std::vector<bool> mask(refs.size(), false);
  for (std::size_t i = 0; i < refs.size(); ++i) {
    const auto& r = refs[i];
    if (r.group == ParamGroup::Head || set == TrainableSet::All) {
      mask[i] = true;
      continue;
    }
    if (set == TrainableSet::UpperLayersPlusHead) {
      const std::size_t depth = r.group == ParamGroup::AudioEncoder
                                    ? model.audio_encoder.layers.size()
                                    : model.text_encoder.layers.size();
      const auto open = static_cast<std::size_t>(std::ceil(upper_fraction * double(depth)));
      mask[i] = r.layer + open >= depth;
    }
  }
  return mask;
}

std::string training_log_csv(const TrainingLog& log, const UnfreezeSchedule& schedule) {
  std::ostringstream os;
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "# early_stopping metric=dev_macro_f1 patience=%zu min_delta=%.17g "
                "restore=best_dev optimizer_moments=reset_per_phase\n",
                log.early_stop.patience, log.early_stop.min_delta);
  os << buf;
  for (std::size_t i = 0; i < 3; ++i) {
    const auto& p = schedule.phases[i];
    std::snprintf(buf, sizeof buf, "# phase %zu %s lr=%.17g warmup=%.17g max_epochs=%zu\n", i + 1,
                  to_string(p.trainable).c_str(), p.lr, p.warmup_fraction, p.max_epochs);
    os << buf;
  }
  os << "epoch,phase,lr,train_loss,dev_macro_f1\n";
  for (const auto& e : log.epochs) {
    std::snprintf(buf, sizeof buf, "%zu,%s,%.17g,%.17g,%.17g\n", e.epoch,
                  to_string(schedule.phases[e.phase].trainable).c_str(), e.lr, e.train_loss,
                  e.dev_macro_f1);
    os << buf;
  }
  return os.str();
}

TrainingLog run_protocol(const LabeledDataset& train, const LabeledDataset& dev,
                         MultimodalModel& model, const UnfreezeSchedule& schedule,
                         std::uint64_t seed, const TrainingOptions& options) {
  schedule.validate();
  train.validate();
  dev.validate();
  model.validate();
  if (train.items.empty() || dev.items.empty()) throw DataError("train and dev sets must be non-empty");
  if (train.classes != model.head.classes || dev.classes != model.head.classes) {
    throw ShapeError("dataset class count differs from the classifier");
  }
  if (options.batch_size == 0) throw ConfigError("batch_size must be >= 1");

  FocalLossConfig loss_cfg{alpha_from_frequencies(train.class_counts()), options.gamma};
  Rng rng(seed, "shuffle");
  TrainingLog log;
  log.early_stop = schedule.early_stop;
  auto refs = parameters(model);
  std::vector<std::size_t> order(train.items.size());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t steps_per_epoch = (order.size() + options.batch_size - 1) / options.batch_size;
  std::size_t global_epoch = 0;

  for (std::size_t phase = 0; phase < 3; ++phase) {
    const PhaseSpec& spec = schedule.phases[phase];
    const auto mask = trainable_mask(model, spec.trainable, schedule.upper_fraction);
    std::vector<Tensor*> params;
    std::vector<std::size_t> param_index;
    for (std::size_t i = 0; i < refs.size(); ++i) {
      if (mask[i]) {
        params.push_back(refs[i].value);
        param_index.push_back(i);
      }
    }
    OptimizerState opt = OptimizerState::zeros(params, {0.9, 0.999, 1e-8, options.weight_decay});
    const std::size_t total = spec.max_epochs * steps_per_epoch;
    std::size_t step = 0;
    double best = -1.0;
    std::vector<Tensor> best_params = snapshot(model);
    std::size_t stale = 0;

    for (std::size_t epoch = 0; epoch < spec.max_epochs; ++epoch) {
      rng.shuffle(order);
      double loss_sum = 0.0;
      double lr = 0.0;
      for (std::size_t start = 0; start < order.size(); start += options.batch_size) {
        const std::size_t end = std::min(order.size(), start + options.batch_size);
        const std::span<const std::size_t> idx(order.data() + start, end - start);
        Batch batch = make_batch(train, idx);
        ad::Tape tape;
        ModelTrace trace = trace_forward(tape, model, batch.audio, batch.text, mask);
        ad::Var loss = focal_loss(trace.logits, batch.labels, loss_cfg);
        tape.backward(loss);
        if (!std::isfinite(loss.value()[0])) {
          throw NumericalError("non-finite training loss in phase " + std::to_string(phase + 1));
        }
        loss_sum += loss.value()[0] * static_cast<double>(idx.size());
        std::vector<Tensor> grads;
        for (auto i : param_index) grads.push_back(tape.grad(trace.params[i]));
        lr = lr_at(++step, total, spec.warmup_fraction, spec.lr);
        adamw_step(opt, grads, params, lr);
      }
      double metric = options.dev_metric_override
                          ? options.dev_metric_override(phase, epoch)
                          : evaluate(model, dev, std::max<std::size_t>(options.batch_size, 64))
                                .macro_f1;
      log.epochs.push_back({++global_epoch, phase, lr,
                            loss_sum / static_cast<double>(order.size()), metric});
      if (metric > best + schedule.early_stop.min_delta) {
        best = metric;
        best_params = snapshot(model);
        stale = 0;
      } else if (++stale >= schedule.early_stop.patience) {
        break;
      }
    }
    restore(model, best_params);
    log.phase_best[phase] = best;
    if (options.on_phase_end) options.on_phase_end(phase, model);
  }
  log.final_dev_macro_f1 = log.phase_best[2];
  return log;
}

// ---- evaluation --------------------------------------------------------------

Evaluation evaluate(const MultimodalModel& model, const LabeledDataset& d, std::size_t batch_size,
                    bool keep_attention) {
  if (d.items.empty()) throw DataError("cannot evaluate an empty dataset");
  if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
  Evaluation ev;
  std::vector<std::size_t> idx(d.items.size());
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t start = 0; start < idx.size(); start += batch_size) {
    const std::size_t end = std::min(idx.size(), start + batch_size);
    const std::span<const std::size_t> rows(idx.data() + start, end - start);
    Batch batch = make_batch(d, rows);
    ForwardOutput out =
        forward(batch.audio, batch.text, model.head, model.audio_encoder, model.text_encoder);
    for (auto p : argmax_rows(out.logits)) ev.predictions.push_back(p);
    ev.labels.insert(ev.labels.end(), batch.labels.begin(), batch.labels.end());
    if (keep_attention && out.audio_attention) {
      const Tensor& a = *out.audio_attention;  // [B, Q, H, T]
      const std::size_t Q = a.dim(1), H = a.dim(2), T = a.dim(3);
      for (std::size_t r = 0; r < rows.size(); ++r) {
        std::vector<std::size_t> frames;
        for (std::size_t t = 0; t < T; ++t) {
          if (batch.audio.mask(r, t) != 0.0) frames.push_back(t);
        }
        Tensor w({Q, H, frames.size()});
        for (std::size_t q = 0; q < Q; ++q) {
          for (std::size_t h = 0; h < H; ++h) {
            for (std::size_t j = 0; j < frames.size(); ++j) w(q, h, j) = a(r, q, h, frames[j]);
          }
        }
        ev.audio_attention.push_back(std::move(w));
        ev.audio_frames.push_back(std::move(frames));
      }
    }
  }
  ev.per_class_f1 = per_class_f1(ev.predictions, ev.labels, d.classes);
  ev.macro_f1 = macro_f1(ev.predictions, ev.labels, d.classes);
  return ev;
}

}  // namespace mqpool
