// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The mqpool Authors
#include "mqpool/model.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "mqpool/errors.hpp"
#include "mqpool/serialization.hpp"

namespace mqpool {

DenseLayer DenseLayer::xavier(std::size_t in, std::size_t out, Rng& rng) {
  DenseLayer layer{Tensor({in, out}), Tensor({out})};
  const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
  for (double& w : layer.weight.data()) w = rng.uniform(-bound, bound);
  return layer;
}

std::size_t ToyEncoder::output_size() const {
  return layers.empty() ? input_size : layers.back().bias.dim(0);
}

ToyEncoder ToyEncoder::make(std::size_t input_size, std::size_t hidden_size,
                            std::size_t output_size, std::size_t depth, Rng& rng) {
  if (depth == 0) throw ConfigError("encoder depth must be at least 1");
  ToyEncoder enc;
  enc.input_size = input_size;
  std::size_t width = input_size;
  for (std::size_t i = 0; i < depth; ++i) {
    const std::size_t out = i + 1 == depth ? output_size : hidden_size;
    enc.layers.push_back(DenseLayer::xavier(width, out, rng));
    width = out;
  }
  return enc;
}

void MultimodalModel::validate() const {
  head.audio_pooling.validate();
  head.text_pooling.validate();
  if (audio_encoder.output_size() != head.audio_pooling.feature_size ||
      text_encoder.output_size() != head.text_pooling.feature_size) {
    throw ShapeError("encoder widths do not match pooling feature sizes");
  }
  if (head.hidden.weight.dim(0) != head.fused_size()) {
    throw ShapeError("MLP input width " + std::to_string(head.hidden.weight.dim(0)) +
                     " != fused width " + std::to_string(head.fused_size()));
  }
  if (head.output.weight.dim(1) != head.classes) throw ShapeError("MLP output width != classes");
}

MultimodalModel make_model(const ModelShape& shape, std::string_view audio_variant,
                           std::string_view text_variant, std::uint64_t seed) {
  if (shape.classes < 2) throw ConfigError("need at least 2 classes");
  Rng rng(seed, "model");
  MultimodalModel m;
  m.seed = seed;
  m.audio_encoder = ToyEncoder::make(shape.audio_input, shape.encoder_hidden, shape.feature_size,
                                     shape.encoder_depth, rng);
  m.text_encoder = ToyEncoder::make(shape.text_input, shape.encoder_hidden, shape.feature_size,
                                    shape.encoder_depth, rng);
  m.head.audio_pooling = variant_config(audio_variant, shape.feature_size, shape.scorer_hidden,
                                        rng.next_u64());
  m.head.text_pooling = variant_config(text_variant, shape.feature_size, shape.scorer_hidden,
                                       rng.next_u64());
  m.head.classes = shape.classes;
  m.head.hidden = DenseLayer::xavier(m.head.fused_size(), shape.mlp_hidden, rng);
  m.head.output = DenseLayer::xavier(shape.mlp_hidden, shape.classes, rng);
  m.validate();
  return m;
}

std::vector<ParamRef> parameters(MultimodalModel& model) {
  std::vector<ParamRef> refs;
  auto add_encoder = [&](ToyEncoder& enc, const std::string& prefix, ParamGroup group) {
    for (std::size_t i = 0; i < enc.layers.size(); ++i) {
      const std::string base = prefix + ".layer" + std::to_string(i);
      refs.push_back({base + ".weight", &enc.layers[i].weight, group, i});
      refs.push_back({base + ".bias", &enc.layers[i].bias, group, i});
    }
  };
  add_encoder(model.audio_encoder, "audio_encoder", ParamGroup::AudioEncoder);
  add_encoder(model.text_encoder, "text_encoder", ParamGroup::TextEncoder);
  auto add_pooling = [&](PoolingConfig& cfg, const std::string& prefix) {
    const auto names = cfg.scorer_names();
    for (std::size_t i = 0; i < cfg.scorer.size(); ++i) {
      refs.push_back({prefix + "." + names[i], &cfg.scorer[i], ParamGroup::Head, 0});
    }
  };
  add_pooling(model.head.audio_pooling, "head.audio_pooling");
  add_pooling(model.head.text_pooling, "head.text_pooling");
  refs.push_back({"head.mlp.hidden.weight", &model.head.hidden.weight, ParamGroup::Head, 0});
  refs.push_back({"head.mlp.hidden.bias", &model.head.hidden.bias, ParamGroup::Head, 0});
  refs.push_back({"head.mlp.output.weight", &model.head.output.weight, ParamGroup::Head, 0});
  refs.push_back({"head.mlp.output.bias", &model.head.output.bias, ParamGroup::Head, 0});
  return refs;
}

std::vector<Tensor> snapshot(MultimodalModel& model) {
  std::vector<Tensor> out;
  for (const auto& p : parameters(model)) out.push_back(*p.value);
  return out;
}

void restore(MultimodalModel& model, const std::vector<Tensor>& values) {
  auto refs = parameters(model);
  if (refs.size() != values.size()) throw ShapeError("snapshot does not match model");
  for (std::size_t i = 0; i < refs.size(); ++i) {
    if (refs[i].value->dims() != values[i].dims()) throw ShapeError("snapshot block shape differs");
    *refs[i].value = values[i];
  }
}

namespace {

void check_input(const SequenceBatch& batch, const ToyEncoder& enc, const char* modality) {
  validate_batch(batch);
  if (batch.feature_size() != enc.input_size) {
    throw ShapeError(std::string(modality) + " batch width " +
                     std::to_string(batch.feature_size()) + " != encoder input " +
                     std::to_string(enc.input_size));
  }
}

}  // namespace

ModelTrace trace_forward(ad::Tape& tape, MultimodalModel& model, const SequenceBatch& audio,
                         const SequenceBatch& text, const std::vector<bool>& trainable) {
  check_input(audio, model.audio_encoder, "audio");
  check_input(text, model.text_encoder, "text");
  if (audio.batch_size() != text.batch_size()) throw ShapeError("audio/text batch sizes differ");
  auto refs = parameters(model);
  if (!trainable.empty() && trainable.size() != refs.size()) {
    throw ShapeError("trainable mask does not match parameter count");
  }
  ModelTrace trace;
  for (std::size_t i = 0; i < refs.size(); ++i) {
    trace.params.push_back(tape.leaf(*refs[i].value, trainable.empty() || trainable[i]));
  }
  std::size_t next = 0;
  auto encode = [&](const SequenceBatch& batch, const ToyEncoder& enc) {
    ad::Var h = tape.leaf(batch.features, false);
    for (std::size_t i = 0; i < enc.layers.size(); ++i) {
      h = ad::affine(h, trace.params[next], trace.params[next + 1]);
      if (i + 1 < enc.layers.size()) h = ad::tanh(h);
      next += 2;
    }
    return h;
  };
  ad::Var audio_frames = encode(audio, model.audio_encoder);
  ad::Var text_frames = encode(text, model.text_encoder);
  auto take = [&](std::size_t n) {
    std::vector<ad::Var> v(trace.params.begin() + next, trace.params.begin() + next + n);
    next += n;
    return v;
  };
  const auto audio_scorer = take(model.head.audio_pooling.scorer.size());
  const auto text_scorer = take(model.head.text_pooling.scorer.size());
  auto pa = ad::pool(audio_frames, audio.mask, model.head.audio_pooling, audio_scorer);
  auto pt = ad::pool(text_frames, text.mask, model.head.text_pooling, text_scorer);
  ad::Var fused = ad::concat(pa.embedding, pt.embedding);
  ad::Var hidden = ad::tanh(ad::affine(fused, trace.params[next], trace.params[next + 1]));
  trace.logits = ad::affine(hidden, trace.params[next + 2], trace.params[next + 3]);
  trace.audio_attention = pa.attention;
  trace.text_attention = pt.attention;
  return trace;
}

ForwardOutput forward(const SequenceBatch& audio, const SequenceBatch& text,
                      const FusionClassifier& head, const ToyEncoder& audio_encoder,
                      const ToyEncoder& text_encoder) {
  MultimodalModel model{audio_encoder, text_encoder, head, 0};
  model.validate();
  ad::Tape tape;
  std::vector<bool> frozen(parameters(model).size(), false);
  ModelTrace trace = trace_forward(tape, model, audio, text, frozen);
  ForwardOutput out{trace.logits.value(), std::nullopt, std::nullopt};
  if (trace.audio_attention) out.audio_attention = trace.audio_attention->value();
  if (trace.text_attention) out.text_attention = trace.text_attention->value();
  return out;
}

// ---- loss and metrics --------------------------------------------------------

void FocalLossConfig::validate(std::size_t classes) const {
  if (alpha.size() != classes) {
    throw ConfigError("focal loss has " + std::to_string(alpha.size()) + " class weights for " +
                      std::to_string(classes) + " classes");
  }
  for (double a : alpha) {
    if (!(a > 0.0)) throw ConfigError("focal loss class weights must be positive");
  }
  if (!(gamma >= 0.0)) throw ConfigError("focal loss gamma must be >= 0");
}

namespace {

struct FocalTerms {
  double log_p;
  double p;
  bool clamped;
};

FocalTerms true_class_terms(const double* z, std::size_t classes, std::size_t label) {
  const double top = *std::max_element(z, z + classes);
  double total = 0.0;
  for (std::size_t c = 0; c < classes; ++c) total += std::exp(z[c] - top);
  const double raw = z[label] - top - std::log(total);
  const double floor = std::log(kLogGuard);
  const bool clamped = raw < floor;
  const double log_p = clamped ? floor : raw;
  return {log_p, std::exp(log_p), clamped};
}

void check_labels(const Tensor& logits, std::span<const std::size_t> labels,
                  const FocalLossConfig& cfg) {
  if (logits.rank() != 2) throw ShapeError("logits must be [B,C]");
  if (labels.size() != logits.dim(0)) throw ShapeError("label count != batch size");
  cfg.validate(logits.dim(1));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= logits.dim(1)) {
      throw LabelError("label " + std::to_string(labels[i]) + " at row " + std::to_string(i) +
                       " is outside [0, " + std::to_string(logits.dim(1)) + ")");
    }
  }
}

}  // namespace

double focal_loss(const Tensor& logits, std::span<const std::size_t> labels,
                  const FocalLossConfig& cfg) {
  check_labels(logits, labels, cfg);
  const std::size_t B = logits.dim(0), C = logits.dim(1);
  double total = 0.0;
  for (std::size_t b = 0; b < B; ++b) {
    const auto terms = true_class_terms(&logits[b * C], C, labels[b]);
    const double modulator = cfg.gamma == 0.0 ? 1.0 : std::pow(1.0 - terms.p, cfg.gamma);
    total += -cfg.alpha[labels[b]] * modulator * terms.log_p;
  }
  return total / static_cast<double>(B);
}

Tensor focal_loss_backward(const Tensor& logits, std::span<const std::size_t> labels,
                           const FocalLossConfig& cfg) {
  check_labels(logits, labels, cfg);
  const std::size_t B = logits.dim(0), C = logits.dim(1);
  Tensor g(logits.dims());
  std::vector<double> prob(C);
  for (std::size_t b = 0; b < B; ++b) {
    const double* z = &logits[b * C];
    const auto terms = true_class_terms(z, C, labels[b]);
    if (terms.clamped) continue;
    const double q = 1.0 - terms.p;
    const double gamma = cfg.gamma;
    // dL/dlog(p) for L = -alpha (1-p)^gamma log p with p = exp(log p).
    double d_logp = gamma == 0.0 ? 1.0 : std::pow(q, gamma);
    if (gamma != 0.0 && q > 0.0) d_logp -= gamma * terms.p * terms.log_p * std::pow(q, gamma - 1.0);
    d_logp *= -cfg.alpha[labels[b]] / static_cast<double>(B);
    const double top = *std::max_element(z, z + C);
    double total = 0.0;
    for (std::size_t c = 0; c < C; ++c) total += (prob[c] = std::exp(z[c] - top));
    for (std::size_t c = 0; c < C; ++c) {
      const double indicator = c == labels[b] ? 1.0 : 0.0;
      g[b * C + c] = d_logp * (indicator - prob[c] / total);
    }
  }
  return g;
}

ad::Var focal_loss(ad::Var logits, std::vector<std::size_t> labels, const FocalLossConfig& cfg) {
  const double loss = focal_loss(logits.value(), labels, cfg);
  return logits.tape->record(
      "focal_loss", Tensor::scalar(loss), {logits},
      [logits, labels = std::move(labels), cfg](ad::Tape& tape, std::size_t self) {
        Tensor g = focal_loss_backward(logits.value(), labels, cfg);
        const double seed = tape.output_grad(self)[0];
        for (double& v : g.data()) v *= seed;
        tape.accumulate(logits, g);
      });
}

std::vector<double> alpha_from_frequencies(std::span<const std::size_t> counts) {
  if (counts.empty()) throw DegenerateClassError("no class counts given");
  std::vector<double> alpha(counts.size());
  double mean = 0.0;
  for (std::size_t c = 0; c < counts.size(); ++c) {
    if (counts[c] == 0) {
      throw DegenerateClassError("class " + std::to_string(c) + " has zero examples");
    }
    alpha[c] = 1.0 / static_cast<double>(counts[c]);
    mean += alpha[c];
  }
  mean /= static_cast<double>(counts.size());
  for (double& a : alpha) a /= mean;
  return alpha;
}

std::vector<double> per_class_f1(std::span<const std::size_t> preds,
                                 std::span<const std::size_t> labels, std::size_t classes) {
  if (preds.size() != labels.size()) throw ContractError("preds and labels differ in length");
  if (preds.empty()) throw ContractError("macro-F1 of an empty set is undefined");
  std::vector<std::size_t> tp(classes), fp(classes), fn(classes);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i] >= classes || labels[i] >= classes) {
      throw LabelError("class index outside [0, " + std::to_string(classes) + ")");
    }
    if (preds[i] == labels[i]) {
      ++tp[preds[i]];
    } else {
      ++fp[preds[i]];
      ++fn[labels[i]];
    }
  }
  std::vector<double> f1(classes, 0.0);
  for (std::size_t c = 0; c < classes; ++c) {
    const std::size_t denom = 2 * tp[c] + fp[c] + fn[c];
    if (denom > 0) f1[c] = 2.0 * static_cast<double>(tp[c]) / static_cast<double>(denom);
  }
  return f1;
}

double macro_f1(std::span<const std::size_t> preds, std::span<const std::size_t> labels,
                std::size_t classes) {
  const auto f1 = per_class_f1(preds, labels, classes);
  double total = 0.0;
  for (double v : f1) total += v;
  return total / static_cast<double>(classes);
}

std::vector<std::size_t> argmax_rows(const Tensor& logits) {
  const std::size_t B = logits.dim(0), C = logits.dim(1);
  std::vector<std::size_t> out(B);
  for (std::size_t b = 0; b < B; ++b) {
    const double* z = &logits[b * C];
    out[b] = static_cast<std::size_t>(std::max_element(z, z + C) - z);
  }
  return out;
}

// ---- checkpoints -------------------------------------------------------------

void save_checkpoint(const MultimodalModel& model, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  MultimodalModel copy = model;
  json blocks = json::array();
  for (const auto& p : parameters(copy)) {
    if (p.group == ParamGroup::Head && p.name.starts_with("head.") &&
        p.name.find("_pooling.") != std::string::npos) {
      continue;  // written by the pooling configs below
    }
    const std::string file = p.name + ".mqt";
    tensor_write(*p.value, dir / file);
    blocks.push_back({{"name", p.name}, {"file", file}, {"dims", p.value->dims()}});
  }
  json manifest{
      {"format", "mqpool-checkpoint-1"},
      {"seed", model.seed},
      {"classes", model.head.classes},
      {"audio_encoder", {{"input_size", model.audio_encoder.input_size},
                         {"layers", model.audio_encoder.layers.size()}}},
      {"text_encoder", {{"input_size", model.text_encoder.input_size},
                        {"layers", model.text_encoder.layers.size()}}},
      {"audio_pooling", pooling_to_json(model.head.audio_pooling, dir, "head.audio_pooling.")},
      {"text_pooling", pooling_to_json(model.head.text_pooling, dir, "head.text_pooling.")},
      {"blocks", std::move(blocks)},
  };
  write_text_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

MultimodalModel load_checkpoint(const std::filesystem::path& dir) {
  json manifest;
  try {
    manifest = json::parse(read_text_file(dir / "manifest.json"));
  } catch (const json::exception& e) {
    throw FormatError("checkpoint manifest: " + std::string(e.what()));
  }
  try {
    MultimodalModel m;
    m.seed = manifest.at("seed").get<std::uint64_t>();
    m.head.classes = manifest.at("classes").get<std::size_t>();
    m.head.audio_pooling = pooling_from_json(manifest.at("audio_pooling"), dir);
    m.head.text_pooling = pooling_from_json(manifest.at("text_pooling"), dir);
    std::map<std::string, Tensor> blocks;
    for (const auto& b : manifest.at("blocks")) {
      blocks[b.at("name").get<std::string>()] = tensor_read(dir / b.at("file").get<std::string>());
    }
    auto take = [&](const std::string& name) {
      auto it = blocks.find(name);
      if (it == blocks.end()) throw FormatError("checkpoint is missing block " + name);
      return it->second;
    };
    auto load_encoder = [&](const char* key, const std::string& prefix) {
      ToyEncoder enc;
      enc.input_size = manifest.at(key).at("input_size").get<std::size_t>();
      const auto layers = manifest.at(key).at("layers").get<std::size_t>();
      for (std::size_t i = 0; i < layers; ++i) {
        const std::string base = prefix + ".layer" + std::to_string(i);
        enc.layers.push_back({take(base + ".weight"), take(base + ".bias")});
      }
      return enc;
    };
    m.audio_encoder = load_encoder("audio_encoder", "audio_encoder");
    m.text_encoder = load_encoder("text_encoder", "text_encoder");
    m.head.hidden = {take("head.mlp.hidden.weight"), take("head.mlp.hidden.bias")};
    m.head.output = {take("head.mlp.output.weight"), take("head.mlp.output.bias")};
    m.validate();
    return m;
  } catch (const json::exception& e) {
    throw FormatError("checkpoint manifest: " + std::string(e.what()));
  }
}

}  // namespace mqpool
