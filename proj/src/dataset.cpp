// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The mqpool Authors
#include "mqpool/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

#include "mqpool/errors.hpp"
#include "mqpool/rng.hpp"
#include "mqpool/serialization.hpp"

namespace mqpool {

void LabeledDataset::validate() const {
  if (classes < 2) throw ConfigError("dataset needs at least 2 classes");
  std::set<std::string> ids;
  for (const auto& it : items) {
    if (it.label >= classes) {
      throw LabelError("item " + it.id + " has label " + std::to_string(it.label) +
                       " outside [0, " + std::to_string(classes) + ")");
    }
    if (!ids.insert(it.id).second) throw DataError("duplicate item id " + it.id);
    if (it.audio.rank() != 2 || it.audio_mask.rank() != 1 ||
        it.audio_mask.dim(0) != it.audio.dim(0) || it.text.rank() != 2 ||
        it.text_mask.rank() != 1 || it.text_mask.dim(0) != it.text.dim(0)) {
      throw ShapeError("item " + it.id + " has inconsistent frame/mask shapes");
    }
    if (it.energy && (it.energy->rank() != 1 || it.energy->dim(0) != it.audio.dim(0))) {
      throw ShapeError("item " + it.id + " energy length differs from audio frames");
    }
  }
}

std::vector<std::size_t> LabeledDataset::class_counts() const {
  std::vector<std::size_t> counts(classes, 0);
  for (const auto& it : items) ++counts.at(it.label);
  return counts;
}

namespace {

double to_float(double v) { return static_cast<double>(static_cast<float>(v)); }

// Frames [L, K] of background noise with a cue window at [start, start+len).
Tensor planted_frames(std::size_t frames, std::size_t width, std::size_t start, std::size_t len,
                      std::size_t label, std::size_t classes, double salience,
                      double class_gain, double noise, Rng& rng) {
  Tensor x({frames, width});
  for (std::size_t t = 0; t < frames; ++t) {
    const bool cue = t >= start && t < start + len;
    for (std::size_t k = 0; k < width; ++k) {
      double v = noise * rng.normal();
      if (cue) v += salience + (k % classes == label ? class_gain : 0.0);
      x(t, k) = to_float(v);
    }
  }
  return x;
}

std::size_t ceil_frac(double frac, std::size_t n) {
  return static_cast<std::size_t>(std::ceil(frac * static_cast<double>(n)));
}

}  // namespace

LabeledDataset synth_dataset(const SynthConfig& cfg) {
  if (cfg.classes < 2) throw ConfigError("synthetic data needs at least 2 classes");
  if (cfg.items == 0 || cfg.input_size == 0) throw ConfigError("synthetic data needs N, K_in >= 1");
  if (cfg.cue_len == 0 || cfg.cue_len >= std::min(cfg.audio_frames, cfg.text_frames)) {
    throw ConfigError("cue_len " + std::to_string(cfg.cue_len) + " must be in [1, min(T_audio=" +
                      std::to_string(cfg.audio_frames) + ", T_text=" +
                      std::to_string(cfg.text_frames) + "))");
  }
  if (!(cfg.noise >= 0.0)) throw ConfigError("noise must be non-negative");
  if (!std::isfinite(cfg.salience) || !std::isfinite(cfg.class_gain) ||
      !std::isfinite(cfg.text_class_gain)) {
    throw ConfigError("cue gains must be finite");
  }
  Rng rng(cfg.seed, "synth");
  LabeledDataset d;
  d.classes = cfg.classes;
  d.items.reserve(cfg.items);
  const std::size_t audio_min = std::max(cfg.cue_len + 1, ceil_frac(0.8, cfg.audio_frames));
  const std::size_t text_min = std::max(cfg.cue_len + 1, ceil_frac(0.6, cfg.text_frames));
  for (std::size_t i = 0; i < cfg.items; ++i) {
    Item it;
    char id[32];
    std::snprintf(id, sizeof id, "utt_%06zu", i);
    it.id = id;
    it.label = rng.below(cfg.classes);
    const std::size_t la = audio_min + rng.below(cfg.audio_frames - audio_min + 1);
    const std::size_t lt = text_min + rng.below(cfg.text_frames - text_min + 1);
    const std::size_t sa = rng.below(la - cfg.cue_len + 1);
    const std::size_t st = rng.below(lt - cfg.cue_len + 1);
    it.audio = planted_frames(la, cfg.input_size, sa, cfg.cue_len, it.label, cfg.classes,
                              cfg.salience, cfg.class_gain, cfg.noise, rng);
    it.text = planted_frames(lt, cfg.input_size, st, cfg.cue_len, it.label, cfg.classes,
                             cfg.salience, cfg.text_class_gain, cfg.noise, rng);
    it.audio_mask = Tensor::full({la}, 1.0);
    it.text_mask = Tensor::full({lt}, 1.0);
    if (sa > 0) it.phonemes.push_back({"BG", 0, sa});
    it.phonemes.push_back({"CUE", sa, sa + cfg.cue_len});
    if (sa + cfg.cue_len < la) it.phonemes.push_back({"BG", sa + cfg.cue_len, la});
    Tensor energy({la});
    for (std::size_t t = 0; t < la; ++t) {
      double e = 0.0;
      for (std::size_t k = 0; k < cfg.input_size; ++k) e += it.audio(t, k) * it.audio(t, k);
      energy[t] = to_float(e / static_cast<double>(cfg.input_size));
    }
    it.energy = std::move(energy);
    d.items.push_back(std::move(it));
  }
  return d;
}

namespace {

std::vector<std::vector<std::size_t>> indices_by_class(const LabeledDataset& d) {
  std::vector<std::vector<std::size_t>> by(d.classes);
  for (std::size_t i = 0; i < d.items.size(); ++i) by.at(d.items[i].label).push_back(i);
  return by;
}

LabeledDataset select(const LabeledDataset& d, const std::vector<bool>& keep, bool value) {
  LabeledDataset out;
  out.classes = d.classes;
  for (std::size_t i = 0; i < d.items.size(); ++i) {
    if (keep[i] == value) out.items.push_back(d.items[i]);
  }
  return out;
}

}  // namespace

LabeledDataset subsample_majority(const LabeledDataset& d, double max_ratio, std::uint64_t seed) {
  if (!(max_ratio >= 1.0)) throw ConfigError("max_ratio must be >= 1");
  auto by = indices_by_class(d);
  std::size_t min_count = d.items.size();
  for (std::size_t c = 0; c < by.size(); ++c) {
    if (by[c].empty()) throw DegenerateClassError("class " + std::to_string(c) + " is empty");
    min_count = std::min(min_count, by[c].size());
  }
  const auto cap = static_cast<std::size_t>(std::ceil(max_ratio * static_cast<double>(min_count)));
  Rng rng(seed, "subsample");
  std::vector<bool> keep(d.items.size(), true);
  for (auto& idx : by) {
    if (idx.size() <= cap) continue;
    rng.shuffle(idx);
    for (std::size_t j = cap; j < idx.size(); ++j) keep[idx[j]] = false;
  }
  return select(d, keep, true);
}

std::pair<LabeledDataset, LabeledDataset> balanced_dev_split(const LabeledDataset& d,
                                                             std::size_t per_class,
                                                             std::uint64_t seed) {
  auto by = indices_by_class(d);
  for (std::size_t c = 0; c < by.size(); ++c) {
    if (by[c].size() < per_class) {
      throw SamplingError("class " + std::to_string(c) + " has " + std::to_string(by[c].size()) +
                          " items, dev split needs " + std::to_string(per_class));
    }
  }
  Rng rng(seed, "split");
  std::vector<bool> dev(d.items.size(), false);
  for (auto& idx : by) {
    rng.shuffle(idx);
    for (std::size_t j = 0; j < per_class; ++j) dev[idx[j]] = true;
  }
  return {select(d, dev, true), select(d, dev, false)};
}

// ---- on-disk format ----------------------------------------------------------

void write_dataset(const LabeledDataset& d, const std::filesystem::path& dir) {
  d.validate();
  namespace fs = std::filesystem;
  fs::create_directories(dir / "tensors");
  std::ostringstream manifest;
  for (const auto& it : d.items) {
    const std::string base = "tensors/" + it.id;
    json line{{"id", it.id},
              {"label", it.label},
              {"num_classes", d.classes},
              {"audio", base + ".audio.mqt"},
              {"audio_mask", base + ".audio_mask.mqt"},
              {"text", base + ".text.mqt"},
              {"text_mask", base + ".text_mask.mqt"}};
    tensor_write(it.audio, dir / (base + ".audio.mqt"));
    tensor_write(it.audio_mask, dir / (base + ".audio_mask.mqt"));
    tensor_write(it.text, dir / (base + ".text.mqt"));
    tensor_write(it.text_mask, dir / (base + ".text_mask.mqt"));
    if (it.energy) {
      line["energy"] = base + ".energy.mqt";
      tensor_write(*it.energy, dir / (base + ".energy.mqt"));
    }
    json spans = json::array();
    for (const auto& s : it.phonemes) {
      spans.push_back({{"sym", s.symbol}, {"start", s.start}, {"end", s.end}});
    }
    line["phonemes"] = std::move(spans);
    manifest << line.dump() << '\n';
  }
  write_text_file(dir / "manifest.jsonl", manifest.str());
}

LabeledDataset read_dataset(const std::filesystem::path& dir) {
  const auto path = dir / "manifest.jsonl";
  if (!std::filesystem::exists(path)) throw IoError("dataset manifest not found: " + path.string());
  std::istringstream in(read_text_file(path));
  LabeledDataset d;
  std::string line;
  std::size_t line_no = 0;
  std::size_t max_label = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      reject_unknown_keys(j, {"id", "label", "num_classes", "audio", "audio_mask", "text",
                              "text_mask", "energy", "phonemes"},
                          "manifest line " + std::to_string(line_no));
      Item it;
      it.id = j.at("id").get<std::string>();
      it.label = j.at("label").get<std::size_t>();
      it.audio = tensor_read(dir / j.at("audio").get<std::string>());
      it.audio_mask = tensor_read(dir / j.at("audio_mask").get<std::string>());
      it.text = tensor_read(dir / j.at("text").get<std::string>());
      it.text_mask = tensor_read(dir / j.at("text_mask").get<std::string>());
      if (j.contains("energy")) it.energy = tensor_read(dir / j.at("energy").get<std::string>());
      for (const auto& s : j.value("phonemes", json::array())) {
        it.phonemes.push_back({s.at("sym").get<std::string>(), s.at("start").get<std::size_t>(),
                               s.at("end").get<std::size_t>()});
      }
      if (j.contains("num_classes")) {
        d.classes = std::max(d.classes, j.at("num_classes").get<std::size_t>());
      }
      max_label = std::max(max_label, it.label);
      d.items.push_back(std::move(it));
    } catch (const json::exception& e) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  d.classes = std::max(d.classes, max_label + 1);
  d.validate();
  return d;
}

}  // namespace mqpool
