// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The mqpool Authors
#include "mqpool/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "mqpool/errors.hpp"
#include "mqpool/serialization.hpp"

namespace mqpool {

HeadAggregation parse_head_aggregation(std::string_view s) {
  if (s == "mean") return HeadAggregation::Mean;
  if (s == "max") return HeadAggregation::Max;
  throw ConfigError("head aggregation must be mean or max, got '" + std::string(s) + "'");
}

void AttentionDump::validate() const {
  for (const auto& u : utterances) {
    const Tensor& w = u.weights;
    if (w.rank() != 3 || w.dim(2) != u.frames.size()) {
      throw ShapeError("utterance " + u.id + " weights " + dims_to_string(w.dims()) +
                       " do not match " + std::to_string(u.frames.size()) + " frames");
    }
    if (!u.energy.empty() && u.energy.size() != u.frames.size()) {
      throw ShapeError("utterance " + u.id + " energy length differs from frames");
    }
    const std::size_t T = w.dim(2);
    for (std::size_t r = 0; r < w.dim(0) * w.dim(1); ++r) {
      double sum = 0.0;
      for (std::size_t t = 0; t < T; ++t) {
        const double v = w.data()[r * T + t];
        if (!(v >= 0.0)) throw DataError("utterance " + u.id + " has a negative attention weight");
        sum += v;
      }
      if (std::abs(sum - 1.0) > kDumpSumTolerance) {
        throw DataError("utterance " + u.id + " attention row sums to " + std::to_string(sum));
      }
    }
  }
}

const UtteranceAttention& AttentionDump::find(std::string_view id) const {
  for (const auto& u : utterances) {
    if (u.id == id) return u;
  }
  throw LookupError("no utterance '" + std::string(id) + "' in attention dump");
}

std::vector<double> AttentionDump::frame_weights(std::size_t utterance, HeadAggregation agg) const {
  const Tensor& w = utterances.at(utterance).weights;
  const std::size_t rows = w.dim(0) * w.dim(1);
  const std::size_t T = w.dim(2);
  std::vector<double> out(T, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t t = 0; t < T; ++t) {
      const double v = w.data()[r * T + t];
      out[t] = agg == HeadAggregation::Mean ? out[t] + v : std::max(out[t], v);
    }
  }
  const double sum = std::accumulate(out.begin(), out.end(), 0.0);
  if (!(sum > 0.0)) throw DegenerateInputError("utterance has zero attention mass");
  for (double& v : out) v /= sum;
  return out;
}

AttentionDump make_dump(const LabeledDataset& d, const std::vector<Tensor>& weights,
                        const std::vector<std::vector<std::size_t>>& frames) {
  if (weights.size() != d.items.size() || frames.size() != d.items.size()) {
    throw ShapeError("attention list does not match the dataset");
  }
  AttentionDump dump;
  for (std::size_t i = 0; i < d.items.size(); ++i) {
    UtteranceAttention u{d.items[i].id, weights[i], frames[i], {}, d.items[i].phonemes};
    if (d.items[i].energy) {
      for (auto f : frames[i]) u.energy.push_back((*d.items[i].energy)[f]);
    }
    dump.utterances.push_back(std::move(u));
  }
  dump.validate();
  return dump;
}

// ---- dump files --------------------------------------------------------------

void write_attention_dump(const AttentionDump& dump, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "attention");
  json index{{"format", "mqpool-attention-1"}, {"utterances", json::array()}};
  for (const auto& u : dump.utterances) {
    const std::string base = "attention/" + u.id;
    json e{{"id", u.id}, {"weights", base + ".weights.mqt"}, {"frames", u.frames}};
    tensor_write(u.weights, dir / (base + ".weights.mqt"));
    if (!u.energy.empty()) {
      e["energy"] = base + ".energy.mqt";
      tensor_write(Tensor({u.energy.size()}, u.energy), dir / (base + ".energy.mqt"));
    }
    json spans = json::array();
    for (const auto& s : u.spans) spans.push_back({{"sym", s.symbol}, {"start", s.start}, {"end", s.end}});
    e["spans"] = std::move(spans);
    index["utterances"].push_back(std::move(e));
  }
  write_text_file(dir / "index.json", index.dump(1) + "\n");
}

AttentionDump read_attention_dump(const std::filesystem::path& dir) {
  const auto path = dir / "index.json";
  if (!std::filesystem::exists(path)) throw IoError("attention index not found: " + path.string());
  AttentionDump dump;
  try {
    const json index = json::parse(read_text_file(path));
    reject_unknown_keys(index, {"format", "utterances"}, "attention index");
    if (index.at("format") != "mqpool-attention-1") throw FormatError("unknown attention dump format");
    for (const auto& e : index.at("utterances")) {
      reject_unknown_keys(e, {"id", "weights", "frames", "energy", "spans"}, "attention entry");
      UtteranceAttention u;
      u.id = e.at("id").get<std::string>();
      u.weights = tensor_read(dir / e.at("weights").get<std::string>());
      u.frames = e.at("frames").get<std::vector<std::size_t>>();
      if (e.contains("energy")) u.energy = tensor_read(dir / e.at("energy").get<std::string>()).vec();
      for (const auto& s : e.value("spans", json::array())) {
        u.spans.push_back({s.at("sym").get<std::string>(), s.at("start").get<std::size_t>(),
                           s.at("end").get<std::size_t>()});
      }
      // Narrowed to f32 on disk; restore exact row normalization.
      if (u.weights.rank() == 3) {
        const std::size_t T = u.weights.dim(2);
        auto w = u.weights.data();
        for (std::size_t r = 0; r * T < w.size(); ++r) {
          double sum = 0.0;
          for (std::size_t t = 0; t < T; ++t) sum += w[r * T + t];
          if (sum > 0.0) {
            for (std::size_t t = 0; t < T; ++t) w[r * T + t] /= sum;
          }
        }
      }
      dump.utterances.push_back(std::move(u));
    }
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  dump.validate();
  return dump;
}

// ---- concentration -----------------------------------------------------------

namespace {

std::vector<double> sorted_desc(std::span<const double> w) {
  std::vector<double> s(w.begin(), w.end());
  std::sort(s.begin(), s.end(), std::greater<>());
  return s;
}

// Frame positions in descending weight order, ties by index.
std::vector<std::size_t> rank_frames(const std::vector<double>& w) {
  std::vector<std::size_t> idx(w.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return w[a] > w[b]; });
  return idx;
}

std::size_t prefix_for_mass(const std::vector<double>& w, const std::vector<std::size_t>& order,
                            double mass) {
  double cum = 0.0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    cum += w[order[k]];
    if (cum >= mass - 1e-12) return k + 1;
  }
  return order.size();
}

void check_mass(double mass) {
  if (!(mass > 0.0 && mass < 1.0)) {
    throw ConfigError("mass threshold must be in (0, 1), got " + std::to_string(mass));
  }
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

double frame_fraction_for_mass(std::span<const double> weights, double mass) {
  if (weights.empty()) throw DegenerateInputError("no frames");
  const std::vector<double> w(weights.begin(), weights.end());
  const auto k = prefix_for_mass(w, rank_frames(w), mass);
  return static_cast<double>(k) / static_cast<double>(w.size());
}

ConcentrationReport cumulative_mass(const AttentionDump& dump, double mass, HeadAggregation agg) {
  check_mass(mass);
  if (dump.utterances.empty()) throw DegenerateInputError("attention dump is empty");
  ConcentrationReport r;
  r.mass = mass;
  r.curve.assign(101, 0.0);
  for (std::size_t i = 0; i < dump.utterances.size(); ++i) {
    const auto w = dump.frame_weights(i, agg);
    r.per_utterance.push_back(frame_fraction_for_mass(w, mass));
    const auto s = sorted_desc(w);
    std::vector<double> cum(s.size() + 1, 0.0);
    for (std::size_t k = 0; k < s.size(); ++k) cum[k + 1] = cum[k] + s[k];
    const double T = static_cast<double>(s.size());
    for (std::size_t g = 0; g <= 100; ++g) {
      const double x = T * static_cast<double>(g) / 100.0;
      const auto k = std::min(s.size(), static_cast<std::size_t>(std::floor(x)));
      const double part = k < s.size() ? (x - static_cast<double>(k)) * s[k] : 0.0;
      r.curve[g] += std::min(1.0, cum[k] + part);
    }
  }
  const double n = static_cast<double>(dump.utterances.size());
  for (double& c : r.curve) c /= n;
  r.mean_fraction = std::accumulate(r.per_utterance.begin(), r.per_utterance.end(), 0.0) / n;
  return r;
}

std::string concentration_csv(const ConcentrationReport& r) {
  std::ostringstream os;
  os << "# mass=" << fmt(r.mass) << " mean_frame_fraction=" << fmt(r.mean_fraction)
     << " utterances=" << r.per_utterance.size() << '\n';
  os << "frame_fraction,cumulative_mass\n";
  for (std::size_t g = 0; g < r.curve.size(); ++g) {
    os << fmt(static_cast<double>(g) / 100.0) << ',' << fmt(r.curve[g]) << '\n';
  }
  return os.str();
}

// ---- energy correlation ------------------------------------------------------

double pearson(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2) {
    throw ShapeError("pearson needs two series of equal length >= 2");
  }
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma, db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (!(saa > 0.0 && sbb > 0.0)) throw DegenerateInputError("pearson of a constant series");
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

CorrelationReport energy_correlation(const AttentionDump& dump,
                                     const std::vector<std::vector<double>>& energy,
                                     HeadAggregation agg) {
  if (energy.size() != dump.utterances.size()) {
    throw ShapeError("energy list has " + std::to_string(energy.size()) + " entries for " +
                     std::to_string(dump.utterances.size()) + " utterances");
  }
  CorrelationReport r;
  for (std::size_t i = 0; i < energy.size(); ++i) {
    const auto w = dump.frame_weights(i, agg);
    if (energy[i].size() != w.size()) {
      throw ShapeError("utterance " + dump.utterances[i].id + " energy length " +
                       std::to_string(energy[i].size()) + " != " + std::to_string(w.size()));
    }
    auto constant = [](const std::vector<double>& s) {
      const auto [lo, hi] = std::minmax_element(s.begin(), s.end());
      return s.size() < 2 || *lo == *hi;
    };
    if (constant(w) || constant(energy[i])) {
      ++r.excluded;
      continue;
    }
    r.per_utterance.push_back(pearson(w, energy[i]));
  }
  r.used = r.per_utterance.size();
  if (r.used == 0) throw DegenerateInputError("every utterance has a constant series");
  const double n = static_cast<double>(r.used);
  r.mean = std::accumulate(r.per_utterance.begin(), r.per_utterance.end(), 0.0) / n;
  double var = 0.0;
  for (double v : r.per_utterance) var += (v - r.mean) * (v - r.mean);
  r.stddev = std::sqrt(var / n);
  return r;
}

CorrelationReport energy_correlation(const AttentionDump& dump, HeadAggregation agg) {
  std::vector<std::vector<double>> energy;
  for (const auto& u : dump.utterances) {
    if (u.energy.empty()) throw DataError("utterance " + u.id + " has no energy series");
    energy.push_back(u.energy);
  }
  return energy_correlation(dump, energy, agg);
}

std::string correlation_csv(const CorrelationReport& r) {
  std::ostringstream os;
  os << "# pearson correlation between per-frame attention and energy\n";
  os << "mean_rho,std_rho,used,excluded\n";
  os << fmt(r.mean) << ',' << fmt(r.stddev) << ',' << r.used << ',' << r.excluded << '\n';
  return os.str();
}

// ---- phoneme salience --------------------------------------------------------

SalienceReport phoneme_salience(const AttentionDump& dump,
                                const std::vector<std::vector<PhonemeSpan>>& spans,
                                double mass_threshold, double smoothing, HeadAggregation agg) {
  check_mass(mass_threshold);
  if (!(smoothing >= 0.0)) throw ConfigError("smoothing must be non-negative");
  if (spans.size() != dump.utterances.size()) {
    throw ShapeError("span list does not match the dump");
  }
  std::map<std::string, std::size_t> all, attended;
  std::size_t covered = 0;
  for (std::size_t i = 0; i < spans.size(); ++i) {
    const auto& u = dump.utterances[i];
    const auto w = dump.frame_weights(i, agg);
    const auto order = rank_frames(w);
    const std::size_t k = prefix_for_mass(w, order, mass_threshold);
    std::vector<bool> in_top(w.size(), false);
    for (std::size_t j = 0; j < k; ++j) in_top[order[j]] = true;
    for (std::size_t j = 0; j < w.size(); ++j) {
      std::string sym = kNoSymbol;
      for (const auto& s : spans[i]) {
        if (u.frames[j] >= s.start && u.frames[j] < s.end) {
          sym = s.symbol;
          ++covered;
          break;
        }
      }
      ++all[sym];
      attended[sym];
      if (in_top[j]) ++attended[sym];
    }
  }
  if (covered == 0) throw CoverageError("phoneme spans cover no attended-utterance frames");
  double n_all = 0.0, n_att = 0.0;
  for (const auto& [s, c] : all) {
    n_all += static_cast<double>(c);
    n_att += static_cast<double>(attended[s]);
  }
  const double extra = smoothing * static_cast<double>(all.size());
  SalienceReport r;
  r.mass_threshold = mass_threshold;
  r.smoothing = smoothing;
  for (const auto& [s, c] : all) {
    SymbolSalience v;
    v.support = c;
    v.attended_support = attended[s];
    v.prior = (static_cast<double>(c) + smoothing) / (n_all + extra);
    v.attended = (static_cast<double>(v.attended_support) + smoothing) / (n_att + extra);
    v.ratio = v.attended / v.prior;
    r.symbols[s] = v;
  }
  return r;
}

SalienceReport phoneme_salience(const AttentionDump& dump, double mass_threshold,
                                double smoothing, HeadAggregation agg) {
  std::vector<std::vector<PhonemeSpan>> spans;
  for (const auto& u : dump.utterances) spans.push_back(u.spans);
  return phoneme_salience(dump, spans, mass_threshold, smoothing, agg);
}

std::string salience_csv(const SalienceReport& r) {
  std::ostringstream os;
  os << "# mass_threshold=" << fmt(r.mass_threshold) << " smoothing=" << fmt(r.smoothing) << '\n';
  os << "symbol,prior,attended,likelihood_ratio,support,attended_support\n";
  for (const auto& [s, v] : r.symbols) {
    os << s << ',' << fmt(v.prior) << ',' << fmt(v.attended) << ',' << fmt(v.ratio) << ','
       << v.support << ',' << v.attended_support << '\n';
  }
  return os.str();
}

// ---- heatmap -----------------------------------------------------------------

std::string export_heatmap(const AttentionDump& dump, std::string_view id) {
  for (std::size_t i = 0; i < dump.utterances.size(); ++i) {
    const auto& u = dump.utterances[i];
    if (u.id != id) continue;
    const std::size_t Q = u.weights.dim(0), H = u.weights.dim(1), T = u.weights.dim(2);
    std::ostringstream os;
    os << "row";
    for (std::size_t t = 0; t < T; ++t) os << ",t" << u.frames[t];
    os << '\n';
    for (std::size_t q = 0; q < Q; ++q) {
      for (std::size_t h = 0; h < H; ++h) {
        os << 'q' << q << 'h' << h;
        for (std::size_t t = 0; t < T; ++t) os << ',' << fmt(u.weights(q, h, t));
        os << '\n';
      }
    }
    os << "mean";
    for (double v : dump.frame_weights(i)) os << ',' << fmt(v);
    os << '\n';
    return os.str();
  }
  throw LookupError("no utterance '" + std::string(id) + "' in attention dump");
}

}  // namespace mqpool
