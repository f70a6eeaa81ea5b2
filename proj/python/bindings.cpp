// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The mqpool Authors
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <algorithm>
#include <string>
#include <vector>

#include "mqpool/analysis.hpp"
#include "mqpool/cli.hpp"
#include "mqpool/dataset.hpp"
#include "mqpool/errors.hpp"
#include "mqpool/experiments.hpp"
#include "mqpool/gradcheck.hpp"
#include "mqpool/model.hpp"
#include "mqpool/pooling.hpp"
#include "mqpool/tensor.hpp"
#include "mqpool/trainer.hpp"

namespace py = pybind11;
using namespace mqpool;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const Array& a) {
  Tensor::Dims dims(a.shape(), a.shape() + a.ndim());
  std::vector<double> data(a.data(), a.data() + a.size());
  return Tensor(std::move(dims), std::move(data));
}

Array to_array(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.dims().begin(), t.dims().end());
  Array out(shape);
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

py::object optional_array(const std::optional<Tensor>& t) {
  if (!t) return py::none();
  return to_array(*t);
}

py::dict pooled_dict(const PooledOutput& out) {
  py::dict d;
  d["embedding"] = to_array(out.embedding);
  d["attention"] = optional_array(out.attention);
  d["means"] = optional_array(out.means);
  d["deviations"] = optional_array(out.deviations);
  return d;
}

std::vector<std::size_t> to_labels(const py::array_t<long long>& a) {
  std::vector<std::size_t> out;
  out.reserve(a.size());
  for (py::ssize_t i = 0; i < a.size(); ++i) {
    if (a.data()[i] < 0) throw LabelError("negative label");
    out.push_back(static_cast<std::size_t>(a.data()[i]));
  }
  return out;
}

py::dict item_dict(const Item& it) {
  py::dict d;
  d["id"] = it.id;
  d["audio"] = to_array(it.audio);
  d["audio_mask"] = to_array(it.audio_mask);
  d["text"] = to_array(it.text);
  d["text_mask"] = to_array(it.text_mask);
  d["label"] = it.label;
  py::list spans;
  for (const auto& s : it.phonemes) spans.append(py::make_tuple(s.symbol, s.start, s.end));
  d["phonemes"] = spans;
  d["energy"] = optional_array(it.energy);
  return d;
}

SynthConfig synth_from_kwargs(const py::kwargs& kw) {
  SynthConfig c;
  for (auto [k, v] : kw) {
    const auto key = k.cast<std::string>();
    if (key == "classes") c.classes = v.cast<std::size_t>();
    else if (key == "items") c.items = v.cast<std::size_t>();
    else if (key == "audio_frames") c.audio_frames = v.cast<std::size_t>();
    else if (key == "text_frames") c.text_frames = v.cast<std::size_t>();
    else if (key == "input_size") c.input_size = v.cast<std::size_t>();
    else if (key == "cue_len") c.cue_len = v.cast<std::size_t>();
    else if (key == "noise") c.noise = v.cast<double>();
    else if (key == "salience") c.salience = v.cast<double>();
    else if (key == "class_gain") c.class_gain = v.cast<double>();
    else if (key == "text_class_gain") c.text_class_gain = v.cast<double>();
    else if (key == "seed") c.seed = v.cast<std::uint64_t>();
    else throw ConfigError("unknown synth option '" + key + "'");
  }
  return c;
}

py::dict dump_dict(const AttentionDump& dump) {
  py::dict out;
  for (const auto& u : dump.utterances) {
    py::dict d;
    d["weights"] = to_array(u.weights);
    d["frames"] = u.frames;
    d["energy"] = u.energy;
    out[py::str(u.id)] = d;
  }
  return out;
}

}  // namespace

PYBIND11_MODULE(_mqpool, m) {
  m.doc() = "Masked and multi-query multi-head attentive pooling";

  // Base classes first: pybind11 tries translators newest first.
  auto error = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  auto config = py::register_exception<ConfigError>(m, "ConfigError", error.ptr());
  auto data = py::register_exception<DataError>(m, "DataError", error.ptr());
  auto numerical = py::register_exception<NumericalError>(m, "NumericalError", error.ptr());
  (void)config;
  py::register_exception<FormatError>(m, "FormatError", data.ptr());
  py::register_exception<LengthError>(m, "LengthError", data.ptr());
  py::register_exception<EmptySequenceError>(m, "EmptySequenceError", data.ptr());
  py::register_exception<MaskDomainError>(m, "MaskDomainError", data.ptr());
  py::register_exception<ShapeError>(m, "ShapeError", data.ptr());
  py::register_exception<LabelError>(m, "LabelError", data.ptr());
  py::register_exception<DegenerateClassError>(m, "DegenerateClassError", data.ptr());
  py::register_exception<SamplingError>(m, "SamplingError", data.ptr());
  py::register_exception<LookupError>(m, "LookupError", data.ptr());
  py::register_exception<CoverageError>(m, "CoverageError", data.ptr());
  py::register_exception<DegenerateInputError>(m, "DegenerateInputError", data.ptr());
  py::register_exception<ContractError>(m, "ContractError", data.ptr());
  py::register_exception<IoError>(m, "IoError", data.ptr());
  py::register_exception<DeterminismError>(m, "DeterminismError", numerical.ptr());

  // ---- pooling ----

  py::class_<PoolingConfig>(m, "PoolingConfig")
      .def_property_readonly("kind", [](const PoolingConfig& c) { return to_string(c.kind); })
      .def_readonly("feature_size", &PoolingConfig::feature_size)
      .def_readonly("queries", &PoolingConfig::queries)
      .def_readonly("heads", &PoolingConfig::heads)
      .def_readonly("scorer_depth", &PoolingConfig::scorer_depth)
      .def_readonly("hidden_size", &PoolingConfig::hidden_size)
      .def_readonly("seed", &PoolingConfig::seed)
      .def_property_readonly("head_size", &PoolingConfig::head_size)
      .def_property_readonly("output_size", &PoolingConfig::output_size)
      .def_property(
          "scorer",
          [](const PoolingConfig& c) {
            py::dict d;
            const auto names = c.scorer_names();
            for (std::size_t i = 0; i < c.scorer.size(); ++i) d[py::str(names[i])] = to_array(c.scorer[i]);
            return d;
          },
          [](PoolingConfig& c, const py::dict& d) {
            const auto names = c.scorer_names();
            std::vector<Tensor> next = c.scorer;
            for (auto [k, v] : d) {
              const auto key = k.cast<std::string>();
              auto it = std::find(names.begin(), names.end(), key);
              if (it == names.end()) throw ConfigError("unknown scorer tensor '" + key + "'");
              next[static_cast<std::size_t>(it - names.begin())] = to_tensor(v.cast<Array>());
            }
            PoolingConfig trial = c;
            trial.scorer = std::move(next);
            trial.validate();
            c = std::move(trial);
          })
      .def("zero_scorer", [](PoolingConfig& c) { zero_scorer(c); })
      .def("__repr__", [](const PoolingConfig& c) {
        return "PoolingConfig(kind=" + to_string(c.kind) + ", K=" + std::to_string(c.feature_size) +
               ", Q=" + std::to_string(c.queries) + ", H=" + std::to_string(c.heads) +
               ", n=" + std::to_string(c.scorer_depth) + ")";
      });

  m.def("variant_config", &variant_config, py::arg("name"), py::arg("feature_size"),
        py::arg("hidden_size") = 16, py::arg("seed") = 0);
  m.def("variant_names", &variant_names);

  m.def(
      "pool",
      [](const Array& x, const Array& mask, const PoolingConfig& cfg) {
        return pooled_dict(pool(SequenceBatch{to_tensor(x), to_tensor(mask)}, cfg));
      },
      py::arg("features"), py::arg("mask"), py::arg("config"),
      "Pool features [B, T, K] under mask [B, T]; returns a dict of arrays.");
  m.def(
      "pool_max",
      [](const Array& x, const Array& mask) { return to_array(pool_max(to_tensor(x), to_tensor(mask)).embedding); },
      py::arg("features"), py::arg("mask"));
  m.def(
      "pool_average",
      [](const Array& x, const Array& mask) {
        return to_array(pool_average(to_tensor(x), to_tensor(mask)).embedding);
      },
      py::arg("features"), py::arg("mask"));
  m.def(
      "pool_statistics",
      [](const Array& x, const Array& mask) {
        return to_array(pool_statistics(to_tensor(x), to_tensor(mask)).embedding);
      },
      py::arg("features"), py::arg("mask"));
  m.def(
      "attention_weights", [](const Array& scores) { return to_array(attention_weights(to_tensor(scores))); },
      py::arg("scores"), "Softmax over the last axis; masked scores get weight 0.");
  m.attr("MASKED_SCORE") = kMaskedScore;

  // ---- loss and metrics ----

  m.def(
      "focal_loss",
      [](const Array& logits, const py::array_t<long long>& labels, std::vector<double> alpha, double gamma) {
        const auto l = to_labels(labels);
        return focal_loss(to_tensor(logits), l, FocalLossConfig{std::move(alpha), gamma});
      },
      py::arg("logits"), py::arg("labels"), py::arg("alpha"), py::arg("gamma") = 2.0);
  m.def(
      "alpha_from_frequencies",
      [](const std::vector<std::size_t>& counts) { return alpha_from_frequencies(counts); },
      py::arg("counts"));
  m.def(
      "macro_f1",
      [](const py::array_t<long long>& preds, const py::array_t<long long>& labels, std::size_t classes) {
        const auto p = to_labels(preds);
        const auto l = to_labels(labels);
        return macro_f1(p, l, classes);
      },
      py::arg("preds"), py::arg("labels"), py::arg("classes"));

  // ---- gradcheck ----

  m.def(
      "gradient_suite",
      [](std::size_t seeds, std::uint64_t base_seed, double eps, double tolerance) {
        const auto cases = run_gradient_suite({seeds, base_seed, eps, tolerance});
        py::list rows;
        for (const auto& c : cases) {
          for (const auto& b : c.report.blocks) {
            py::dict r;
            r["case"] = c.name;
            r["seed"] = c.seed;
            r["block"] = b.block;
            r["max_rel_error"] = b.max_rel_error;
            r["max_abs_error"] = b.max_abs_error;
            r["coordinates"] = b.coordinates;
            r["pass"] = b.pass;
            rows.append(r);
          }
        }
        return rows;
      },
      py::arg("seeds") = 10, py::arg("base_seed") = 1, py::arg("eps") = 1e-5, py::arg("tolerance") = 1e-4);

  // ---- data ----

  m.def(
      "synth_dataset",
      [](const py::kwargs& kw) {
        const auto d = synth_dataset(synth_from_kwargs(kw));
        py::list items;
        for (const auto& it : d.items) items.append(item_dict(it));
        return items;
      },
      "Planted-cue synthetic items as a list of dicts; keyword options override the defaults.");
  m.def(
      "write_synth_dataset",
      [](const std::filesystem::path& dir, const py::kwargs& kw) {
        write_dataset(synth_dataset(synth_from_kwargs(kw)), dir);
      },
      py::arg("directory"));
  m.def(
      "subsample_counts",
      [](const std::filesystem::path& dir, double max_ratio, std::uint64_t seed) {
        return subsample_majority(read_dataset(dir), max_ratio, seed).class_counts();
      },
      py::arg("directory"), py::arg("max_ratio"), py::arg("seed") = 1);

  // ---- training schedule ----

  m.def("lr_at", &lr_at, py::arg("step"), py::arg("total"), py::arg("warmup_fraction"), py::arg("eta"));

  // ---- analysis ----

  m.def(
      "frame_fraction_for_mass",
      [](const std::vector<double>& w, double mass) { return frame_fraction_for_mass(w, mass); },
      py::arg("weights"), py::arg("mass") = 0.8);
  m.def(
      "pearson", [](const std::vector<double>& a, const std::vector<double>& b) { return pearson(a, b); },
      py::arg("a"), py::arg("b"));
  m.def(
      "read_attention_dump", [](const std::filesystem::path& dir) { return dump_dict(read_attention_dump(dir)); },
      py::arg("directory"));
  m.def(
      "cumulative_mass",
      [](const std::filesystem::path& dir, double mass, const std::string& agg) {
        const auto r = cumulative_mass(read_attention_dump(dir), mass, parse_head_aggregation(agg));
        py::dict d;
        d["mass"] = r.mass;
        d["mean_fraction"] = r.mean_fraction;
        d["per_utterance"] = r.per_utterance;
        d["curve"] = r.curve;
        return d;
      },
      py::arg("directory"), py::arg("mass") = 0.8, py::arg("aggregation") = "mean");
  m.def(
      "energy_correlation",
      [](const std::filesystem::path& dir, const std::string& agg) {
        const auto r = energy_correlation(read_attention_dump(dir), parse_head_aggregation(agg));
        py::dict d;
        d["mean"] = r.mean;
        d["stddev"] = r.stddev;
        d["used"] = r.used;
        d["excluded"] = r.excluded;
        d["per_utterance"] = r.per_utterance;
        return d;
      },
      py::arg("directory"), py::arg("aggregation") = "mean");
  m.def(
      "phoneme_salience",
      [](const std::filesystem::path& dir, double threshold, double smoothing, const std::string& agg) {
        const auto r = phoneme_salience(read_attention_dump(dir), threshold, smoothing, parse_head_aggregation(agg));
        py::dict d;
        for (const auto& [sym, s] : r.symbols) {
          py::dict e;
          e["prior"] = s.prior;
          e["attended"] = s.attended;
          e["ratio"] = s.ratio;
          e["support"] = s.support;
          e["attended_support"] = s.attended_support;
          d[py::str(sym)] = e;
        }
        return d;
      },
      py::arg("directory"), py::arg("mass_threshold") = 0.8, py::arg("smoothing") = 1.0,
      py::arg("aggregation") = "mean");

  // ---- command line ----

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::vector<std::string> storage{"mqpool"};
        storage.insert(storage.end(), args.begin(), args.end());
        std::vector<char*> argv;
        for (auto& s : storage) argv.push_back(s.data());
        argv.push_back(nullptr);
        py::gil_scoped_release release;
        return run_cli(static_cast<int>(storage.size()), argv.data());
      },
      py::arg("args"), "Run a subcommand in-process and return its exit code.");
}
