// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The mqpool Authors
#include "mqpool/cli.hpp"

#include <cstdio>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "mqpool/analysis.hpp"
#include "mqpool/errors.hpp"

namespace mqpool {

namespace fs = std::filesystem;

namespace {

template <typename T>
void read_key(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

void read_path(const json& j, const char* key, fs::path& out) {
  if (j.contains(key)) out = j.at(key).get<std::string>();
}

PhaseSpec phase_from_json(const json& j, PhaseSpec p) {
  reject_unknown_keys(j, {"lr", "warmup_fraction", "max_epochs"}, "schedule phase");
  read_key(j, "lr", p.lr);
  read_key(j, "warmup_fraction", p.warmup_fraction);
  read_key(j, "max_epochs", p.max_epochs);
  return p;
}

}  // namespace

RunConfig RunConfig::from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("run config must be a JSON object");
  reject_unknown_keys(j,
                      {"seed", "out", "dataset", "checkpoint", "dump", "synth", "model", "schedule",
                       "training", "split", "variant", "variants", "seeds", "gradcheck",
                       "mass_threshold", "smoothing", "aggregation", "heatmaps"},
                      "run config");
  RunConfig c;
  try {
    read_key(j, "seed", c.seed);
    read_path(j, "out", c.out);
    read_path(j, "dataset", c.dataset);
    read_path(j, "checkpoint", c.checkpoint);
    read_path(j, "dump", c.dump);
    if (j.contains("synth")) {
      const auto& s = j.at("synth");
      reject_unknown_keys(s, {"classes", "items", "audio_frames", "text_frames", "input_size",
                              "cue_len", "noise", "salience", "class_gain", "text_class_gain",
                              "seed"},
                          "synth");
      read_key(s, "classes", c.synth.classes);
      read_key(s, "items", c.synth.items);
      read_key(s, "audio_frames", c.synth.audio_frames);
      read_key(s, "text_frames", c.synth.text_frames);
      read_key(s, "input_size", c.synth.input_size);
      read_key(s, "cue_len", c.synth.cue_len);
      read_key(s, "noise", c.synth.noise);
      read_key(s, "salience", c.synth.salience);
      read_key(s, "class_gain", c.synth.class_gain);
      read_key(s, "text_class_gain", c.synth.text_class_gain);
      read_key(s, "seed", c.synth.seed);
    } else {
      c.synth.seed = c.seed;
    }
    if (j.contains("model")) {
      const auto& m = j.at("model");
      reject_unknown_keys(m, {"encoder_hidden", "encoder_depth", "feature_size", "mlp_hidden",
                              "scorer_hidden"},
                          "model");
      auto& s = c.pipeline.shape;
      read_key(m, "encoder_hidden", s.encoder_hidden);
      read_key(m, "encoder_depth", s.encoder_depth);
      read_key(m, "feature_size", s.feature_size);
      read_key(m, "mlp_hidden", s.mlp_hidden);
      read_key(m, "scorer_hidden", s.scorer_hidden);
    }
    if (j.contains("schedule")) {
      const auto& s = j.at("schedule");
      reject_unknown_keys(s, {"phases", "patience", "min_delta", "upper_fraction"}, "schedule");
      auto& sched = c.pipeline.schedule;
      if (s.contains("phases")) {
        const auto& ph = s.at("phases");
        if (!ph.is_array() || ph.size() != 3) throw ConfigError("schedule.phases needs 3 entries");
        for (std::size_t i = 0; i < 3; ++i) sched.phases[i] = phase_from_json(ph[i], sched.phases[i]);
      }
      read_key(s, "patience", sched.early_stop.patience);
      read_key(s, "min_delta", sched.early_stop.min_delta);
      read_key(s, "upper_fraction", sched.upper_fraction);
    }
    if (j.contains("training")) {
      const auto& t = j.at("training");
      reject_unknown_keys(t, {"batch_size", "weight_decay", "gamma"}, "training");
      read_key(t, "batch_size", c.pipeline.options.batch_size);
      read_key(t, "weight_decay", c.pipeline.options.weight_decay);
      read_key(t, "gamma", c.pipeline.options.gamma);
    }
    if (j.contains("split")) {
      const auto& s = j.at("split");
      reject_unknown_keys(s, {"dev_per_class", "max_ratio"}, "split");
      read_key(s, "dev_per_class", c.pipeline.dev_per_class);
      read_key(s, "max_ratio", c.pipeline.max_ratio);
    }
    read_key(j, "variant", c.variant);
    read_key(j, "variants", c.variants);
    read_key(j, "seeds", c.seeds);
    if (j.contains("gradcheck")) {
      const auto& g = j.at("gradcheck");
      reject_unknown_keys(g, {"seeds", "base_seed", "eps", "tolerance"}, "gradcheck");
      read_key(g, "seeds", c.gradcheck.seeds);
      read_key(g, "base_seed", c.gradcheck.base_seed);
      read_key(g, "eps", c.gradcheck.eps);
      read_key(g, "tolerance", c.gradcheck.tolerance);
    }
    read_key(j, "mass_threshold", c.mass_threshold);
    read_key(j, "smoothing", c.smoothing);
    read_key(j, "aggregation", c.aggregation);
    read_key(j, "heatmaps", c.heatmaps);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("run config: ") + e.what());
  }
  return c;
}

json RunConfig::to_json() const {
  const auto& sched = pipeline.schedule;
  json phases = json::array();
  for (const auto& p : sched.phases) {
    phases.push_back({{"lr", p.lr}, {"warmup_fraction", p.warmup_fraction},
                      {"max_epochs", p.max_epochs}});
  }
  const auto& s = pipeline.shape;
  return {
      {"seed", seed},
      {"out", out.string()},
      {"dataset", dataset.string()},
      {"checkpoint", checkpoint.string()},
      {"dump", dump.string()},
      {"synth",
       {{"classes", synth.classes},
        {"items", synth.items},
        {"audio_frames", synth.audio_frames},
        {"text_frames", synth.text_frames},
        {"input_size", synth.input_size},
        {"cue_len", synth.cue_len},
        {"noise", synth.noise},
        {"salience", synth.salience},
        {"class_gain", synth.class_gain},
        {"text_class_gain", synth.text_class_gain},
        {"seed", synth.seed}}},
      {"model",
       {{"encoder_hidden", s.encoder_hidden},
        {"encoder_depth", s.encoder_depth},
        {"feature_size", s.feature_size},
        {"mlp_hidden", s.mlp_hidden},
        {"scorer_hidden", s.scorer_hidden}}},
      {"schedule",
       {{"phases", phases},
        {"patience", sched.early_stop.patience},
        {"min_delta", sched.early_stop.min_delta},
        {"upper_fraction", sched.upper_fraction}}},
      {"training",
       {{"batch_size", pipeline.options.batch_size},
        {"weight_decay", pipeline.options.weight_decay},
        {"gamma", pipeline.options.gamma}}},
      {"split", {{"dev_per_class", pipeline.dev_per_class}, {"max_ratio", pipeline.max_ratio}}},
      {"variant", variant},
      {"variants", variants},
      {"seeds", seeds},
      {"gradcheck",
       {{"seeds", gradcheck.seeds},
        {"base_seed", gradcheck.base_seed},
        {"eps", gradcheck.eps},
        {"tolerance", gradcheck.tolerance}}},
      {"mass_threshold", mass_threshold},
      {"smoothing", smoothing},
      {"aggregation", aggregation},
      {"heatmaps", heatmaps},
  };
}

namespace {

void require_path(const fs::path& p, const char* what) {
  if (p.empty()) throw ConfigError(std::string(what) + " path is not set");
  if (!fs::exists(p)) throw IoError(std::string(what) + " not found: " + p.string());
}

void prepare_out(const RunConfig& c) {
  fs::create_directories(c.out);
  write_text_file(c.out / "config.resolved.json", c.to_json().dump(2) + "\n");
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

int cmd_synth(const RunConfig& c) {
  LabeledDataset d = synth_dataset(c.synth);
  prepare_out(c);
  write_dataset(d, c.out);
  std::cout << "wrote " << d.items.size() << " items to " << c.out.string() << '\n';
  return kExitOk;
}

int cmd_subsample(const RunConfig& c) {
  require_path(c.dataset, "dataset");
  LabeledDataset d = subsample_majority(read_dataset(c.dataset), c.pipeline.max_ratio, c.seed);
  prepare_out(c);
  write_dataset(d, c.out);
  std::cout << "kept " << d.items.size() << " items\n";
  return kExitOk;
}

int cmd_train(const RunConfig& c) {
  require_path(c.dataset, "dataset");
  LabeledDataset d = read_dataset(c.dataset);
  PipelineRun run = train_pipeline(d, c.variant, c.pipeline, c.seed);
  prepare_out(c);
  save_checkpoint(run.model, c.out / "checkpoint");
  write_text_file(c.out / "training_log.csv", training_log_csv(run.log, c.pipeline.schedule));
  std::cout << "dev macro-F1 " << fmt(run.dev_macro_f1) << '\n';
  return kExitOk;
}

int cmd_eval(const RunConfig& c) {
  require_path(c.dataset, "dataset");
  require_path(c.checkpoint, "checkpoint");
  LabeledDataset d = read_dataset(c.dataset);
  MultimodalModel model = load_checkpoint(c.checkpoint);
  Evaluation ev = evaluate(model, d, 64, true);
  prepare_out(c);
  std::ostringstream metrics;
  metrics << "metric,value\nmacro_f1," << fmt(ev.macro_f1) << '\n';
  for (std::size_t k = 0; k < ev.per_class_f1.size(); ++k) {
    metrics << "f1_class" << k << ',' << fmt(ev.per_class_f1[k]) << '\n';
  }
  write_text_file(c.out / "metrics.csv", metrics.str());
  std::ostringstream preds;
  preds << "id,label,prediction\n";
  for (std::size_t i = 0; i < d.items.size(); ++i) {
    preds << d.items[i].id << ',' << ev.labels[i] << ',' << ev.predictions[i] << '\n';
  }
  write_text_file(c.out / "predictions.csv", preds.str());
  if (!ev.audio_attention.empty()) {
    write_attention_dump(make_dump(d, ev.audio_attention, ev.audio_frames), c.out / "dump");
  }
  std::cout << "macro-F1 " << fmt(ev.macro_f1) << '\n';
  return kExitOk;
}

int cmd_compare(const RunConfig& c) {
  if (c.seeds.size() < 3) throw ConfigError("compare-pooling needs at least 3 seeds");
  ComparisonResult r = compare_pooling(c.synth, c.pipeline, c.variants, c.seeds);
  prepare_out(c);
  write_text_file(c.out / "runs.csv", runs_csv(r));
  const std::string ranking = ranking_csv(r);
  write_text_file(c.out / "ranking.csv", ranking);
  std::cout << ranking;
  return kExitOk;
}

int cmd_gradcheck(const RunConfig& c) {
  auto cases = run_gradient_suite(c.gradcheck);
  prepare_out(c);
  const std::string table = gradient_suite_csv(cases);
  write_text_file(c.out / "gradcheck.csv", table);
  std::cout << table;
  std::size_t failed = 0;
  double worst = 0.0;
  for (const auto& gc : cases) {
    for (const auto& b : gc.report.blocks) {
      if (!b.pass) ++failed;
    }
    worst = std::max(worst, gc.report.max_rel_error());
  }
  std::cerr << cases.size() << " cases, max relative error " << fmt(worst) << ", " << failed
            << " failing blocks\n";
  return failed == 0 ? kExitOk : kExitNumerical;
}

int cmd_analyze(const RunConfig& c) {
  require_path(c.dump, "dump");
  AttentionDump dump = read_attention_dump(c.dump);
  const auto agg = parse_head_aggregation(c.aggregation);
  prepare_out(c);
  write_text_file(c.out / "concentration.csv",
                  concentration_csv(cumulative_mass(dump, c.mass_threshold, agg)));
  write_text_file(c.out / "salience.csv",
                  salience_csv(phoneme_salience(dump, c.mass_threshold, c.smoothing, agg)));
  write_text_file(c.out / "correlation.csv", correlation_csv(energy_correlation(dump, agg)));
  for (const auto& id : c.heatmaps) {
    write_text_file(c.out / ("heatmap_" + id + ".csv"), export_heatmap(dump, id));
  }
  std::cout << "wrote reports to " << c.out.string() << '\n';
  return kExitOk;
}

}  // namespace

int run_cli(int argc, char** argv) {
  CLI::App app{"Masked and multi-query attentive pooling toolkit", "mqpool"};
  app.require_subcommand(1);
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<double> mass_threshold;
  const std::vector<std::pair<std::string, std::string>> commands = {
      {"synth", "generate a planted-cue dataset"},
      {"train", "run the three-phase protocol on a dataset"},
      {"eval", "evaluate a checkpoint and dump attention"},
      {"compare-pooling", "train each pooling variant over several seeds"},
      {"gradcheck", "finite-difference check of every operator"},
      {"analyze", "concentration, salience and correlation reports"},
      {"subsample", "cap majority classes of a dataset"}};
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config_path, "run config JSON");
    sub->add_option("--seed", seed, "seed override");
    sub->add_option("--out", out, "output directory");
    sub->add_option("--mass-threshold", mass_threshold, "attended mass threshold");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::cerr << app.help();
    return kExitConfig;
  }
  const std::string name = app.get_subcommands().front()->get_name();
  try {
    RunConfig c;
    if (!config_path.empty()) {
      if (!fs::exists(config_path)) throw ConfigError("config not found: " + config_path);
      json j;
      try {
        j = json::parse(read_text_file(config_path));
      } catch (const json::exception& e) {
        throw ConfigError(config_path + ": " + e.what());
      }
      c = RunConfig::from_json(j);
    }
    if (seed) {
      c.seed = *seed;
      c.synth.seed = *seed;
    }
    if (out) c.out = *out;
    if (mass_threshold) c.mass_threshold = *mass_threshold;
    if (name == "synth") return cmd_synth(c);
    if (name == "subsample") return cmd_subsample(c);
    if (name == "train") return cmd_train(c);
    if (name == "eval") return cmd_eval(c);
    if (name == "compare-pooling") return cmd_compare(c);
    if (name == "gradcheck") return cmd_gradcheck(c);
    return cmd_analyze(c);
  } catch (const ConfigError& e) {
    std::cerr << "mqpool " << name << ": config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const NumericalError& e) {
    std::cerr << "mqpool " << name << ": numerical error: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "mqpool " << name << ": error: " << e.what() << '\n';
    return kExitData;
  }
}

}  // namespace mqpool
