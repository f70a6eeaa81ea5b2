// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The mqpool Authors
#include <chrono>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "doctest.h"
#include "mqpool/analysis.hpp"
#include "mqpool/cli.hpp"
#include "mqpool/errors.hpp"
#include "support.hpp"

using namespace mqpool;
using namespace mqpool::test;
namespace fs = std::filesystem;

namespace {

struct CliResult {
  int code;
  std::string out;
  std::string err;
};

CliResult cli(std::vector<std::string> args) {
  args.insert(args.begin(), "mqpool");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  std::ostringstream out, err;
  auto* old_out = std::cout.rdbuf(out.rdbuf());
  auto* old_err = std::cerr.rdbuf(err.rdbuf());
  const int code = run_cli(static_cast<int>(argv.size()), argv.data());
  std::cout.rdbuf(old_out);
  std::cerr.rdbuf(old_err);
  return {code, out.str(), err.str()};
}

fs::path write_config(const fs::path& dir, const std::string& name, const json& j) {
  const fs::path p = dir / name;
  write_text_file(p, j.dump(2));
  return p;
}

std::map<std::string, std::string> tree(const fs::path& root, bool skip_config = true) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    if (skip_config && e.path().filename() == "config.resolved.json") continue;
    out[fs::relative(e.path(), root).string()] = slurp(e.path());
  }
  return out;
}

std::size_t count_lines(const std::string& s) { return std::count(s.begin(), s.end(), '\n'); }

json small_pipeline(json extra = json::object()) {
  json j = {{"model", {{"encoder_hidden", 8}, {"feature_size", 4}, {"mlp_hidden", 8},
                       {"scorer_hidden", 4}}},
            {"schedule", {{"phases", {{{"max_epochs", 3}}, {{"max_epochs", 3}},
                                      {{"max_epochs", 3}}}},
                          {"patience", 1}}},
            {"split", {{"dev_per_class", 5}}}};
  j.update(extra);
  return j;
}

}  // namespace

TEST_CASE("unknown subcommand prints usage and fails") {
  const auto r = cli({"frobnicate"});
  CHECK(r.code != 0);
  CHECK(r.err.find("synth") != std::string::npos);
  CHECK(cli({}).code != 0);
}

TEST_CASE("synth writes a parseable dataset deterministically") {
  TempDir dir("cli_synth");
  auto r = cli({"synth", "--out", (dir.path() / "a").string(), "--seed", "4"});
  REQUIRE(r.code == 0);
  const auto d = read_dataset(dir.path() / "a");
  CHECK(d.items.size() == SynthConfig{}.items);
  CHECK(fs::exists(dir.path() / "a" / "config.resolved.json"));
  REQUIRE(cli({"synth", "--out", (dir.path() / "b").string(), "--seed", "4"}).code == 0);
  CHECK(tree(dir.path() / "a") == tree(dir.path() / "b"));
  const auto resolved = json::parse(slurp(dir.path() / "a" / "config.resolved.json"));
  CHECK(resolved.at("synth").at("seed") == 4);
  CHECK(RunConfig::from_json(resolved).to_json() == resolved);
}

TEST_CASE("configuration errors exit with code 2") {
  TempDir dir("cli_cfg");
  auto bad = write_config(dir.path(), "bad.json", {{"synth", {{"cue_len", 60}}}});
  auto r = cli({"synth", "--config", bad.string(), "--out", (dir.path() / "o").string()});
  CHECK(r.code == kExitConfig);
  CHECK(r.err.find("cue_len") != std::string::npos);
  auto unknown = write_config(dir.path(), "unknown.json", {{"synht", {}}});
  r = cli({"synth", "--config", unknown.string()});
  CHECK(r.code == kExitConfig);
  CHECK(r.err.find("synht") != std::string::npos);
  auto nested = write_config(dir.path(), "nested.json", {{"schedule", {{"patince", 2}}}});
  CHECK(cli({"train", "--config", nested.string()}).code == kExitConfig);
  CHECK(cli({"synth", "--config", (dir.path() / "absent.json").string()}).code == kExitConfig);
  CHECK(cli({"synth", "--seed", "notanumber"}).code == kExitConfig);
  auto few = write_config(dir.path(), "few.json", {{"seeds", {1, 2}}});
  CHECK(cli({"compare-pooling", "--config", few.string()}).code == kExitConfig);
}

TEST_CASE("missing inputs exit with a data error") {
  TempDir dir("cli_missing");
  auto c = write_config(dir.path(), "c.json", {{"dataset", (dir.path() / "nope").string()}});
  const auto r = cli({"train", "--config", c.string(), "--out", (dir.path() / "o").string()});
  CHECK(r.code == kExitData);
  CHECK(r.err.find("nope") != std::string::npos);
  CHECK(cli({"train", "--out", (dir.path() / "o").string()}).code == kExitConfig);
  auto a = write_config(dir.path(), "a.json", {{"dump", (dir.path() / "nodump").string()}});
  CHECK(cli({"analyze", "--config", a.string()}).code == kExitData);
}

TEST_CASE("train, eval and analyze end to end") {
  TempDir dir("cli_e2e");
  const fs::path data = dir.path() / "data";
  auto sc = write_config(dir.path(), "synth.json", {{"synth", {{"items", 200}}}});
  REQUIRE(cli({"synth", "--config", sc.string(), "--out", data.string()}).code == 0);

  const auto t0 = std::chrono::steady_clock::now();
  auto tc = write_config(dir.path(), "train.json",
                         small_pipeline({{"dataset", data.string()}, {"variant", "MQMHA_2_2"}}));
  auto r = cli({"train", "--config", tc.string(), "--out", (dir.path() / "run").string()});
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  REQUIRE(r.code == 0);
  CHECK(secs < 60.0);
  const std::string log = slurp(dir.path() / "run" / "training_log.csv");
  std::istringstream in(log);
  std::string line;
  std::size_t prev = 0;
  std::set<std::string> phases;
  bool header = false;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (!header) {
      CHECK(line == "epoch,phase,lr,train_loss,dev_macro_f1");
      header = true;
      continue;
    }
    const std::size_t epoch = std::stoul(line.substr(0, line.find(',')));
    CHECK(epoch >= prev);
    prev = epoch;
    const auto a = line.find(',') + 1;
    phases.insert(line.substr(a, line.find(',', a) - a));
  }
  CHECK(phases == std::set<std::string>{"head_only", "upper_layers_plus_head", "all"});

  auto ec = write_config(dir.path(), "eval.json",
                         {{"dataset", data.string()},
                          {"checkpoint", (dir.path() / "run" / "checkpoint").string()}});
  REQUIRE(cli({"eval", "--config", ec.string(), "--out", (dir.path() / "e1").string()}).code == 0);
  REQUIRE(cli({"eval", "--config", ec.string(), "--out", (dir.path() / "e2").string()}).code == 0);
  CHECK(slurp(dir.path() / "e1" / "metrics.csv") == slurp(dir.path() / "e2" / "metrics.csv"));
  CHECK(tree(dir.path() / "e1") == tree(dir.path() / "e2"));
  CHECK(count_lines(slurp(dir.path() / "e1" / "predictions.csv")) == 201);
  const auto dump = read_attention_dump(dir.path() / "e1" / "dump");
  CHECK(dump.utterances.size() == 200);
  dump.validate();

  auto ac = write_config(dir.path(), "analyze.json",
                         {{"dump", (dir.path() / "e1" / "dump").string()},
                          {"heatmaps", {"utt_000003"}}});
  r = cli({"analyze", "--config", ac.string(), "--out", (dir.path() / "an").string(),
           "--mass-threshold", "0.7"});
  REQUIRE(r.code == 0);
  for (const char* f : {"concentration.csv", "salience.csv", "correlation.csv",
                        "heatmap_utt_000003.csv"}) {
    const std::string text = slurp(dir.path() / "an" / f);
    CHECK(count_lines(text) >= 2);
  }
  CHECK(slurp(dir.path() / "an" / "salience.csv").find("CUE") != std::string::npos);
  CHECK(count_lines(slurp(dir.path() / "an" / "heatmap_utt_000003.csv")) == 1 + 4 + 1);
  const auto resolved = json::parse(slurp(dir.path() / "an" / "config.resolved.json"));
  CHECK(resolved.at("mass_threshold") == 0.7);

  auto sub = write_config(dir.path(), "sub.json",
                          {{"dataset", data.string()}, {"split", {{"max_ratio", 1.0}}}});
  REQUIRE(cli({"subsample", "--config", sub.string(), "--out", (dir.path() / "sub").string()})
              .code == 0);
  const auto counts = read_dataset(dir.path() / "sub").class_counts();
  CHECK(*std::min_element(counts.begin(), counts.end()) ==
        *std::max_element(counts.begin(), counts.end()));
}

TEST_CASE("noiseless data is memorized") {
  TempDir dir("cli_memo");
  const fs::path data = dir.path() / "data";
  auto sc = write_config(dir.path(), "s.json", {{"synth", {{"items", 200}, {"noise", 0.0}}}});
  REQUIRE(cli({"synth", "--config", sc.string(), "--out", data.string()}).code == 0);
  json t = small_pipeline({{"dataset", data.string()}, {"variant", "AS"}});
  t.erase("schedule");
  auto tc = write_config(dir.path(), "t.json", t);
  REQUIRE(cli({"train", "--config", tc.string(), "--out", (dir.path() / "run").string()}).code == 0);
  auto ec = write_config(dir.path(), "e.json",
                         {{"dataset", data.string()},
                          {"checkpoint", (dir.path() / "run" / "checkpoint").string()}});
  REQUIRE(cli({"eval", "--config", ec.string(), "--out", (dir.path() / "e").string()}).code == 0);
  CHECK(slurp(dir.path() / "e" / "metrics.csv").find("macro_f1,1\n") != std::string::npos);
}

TEST_CASE("compare-pooling reports every variant and seed") {
  TempDir dir("cli_compare");
  auto c = write_config(dir.path(), "c.json",
                        small_pipeline({{"synth", {{"items", 120}, {"audio_frames", 20}}},
                                        {"seeds", {1, 2, 3}}}));
  const auto r = cli({"compare-pooling", "--config", c.string(), "--out", dir.path().string()});
  REQUIRE(r.code == 0);
  const std::string runs = slurp(dir.path() / "runs.csv");
  CHECK(count_lines(runs) == 1 + 4 * 3);
  for (const char* v : {"Average,", "Statistics,", "AS,", "MQMHA_2_2,"}) {
    CHECK(runs.find(std::string("\n") + v) != std::string::npos);
  }
  const std::string ranking = slurp(dir.path() / "ranking.csv");
  CHECK(ranking.rfind("rank,variant,mean_macro_f1,std_macro_f1,seeds\n", 0) == 0);
  CHECK(count_lines(ranking) == 5);
}

TEST_CASE("gradcheck subcommand prints an all-pass table") {
  TempDir dir("cli_grad");
  auto c = write_config(dir.path(), "g.json", {{"gradcheck", {{"seeds", 2}}}});
  const auto r = cli({"gradcheck", "--config", c.string(), "--out", dir.path().string()});
  CHECK(r.code == kExitOk);
  CHECK(r.out.rfind("block,max_rel_err,status", 0) == 0);
  CHECK(r.out.find(",fail,") == std::string::npos);
  CHECK(count_lines(r.out) > 20);
  CHECK(slurp(dir.path() / "gradcheck.csv") == r.out);
  auto strict = write_config(dir.path(), "s.json", {{"gradcheck", {{"seeds", 1}, {"tolerance", 1e-30}}}});
  CHECK(cli({"gradcheck", "--config", strict.string(), "--out", dir.path().string()}).code ==
        kExitNumerical);
}
