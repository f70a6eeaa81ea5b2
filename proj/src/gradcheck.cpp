// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The mqpool Authors
#include "mqpool/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <numeric>
#include <sstream>

#include "mqpool/errors.hpp"
#include "mqpool/model.hpp"
#include "mqpool/rng.hpp"

namespace mqpool {

bool GradReport::pass() const {
  return std::all_of(blocks.begin(), blocks.end(), [](const BlockReport& b) { return b.pass; });
}

double GradReport::max_rel_error() const {
  double m = 0.0;
  for (const auto& b : blocks) m = std::max(m, b.max_rel_error);
  return m;
}

double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(kGradFloor, std::abs(analytic) + std::abs(numeric));
}

GradReport finite_diff_check(const std::function<double()>& f, std::vector<GradBlock> blocks,
                             double eps, double tol, std::uint64_t seed) {
  if (!(eps > 0.0)) throw ConfigError("finite-difference eps must be positive");
  const double base = f();
  const double again = f();
  if (std::memcmp(&base, &again, sizeof(double)) != 0) {
    throw DeterminismError("function under check returned " + std::to_string(base) + " then " +
                           std::to_string(again));
  }
  Rng rng(seed, "gradcheck");
  GradReport report;
  report.tolerance = tol;
  for (auto& block : blocks) {
    Tensor& value = *block.value;
    if (block.analytic.dims() != value.dims()) {
      throw ShapeError("analytic gradient for " + block.name + " has the wrong shape");
    }
    std::vector<std::size_t> coords(value.numel());
    std::iota(coords.begin(), coords.end(), 0);
    if (coords.size() >= 512) {
      rng.shuffle(coords);
      coords.resize(128);
      std::sort(coords.begin(), coords.end());
    }
    BlockReport r;
    r.block = block.name;
    r.coordinates = coords.size();
    double an2 = 0.0, nn2 = 0.0;
    for (auto i : coords) {
      const double saved = value[i];
      value[i] = saved + eps;
      const double plus = f();
      value[i] = saved - eps;
      const double minus = f();
      value[i] = saved;
      const double numeric = (plus - minus) / (2.0 * eps);
      const double analytic = block.analytic[i];
      r.max_rel_error = std::max(r.max_rel_error, relative_error(analytic, numeric));
      r.max_abs_error = std::max(r.max_abs_error, std::abs(analytic - numeric));
      an2 += analytic * analytic;
      nn2 += numeric * numeric;
    }
    r.analytic_norm = std::sqrt(an2);
    r.numeric_norm = std::sqrt(nn2);
    r.pass = r.max_rel_error < tol;
    report.blocks.push_back(std::move(r));
  }
  return report;
}

GradReport check_tape_gradients(const TapeBuilder& build,
                                const std::vector<std::pair<std::string, Tensor*>>& blocks,
                                double eps, double tol, std::uint64_t seed) {
  auto evaluate = [&](bool with_grad) {
    ad::Tape tape;
    std::vector<ad::Var> leaves;
    for (const auto& [_, t] : blocks) leaves.push_back(tape.leaf(*t, with_grad));
    ad::Var out = build(tape, leaves);
    std::vector<Tensor> grads;
    if (with_grad) {
      tape.backward(out);
      for (const auto& l : leaves) grads.push_back(tape.grad(l));
    }
    return std::pair{out.value()[0], grads};
  };
  auto [_, grads] = evaluate(true);
  std::vector<GradBlock> gb;
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    gb.push_back({blocks[i].first, blocks[i].second, grads[i]});
  }
  return finite_diff_check([&] { return evaluate(false).first; }, std::move(gb), eps, tol, seed);
}

namespace {

Tensor random_normal(Tensor::Dims dims, Rng& rng, double scale = 1.0) {
  Tensor t(std::move(dims));
  for (double& v : t.data()) v = scale * rng.normal();
  return t;
}

// Random 0/1 mask with at least one valid frame per row.
Tensor random_mask(std::size_t batch, std::size_t frames, Rng& rng) {
  Tensor m({batch, frames});
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t t = 0; t < frames; ++t) m(b, t) = rng.uniform() < 0.75 ? 1.0 : 0.0;
    m(b, rng.below(frames)) = 1.0;
  }
  return m;
}

struct PoolingCase {
  std::string name;
  std::string variant;
};

}  // namespace

std::vector<GradCase> run_gradient_suite(const GradSuiteOptions& options) {
  std::vector<GradCase> cases;
  const std::vector<PoolingCase> pooling_cases = {
      {"pool_max", "Max"},   {"pool_average", "Average"}, {"pool_statistics", "Statistics"},
      {"mqmha_AS", "AS"},    {"mqmha_SA", "SA"},          {"mqmha_MHA", "MHA"},
      {"mqmha_2_2", "MQMHA_2_2"}};
  for (std::size_t s = 0; s < options.seeds; ++s) {
    const std::uint64_t seed = options.base_seed + s;
    Rng rng(seed, "gradsuite");
    const std::size_t B = 1 + rng.below(3);
    const std::size_t T = 2 + rng.below(6);
    const std::size_t K = 2 * (1 + rng.below(4));
    const std::size_t p = 2 + rng.below(3);

    for (const auto& pc : pooling_cases) {
      PoolingConfig cfg = variant_config(pc.variant, K, p, rng.next_u64());
      // Random scorers so attention is far from uniform.
      for (auto& w : cfg.scorer) {
        for (double& v : w.data()) v = 0.7 * rng.normal();
      }
      Tensor x = random_normal({B, T, K}, rng);
      const Tensor mask = random_mask(B, T, rng);
      const Tensor probe = random_normal({B, cfg.output_size()}, rng);
      std::vector<std::pair<std::string, Tensor*>> blocks{{"input", &x}};
      const auto names = cfg.scorer_names();
      for (std::size_t i = 0; i < cfg.scorer.size(); ++i) {
        blocks.emplace_back("scorer." + names[i], &cfg.scorer[i]);
      }
      auto build = [&](ad::Tape&, const std::vector<ad::Var>& leaves) {
        std::vector<ad::Var> scorer(leaves.begin() + 1, leaves.end());
        return ad::weighted_sum(ad::pool(leaves[0], mask, cfg, scorer).embedding, probe);
      };
      cases.push_back({pc.name, seed,
                       check_tape_gradients(build, blocks, options.eps, options.tolerance, seed)});
    }

    for (double gamma : {0.0, 2.0}) {
      const std::size_t C = 2 + rng.below(3);
      Tensor logits = random_normal({B, C}, rng, 2.0);
      std::vector<std::size_t> labels(B);
      for (auto& l : labels) l = rng.below(C);
      FocalLossConfig fl{std::vector<double>(C), gamma};
      for (double& a : fl.alpha) a = rng.uniform(0.5, 2.0);
      auto build = [&](ad::Tape&, const std::vector<ad::Var>& leaves) {
        return focal_loss(leaves[0], labels, fl);
      };
      cases.push_back({gamma == 0.0 ? "focal_gamma0" : "focal_gamma2", seed,
                       check_tape_gradients(build, {{"logits", &logits}}, options.eps,
                                            options.tolerance, seed)});
    }

    {
      ModelShape shape;
      shape.audio_input = 3;
      shape.text_input = 2;
      shape.encoder_hidden = 5;
      shape.encoder_depth = 2;
      shape.feature_size = K;
      shape.mlp_hidden = 4;
      shape.scorer_hidden = p;
      shape.classes = 3;
      MultimodalModel model = make_model(shape, "MQMHA_2_2", "AS", seed);
      auto refs = parameters(model);
      for (auto& r : refs) {
        if (r.name.find("pooling") != std::string::npos) {
          for (double& v : r.value->data()) v = 0.7 * rng.normal();
        }
      }
      const std::size_t Tt = 1 + rng.below(5);
      SequenceBatch audio{random_normal({B, T, shape.audio_input}, rng), random_mask(B, T, rng)};
      SequenceBatch text{random_normal({B, Tt, shape.text_input}, rng), random_mask(B, Tt, rng)};
      std::vector<std::size_t> labels(B);
      for (auto& l : labels) l = rng.below(shape.classes);
      FocalLossConfig fl{{0.7, 1.0, 1.3}, 2.0};
      // trace_forward creates its own leaves from model storage, so the
      // analytic gradients come straight from the trace.
      ad::Tape tape;
      ModelTrace trace = trace_forward(tape, model, audio, text);
      ad::Var loss = focal_loss(trace.logits, labels, fl);
      tape.backward(loss);
      std::vector<GradBlock> gb;
      for (std::size_t i = 0; i < refs.size(); ++i) {
        gb.push_back({refs[i].name, refs[i].value, tape.grad(trace.params[i])});
      }
      auto f = [&] {
        ad::Tape t;
        ModelTrace tr = trace_forward(t, model, audio, text);
        return focal_loss(tr.logits.value(), labels, fl);
      };
      cases.push_back({"full_model", seed,
                       finite_diff_check(f, std::move(gb), options.eps, options.tolerance, seed)});
    }
  }
  return cases;
}

std::string gradient_suite_csv(const std::vector<GradCase>& cases) {
  std::ostringstream os;
  os << "block,max_rel_err,status,max_abs_err,analytic_norm,numeric_norm,coordinates\n";
  char buf[64];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.6e", v);
    return std::string(buf);
  };
  for (const auto& c : cases) {
    for (const auto& b : c.report.blocks) {
      os << c.name << ':' << c.seed << ':' << b.block << ',' << num(b.max_rel_error) << ','
         << (b.pass ? "pass" : "fail") << ',' << num(b.max_abs_error) << ','
         << num(b.analytic_norm) << ',' << num(b.numeric_norm) << ',' << b.coordinates << '\n';
    }
  }
  return os.str();
}

}  // namespace mqpool
