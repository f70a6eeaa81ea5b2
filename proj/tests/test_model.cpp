// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The mqpool Authors
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "mqpool/errors.hpp"
#include "mqpool/model.hpp"
#include "support.hpp"

using namespace mqpool;
using namespace mqpool::test;

namespace {

ModelShape small_shape() {
  ModelShape s;
  s.audio_input = 3;
  s.text_input = 2;
  s.encoder_hidden = 6;
  s.feature_size = 4;
  s.mlp_hidden = 5;
  s.scorer_hidden = 3;
  s.classes = 4;
  return s;
}

ForwardOutput run(const MultimodalModel& m, const SequenceBatch& a, const SequenceBatch& t) {
  return forward(a, t, m.head, m.audio_encoder, m.text_encoder);
}

// Reference cross-entropy with a plain log-sum-exp.
double cross_entropy(const Tensor& logits, const std::vector<std::size_t>& labels) {
  const std::size_t B = logits.dim(0), C = logits.dim(1);
  double total = 0;
  for (std::size_t b = 0; b < B; ++b) {
    double top = logits(b, 0);
    for (std::size_t c = 1; c < C; ++c) top = std::max(top, logits(b, c));
    double z = 0;
    for (std::size_t c = 0; c < C; ++c) z += std::exp(logits(b, c) - top);
    total += -(logits(b, labels[b]) - top - std::log(z));
  }
  return total / double(B);
}

}  // namespace

TEST_CASE("forward produces finite logits of shape [B, C]") {
  Rng rng(1);
  for (const auto& v : {"Average", "Statistics", "Max", "AS", "MQMHA_2_2"}) {
    auto m = make_model(small_shape(), v, v, 3);
    const auto a = random_batch(2, 7, 3, rng);
    const auto t = random_batch(2, 4, 2, rng);
    const auto out = run(m, a, t);
    CHECK(out.logits.dims() == Tensor::Dims{2, 4});
    CHECK(out.logits.all_finite());
    CHECK(out.audio_attention.has_value() == (std::string(v) == "AS" || std::string(v) == "MQMHA_2_2"));
  }
}

TEST_CASE("masked-frame perturbation leaves logits bit-identical") {
  Rng rng(2);
  auto m = make_model(small_shape(), "MQMHA_2_2", "AS", 4);
  for (int trial = 0; trial < 20; ++trial) {
    const auto a = random_batch(3, 6, 3, rng);
    const auto t = random_batch(3, 4, 2, rng);
    SequenceBatch a2 = a, t2 = t;
    for (std::size_t b = 0; b < 3; ++b) {
      for (std::size_t f = 0; f < 6; ++f)
        if (a.mask(b, f) == 0.0)
          for (std::size_t k = 0; k < 3; ++k) a2.features(b, f, k) = 50 * rng.normal();
      for (std::size_t f = 0; f < 4; ++f)
        if (t.mask(b, f) == 0.0)
          for (std::size_t k = 0; k < 2; ++k) t2.features(b, f, k) = 50 * rng.normal();
    }
    CHECK(run(m, a, t).logits == run(m, a2, t2).logits);
  }
}

TEST_CASE("degenerate text modality still classifies") {
  Rng rng(3);
  auto m = make_model(small_shape(), "AS", "Average", 5);
  const auto a = random_batch(2, 5, 3, rng);
  SequenceBatch t{Tensor({2, 1, 2}), Tensor::full({2, 1}, 1.0)};
  CHECK(run(m, a, t).logits.dims() == Tensor::Dims{2, 4});
}

TEST_CASE("width mismatch is a shape error") {
  Rng rng(4);
  auto m = make_model(small_shape(), "AS", "AS", 5);
  CHECK_THROWS_AS(run(m, random_batch(1, 3, 5, rng), random_batch(1, 3, 2, rng)), ShapeError);
}

TEST_CASE("encoder layers are indexed from the input") {
  auto m = make_model(small_shape(), "Average", "Average", 6);
  REQUIRE(m.audio_encoder.layers.size() == 2);
  CHECK(m.audio_encoder.layers[0].weight.dims() == Tensor::Dims{3, 6});
  CHECK(m.audio_encoder.layers[1].weight.dims() == Tensor::Dims{6, 4});
  CHECK(m.audio_encoder.output_size() == 4);
}

TEST_CASE("frame-wise encoders make average pooling order-free") {
  Rng rng(10);
  auto m = make_model(small_shape(), "Average", "Average", 7);
  for (int trial = 0; trial < 10; ++trial) {
    const auto a = random_batch(1, 6, 3, rng);
    const auto t = random_batch(1, 3, 2, rng);
    std::vector<std::size_t> order(6);
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    SequenceBatch p = a;
    for (std::size_t f = 0; f < 6; ++f) {
      p.mask(0, f) = a.mask(0, order[f]);
      for (std::size_t k = 0; k < 3; ++k) p.features(0, f, k) = a.features(0, order[f], k);
    }
    const auto x = run(m, a, t).logits;
    const auto y = run(m, p, t).logits;
    for (std::size_t i = 0; i < x.numel(); ++i) CHECK(std::abs(x[i] - y[i]) <= 1e-12);
  }
}

TEST_CASE("fusion MLP input width is the sum of pooled widths") {
  auto m = make_model(small_shape(), "MQMHA_2_2", "Statistics", 1);
  CHECK(m.head.fused_size() == 2 * 2 * 4 + 2 * 4);
  CHECK(m.head.hidden.weight.dims() == Tensor::Dims{m.head.fused_size(), 5});
}

TEST_CASE("focal loss examples") {
  FocalLossConfig fl{{1.0, 1.0}, 2.0};
  const std::vector<std::size_t> y0{0};
  CHECK(focal_loss(Tensor({1, 2}, {0.0, 0.0}), y0, fl) ==
        doctest::Approx(0.25 * std::log(2.0)).epsilon(1e-12));
  CHECK(focal_loss(Tensor({1, 2}, {40.0, 0.0}), y0, fl) < 1e-30);

  Rng rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t C = 2 + rng.below(4);
    Tensor logits = random_normal({5, C}, rng, 3.0);
    std::vector<std::size_t> labels(5);
    for (auto& l : labels) l = rng.below(C);
    FocalLossConfig ce{std::vector<double>(C, 1.0), 0.0};
    CHECK(std::abs(focal_loss(logits, labels, ce) - cross_entropy(logits, labels)) <= 1e-12);
  }
  CHECK_THROWS_AS(focal_loss(Tensor({1, 2}), std::vector<std::size_t>{2}, fl), LabelError);
}

TEST_CASE("focal loss is non-negative, decreasing in p and homogeneous in alpha") {
  FocalLossConfig fl{{0.7, 1.3}, 2.0};
  const std::vector<std::size_t> y{0};
  double prev = 1e300;
  for (double z = -6; z <= 6; z += 0.5) {
    const double l = focal_loss(Tensor({1, 2}, {z, 0.0}), y, fl);
    CHECK(l >= 0.0);
    CHECK(l < prev);
    prev = l;
  }
  Rng rng(7);
  Tensor logits = random_normal({4, 2}, rng);
  const std::vector<std::size_t> labels{0, 1, 1, 0};
  FocalLossConfig scaled{{0.7 * 3, 1.3 * 3}, 2.0};
  CHECK(focal_loss(logits, labels, scaled) == doctest::Approx(3 * focal_loss(logits, labels, fl)));
  CHECK_THROWS_AS(FocalLossConfig({{1.0, 0.0}, 2.0}).validate(2), ConfigError);
  CHECK_THROWS_AS(FocalLossConfig({{1.0, 1.0}, -1.0}).validate(2), ConfigError);
}

TEST_CASE("alpha from class frequencies") {
  CHECK(alpha_from_frequencies(std::vector<std::size_t>{10, 10}) == std::vector<double>{1, 1});
  const auto a = alpha_from_frequencies(std::vector<std::size_t>{30, 10});
  CHECK(a[0] == doctest::Approx(0.5));
  CHECK(a[1] == doctest::Approx(1.5));
  CHECK(alpha_from_frequencies(std::vector<std::size_t>{1, 1, 1, 1}) ==
        std::vector<double>(4, 1.0));
  CHECK_THROWS_AS(alpha_from_frequencies(std::vector<std::size_t>{3, 0}), DegenerateClassError);
}

TEST_CASE("macro F1 examples") {
  using V = std::vector<std::size_t>;
  CHECK(macro_f1(V{0, 1, 2}, V{0, 1, 2}, 3) == 1.0);
  CHECK(macro_f1(V{0, 1, 1, 1}, V{0, 0, 1, 1}, 2) == doctest::Approx((2.0 / 3 + 0.8) / 2));
  CHECK(macro_f1(V{1, 1, 1, 1}, V{0, 0, 1, 1}, 2) == doctest::Approx(1.0 / 3));
  // Class 2 is absent from both and scores zero.
  CHECK(macro_f1(V{0, 1}, V{0, 1}, 3) == doctest::Approx(2.0 / 3));
  CHECK_THROWS_AS(macro_f1(V{}, V{}, 2), ContractError);
  CHECK_THROWS(macro_f1(V{0}, V{0, 1}, 2));
}

TEST_CASE("macro F1 is invariant to consistent relabeling") {
  Rng rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t C = 2 + rng.below(4);
    std::vector<std::size_t> p(30), y(30), perm(C);
    for (auto& v : p) v = rng.below(C);
    for (auto& v : y) v = rng.below(C);
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm);
    auto pp = p, yy = y;
    for (auto& v : pp) v = perm[v];
    for (auto& v : yy) v = perm[v];
    CHECK(macro_f1(p, y, C) == doctest::Approx(macro_f1(pp, yy, C)).epsilon(1e-14));
  }
}

TEST_CASE("checkpoint round trip preserves predictions") {
  TempDir dir("ckpt");
  Rng rng(9);
  auto m = make_model(small_shape(), "MQMHA_2_2", "AS", 12);
  for (auto& r : parameters(m))
    for (double& v : r.value->data()) v = static_cast<float>(v);
  save_checkpoint(m, dir.path());
  auto back = load_checkpoint(dir.path());
  const auto a = random_batch(2, 5, 3, rng);
  const auto t = random_batch(2, 3, 2, rng);
  CHECK(run(m, a, t).logits == run(back, a, t).logits);
  CHECK(back.seed == 12);
  CHECK(back.head.audio_pooling.queries == 2);
  CHECK_THROWS_AS(load_checkpoint(dir.path() / "missing"), DataError);
}

TEST_CASE("parameter listing tags encoder layers") {
  auto m = make_model(small_shape(), "AS", "AS", 1);
  std::size_t heads = 0, audio = 0;
  for (const auto& r : parameters(m)) {
    if (r.group == ParamGroup::Head) ++heads;
    if (r.group == ParamGroup::AudioEncoder) {
      CHECK(r.layer < 2);
      ++audio;
    }
  }
  CHECK(audio == 4);
  CHECK(heads == 4 + 4 + 4);
}
