// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The mqpool Authors
#include <cstring>

#include "doctest.h"
#include "mqpool/errors.hpp"
#include "mqpool/tensor.hpp"
#include "support.hpp"

using namespace mqpool;
using mqpool::test::TempDir;

namespace {

Tensor random_f32_tensor(Rng& rng) {
  Tensor::Dims dims(rng.below(5));
  for (auto& d : dims) d = 1 + rng.below(4);
  Tensor t(dims);
  for (double& v : t.data()) v = static_cast<float>(rng.normal());
  return t;
}

}  // namespace

TEST_CASE("tensor round trip through a file") {
  TempDir dir("tensor");
  Tensor t({2, 3}, {1, 2, 3, 4, 5, 6});
  tensor_write(t, dir.path() / "a.mqt");
  CHECK(tensor_read(dir.path() / "a.mqt") == t);
}

TEST_CASE("tensor round trip is bit exact for random f32-representable tensors") {
  Rng rng(11, "roundtrip");
  for (int trial = 0; trial < 200; ++trial) {
    Tensor t = random_f32_tensor(rng);
    const std::string bytes = encode_tensor(t);
    CHECK(decode_tensor(bytes) == t);
  }
}

TEST_CASE("encoded sizes follow the f32 layout") {
  CHECK(encode_tensor(Tensor({1}, {0.0})).size() == 4 + 4 + 4 + 4);
  CHECK(encode_tensor(Tensor::scalar(2.5)).size() == 4 + 4 + 4);
  CHECK(encode_tensor(Tensor({2, 3})).size() == 4 + 4 + 8 + 24);
}

TEST_CASE("encoding is deterministic and little-endian") {
  Tensor t({2}, {1.0, -2.0});
  const std::string a = encode_tensor(t);
  CHECK(a == encode_tensor(t));
  CHECK(a.substr(0, 4) == "MQT1");
  std::uint32_t ndim = 0;
  std::memcpy(&ndim, a.data() + 4, 4);
  CHECK(ndim == 1);
  float first = 0;
  std::memcpy(&first, a.data() + 12, 4);
  CHECK(first == 1.0f);
}

TEST_CASE("malformed tensor files are rejected") {
  std::string bytes = encode_tensor(Tensor({2, 3}, {1, 2, 3, 4, 5, 6}));
  std::string bad = bytes;
  bad.replace(0, 4, "XXXX");
  CHECK_THROWS_AS(decode_tensor(bad), FormatError);
  CHECK_THROWS_AS(decode_tensor(bytes.substr(0, bytes.size() - 4)), LengthError);
  CHECK_THROWS_AS(decode_tensor(bytes.substr(0, 3)), DataError);
  TempDir dir("tensor_missing");
  CHECK_THROWS_AS(tensor_read(dir.path() / "nope.mqt"), IoError);
}

TEST_CASE("flat offsets are row-major") {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t B = 1 + rng.below(4), T = 1 + rng.below(5), K = 1 + rng.below(6);
    Tensor t({B, T, K});
    for (std::size_t i = 0; i < t.numel(); ++i) t[i] = double(i);
    for (std::size_t i = 0; i < B; ++i)
      for (std::size_t j = 0; j < T; ++j)
        for (std::size_t k = 0; k < K; ++k) CHECK(t(i, j, k) == double((i * T + j) * K + k));
  }
  CHECK_THROWS(Tensor({2, 2}).offset({2, 0}));
}

TEST_CASE("batch validation") {
  validate_batch(Tensor({1, 2, 1}), Tensor({1, 2}, {1, 0}));
  try {
    validate_batch(Tensor({2, 2, 1}), Tensor({2, 2}, {1, 0, 0, 0}));
    FAIL("expected EmptySequenceError");
  } catch (const EmptySequenceError& e) {
    CHECK(e.row() == 1);
  }
  CHECK_THROWS_AS(validate_batch(Tensor({1, 2, 1}), Tensor({1, 2}, {1, 0.5})), MaskDomainError);
  CHECK_THROWS_AS(validate_batch(Tensor({1, 3, 1}), Tensor({1, 2}, {1, 1})), ShapeError);
}
