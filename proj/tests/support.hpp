// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The mqpool Authors
#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>

#include "mqpool/rng.hpp"
#include "mqpool/tensor.hpp"

namespace mqpool::test {

inline Tensor random_normal(Tensor::Dims dims, Rng& rng, double scale = 1.0) {
  Tensor t(std::move(dims));
  for (double& v : t.data()) v = scale * rng.normal();
  return t;
}

// At least one valid frame per row.
inline Tensor random_mask(std::size_t batch, std::size_t frames, Rng& rng, double keep = 0.7) {
  Tensor m({batch, frames});
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t t = 0; t < frames; ++t) m(b, t) = rng.uniform() < keep ? 1.0 : 0.0;
    m(b, rng.below(frames)) = 1.0;
  }
  return m;
}

inline SequenceBatch random_batch(std::size_t B, std::size_t T, std::size_t K, Rng& rng) {
  return {random_normal({B, T, K}, rng), random_mask(B, T, rng)};
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    Rng rng(std::hash<std::string>{}(tag) ^ reinterpret_cast<std::uintptr_t>(this));
    path_ = std::filesystem::temp_directory_path() /
            ("mqpool_" + tag + "_" + std::to_string(rng.next_u64() % 1000000000));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace mqpool::test
