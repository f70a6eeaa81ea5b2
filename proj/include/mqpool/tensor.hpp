// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The mqpool Authors
#pragma once

#include <cstddef>
#include <filesystem>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace mqpool {

/// Dense row-major tensor of doubles.
///
/// A rank-0 tensor (empty dims) is a scalar holding one element.
class Tensor {
 public:
  using Dims = std::vector<std::size_t>;

  Tensor() : data_(1, 0.0) {}
  explicit Tensor(Dims dims);
  Tensor(Dims dims, std::vector<double> data);

  static Tensor scalar(double v) { return Tensor({}, {v}); }
  static Tensor full(Dims dims, double v);

  const Dims& dims() const noexcept { return dims_; }
  std::size_t rank() const noexcept { return dims_.size(); }
  std::size_t dim(std::size_t axis) const { return dims_.at(axis); }
  std::size_t numel() const noexcept { return data_.size(); }

  std::span<const double> data() const noexcept { return data_; }
  std::span<double> data() noexcept { return data_; }
  const std::vector<double>& vec() const noexcept { return data_; }

  const double& operator[](std::size_t i) const { return data_[i]; }
  double& operator[](std::size_t i) { return data_[i]; }

  template <class... I>
  double& operator()(I... idx) {
    return data_[offset({static_cast<std::size_t>(idx)...})];
  }
  template <class... I>
  double operator()(I... idx) const {
    return data_[offset({static_cast<std::size_t>(idx)...})];
  }

  /// Row-major flat offset of a full multi-index. Bounds-checked.
  std::size_t offset(std::initializer_list<std::size_t> idx) const;

  bool all_finite() const noexcept;

  /// Bitwise comparison of dims and every element.
  friend bool operator==(const Tensor& a, const Tensor& b);

 private:
  Dims dims_;
  std::vector<double> data_;
};

std::size_t product(const Tensor::Dims& dims);
std::string dims_to_string(const Tensor::Dims& dims);

/// Batched frame features with a 0/1 validity mask.
struct SequenceBatch {
  Tensor features;  // [B, T, K]
  Tensor mask;      // [B, T]

  std::size_t batch_size() const { return features.dim(0); }
  std::size_t max_frames() const { return features.dim(1); }
  std::size_t feature_size() const { return features.dim(2); }
};

/// Throws ShapeError, MaskDomainError or EmptySequenceError.
void validate_batch(const SequenceBatch& batch);
void validate_batch(const Tensor& features, const Tensor& mask);

// MQT1 binary format: "MQT1" | u32 ndim | ndim x u32 dims | f32 payload,
// little-endian, no padding. Values are narrowed to f32 on write.
std::string encode_tensor(const Tensor& t);
Tensor decode_tensor(std::span<const char> bytes);
Tensor tensor_read(const std::filesystem::path& path);
void tensor_write(const Tensor& t, const std::filesystem::path& path);

}  // namespace mqpool
