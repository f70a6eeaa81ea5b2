// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The mqpool Authors
#include "mqpool/tensor.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <sstream>

#include "mqpool/errors.hpp"

namespace mqpool {

namespace {

constexpr char kMagic[4] = {'M', 'Q', 'T', '1'};
constexpr std::size_t kMaxRank = 32;

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

std::uint32_t get_u32(std::span<const char> bytes, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) {
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[at + i])) << (8 * i);
  }
  return v;
}

}  // namespace

std::size_t product(const Tensor::Dims& dims) {
  std::size_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

std::string dims_to_string(const Tensor::Dims& dims) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < dims.size(); ++i) os << (i ? "," : "") << dims[i];
  os << ']';
  return os.str();
}

Tensor::Tensor(Dims dims) : dims_(std::move(dims)), data_(product(dims_), 0.0) {
  for (auto d : dims_) {
    if (d == 0) throw ShapeError("tensor dims must be positive, got " + dims_to_string(dims_));
  }
}

Tensor::Tensor(Dims dims, std::vector<double> data)
    : dims_(std::move(dims)), data_(std::move(data)) {
  for (auto d : dims_) {
    if (d == 0) throw ShapeError("tensor dims must be positive, got " + dims_to_string(dims_));
  }
  if (product(dims_) != data_.size()) {
    throw ShapeError("tensor dims " + dims_to_string(dims_) + " do not match " +
                     std::to_string(data_.size()) + " elements");
  }
}

Tensor Tensor::full(Dims dims, double v) {
  Tensor t(std::move(dims));
  std::fill(t.data_.begin(), t.data_.end(), v);
  return t;
}

std::size_t Tensor::offset(std::initializer_list<std::size_t> idx) const {
  if (idx.size() != dims_.size()) {
    throw ShapeError("index rank " + std::to_string(idx.size()) + " != tensor rank " +
                     std::to_string(dims_.size()));
  }
  std::size_t off = 0;
  std::size_t axis = 0;
  for (auto i : idx) {
    if (i >= dims_[axis]) throw ShapeError("index out of range on axis " + std::to_string(axis));
    off = off * dims_[axis] + i;
    ++axis;
  }
  return off;
}

bool Tensor::all_finite() const noexcept {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

bool operator==(const Tensor& a, const Tensor& b) {
  if (a.dims_ != b.dims_) return false;
  return std::memcmp(a.data_.data(), b.data_.data(), a.data_.size() * sizeof(double)) == 0;
}

void validate_batch(const Tensor& features, const Tensor& mask) {
  if (features.rank() != 3) {
    throw ShapeError("features must be [B,T,K], got " + dims_to_string(features.dims()));
  }
  if (mask.rank() != 2 || mask.dim(0) != features.dim(0) || mask.dim(1) != features.dim(1)) {
    throw ShapeError("mask must be [B,T] matching features, got " + dims_to_string(mask.dims()));
  }
  const std::size_t batch = mask.dim(0);
  const std::size_t frames = mask.dim(1);
  for (std::size_t b = 0; b < batch; ++b) {
    bool any = false;
    for (std::size_t t = 0; t < frames; ++t) {
      const double m = mask[b * frames + t];
      if (m == 1.0) {
        any = true;
      } else if (m != 0.0) {
        throw MaskDomainError("mask value " + std::to_string(m) + " at row " + std::to_string(b) +
                              ", frame " + std::to_string(t) + " is not 0 or 1");
      }
    }
    if (!any) throw EmptySequenceError("row " + std::to_string(b) + " has no valid frames", b);
  }
}

void validate_batch(const SequenceBatch& batch) { validate_batch(batch.features, batch.mask); }

std::string encode_tensor(const Tensor& t) {
  std::string out;
  out.reserve(8 + 4 * t.rank() + 4 * t.numel());
  out.append(kMagic, 4);
  put_u32(out, static_cast<std::uint32_t>(t.rank()));
  for (auto d : t.dims()) put_u32(out, static_cast<std::uint32_t>(d));
  for (double v : t.data()) {
    put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  }
  return out;
}

Tensor decode_tensor(std::span<const char> bytes) {
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw FormatError("not an MQT1 tensor (bad magic)");
  }
  const std::uint32_t ndim = get_u32(bytes, 4);
  if (ndim > kMaxRank) throw FormatError("MQT1 rank " + std::to_string(ndim) + " is too large");
  const std::size_t header = 8 + 4 * std::size_t{ndim};
  if (bytes.size() < header) throw FormatError("MQT1 header truncated");
  Tensor::Dims dims(ndim);
  std::size_t count = 1;
  for (std::uint32_t i = 0; i < ndim; ++i) {
    dims[i] = get_u32(bytes, 8 + 4 * i);
    if (dims[i] == 0) throw FormatError("MQT1 dim " + std::to_string(i) + " is zero");
    if (count > std::numeric_limits<std::size_t>::max() / 4 / dims[i]) {
      throw FormatError("MQT1 dims overflow");
    }
    count *= dims[i];
  }
  const std::size_t payload = bytes.size() - header;
  if (payload != 4 * count) {
    throw LengthError("MQT1 payload has " + std::to_string(payload) + " bytes, dims " +
                      dims_to_string(dims) + " need " + std::to_string(4 * count));
  }
  std::vector<double> data(count);
  for (std::size_t i = 0; i < count; ++i) {
    data[i] = static_cast<double>(std::bit_cast<float>(get_u32(bytes, header + 4 * i)));
  }
  return Tensor(std::move(dims), std::move(data));
}

Tensor tensor_read(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open tensor file " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_tensor(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  } catch (const LengthError& e) {
    throw LengthError(path.string() + ": " + e.what());
  }
}

void tensor_write(const Tensor& t, const std::filesystem::path& path) {
  const std::string bytes = encode_tensor(t);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace mqpool
