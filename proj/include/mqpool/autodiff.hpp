// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The mqpool Authors
#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mqpool/pooling.hpp"
#include "mqpool/tensor.hpp"

namespace mqpool::ad {

class Tape;

/// Handle to a value recorded on a tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
};

/// Ordered record of coarse-grained operations for reverse-mode replay.
///
/// Each op stores its output and a closure that pushes the output adjoint
/// into the adjoints of its parents. A tape is single-owner; it is not
/// safe to record or replay on one tape from two threads.
class Tape {
 public:
  using Backward = std::function<void(Tape&, std::size_t self)>;

  Var leaf(Tensor value, bool requires_grad = true);
  /// Records an op. `backward` may be empty for non-differentiable ops.
  Var record(std::string op, Tensor value, const std::vector<Var>& parents, Backward backward);

  const Tensor& value(Var v) const { return nodes_.at(v.id).value; }
  const Tensor& value(std::size_t id) const { return nodes_.at(id).value; }
  bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }

  /// Adjoint of `v` after backward(); zeros if nothing reached it.
  Tensor grad(Var v) const;
  const Tensor& output_grad(std::size_t id) const;
  /// Adds `g` into the adjoint of `v` (no-op when v does not require grad).
  void accumulate(Var v, const Tensor& g);

  /// Replays every recorded op in reverse order, seeding the scalar root
  /// with `adjoint`. Throws ContractError when the root is not scalar.
  void backward(Var root, double adjoint = 1.0);

  std::size_t size() const noexcept { return nodes_.size(); }
  const std::string& op_name(std::size_t id) const { return nodes_.at(id).op; }
  /// Node ids whose backward ran during the last replay, in visit order.
  const std::vector<std::size_t>& replay_order() const noexcept { return replay_order_; }

 private:
  struct Node {
    std::string op;
    Tensor value;
    std::optional<Tensor> grad;
    bool requires_grad = false;
    Backward backward;
  };
  std::vector<Node> nodes_;
  std::vector<std::size_t> replay_order_;
};

// ---- ops ---------------------------------------------------------------------

/// x [..., in] * weight [in, out] + bias [out], applied row-wise.
Var affine(Var x, Var weight, Var bias);
Var tanh(Var x);
Var mul(Var a, Var b);
Var sum(Var x);
/// sum(x * weights) for a constant weight tensor.
Var weighted_sum(Var x, const Tensor& weights);
/// [B, D1] ++ [B, D2] -> [B, D1 + D2].
Var concat(Var a, Var b);

Var pool_max(Var x, const Tensor& mask);
Var pool_average(Var x, const Tensor& mask);
Var pool_statistics(Var x, const Tensor& mask);
/// Scores [B,Q,H,T]; `scorer` vars follow cfg.scorer order (their values
/// replace cfg.scorer).
Var score_frames(Var x, const Tensor& mask, const PoolingConfig& cfg,
                 const std::vector<Var>& scorer);
Var attention_weights(Var scores);
Var weighted_statistics(Var x, const Tensor& mask, Var weights);

struct PoolResult {
  Var embedding;
  std::optional<Var> attention;
};
/// Any pooling kind; attentive pooling records score/softmax/statistics.
PoolResult pool(Var x, const Tensor& mask, const PoolingConfig& cfg,
                const std::vector<Var>& scorer);

}  // namespace mqpool::ad
