// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The mqpool Authors
#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "mqpool/autodiff.hpp"
#include "mqpool/tensor.hpp"

namespace mqpool {

/// One block of coordinates to verify: live storage plus its analytic
/// gradient. finite_diff_check perturbs *value in place and restores it.
struct GradBlock {
  std::string name;
  Tensor* value;
  Tensor analytic;
};

struct BlockReport {
  std::string block;
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  double analytic_norm = 0.0;
  double numeric_norm = 0.0;
  std::size_t coordinates = 0;
  bool pass = false;
};

struct GradReport {
  std::vector<BlockReport> blocks;
  double tolerance = 0.0;

  bool pass() const;
  double max_rel_error() const;
};

/// Denominator floor of relative_error. Central differences at eps=1e-5
/// carry roundoff of about 1e-11 times |loss|, so structurally zero
/// gradients (softmax shift invariance of scorer biases) read as noise.
inline constexpr double kGradFloor = 1e-5;

/// |a - n| / max(kGradFloor, |a| + |n|).
double relative_error(double analytic, double numeric);

/// Central differences per coordinate. Blocks under 512 coordinates are
/// swept fully, larger ones sampled (128 coordinates) from Rng(seed,
/// "gradcheck"). Throws DeterminismError if f is not repeatable.
GradReport finite_diff_check(const std::function<double()>& f, std::vector<GradBlock> blocks,
                             double eps, double tol, std::uint64_t seed = 0);

/// Builds a scalar on a fresh tape from leaves holding the block values.
using TapeBuilder = std::function<ad::Var(ad::Tape&, const std::vector<ad::Var>&)>;

/// Runs the tape for analytic gradients and then finite_diff_check.
GradReport check_tape_gradients(const TapeBuilder& build,
                                const std::vector<std::pair<std::string, Tensor*>>& blocks,
                                double eps, double tol, std::uint64_t seed = 0);

struct GradCase {
  std::string name;
  std::uint64_t seed;
  GradReport report;
};

struct GradSuiteOptions {
  std::size_t seeds = 10;
  std::uint64_t base_seed = 1;
  double eps = 1e-5;
  double tolerance = 1e-4;
};

/// Every pooling operator, the focal loss (gamma 0 and 2) and the full
/// two-modality model on random shapes with B<=3, T<=7, K<=8, Q,H<=2.
std::vector<GradCase> run_gradient_suite(const GradSuiteOptions& options = {});

/// Header block,max_rel_err,status,max_abs_err,analytic_norm,numeric_norm,
/// coordinates; block is case:seed:name.
std::string gradient_suite_csv(const std::vector<GradCase>& cases);

}  // namespace mqpool
