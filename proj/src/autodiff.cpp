// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The mqpool Authors
#include "mqpool/autodiff.hpp"

#include <cmath>

#include "mqpool/errors.hpp"

namespace mqpool::ad {

const Tensor& Var::value() const { return tape->value(*this); }

Var Tape::leaf(Tensor value, bool requires_grad) {
  nodes_.push_back({"leaf", std::move(value), std::nullopt, requires_grad, {}});
  return {this, nodes_.size() - 1};
}

Var Tape::record(std::string op, Tensor value, const std::vector<Var>& parents,
                 Backward backward) {
  bool needs = false;
  for (const auto& p : parents) {
    if (p.tape != this) throw ContractError("op '" + op + "' mixes vars from different tapes");
    needs = needs || nodes_[p.id].requires_grad;
  }
  nodes_.push_back({std::move(op), std::move(value), std::nullopt, needs && backward,
                    std::move(backward)});
  return {this, nodes_.size() - 1};
}

Tensor Tape::grad(Var v) const {
  const Node& n = nodes_.at(v.id);
  return n.grad ? *n.grad : Tensor(n.value.dims());
}

const Tensor& Tape::output_grad(std::size_t id) const { return *nodes_.at(id).grad; }

void Tape::accumulate(Var v, const Tensor& g) {
  Node& n = nodes_.at(v.id);
  if (!n.requires_grad) return;
  if (g.dims() != n.value.dims()) {
    throw ShapeError("adjoint " + dims_to_string(g.dims()) + " does not match value " +
                     dims_to_string(n.value.dims()) + " of op '" + n.op + "'");
  }
  if (!n.grad) {
    n.grad = g;
    return;
  }
  auto dst = n.grad->data();
  auto src = g.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

void Tape::backward(Var root, double adjoint) {
  if (root.tape != this) throw ContractError("backward root belongs to another tape");
  Node& r = nodes_.at(root.id);
  if (r.value.numel() != 1) {
    throw ContractError("backward root must be scalar, got " + dims_to_string(r.value.dims()));
  }
  for (auto& n : nodes_) n.grad.reset();
  replay_order_.clear();
  if (!r.requires_grad) return;
  r.grad = Tensor(r.value.dims(), {adjoint});
  for (std::size_t id = root.id + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.requires_grad || !n.backward || !n.grad) continue;
    replay_order_.push_back(id);
    n.backward(*this, id);
  }
}

// ---- ops ---------------------------------------------------------------------

namespace {

template <class F>
Tensor map(const Tensor& x, F f) {
  Tensor y(x.dims());
  for (std::size_t i = 0; i < x.numel(); ++i) y[i] = f(x[i]);
  return y;
}

}  // namespace

Var affine(Var x, Var weight, Var bias) {
  const Tensor& xv = x.value();
  const Tensor& w = weight.value();
  const Tensor& b = bias.value();
  if (w.rank() != 2 || xv.rank() < 1 || xv.dims().back() != w.dim(0) || b.rank() != 1 ||
      b.dim(0) != w.dim(1)) {
    throw ShapeError("affine shapes x" + dims_to_string(xv.dims()) + " w" +
                     dims_to_string(w.dims()) + " b" + dims_to_string(b.dims()));
  }
  const std::size_t in = w.dim(0), out = w.dim(1), rows = xv.numel() / in;
  auto dims = xv.dims();
  dims.back() = out;
  Tensor y(dims);
  for (std::size_t r = 0; r < rows; ++r) {
    double* yr = &y[r * out];
    std::copy(b.data().begin(), b.data().end(), yr);
    const double* xr = &xv[r * in];
    for (std::size_t i = 0; i < in; ++i) {
      const double xi = xr[i];
      const double* wi = &w[i * out];
      for (std::size_t o = 0; o < out; ++o) yr[o] += xi * wi[o];
    }
  }
  return x.tape->record("affine", std::move(y), {x, weight, bias},
                        [x, weight, bias, in, out, rows](Tape& tape, std::size_t self) {
                          const Tensor& g = tape.output_grad(self);
                          const Tensor& xv = x.value();
                          const Tensor& w = weight.value();
                          if (tape.requires_grad(x)) {
                            Tensor gx(xv.dims());
                            for (std::size_t r = 0; r < rows; ++r) {
                              const double* gr = &g[r * out];
                              for (std::size_t i = 0; i < in; ++i) {
                                const double* wi = &w[i * out];
                                double acc = 0.0;
                                for (std::size_t o = 0; o < out; ++o) acc += gr[o] * wi[o];
                                gx[r * in + i] = acc;
                              }
                            }
                            tape.accumulate(x, gx);
                          }
                          if (tape.requires_grad(weight) || tape.requires_grad(bias)) {
                            Tensor gw(w.dims());
                            Tensor gb(bias.value().dims());
                            for (std::size_t r = 0; r < rows; ++r) {
                              const double* gr = &g[r * out];
                              const double* xr = &xv[r * in];
                              for (std::size_t i = 0; i < in; ++i) {
                                const double xi = xr[i];
                                double* gwi = &gw[i * out];
                                for (std::size_t o = 0; o < out; ++o) gwi[o] += xi * gr[o];
                              }
                              for (std::size_t o = 0; o < out; ++o) gb[o] += gr[o];
                            }
                            tape.accumulate(weight, gw);
                            tape.accumulate(bias, gb);
                          }
                        });
}

Var tanh(Var x) {
  Tensor y = map(x.value(), [](double v) { return std::tanh(v); });
  return x.tape->record("tanh", std::move(y), {x}, [x](Tape& tape, std::size_t self) {
    const Tensor& g = tape.output_grad(self);
    const Tensor& y = tape.value(self);
    Tensor gx(y.dims());
    for (std::size_t i = 0; i < y.numel(); ++i) gx[i] = g[i] * (1.0 - y[i] * y[i]);
    tape.accumulate(x, gx);
  });
}

Var mul(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.dims() != bv.dims()) throw ShapeError("mul operands differ in shape");
  Tensor y(av.dims());
  for (std::size_t i = 0; i < y.numel(); ++i) y[i] = av[i] * bv[i];
  return a.tape->record("mul", std::move(y), {a, b}, [a, b](Tape& tape, std::size_t self) {
    const Tensor& g = tape.output_grad(self);
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    Tensor ga(av.dims()), gb(bv.dims());
    for (std::size_t i = 0; i < g.numel(); ++i) {
      ga[i] = g[i] * bv[i];
      gb[i] = g[i] * av[i];
    }
    tape.accumulate(a, ga);
    tape.accumulate(b, gb);
  });
}

Var sum(Var x) {
  double total = 0.0;
  for (double v : x.value().data()) total += v;
  return x.tape->record("sum", Tensor::scalar(total), {x}, [x](Tape& tape, std::size_t self) {
    tape.accumulate(x, Tensor::full(x.value().dims(), tape.output_grad(self)[0]));
  });
}

Var weighted_sum(Var x, const Tensor& weights) {
  const Tensor& xv = x.value();
  if (xv.dims() != weights.dims()) throw ShapeError("weighted_sum weights differ in shape");
  double total = 0.0;
  for (std::size_t i = 0; i < xv.numel(); ++i) total += xv[i] * weights[i];
  return x.tape->record("weighted_sum", Tensor::scalar(total), {x},
                        [x, weights](Tape& tape, std::size_t self) {
                          const double g = tape.output_grad(self)[0];
                          Tensor gx(weights.dims());
                          for (std::size_t i = 0; i < gx.numel(); ++i) gx[i] = g * weights[i];
                          tape.accumulate(x, gx);
                        });
}

Var concat(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.dim(0) != bv.dim(0)) {
    throw ShapeError("concat needs [B,D1] and [B,D2]");
  }
  const std::size_t B = av.dim(0), da = av.dim(1), db = bv.dim(1);
  Tensor y({B, da + db});
  for (std::size_t r = 0; r < B; ++r) {
    std::copy_n(&av[r * da], da, &y[r * (da + db)]);
    std::copy_n(&bv[r * db], db, &y[r * (da + db) + da]);
  }
  return a.tape->record("concat", std::move(y), {a, b},
                        [a, b, B, da, db](Tape& tape, std::size_t self) {
                          const Tensor& g = tape.output_grad(self);
                          Tensor ga({B, da}), gb({B, db});
                          for (std::size_t r = 0; r < B; ++r) {
                            std::copy_n(&g[r * (da + db)], da, &ga[r * da]);
                            std::copy_n(&g[r * (da + db) + da], db, &gb[r * db]);
                          }
                          tape.accumulate(a, ga);
                          tape.accumulate(b, gb);
                        });
}

Var pool_max(Var x, const Tensor& mask) {
  PooledOutput out = mqpool::pool_max(x.value(), mask);
  return x.tape->record("pool_max", std::move(out.embedding), {x},
                        [x, mask](Tape& tape, std::size_t self) {
                          tape.accumulate(x, pool_max_backward(x.value(), mask,
                                                               tape.output_grad(self)));
                        });
}

Var pool_average(Var x, const Tensor& mask) {
  PooledOutput out = mqpool::pool_average(x.value(), mask);
  return x.tape->record("pool_average", std::move(out.embedding), {x},
                        [x, mask](Tape& tape, std::size_t self) {
                          tape.accumulate(x, pool_average_backward(x.value(), mask,
                                                                   tape.output_grad(self)));
                        });
}

Var pool_statistics(Var x, const Tensor& mask) {
  PooledOutput out = mqpool::pool_statistics(x.value(), mask);
  Tensor y = out.embedding;
  return x.tape->record("pool_statistics", std::move(y), {x},
                        [x, mask, out = std::move(out)](Tape& tape, std::size_t self) {
                          tape.accumulate(x, pool_statistics_backward(x.value(), mask, out,
                                                                      tape.output_grad(self)));
                        });
}

Var score_frames(Var x, const Tensor& mask, const PoolingConfig& cfg,
                 const std::vector<Var>& scorer) {
  PoolingConfig live = cfg;
  if (scorer.size() != cfg.scorer.size()) {
    throw ConfigError("score_frames got " + std::to_string(scorer.size()) +
                      " scorer vars, config has " + std::to_string(cfg.scorer.size()));
  }
  for (std::size_t i = 0; i < scorer.size(); ++i) live.scorer[i] = scorer[i].value();
  Tensor scores = mqpool::score_frames(x.value(), mask, live);
  std::vector<Var> parents{x};
  parents.insert(parents.end(), scorer.begin(), scorer.end());
  return x.tape->record("score_frames", std::move(scores), parents,
                        [x, mask, scorer, live = std::move(live)](Tape& tape, std::size_t self) {
                          ScoreGradients g = score_frames_backward(x.value(), mask, live,
                                                                   tape.output_grad(self));
                          tape.accumulate(x, g.features);
                          for (std::size_t i = 0; i < scorer.size(); ++i) {
                            tape.accumulate(scorer[i], g.scorer[i]);
                          }
                        });
}

Var attention_weights(Var scores) {
  Tensor w = mqpool::attention_weights(scores.value());
  return scores.tape->record("attention_weights", std::move(w), {scores},
                             [scores](Tape& tape, std::size_t self) {
                               tape.accumulate(scores, attention_weights_backward(
                                                           tape.value(self),
                                                           tape.output_grad(self)));
                             });
}

Var weighted_statistics(Var x, const Tensor& mask, Var weights) {
  PooledOutput out = mqpool::weighted_statistics(x.value(), mask, weights.value());
  Tensor y = out.embedding;
  out.attention.reset();
  return x.tape->record(
      "weighted_statistics", std::move(y), {x, weights},
      [x, mask, weights, out = std::move(out)](Tape& tape, std::size_t self) {
        auto g = weighted_statistics_backward(x.value(), mask, weights.value(), out,
                                              tape.output_grad(self));
        tape.accumulate(x, g.features);
        tape.accumulate(weights, g.weights);
      });
}

PoolResult pool(Var x, const Tensor& mask, const PoolingConfig& cfg,
                const std::vector<Var>& scorer) {
  switch (cfg.kind) {
    case PoolingKind::Max: return {pool_max(x, mask), std::nullopt};
    case PoolingKind::Average: return {pool_average(x, mask), std::nullopt};
    case PoolingKind::Statistics: return {pool_statistics(x, mask), std::nullopt};
    case PoolingKind::Attentive: {
      Var w = attention_weights(score_frames(x, mask, cfg, scorer));
      return {weighted_statistics(x, mask, w), w};
    }
  }
  throw ConfigError("unknown pooling kind");
}

}  // namespace mqpool::ad
