// bsskit/autodiff.hpp

// Copyright 2026  The bsskit authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#ifndef BSSKIT_AUTODIFF_HPP_
#define BSSKIT_AUTODIFF_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "bsskit/ndarray.hpp"

namespace bsskit {
namespace ad {

// A named trainable array.  Parameters live outside any tape; a tape binds to
// them through leaf nodes and accumulates into grad on backward, so gradients
// from several tapes (one per example) sum naturally within a batch.
struct Parameter {
  std::string name;
  NdArray value;
  NdArray grad;

  Parameter() = default;
  Parameter(std::string n, NdArray v)
      : name(std::move(n)), value(std::move(v)) {}

  void zero_grad() {
    if (!grad.same_shape(value)) grad = NdArray(value.shape());
    else grad.fill(0.0);
  }
};

enum class BnMode { kTrain, kEval };

// Running statistics for batchnorm1d, owned by the model (not the tape).
// Initialized to the standard (0, 1) so eval before any update is detectable
// through `updates` rather than through garbage values.
struct BatchNormStats {
  NdArray running_mean;
  NdArray running_var;
  std::uint64_t updates = 0;

  BatchNormStats() = default;
  explicit BatchNormStats(std::size_t channels)
      : running_mean({channels}, 0.0), running_var({channels}, 1.0) {}
};

class Tape;

// Handle to a tape node.  Copyable, trivially small; invalidated by
// Tape::reset.
class Var {
 public:
  Var() = default;
  Var(Tape *tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape *tape() const { return tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

  const NdArray &value() const;
  const NdArray &grad() const;

 private:
  Tape *tape_ = nullptr;
  std::size_t id_ = 0;
};

// Define-by-run gradient tape.  Node creation order is the topological order:
// every op reads only earlier nodes, so backward is a single reverse sweep
// over the nodes reachable from the loss.  The tape is rebuilt for each
// forward pass; running backward twice on one recording is rejected.
class Tape {
 public:
  using BackFn = std::function<void(Tape &, std::size_t)>;

  Tape() = default;
  Tape(const Tape &) = delete;
  Tape &operator=(const Tape &) = delete;

  Var constant(NdArray v) { return make(std::move(v), {}, nullptr); }

  Var scalar(double v) { return constant(NdArray::scalar(v)); }

  // Binds a parameter as a leaf.  Registration shapes the gradient buffer if
  // needed but never clears an existing one, so callers control when
  // accumulation starts via Parameter::zero_grad.
  Var leaf(Parameter &p) {
    if (!p.grad.same_shape(p.value)) p.grad = NdArray(p.value.shape());
    Var v = make(p.value, {}, nullptr);
    leaves_.push_back({v.id(), &p});
    return v;
  }

  // Every node value passes through here, so non-finite forward results
  // (overflow, 0/0) surface immediately instead of poisoning the run.
  Var make(NdArray value, std::vector<std::size_t> inputs, BackFn back) {
    if (!value.finite())
      throw Error("autodiff: non-finite forward value (overflow or invalid "
                  "operand)");
    nodes_.push_back(Node{std::move(value), NdArray{}, std::move(inputs),
                          std::move(back)});
    return Var(this, nodes_.size() - 1);
  }

  const NdArray &value(std::size_t id) const { return nodes_[id].value; }

  // Gradient buffer, allocated to zeros on demand so nodes untouched by
  // backward read as zero gradient.
  NdArray &grad(std::size_t id) {
    Node &n = nodes_[id];
    if (!n.grad.same_shape(n.value)) n.grad = NdArray(n.value.shape());
    return n.grad;
  }

  std::size_t size() const { return nodes_.size(); }

  // Reverse sweep from a scalar loss.  Populates node gradients and
  // accumulates into every bound parameter reachable from the loss;
  // registered but unreachable parameters keep their (freshly zeroed)
  // gradient.
  void backward(const Var &loss) {
    if (loss.tape() != this)
      throw ContractError("backward: loss var belongs to another tape");
    if (backward_done_)
      throw StateError("backward: tape already differentiated; re-record the "
                       "forward pass before calling backward again");
    if (value(loss.id()).size() != 1)
      throw ContractError("backward: loss must be scalar, got shape " +
                          value(loss.id()).shape_str());
    backward_done_ = true;

    std::vector<char> reach(nodes_.size(), 0);
    std::vector<std::size_t> stack{loss.id()};
    reach[loss.id()] = 1;
    while (!stack.empty()) {
      std::size_t id = stack.back();
      stack.pop_back();
      for (std::size_t in : nodes_[id].inputs) {
        if (!reach[in]) {
          reach[in] = 1;
          stack.push_back(in);
        }
      }
    }

    grad(loss.id())[0] = 1.0;
    for (std::size_t id = loss.id() + 1; id-- > 0;) {
      if (reach[id] && nodes_[id].back) nodes_[id].back(*this, id);
    }

    for (auto &[id, param] : leaves_) {
      if (!reach[id]) continue;
      const NdArray &g = grad(id);
      for (std::size_t i = 0; i < g.size(); ++i) param->grad[i] += g[i];
    }
  }

  void reset() {
    nodes_.clear();
    leaves_.clear();
    backward_done_ = false;
  }

 private:
  struct Node {
    NdArray value;
    NdArray grad;
    std::vector<std::size_t> inputs;
    BackFn back;
  };

  std::vector<Node> nodes_;
  std::vector<std::pair<std::size_t, Parameter *>> leaves_;
  bool backward_done_ = false;
};

inline const NdArray &Var::value() const { return tape_->value(id_); }
inline const NdArray &Var::grad() const { return tape_->grad(id_); }

namespace detail {

inline Tape *same_tape(const Var &a, const Var &b, const char *op) {
  if (!a.valid() || !b.valid() || a.tape() != b.tape())
    throw ContractError(std::string(op) + ": operands on different tapes");
  return a.tape();
}

inline void check_same_shape(const Var &a, const Var &b, const char *op) {
  if (!a.value().same_shape(b.value()))
    throw DimensionError(std::string(op) + ": shape mismatch " +
                         a.value().shape_str() + " vs " +
                         b.value().shape_str());
}

}  // namespace detail

// ---- elementwise binary ops ----

inline Var add(const Var &a, const Var &b) {
  Tape *t = detail::same_tape(a, b, "add");
  detail::check_same_shape(a, b, "add");
  NdArray out(a.value().shape());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = a.value()[i] + b.value()[i];
  std::size_t ia = a.id(), ib = b.id();
  return t->make(std::move(out), {ia, ib},
                 [ia, ib](Tape &t, std::size_t self) {
                   const NdArray &g = t.grad(self);
                   NdArray &ga = t.grad(ia);
                   NdArray &gb = t.grad(ib);
                   for (std::size_t i = 0; i < g.size(); ++i) {
                     ga[i] += g[i];
                     gb[i] += g[i];
                   }
                 });
}

inline Var sub(const Var &a, const Var &b) {
  Tape *t = detail::same_tape(a, b, "sub");
  detail::check_same_shape(a, b, "sub");
  NdArray out(a.value().shape());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = a.value()[i] - b.value()[i];
  std::size_t ia = a.id(), ib = b.id();
  return t->make(std::move(out), {ia, ib},
                 [ia, ib](Tape &t, std::size_t self) {
                   const NdArray &g = t.grad(self);
                   NdArray &ga = t.grad(ia);
                   NdArray &gb = t.grad(ib);
                   for (std::size_t i = 0; i < g.size(); ++i) {
                     ga[i] += g[i];
                     gb[i] -= g[i];
                   }
                 });
}

inline Var mul(const Var &a, const Var &b) {
  Tape *t = detail::same_tape(a, b, "mul");
  detail::check_same_shape(a, b, "mul");
  NdArray out(a.value().shape());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = a.value()[i] * b.value()[i];
  std::size_t ia = a.id(), ib = b.id();
  return t->make(std::move(out), {ia, ib},
                 [ia, ib](Tape &t, std::size_t self) {
                   const NdArray &g = t.grad(self);
                   const NdArray &va = t.value(ia);
                   const NdArray &vb = t.value(ib);
                   NdArray &ga = t.grad(ia);
                   NdArray &gb = t.grad(ib);
                   for (std::size_t i = 0; i < g.size(); ++i) {
                     ga[i] += g[i] * vb[i];
                     gb[i] += g[i] * va[i];
                   }
                 });
}

inline Var div(const Var &a, const Var &b) {
  Tape *t = detail::same_tape(a, b, "div");
  detail::check_same_shape(a, b, "div");
  NdArray out(a.value().shape());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = a.value()[i] / b.value()[i];
  std::size_t ia = a.id(), ib = b.id();
  return t->make(std::move(out), {ia, ib},
                 [ia, ib](Tape &t, std::size_t self) {
                   const NdArray &g = t.grad(self);
                   const NdArray &va = t.value(ia);
                   const NdArray &vb = t.value(ib);
                   NdArray &ga = t.grad(ia);
                   NdArray &gb = t.grad(ib);
                   for (std::size_t i = 0; i < g.size(); ++i) {
                     ga[i] += g[i] / vb[i];
                     gb[i] -= g[i] * va[i] / (vb[i] * vb[i]);
                   }
                 });
}

// ---- scalar-broadcast ops ----

inline Var scale(const Var &a, double c) {
  NdArray out(a.value().shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = c * a.value()[i];
  std::size_t ia = a.id();
  return a.tape()->make(std::move(out), {ia},
                        [ia, c](Tape &t, std::size_t self) {
                          const NdArray &g = t.grad(self);
                          NdArray &ga = t.grad(ia);
                          for (std::size_t i = 0; i < g.size(); ++i)
                            ga[i] += c * g[i];
                        });
}

inline Var shift(const Var &a, double c) {
  NdArray out(a.value().shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] + c;
  std::size_t ia = a.id();
  return a.tape()->make(std::move(out), {ia},
                        [ia](Tape &t, std::size_t self) {
                          const NdArray &g = t.grad(self);
                          NdArray &ga = t.grad(ia);
                          for (std::size_t i = 0; i < g.size(); ++i)
                            ga[i] += g[i];
                        });
}

// ---- elementwise unary ops ----

inline Var exp(const Var &a) {
  NdArray out(a.value().shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(a.value()[i]);
  std::size_t ia = a.id();
  return a.tape()->make(std::move(out), {ia},
                        [ia](Tape &t, std::size_t self) {
                          const NdArray &g = t.grad(self);
                          const NdArray &y = t.value(self);
                          NdArray &ga = t.grad(ia);
                          for (std::size_t i = 0; i < g.size(); ++i)
                            ga[i] += g[i] * y[i];
                        });
}

inline Var log(const Var &a) {
  NdArray out(a.value().shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!(a.value()[i] > 0.0))
      throw Error("log: nonpositive input " + std::to_string(a.value()[i]));
    out[i] = std::log(a.value()[i]);
  }
  std::size_t ia = a.id();
  return a.tape()->make(std::move(out), {ia},
                        [ia](Tape &t, std::size_t self) {
                          const NdArray &g = t.grad(self);
                          const NdArray &va = t.value(ia);
                          NdArray &ga = t.grad(ia);
                          for (std::size_t i = 0; i < g.size(); ++i)
                            ga[i] += g[i] / va[i];
                        });
}

inline double sigmoid_scalar(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

inline Var sigmoid(const Var &a) {
  NdArray out(a.value().shape());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = sigmoid_scalar(a.value()[i]);
  std::size_t ia = a.id();
  return a.tape()->make(std::move(out), {ia},
                        [ia](Tape &t, std::size_t self) {
                          const NdArray &g = t.grad(self);
                          const NdArray &y = t.value(self);
                          NdArray &ga = t.grad(ia);
                          for (std::size_t i = 0; i < g.size(); ++i)
                            ga[i] += g[i] * y[i] * (1.0 - y[i]);
                        });
}

inline Var square(const Var &a) {
  NdArray out(a.value().shape());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = a.value()[i] * a.value()[i];
  std::size_t ia = a.id();
  return a.tape()->make(std::move(out), {ia},
                        [ia](Tape &t, std::size_t self) {
                          const NdArray &g = t.grad(self);
                          const NdArray &va = t.value(ia);
                          NdArray &ga = t.grad(ia);
                          for (std::size_t i = 0; i < g.size(); ++i)
                            ga[i] += 2.0 * g[i] * va[i];
                        });
}

// Hard clamp; gradient passes inside [lo, hi] inclusive.
inline Var clamp(const Var &a, double lo, double hi) {
  if (!(lo <= hi)) throw ContractError("clamp: lo > hi");
  NdArray out(a.value().shape());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = std::min(std::max(a.value()[i], lo), hi);
  std::size_t ia = a.id();
  return a.tape()->make(std::move(out), {ia},
                        [ia, lo, hi](Tape &t, std::size_t self) {
                          const NdArray &g = t.grad(self);
                          const NdArray &va = t.value(ia);
                          NdArray &ga = t.grad(ia);
                          for (std::size_t i = 0; i < g.size(); ++i)
                            if (va[i] >= lo && va[i] <= hi) ga[i] += g[i];
                        });
}

// ---- reductions and shape ops ----

inline Var sum(const Var &a) {
  NdArray out = NdArray::scalar(a.value().sum());
  std::size_t ia = a.id();
  return a.tape()->make(std::move(out), {ia},
                        [ia](Tape &t, std::size_t self) {
                          double g = t.grad(self)[0];
                          NdArray &ga = t.grad(ia);
                          for (std::size_t i = 0; i < ga.size(); ++i)
                            ga[i] += g;
                        });
}

// Softmax over a rank-1 vector, max-shifted for stability.
inline Var softmax(const Var &a) {
  if (a.value().rank() != 1)
    throw DimensionError("softmax: expected rank-1, got " +
                         a.value().shape_str());
  const NdArray &v = a.value();
  double mx = v[0];
  for (std::size_t i = 1; i < v.size(); ++i) mx = std::max(mx, v[i]);
  NdArray out(v.shape());
  double z = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = std::exp(v[i] - mx);
    z += out[i];
  }
  for (std::size_t i = 0; i < v.size(); ++i) out[i] /= z;
  std::size_t ia = a.id();
  return a.tape()->make(std::move(out), {ia},
                        [ia](Tape &t, std::size_t self) {
                          const NdArray &g = t.grad(self);
                          const NdArray &y = t.value(self);
                          NdArray &ga = t.grad(ia);
                          double dot = 0.0;
                          for (std::size_t i = 0; i < g.size(); ++i)
                            dot += g[i] * y[i];
                          for (std::size_t i = 0; i < g.size(); ++i)
                            ga[i] += y[i] * (g[i] - dot);
                        });
}

// Gated linear unit a * sigmoid(b), fused so the network's gate is one node.
inline Var glu(const Var &a, const Var &b) {
  Tape *t = detail::same_tape(a, b, "glu");
  detail::check_same_shape(a, b, "glu");
  NdArray sig(b.value().shape());
  for (std::size_t i = 0; i < sig.size(); ++i)
    sig[i] = sigmoid_scalar(b.value()[i]);
  NdArray out(a.value().shape());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = a.value()[i] * sig[i];
  std::size_t ia = a.id(), ib = b.id();
  return t->make(std::move(out), {ia, ib},
                 [ia, ib, sig](Tape &t, std::size_t self) {
                   const NdArray &g = t.grad(self);
                   const NdArray &va = t.value(ia);
                   NdArray &ga = t.grad(ia);
                   NdArray &gb = t.grad(ib);
                   for (std::size_t i = 0; i < g.size(); ++i) {
                     ga[i] += g[i] * sig[i];
                     gb[i] += g[i] * va[i] * sig[i] * (1.0 - sig[i]);
                   }
                 });
}

// Stack b's rows under a's; both are channels x time with equal time length.
inline Var concat_rows(const Var &a, const Var &b) {
  Tape *t = detail::same_tape(a, b, "concat_rows");
  const NdArray &va = a.value(), &vb = b.value();
  if (va.rank() != 2 || vb.rank() != 2 || va.dim(1) != vb.dim(1))
    throw DimensionError("concat_rows: need rank-2 with equal time length, "
                         "got " + va.shape_str() + " and " + vb.shape_str());
  std::size_t ca = va.dim(0), cb = vb.dim(0), n = va.dim(1);
  NdArray out({ca + cb, n});
  std::copy(va.data(), va.data() + ca * n, out.data());
  std::copy(vb.data(), vb.data() + cb * n, out.data() + ca * n);
  std::size_t ia = a.id(), ib = b.id();
  return t->make(std::move(out), {ia, ib},
                 [ia, ib, ca, cb, n](Tape &t, std::size_t self) {
                   const NdArray &g = t.grad(self);
                   NdArray &ga = t.grad(ia);
                   NdArray &gb = t.grad(ib);
                   for (std::size_t i = 0; i < ca * n; ++i) ga[i] += g[i];
                   for (std::size_t i = 0; i < cb * n; ++i)
                     gb[i] += g[ca * n + i];
                 });
}

// Broadcast a rank-1 vector across time: C -> C x n.
inline Var tile_cols(const Var &a, std::size_t n) {
  const NdArray &v = a.value();
  if (v.rank() != 1)
    throw DimensionError("tile_cols: expected rank-1, got " + v.shape_str());
  if (n == 0) throw DimensionError("tile_cols: zero length");
  std::size_t c = v.dim(0);
  NdArray out({c, n});
  for (std::size_t i = 0; i < c; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = v[i];
  std::size_t ia = a.id();
  return a.tape()->make(std::move(out), {ia},
                        [ia, c, n](Tape &t, std::size_t self) {
                          const NdArray &g = t.grad(self);
                          NdArray &ga = t.grad(ia);
                          for (std::size_t i = 0; i < c; ++i) {
                            double s = 0.0;
                            for (std::size_t j = 0; j < n; ++j)
                              s += g[i * n + j];
                            ga[i] += s;
                          }
                        });
}

// Contiguous crop along time: C x N -> C x len starting at `start`.
inline Var slice_cols(const Var &a, std::size_t start, std::size_t len) {
  const NdArray &v = a.value();
  if (v.rank() != 2)
    throw DimensionError("slice_cols: expected rank-2, got " + v.shape_str());
  std::size_t c = v.dim(0), n = v.dim(1);
  if (len == 0 || start + len > n)
    throw DimensionError("slice_cols: range [" + std::to_string(start) + "," +
                         std::to_string(start + len) + ") out of " +
                         std::to_string(n));
  NdArray out({c, len});
  for (std::size_t i = 0; i < c; ++i)
    std::copy(v.data() + i * n + start, v.data() + i * n + start + len,
              out.data() + i * len);
  std::size_t ia = a.id();
  return a.tape()->make(std::move(out), {ia},
                        [ia, c, n, start, len](Tape &t, std::size_t self) {
                          const NdArray &g = t.grad(self);
                          NdArray &ga = t.grad(ia);
                          for (std::size_t i = 0; i < c; ++i)
                            for (std::size_t j = 0; j < len; ++j)
                              ga[i * n + start + j] += g[i * len + j];
                        });
}

// ---- 1-D convolution stack ----

// Cross-correlation with zero padding:
//   out(co, m) = bias(co) + sum_{ci,k} kernel(co,ci,k) * x(ci, m*stride+k-pad)
// out length (N + 2 pad - K) / stride + 1 (floored).
inline Var conv1d(const Var &x, const Var &kernel, const Var &bias,
                  std::size_t stride, std::size_t pad) {
  Tape *t = detail::same_tape(x, kernel, "conv1d");
  detail::same_tape(x, bias, "conv1d");
  const NdArray &vx = x.value(), &vw = kernel.value(), &vb = bias.value();
  if (vx.rank() != 2 || vw.rank() != 3 || vb.rank() != 1)
    throw DimensionError("conv1d: expected x rank-2, kernel rank-3, bias "
                         "rank-1");
  std::size_t cin = vx.dim(0), n = vx.dim(1);
  std::size_t cout = vw.dim(0), k = vw.dim(2);
  if (vw.dim(1) != cin)
    throw DimensionError("conv1d: kernel in-channels " +
                         std::to_string(vw.dim(1)) + " != input channels " +
                         std::to_string(cin));
  if (vb.dim(0) != cout)
    throw DimensionError("conv1d: bias size != out-channels");
  if (stride == 0) throw DimensionError("conv1d: stride must be positive");
  if (n + 2 * pad < k)
    throw DimensionError("conv1d: kernel longer than padded input");
  std::size_t m = (n + 2 * pad - k) / stride + 1;

  NdArray out({cout, m});
  for (std::size_t co = 0; co < cout; ++co) {
    double *o = out.data() + co * m;
    for (std::size_t j = 0; j < m; ++j) o[j] = vb[co];
    for (std::size_t ci = 0; ci < cin; ++ci) {
      const double *xi = vx.data() + ci * n;
      for (std::size_t kk = 0; kk < k; ++kk) {
        double w = vw[(co * cin + ci) * k + kk];
        if (w == 0.0) continue;
        for (std::size_t j = 0; j < m; ++j) {
          std::ptrdiff_t tt = static_cast<std::ptrdiff_t>(j * stride + kk) -
                              static_cast<std::ptrdiff_t>(pad);
          if (tt >= 0 && tt < static_cast<std::ptrdiff_t>(n))
            o[j] += w * xi[tt];
        }
      }
    }
  }

  std::size_t ix = x.id(), iw = kernel.id(), ib = bias.id();
  return t->make(
      std::move(out), {ix, iw, ib},
      [ix, iw, ib, cin, cout, n, k, m, stride, pad](Tape &t,
                                                    std::size_t self) {
        const NdArray &g = t.grad(self);
        const NdArray &vx = t.value(ix);
        const NdArray &vw = t.value(iw);
        NdArray &gx = t.grad(ix);
        NdArray &gw = t.grad(iw);
        NdArray &gb = t.grad(ib);
        for (std::size_t co = 0; co < cout; ++co) {
          const double *go = g.data() + co * m;
          double s = 0.0;
          for (std::size_t j = 0; j < m; ++j) s += go[j];
          gb[co] += s;
          for (std::size_t ci = 0; ci < cin; ++ci) {
            const double *xi = vx.data() + ci * n;
            double *gxi = gx.data() + ci * n;
            for (std::size_t kk = 0; kk < k; ++kk) {
              double w = vw[(co * cin + ci) * k + kk];
              double gwk = 0.0;
              for (std::size_t j = 0; j < m; ++j) {
                std::ptrdiff_t tt =
                    static_cast<std::ptrdiff_t>(j * stride + kk) -
                    static_cast<std::ptrdiff_t>(pad);
                if (tt >= 0 && tt < static_cast<std::ptrdiff_t>(n)) {
                  gwk += go[j] * xi[tt];
                  gxi[tt] += go[j] * w;
                }
              }
              gw[(co * cin + ci) * k + kk] += gwk;
            }
          }
        }
      });
}

// Transposed convolution, the adjoint of conv1d's linear map:
//   out(co, n*stride+k-pad) += kernel(ci,co,k) * x(ci,n);  out += bias.
// out length (N-1)*stride + K - 2 pad.
inline Var deconv1d(const Var &x, const Var &kernel, const Var &bias,
                    std::size_t stride, std::size_t pad) {
  Tape *t = detail::same_tape(x, kernel, "deconv1d");
  detail::same_tape(x, bias, "deconv1d");
  const NdArray &vx = x.value(), &vw = kernel.value(), &vb = bias.value();
  if (vx.rank() != 2 || vw.rank() != 3 || vb.rank() != 1)
    throw DimensionError("deconv1d: expected x rank-2, kernel rank-3, bias "
                         "rank-1");
  std::size_t cin = vx.dim(0), n = vx.dim(1);
  std::size_t cout = vw.dim(1), k = vw.dim(2);
  if (vw.dim(0) != cin)
    throw DimensionError("deconv1d: kernel in-channels " +
                         std::to_string(vw.dim(0)) + " != input channels " +
                         std::to_string(cin));
  if (vb.dim(0) != cout)
    throw DimensionError("deconv1d: bias size != out-channels");
  if (stride == 0) throw DimensionError("deconv1d: stride must be positive");
  std::ptrdiff_t msig = static_cast<std::ptrdiff_t>((n - 1) * stride + k) -
                        2 * static_cast<std::ptrdiff_t>(pad);
  if (msig < 1) throw DimensionError("deconv1d: empty output");
  std::size_t m = static_cast<std::size_t>(msig);

  NdArray out({cout, m});
  for (std::size_t co = 0; co < cout; ++co) {
    double *o = out.data() + co * m;
    for (std::size_t j = 0; j < m; ++j) o[j] = vb[co];
  }
  for (std::size_t ci = 0; ci < cin; ++ci) {
    const double *xi = vx.data() + ci * n;
    for (std::size_t co = 0; co < cout; ++co) {
      double *o = out.data() + co * m;
      for (std::size_t kk = 0; kk < k; ++kk) {
        double w = vw[(ci * cout + co) * k + kk];
        if (w == 0.0) continue;
        for (std::size_t j = 0; j < n; ++j) {
          std::ptrdiff_t tt = static_cast<std::ptrdiff_t>(j * stride + kk) -
                              static_cast<std::ptrdiff_t>(pad);
          if (tt >= 0 && tt < static_cast<std::ptrdiff_t>(m))
            o[tt] += w * xi[j];
        }
      }
    }
  }

  std::size_t ix = x.id(), iw = kernel.id(), ib = bias.id();
  return t->make(
      std::move(out), {ix, iw, ib},
      [ix, iw, ib, cin, cout, n, k, m, stride, pad](Tape &t,
                                                    std::size_t self) {
        const NdArray &g = t.grad(self);
        const NdArray &vx = t.value(ix);
        const NdArray &vw = t.value(iw);
        NdArray &gx = t.grad(ix);
        NdArray &gw = t.grad(iw);
        NdArray &gb = t.grad(ib);
        for (std::size_t co = 0; co < cout; ++co) {
          const double *go = g.data() + co * m;
          double s = 0.0;
          for (std::size_t j = 0; j < m; ++j) s += go[j];
          gb[co] += s;
        }
        for (std::size_t ci = 0; ci < cin; ++ci) {
          const double *xi = vx.data() + ci * n;
          double *gxi = gx.data() + ci * n;
          for (std::size_t co = 0; co < cout; ++co) {
            const double *go = g.data() + co * m;
            for (std::size_t kk = 0; kk < k; ++kk) {
              double w = vw[(ci * cout + co) * k + kk];
              double gwk = 0.0;
              for (std::size_t j = 0; j < n; ++j) {
                std::ptrdiff_t tt =
                    static_cast<std::ptrdiff_t>(j * stride + kk) -
                    static_cast<std::ptrdiff_t>(pad);
                if (tt >= 0 && tt < static_cast<std::ptrdiff_t>(m)) {
                  gwk += go[tt] * xi[j];
                  gxi[j] += go[tt] * w;
                }
              }
              gw[(ci * cout + co) * k + kk] += gwk;
            }
          }
        }
      });
}

// Batch normalization over the time axis of a channels x time map.
// Train mode normalizes with the biased batch statistics and folds them into
// the running estimates (new = (1-momentum) * old + momentum * batch); eval
// mode normalizes with the running estimates and requires at least one prior
// train-mode update.
inline Var batchnorm1d(const Var &x, const Var &gamma, const Var &beta,
                       BatchNormStats &stats, BnMode mode,
                       double momentum = 0.1, double eps = 1e-5) {
  Tape *t = detail::same_tape(x, gamma, "batchnorm1d");
  detail::same_tape(x, beta, "batchnorm1d");
  const NdArray &vx = x.value();
  if (vx.rank() != 2)
    throw DimensionError("batchnorm1d: expected rank-2 input, got " +
                         vx.shape_str());
  std::size_t c = vx.dim(0), n = vx.dim(1);
  if (gamma.value().rank() != 1 || gamma.value().dim(0) != c ||
      beta.value().rank() != 1 || beta.value().dim(0) != c)
    throw DimensionError("batchnorm1d: gamma/beta must be rank-1 of size " +
                         std::to_string(c));
  if (stats.running_mean.size() != c)
    throw DimensionError("batchnorm1d: stats channel count mismatch");

  NdArray mean({c}), invstd({c});
  if (mode == BnMode::kTrain) {
    for (std::size_t i = 0; i < c; ++i) {
      const double *xi = vx.data() + i * n;
      double m = 0.0;
      for (std::size_t j = 0; j < n; ++j) m += xi[j];
      m /= static_cast<double>(n);
      double var = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        double d = xi[j] - m;
        var += d * d;
      }
      var /= static_cast<double>(n);
      mean[i] = m;
      invstd[i] = 1.0 / std::sqrt(var + eps);
      stats.running_mean[i] =
          (1.0 - momentum) * stats.running_mean[i] + momentum * m;
      stats.running_var[i] =
          (1.0 - momentum) * stats.running_var[i] + momentum * var;
    }
    stats.updates += 1;
  } else {
    if (stats.updates == 0)
      throw StateError("batchnorm1d: eval mode before any train-mode update");
    for (std::size_t i = 0; i < c; ++i) {
      mean[i] = stats.running_mean[i];
      invstd[i] = 1.0 / std::sqrt(stats.running_var[i] + eps);
    }
  }

  NdArray xhat({c, n});
  NdArray out({c, n});
  for (std::size_t i = 0; i < c; ++i) {
    const double *xi = vx.data() + i * n;
    double *xh = xhat.data() + i * n;
    double *o = out.data() + i * n;
    double gm = gamma.value()[i], bt = beta.value()[i];
    for (std::size_t j = 0; j < n; ++j) {
      xh[j] = (xi[j] - mean[i]) * invstd[i];
      o[j] = gm * xh[j] + bt;
    }
  }

  std::size_t ix = x.id(), ig = gamma.id(), ib = beta.id();
  bool train = (mode == BnMode::kTrain);
  return t->make(
      std::move(out), {ix, ig, ib},
      [ix, ig, ib, c, n, train, xhat, invstd](Tape &t, std::size_t self) {
        const NdArray &g = t.grad(self);
        const NdArray &vgamma = t.value(ig);
        NdArray &gx = t.grad(ix);
        NdArray &gg = t.grad(ig);
        NdArray &gb = t.grad(ib);
        double dn = static_cast<double>(n);
        for (std::size_t i = 0; i < c; ++i) {
          const double *gi = g.data() + i * n;
          const double *xh = xhat.data() + i * n;
          double *gxi = gx.data() + i * n;
          double sum_g = 0.0, sum_gx = 0.0;
          for (std::size_t j = 0; j < n; ++j) {
            sum_g += gi[j];
            sum_gx += gi[j] * xh[j];
          }
          gb[i] += sum_g;
          gg[i] += sum_gx;
          double gm = vgamma[i];
          if (train) {
            // Full backward through the batch statistics.
            for (std::size_t j = 0; j < n; ++j) {
              double gxh = gi[j] * gm;
              gxi[j] += invstd[i] / dn *
                        (dn * gxh - gm * sum_g - xh[j] * gm * sum_gx);
            }
          } else {
            for (std::size_t j = 0; j < n; ++j)
              gxi[j] += gi[j] * gm * invstd[i];
          }
        }
      });
}

// ---- operator sugar ----

inline Var operator+(const Var &a, const Var &b) { return add(a, b); }
inline Var operator-(const Var &a, const Var &b) { return sub(a, b); }
inline Var operator*(const Var &a, const Var &b) { return mul(a, b); }
inline Var operator/(const Var &a, const Var &b) { return div(a, b); }
inline Var operator*(const Var &a, double c) { return scale(a, c); }
inline Var operator*(double c, const Var &a) { return scale(a, c); }
inline Var operator+(const Var &a, double c) { return shift(a, c); }
inline Var operator-(const Var &a, double c) { return shift(a, -c); }
inline Var operator-(const Var &a) { return scale(a, -1.0); }

// ---- Adam ----

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// First/second moment state for one fixed parameter list.  Copyable by
// design: callers snapshot it (together with the parameter values) to roll a
// rejected step back.
class AdamState {
 public:
  AdamState() = default;
  explicit AdamState(AdamConfig cfg) : cfg_(cfg) {}

  const AdamConfig &config() const { return cfg_; }
  std::uint64_t steps() const { return t_; }
  void set_lr(double lr) { cfg_.lr = lr; }

  // One update over params using their accumulated gradients.  Rejects the
  // whole step, mutating nothing, if any gradient is non-finite.
  void step(const std::vector<Parameter *> &params) {
    if (!initialized_) {
      for (const Parameter *p : params) {
        m_.push_back(NdArray(p->value.shape()));
        v_.push_back(NdArray(p->value.shape()));
      }
      initialized_ = true;
    }
    if (params.size() != m_.size())
      throw StateError("adam_step: parameter list size changed");
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (!params[i]->value.same_shape(m_[i]))
        throw StateError("adam_step: parameter shape changed: " +
                         params[i]->name);
      if (!params[i]->grad.same_shape(params[i]->value))
        throw StateError("adam_step: missing gradient for " +
                         params[i]->name);
      if (!params[i]->grad.finite())
        throw Error("adam_step: non-finite gradient for " + params[i]->name);
    }

    t_ += 1;
    double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      NdArray &th = params[i]->value;
      const NdArray &g = params[i]->grad;
      NdArray &m = m_[i];
      NdArray &v = v_[i];
      for (std::size_t j = 0; j < th.size(); ++j) {
        m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g[j];
        v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g[j] * g[j];
        double mhat = m[j] / bc1;
        double vhat = v[j] / bc2;
        th[j] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
      }
    }
  }

 private:
  AdamConfig cfg_;
  std::uint64_t t_ = 0;
  bool initialized_ = false;
  std::vector<NdArray> m_, v_;
};

}  // namespace ad
}  // namespace bsskit

#endif  // BSSKIT_AUTODIFF_HPP_
