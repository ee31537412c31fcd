#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "crn/errors.hpp"
#include "crn/gemm.hpp"
#include "crn/tensor.hpp"

namespace crn {

// Named learnable tensor with its gradient accumulator.
template <typename Real>
struct Param {
  std::string name;
  Tensor<Real> value;
  Tensor<Real> grad;

  Param() = default;
  Param(std::string n, Tensor<Real> v)
      : name(std::move(n)), value(std::move(v)), grad(Tensor<Real>::zeros(value.shape)) {}

  void zero_grad() { std::fill(grad.data.begin(), grad.data.end(), Real(0)); }
};

struct Var {
  int32_t idx = -1;
  bool valid() const { return idx >= 0; }
};

// Reverse-mode tape over dense tensors. A fresh tape is built per forward
// pass; backward() walks the recorded nodes in reverse. Leaves created from
// Params accumulate into the param's grad buffer.
template <typename Real>
class Tape {
 public:
  Var constant(Tensor<Real> v) {
    return push(std::move(v), false, nullptr, {});
  }

  Var zeros(std::vector<int64_t> shape) {
    return constant(Tensor<Real>::zeros(std::move(shape)));
  }

  Var leaf(Param<Real>& p) {
    Param<Real>* pp = &p;
    Var out = push(p.value, true, nullptr, {});
    node(out).backward = [out, pp](Tape& t) {
      Tensor<Real>& g = t.node(out).grad;
      for (int64_t i = 0; i < g.size(); ++i) pp->grad.data[static_cast<size_t>(i)] += g.data[static_cast<size_t>(i)];
    };
    return out;
  }

  const Tensor<Real>& value(Var v) const { return node(v).value; }
  const Tensor<Real>& grad(Var v) const { return node(v).grad; }
  Real scalar(Var v) const {
    const Tensor<Real>& t = node(v).value;
    if (t.size() != 1) throw ShapeError("scalar() on tensor of shape " + Tensor<Real>::shape_str(t.shape));
    return t.data[0];
  }

  // y = x W^T + b, with x [M,K] (or [K]), W [N,K], b [N].
  Var linear(Var x, Var w, Var b) {
    const Tensor<Real>& xv = value(x);
    const Tensor<Real>& wv = value(w);
    const int64_t M = xv.rows(), K = xv.cols();
    if (wv.ndim() != 2 || wv.dim(1) != K)
      throw ShapeError("linear: input " + Tensor<Real>::shape_str(xv.shape) +
                       " does not conform with weight " + Tensor<Real>::shape_str(wv.shape));
    const int64_t N = wv.dim(0);
    if (b.valid()) {
      const Tensor<Real>& bv = value(b);
      if (bv.size() != N)
        throw ShapeError("linear: bias " + Tensor<Real>::shape_str(bv.shape) +
                         " does not conform with weight " + Tensor<Real>::shape_str(wv.shape));
    }
    Tensor<Real> y(xv.ndim() == 1 ? std::vector<int64_t>{N} : std::vector<int64_t>{M, N});
    detail::gemm_nt(M, N, K, xv.ptr(), wv.ptr(), y.ptr(), false);
    if (b.valid()) {
      const Real* bp = value(b).ptr();
      for (int64_t i = 0; i < M; ++i) {
        Real* yp = y.ptr() + i * N;
        for (int64_t j = 0; j < N; ++j) yp[j] += bp[j];
      }
    }
    bool req = needs_grad(x) || needs_grad(w) || (b.valid() && needs_grad(b));
    Var out = push(std::move(y), req, nullptr, {});
    if (req)
      node(out).backward = [out, x, w, b, M, N, K](Tape& t) {
        const Tensor<Real>& g = t.node(out).grad;
        if (t.needs_grad(x)) {
          Tensor<Real>& gx = t.ensure_grad(x);
          detail::gemm_nn(M, N, K, g.ptr(), t.value(w).ptr(), gx.ptr(), true);
        }
        if (t.needs_grad(w)) {
          Tensor<Real>& gw = t.ensure_grad(w);
          detail::gemm_tn(M, N, K, g.ptr(), t.value(x).ptr(), gw.ptr(), true);
        }
        if (b.valid() && t.needs_grad(b)) {
          Tensor<Real>& gb = t.ensure_grad(b);
          for (int64_t i = 0; i < M; ++i) {
            const Real* gp = g.ptr() + i * N;
            for (int64_t j = 0; j < N; ++j) gb.data[static_cast<size_t>(j)] += gp[j];
          }
        }
      };
    return out;
  }

  Var relu(Var x) {
    Tensor<Real> y = value(x);
    for (auto& v : y.data) v = v > Real(0) ? v : Real(0);
    return unary(x, std::move(y), [](Tape& t, Var xi, const Tensor<Real>& g, Tensor<Real>& gx) {
      const Tensor<Real>& xv = t.value(xi);
      for (int64_t i = 0; i < g.size(); ++i)
        if (xv.data[static_cast<size_t>(i)] > Real(0)) gx.data[static_cast<size_t>(i)] += g.data[static_cast<size_t>(i)];
    });
  }

  Var sigmoid(Var x) {
    Tensor<Real> y = value(x);
    for (auto& v : y.data) v = sigmoid_scalar(v);
    Var out = push(std::move(y), needs_grad(x), nullptr, {});
    if (needs_grad(x))
      node(out).backward = [out, x](Tape& t) {
        const Tensor<Real>& g = t.node(out).grad;
        const Tensor<Real>& yv = t.value(out);
        Tensor<Real>& gx = t.ensure_grad(x);
        for (int64_t i = 0; i < g.size(); ++i) {
          const Real yy = yv.data[static_cast<size_t>(i)];
          gx.data[static_cast<size_t>(i)] += g.data[static_cast<size_t>(i)] * yy * (Real(1) - yy);
        }
      };
    return out;
  }

  Var tanh_op(Var x) {
    Tensor<Real> y = value(x);
    for (auto& v : y.data) v = std::tanh(v);
    Var out = push(std::move(y), needs_grad(x), nullptr, {});
    if (needs_grad(x))
      node(out).backward = [out, x](Tape& t) {
        const Tensor<Real>& g = t.node(out).grad;
        const Tensor<Real>& yv = t.value(out);
        Tensor<Real>& gx = t.ensure_grad(x);
        for (int64_t i = 0; i < g.size(); ++i) {
          const Real yy = yv.data[static_cast<size_t>(i)];
          gx.data[static_cast<size_t>(i)] += g.data[static_cast<size_t>(i)] * (Real(1) - yy * yy);
        }
      };
    return out;
  }

  // Softmax along the given axis; rows elsewhere are independent.
  Var softmax(Var x, int axis) {
    const Tensor<Real>& xv = value(x);
    if (axis < 0) axis += xv.ndim();
    if (axis < 0 || axis >= xv.ndim())
      throw ShapeError("softmax: axis out of range for " + Tensor<Real>::shape_str(xv.shape));
    int64_t outer = 1, inner = 1;
    const int64_t len = xv.dim(axis);
    for (int i = 0; i < axis; ++i) outer *= xv.dim(i);
    for (int i = axis + 1; i < xv.ndim(); ++i) inner *= xv.dim(i);
    Tensor<Real> y = xv;
    for (int64_t o = 0; o < outer; ++o)
      for (int64_t in = 0; in < inner; ++in) {
        Real* base = y.ptr() + o * len * inner + in;
        Real mx = base[0];
        for (int64_t l = 1; l < len; ++l) mx = std::max(mx, base[l * inner]);
        Real sum = 0;
        for (int64_t l = 0; l < len; ++l) {
          Real e = std::exp(base[l * inner] - mx);
          base[l * inner] = e;
          sum += e;
        }
        for (int64_t l = 0; l < len; ++l) base[l * inner] /= sum;
      }
    Var out = push(std::move(y), needs_grad(x), nullptr, {});
    if (needs_grad(x))
      node(out).backward = [out, x, outer, len, inner](Tape& t) {
        const Tensor<Real>& g = t.node(out).grad;
        const Tensor<Real>& yv = t.value(out);
        Tensor<Real>& gx = t.ensure_grad(x);
        for (int64_t o = 0; o < outer; ++o)
          for (int64_t in = 0; in < inner; ++in) {
            const int64_t off = o * len * inner + in;
            Real dot = 0;
            for (int64_t l = 0; l < len; ++l)
              dot += g.data[static_cast<size_t>(off + l * inner)] * yv.data[static_cast<size_t>(off + l * inner)];
            for (int64_t l = 0; l < len; ++l) {
              const size_t i = static_cast<size_t>(off + l * inner);
              gx.data[i] += yv.data[i] * (g.data[i] - dot);
            }
          }
      };
    return out;
  }

  Var add(Var a, Var b) {
    return binary_elemwise(a, b, [](Real x, Real y) { return x + y; },
                           [](Real, Real, Real g) { return g; },
                           [](Real, Real, Real g) { return g; });
  }

  Var sub(Var a, Var b) {
    return binary_elemwise(a, b, [](Real x, Real y) { return x - y; },
                           [](Real, Real, Real g) { return g; },
                           [](Real, Real, Real g) { return -g; });
  }

  Var mul(Var a, Var b) {
    return binary_elemwise(a, b, [](Real x, Real y) { return x * y; },
                           [](Real, Real y, Real g) { return g * y; },
                           [](Real x, Real, Real g) { return g * x; });
  }

  Var scale(Var x, Real c) {
    Tensor<Real> y = value(x);
    for (auto& v : y.data) v *= c;
    return unary(x, std::move(y), [c](Tape&, Var, const Tensor<Real>& g, Tensor<Real>& gx) {
      for (int64_t i = 0; i < g.size(); ++i) gx.data[static_cast<size_t>(i)] += c * g.data[static_cast<size_t>(i)];
    });
  }

  // y[m, :] = s[m] * x[m, :] with s of shape [M] or [M,1].
  Var scale_rows(Var x, Var s) {
    const Tensor<Real>& xv = value(x);
    const Tensor<Real>& sv = value(s);
    const int64_t M = xv.rows(), N = xv.cols();
    if (sv.size() != M)
      throw ShapeError("scale_rows: scale " + Tensor<Real>::shape_str(sv.shape) +
                       " does not match rows of " + Tensor<Real>::shape_str(xv.shape));
    Tensor<Real> y = xv;
    for (int64_t m = 0; m < M; ++m) {
      const Real sm = sv.data[static_cast<size_t>(m)];
      Real* yp = y.ptr() + m * N;
      for (int64_t j = 0; j < N; ++j) yp[j] *= sm;
    }
    bool req = needs_grad(x) || needs_grad(s);
    Var out = push(std::move(y), req, nullptr, {});
    if (req)
      node(out).backward = [out, x, s, M, N](Tape& t) {
        const Tensor<Real>& g = t.node(out).grad;
        const Tensor<Real>& xv2 = t.value(x);
        const Tensor<Real>& sv2 = t.value(s);
        if (t.needs_grad(x)) {
          Tensor<Real>& gx = t.ensure_grad(x);
          for (int64_t m = 0; m < M; ++m) {
            const Real sm = sv2.data[static_cast<size_t>(m)];
            const Real* gp = g.ptr() + m * N;
            Real* gxp = gx.ptr() + m * N;
            for (int64_t j = 0; j < N; ++j) gxp[j] += sm * gp[j];
          }
        }
        if (t.needs_grad(s)) {
          Tensor<Real>& gs = t.ensure_grad(s);
          for (int64_t m = 0; m < M; ++m) {
            const Real* gp = g.ptr() + m * N;
            const Real* xp = xv2.ptr() + m * N;
            Real acc = 0;
            for (int64_t j = 0; j < N; ++j) acc += gp[j] * xp[j];
            gs.data[static_cast<size_t>(m)] += acc;
          }
        }
      };
    return out;
  }

  // y[m, :] = col[m] * p, broadcasting a parameter vector over rows.
  Var outer_param(const Tensor<Real>& col, Var p) {
    const Tensor<Real>& pv = value(p);
    const int64_t M = col.size(), N = pv.size();
    Tensor<Real> y({M, N});
    for (int64_t m = 0; m < M; ++m) {
      const Real cm = col.data[static_cast<size_t>(m)];
      Real* yp = y.ptr() + m * N;
      for (int64_t j = 0; j < N; ++j) yp[j] = cm * pv.data[static_cast<size_t>(j)];
    }
    Tensor<Real> col_copy = col;
    Var out = push(std::move(y), needs_grad(p), nullptr, {});
    if (needs_grad(p))
      node(out).backward = [out, p, col_copy, M, N](Tape& t) {
        const Tensor<Real>& g = t.node(out).grad;
        Tensor<Real>& gp = t.ensure_grad(p);
        for (int64_t m = 0; m < M; ++m) {
          const Real cm = col_copy.data[static_cast<size_t>(m)];
          const Real* gr = g.ptr() + m * N;
          for (int64_t j = 0; j < N; ++j) gp.data[static_cast<size_t>(j)] += cm * gr[j];
        }
      };
    return out;
  }

  Var concat_cols(std::span<const Var> parts) {
    if (parts.empty()) throw ShapeError("concat_cols: no inputs");
    const int64_t M = value(parts[0]).rows();
    int64_t total = 0;
    bool req = false;
    for (Var v : parts) {
      if (value(v).rows() != M)
        throw ShapeError("concat_cols: row mismatch " + Tensor<Real>::shape_str(value(parts[0]).shape) +
                         " vs " + Tensor<Real>::shape_str(value(v).shape));
      total += value(v).cols();
      req = req || needs_grad(v);
    }
    Tensor<Real> y({M, total});
    int64_t off = 0;
    for (Var v : parts) {
      const Tensor<Real>& pv = value(v);
      const int64_t C = pv.cols();
      for (int64_t m = 0; m < M; ++m)
        std::copy_n(pv.ptr() + m * C, C, y.ptr() + m * total + off);
      off += C;
    }
    std::vector<Var> parts_copy(parts.begin(), parts.end());
    Var out = push(std::move(y), req, nullptr, {});
    if (req)
      node(out).backward = [out, parts_copy, M, total](Tape& t) {
        const Tensor<Real>& g = t.node(out).grad;
        int64_t off2 = 0;
        for (Var v : parts_copy) {
          const int64_t C = t.value(v).cols();
          if (t.needs_grad(v)) {
            Tensor<Real>& gv = t.ensure_grad(v);
            for (int64_t m = 0; m < M; ++m) {
              const Real* gp = g.ptr() + m * total + off2;
              Real* gvp = gv.ptr() + m * C;
              for (int64_t j = 0; j < C; ++j) gvp[j] += gp[j];
            }
          }
          off2 += C;
        }
      };
    return out;
  }

  Var concat_cols(std::initializer_list<Var> parts) {
    return concat_cols(std::span<const Var>(parts.begin(), parts.size()));
  }

  Var slice_cols(Var x, int64_t j0, int64_t len) {
    const Tensor<Real>& xv = value(x);
    const int64_t M = xv.rows(), C = xv.cols();
    if (j0 < 0 || len <= 0 || j0 + len > C)
      throw ShapeError("slice_cols: [" + std::to_string(j0) + "," + std::to_string(j0 + len) +
                       ") out of range for " + Tensor<Real>::shape_str(xv.shape));
    Tensor<Real> y({M, len});
    for (int64_t m = 0; m < M; ++m) std::copy_n(xv.ptr() + m * C + j0, len, y.ptr() + m * len);
    Var out = push(std::move(y), needs_grad(x), nullptr, {});
    if (needs_grad(x))
      node(out).backward = [out, x, j0, len, M, C](Tape& t) {
        const Tensor<Real>& g = t.node(out).grad;
        Tensor<Real>& gx = t.ensure_grad(x);
        for (int64_t m = 0; m < M; ++m) {
          const Real* gp = g.ptr() + m * len;
          Real* gxp = gx.ptr() + m * C + j0;
          for (int64_t j = 0; j < len; ++j) gxp[j] += gp[j];
        }
      };
    return out;
  }

  Var select_rows(Var x, std::vector<int64_t> rows) {
    const Tensor<Real>& xv = value(x);
    const int64_t C = xv.cols();
    Tensor<Real> y({static_cast<int64_t>(rows.size()), C});
    for (size_t i = 0; i < rows.size(); ++i) {
      if (rows[i] < 0 || rows[i] >= xv.rows())
        throw ShapeError("select_rows: row " + std::to_string(rows[i]) + " out of range");
      std::copy_n(xv.ptr() + rows[i] * C, C, y.ptr() + static_cast<int64_t>(i) * C);
    }
    Var out = push(std::move(y), needs_grad(x), nullptr, {});
    if (needs_grad(x))
      node(out).backward = [out, x, rows, C](Tape& t) {
        const Tensor<Real>& g = t.node(out).grad;
        Tensor<Real>& gx = t.ensure_grad(x);
        for (size_t i = 0; i < rows.size(); ++i) {
          const Real* gp = g.ptr() + static_cast<int64_t>(i) * C;
          Real* gxp = gx.ptr() + rows[i] * C;
          for (int64_t j = 0; j < C; ++j) gxp[j] += gp[j];
        }
      };
    return out;
  }

  // Per-group running prefix sum over steps: x is [B*k, C] with rows grouped
  // by episode; y[b,t] = sum_{tau<=t} x[b,tau].
  Var cumsum_steps(Var x, int64_t groups, int64_t steps) {
    const Tensor<Real>& xv = value(x);
    const int64_t C = xv.cols();
    if (xv.rows() != groups * steps)
      throw ShapeError("cumsum_steps: rows " + std::to_string(xv.rows()) + " != " +
                       std::to_string(groups) + "*" + std::to_string(steps));
    Tensor<Real> y = xv;
    for (int64_t b = 0; b < groups; ++b)
      for (int64_t t = 1; t < steps; ++t) {
        Real* cur = y.ptr() + (b * steps + t) * C;
        const Real* prev = y.ptr() + (b * steps + t - 1) * C;
        for (int64_t j = 0; j < C; ++j) cur[j] += prev[j];
      }
    Var out = push(std::move(y), needs_grad(x), nullptr, {});
    if (needs_grad(x))
      node(out).backward = [out, x, groups, steps, C](Tape& t) {
        const Tensor<Real>& g = t.node(out).grad;
        Tensor<Real>& gx = t.ensure_grad(x);
        // dL/dx[b,tau] = sum_{t>=tau} dL/dy[b,t]: a suffix sum.
        std::vector<Real> acc(static_cast<size_t>(C));
        for (int64_t b = 0; b < groups; ++b) {
          std::fill(acc.begin(), acc.end(), Real(0));
          for (int64_t tt = steps - 1; tt >= 0; --tt) {
            const Real* gp = g.ptr() + (b * steps + tt) * C;
            Real* gxp = gx.ptr() + (b * steps + tt) * C;
            for (int64_t j = 0; j < C; ++j) {
              acc[static_cast<size_t>(j)] += gp[j];
              gxp[j] += acc[static_cast<size_t>(j)];
            }
          }
        }
      };
    return out;
  }

  // Identity value, but the reverse pass propagates exactly zero upstream.
  Var stop_gradient(Var x) { return push(value(x), false, nullptr, {}); }

  Var sum(Var x) {
    const Tensor<Real>& xv = value(x);
    Real acc = 0;
    for (Real v : xv.data) acc += v;
    Tensor<Real> y({1});
    y.data[0] = acc;
    return unary(x, std::move(y), [](Tape&, Var, const Tensor<Real>& g, Tensor<Real>& gx) {
      for (auto& v : gx.data) v += g.data[0];
    });
  }

  // Mean of the stable elementwise binary cross entropy over unmasked
  // positions; all-masked input is defined as zero with zero gradient.
  Var bce_with_logits(Var logits, const Tensor<Real>& targets, const Tensor<Real>& mask) {
    const Tensor<Real>& zv = value(logits);
    if (!zv.same_shape(targets) || !zv.same_shape(mask))
      throw ShapeError("bce_with_logits: shapes " + Tensor<Real>::shape_str(zv.shape) + ", " +
                       Tensor<Real>::shape_str(targets.shape) + ", " +
                       Tensor<Real>::shape_str(mask.shape) + " differ");
    double acc = 0, count = 0;
    for (int64_t i = 0; i < zv.size(); ++i) {
      const double m = static_cast<double>(mask.data[static_cast<size_t>(i)]);
      if (m == 0) continue;
      acc += m * bce_elem(static_cast<double>(zv.data[static_cast<size_t>(i)]),
                          static_cast<double>(targets.data[static_cast<size_t>(i)]));
      count += m;
    }
    Tensor<Real> y({1});
    y.data[0] = count > 0 ? static_cast<Real>(acc / count) : Real(0);
    Var out = push(std::move(y), needs_grad(logits), nullptr, {});
    if (needs_grad(logits) && count > 0) {
      Tensor<Real> tcopy = targets, mcopy = mask;
      const Real inv = static_cast<Real>(1.0 / count);
      node(out).backward = [out, logits, tcopy, mcopy, inv](Tape& t) {
        const Real g = t.node(out).grad.data[0];
        const Tensor<Real>& zv2 = t.value(logits);
        Tensor<Real>& gx = t.ensure_grad(logits);
        for (int64_t i = 0; i < zv2.size(); ++i) {
          const Real m = mcopy.data[static_cast<size_t>(i)];
          if (m == Real(0)) continue;
          const Real p = sigmoid_scalar(zv2.data[static_cast<size_t>(i)]);
          gx.data[static_cast<size_t>(i)] += g * m * inv * (p - tcopy.data[static_cast<size_t>(i)]);
        }
      };
    }
    return out;
  }

  void backward(Var loss) {
    if (node(loss).value.size() != 1)
      throw ShapeError("backward: loss must be scalar, got " +
                       Tensor<Real>::shape_str(node(loss).value.shape));
    ensure_grad(loss).data[0] = Real(1);
    for (int32_t i = loss.idx; i >= 0; --i) {
      Node& nd = nodes_[static_cast<size_t>(i)];
      if (!nd.requires_grad || !nd.backward) continue;
      if (nd.grad.size() == 0) continue;  // not on the path to the loss
      nd.backward(*this);
    }
  }

  bool needs_grad(Var v) const { return node(v).requires_grad; }

  size_t size() const { return nodes_.size(); }

  static Real sigmoid_scalar(Real x) {
    if (x >= Real(0)) return Real(1) / (Real(1) + std::exp(-x));
    const Real e = std::exp(x);
    return e / (Real(1) + e);
  }

  // max(z,0) - z*t + log(1+exp(-|z|)): finite for |z| up to 1e4 and beyond.
  static double bce_elem(double z, double t) {
    return std::max(z, 0.0) - z * t + std::log1p(std::exp(-std::abs(z)));
  }

  Tensor<Real>& ensure_grad(Var v) {
    Node& nd = node(v);
    if (nd.grad.size() == 0) nd.grad = Tensor<Real>::zeros(nd.value.shape);
    return nd.grad;
  }

 private:
  struct Node {
    Tensor<Real> value;
    Tensor<Real> grad;
    std::function<void(Tape&)> backward;
    bool requires_grad = false;
  };

  Node& node(Var v) { return nodes_.at(static_cast<size_t>(v.idx)); }
  const Node& node(Var v) const { return nodes_.at(static_cast<size_t>(v.idx)); }

  Var push(Tensor<Real> value, bool requires_grad, Param<Real>*, std::function<void(Tape&)> backward) {
    Node nd;
    nd.value = std::move(value);
    nd.requires_grad = requires_grad;
    nd.backward = std::move(backward);
    nodes_.push_back(std::move(nd));
    return Var{static_cast<int32_t>(nodes_.size() - 1)};
  }

  template <typename BackFn>
  Var unary(Var x, Tensor<Real> y, BackFn back) {
    Var out = push(std::move(y), needs_grad(x), nullptr, {});
    if (needs_grad(x))
      node(out).backward = [out, x, back](Tape& t) {
        back(t, x, t.node(out).grad, t.ensure_grad(x));
      };
    return out;
  }

  template <typename Fwd, typename BackA, typename BackB>
  Var binary_elemwise(Var a, Var b, Fwd fwd, BackA back_a, BackB back_b) {
    const Tensor<Real>& av = value(a);
    const Tensor<Real>& bv = value(b);
    if (!av.same_shape(bv))
      throw ShapeError("elementwise op: shape " + Tensor<Real>::shape_str(av.shape) +
                       " vs " + Tensor<Real>::shape_str(bv.shape));
    Tensor<Real> y = av;
    for (int64_t i = 0; i < y.size(); ++i) y.data[static_cast<size_t>(i)] = fwd(av.data[static_cast<size_t>(i)], bv.data[static_cast<size_t>(i)]);
    bool req = needs_grad(a) || needs_grad(b);
    Var out = push(std::move(y), req, nullptr, {});
    if (req)
      node(out).backward = [out, a, b, back_a, back_b](Tape& t) {
        const Tensor<Real>& g = t.node(out).grad;
        const Tensor<Real>& av2 = t.value(a);
        const Tensor<Real>& bv2 = t.value(b);
        if (t.needs_grad(a)) {
          Tensor<Real>& ga = t.ensure_grad(a);
          for (int64_t i = 0; i < g.size(); ++i)
            ga.data[static_cast<size_t>(i)] += back_a(av2.data[static_cast<size_t>(i)], bv2.data[static_cast<size_t>(i)], g.data[static_cast<size_t>(i)]);
        }
        if (t.needs_grad(b)) {
          Tensor<Real>& gb = t.ensure_grad(b);
          for (int64_t i = 0; i < g.size(); ++i)
            gb.data[static_cast<size_t>(i)] += back_b(av2.data[static_cast<size_t>(i)], bv2.data[static_cast<size_t>(i)], g.data[static_cast<size_t>(i)]);
        }
      };
    return out;
  }

  std::vector<Node> nodes_;
};

}  // namespace crn
