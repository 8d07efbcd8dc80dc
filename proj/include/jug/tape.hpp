#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "tensor.hpp"

namespace jug {

/// Handle to a node on a Tape.
struct Var {
  int idx = -1;
  bool valid() const { return idx >= 0; }
};

/// Stable numeric softmax over plain values (no tape involvement).
inline std::vector<double> softmax_values(const std::vector<double>& v) {
  double mx = v.at(0);
  for (double x : v) mx = std::max(mx, x);
  std::vector<double> out(v.size());
  double z = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = std::exp(v[i] - mx);
    z += out[i];
  }
  for (auto& x : out) x /= z;
  return out;
}

enum class OpKind {
  add,
  multiply,
  matmul,
  concat,
  slice,
  mean_over_axis,
  tanh_op,
  sigmoid_op,
  softmax_op,
  log_op,
  exp_op,
  embedding_lookup,
  cross_entropy
};

struct OpAttrs {
  std::size_t axis = 0;
  std::size_t offset = 0;
  std::size_t len = 0;
  std::size_t index = 0;
};

/// Define-by-run reverse-mode tape over dense 64-bit tensors (1-D and 2-D).
///
/// Each recorded node stores its value and, when any input is on a gradient
/// path, an adjoint closure. backward() sweeps the tape once in reverse and
/// accumulates parameter gradients into the bound Tensor buffers.
class Tape {
 public:
  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

  bool grad_enabled() const { return grad_enabled_; }
  std::size_t node_count() const { return nodes_.size(); }

  // ---- leaves ----

  Var constant(std::vector<double> v, Shape shape) {
    if (numel(shape) != v.size())
      throw ShapeError("constant: " + std::to_string(v.size()) + " values for shape " +
                       shape_str(shape));
    return push(std::move(v), std::move(shape), false);
  }

  Var constant_vec(std::vector<double> v) {
    Shape s{v.size()};
    return push(std::move(v), std::move(s), false);
  }

  Var constant_scalar(double c) { return push({c}, Shape{1}, false); }

  /// Read-only view of a tensor's values; never differentiated.
  Var leaf(const Tensor& t) {
    auto it = bound_.find(&t);
    if (it != bound_.end()) return Var{it->second};
    Var v = push(t.value, t.shape, false);
    bound_.emplace(&t, v.idx);
    return v;
  }

  /// Trainable parameter; registered once per tape, so repeated uses share a
  /// node and gradients accumulate into t.grad on backward().
  Var param(Tensor& t) {
    if (!grad_enabled_ || !t.requires_grad) return leaf(t);
    auto it = bound_.find(&t);
    if (it != bound_.end()) return Var{it->second};
    Var v = push(t.value, t.shape, true);
    bound_.emplace(&t, v.idx);
    Tensor* bound = &t;
    nodes_[v.idx].back = [v, bound](Tape& tp) {
      bound->ensure_grad();
      const auto& g = tp.nodes_[v.idx].grad;
      for (std::size_t i = 0; i < g.size(); ++i) bound->grad[i] += g[i];
    };
    return v;
  }

  // ---- elementwise ----

  Var add(Var a, Var b) {
    check_same("add", a, b);
    const auto& av = val(a);
    const auto& bv = val(b);
    std::vector<double> out(av.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
    Var r = push(std::move(out), shape(a), needs(a) || needs(b));
    if (nodes_[r.idx].needs_grad)
      nodes_[r.idx].back = [a, b, r](Tape& tp) {
        tp.acc(a, tp.nodes_[r.idx].grad);
        tp.acc(b, tp.nodes_[r.idx].grad);
      };
    return r;
  }

  Var mul(Var a, Var b) {
    check_same("multiply", a, b);
    const auto& av = val(a);
    const auto& bv = val(b);
    std::vector<double> out(av.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
    Var r = push(std::move(out), shape(a), needs(a) || needs(b));
    if (nodes_[r.idx].needs_grad)
      nodes_[r.idx].back = [a, b, r](Tape& tp) {
        const auto& g = tp.nodes_[r.idx].grad;
        if (tp.needs(a)) {
          auto& ga = tp.grad_buf(a);
          const auto& bv2 = tp.val(b);
          for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv2[i];
        }
        if (tp.needs(b)) {
          auto& gb = tp.grad_buf(b);
          const auto& av2 = tp.val(a);
          for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av2[i];
        }
      };
    return r;
  }

  Var scale(Var a, double c) {
    const auto& av = val(a);
    std::vector<double> out(av.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * c;
    Var r = push(std::move(out), shape(a), needs(a));
    if (nodes_[r.idx].needs_grad)
      nodes_[r.idx].back = [a, c, r](Tape& tp) {
        auto& ga = tp.grad_buf(a);
        const auto& g = tp.nodes_[r.idx].grad;
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * c;
      };
    return r;
  }

  /// Elementwise a + c.
  Var shift(Var a, double c) {
    const auto& av = val(a);
    std::vector<double> out(av.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + c;
    Var r = push(std::move(out), shape(a), needs(a));
    if (nodes_[r.idx].needs_grad)
      nodes_[r.idx].back = [a, r](Tape& tp) { tp.acc(a, tp.nodes_[r.idx].grad); };
    return r;
  }

  Var sub(Var a, Var b) { return add(a, scale(b, -1.0)); }

  // ---- linear algebra ----

  Var matmul(Var a, Var b) {
    const Shape &sa = shape(a), &sb = shape(b);
    if (sa.size() != 2 || sb.size() != 2 || sa[1] != sb[0])
      throw ShapeError("matmul: " + shape_str(sa) + " x " + shape_str(sb));
    const std::size_t m = sa[0], k = sa[1], n = sb[1];
    const auto& av = val(a);
    const auto& bv = val(b);
    std::vector<double> out(m * n, 0.0);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t p = 0; p < k; ++p) {
        const double aip = av[i * k + p];
        for (std::size_t j = 0; j < n; ++j) out[i * n + j] += aip * bv[p * n + j];
      }
    Var r = push(std::move(out), Shape{m, n}, needs(a) || needs(b));
    if (nodes_[r.idx].needs_grad)
      nodes_[r.idx].back = [a, b, r, m, k, n](Tape& tp) {
        const auto& g = tp.nodes_[r.idx].grad;
        if (tp.needs(a)) {
          auto& ga = tp.grad_buf(a);
          const auto& bv2 = tp.val(b);
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) {
              const double gij = g[i * n + j];
              for (std::size_t p = 0; p < k; ++p) ga[i * k + p] += gij * bv2[p * n + j];
            }
        }
        if (tp.needs(b)) {
          auto& gb = tp.grad_buf(b);
          const auto& av2 = tp.val(a);
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t p = 0; p < k; ++p) {
              const double aip = av2[i * k + p];
              for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += aip * g[i * n + j];
            }
        }
      };
    return r;
  }

  /// A[m,n] * x[n] -> [m]
  Var matvec(Var a, Var x) {
    const Shape &sa = shape(a), &sx = shape(x);
    if (sa.size() != 2 || sx.size() != 1 || sa[1] != sx[0])
      throw ShapeError("matvec: " + shape_str(sa) + " x " + shape_str(sx));
    const std::size_t m = sa[0], n = sa[1];
    const auto& av = val(a);
    const auto& xv = val(x);
    std::vector<double> out(m, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += av[i * n + j] * xv[j];
      out[i] = s;
    }
    Var r = push(std::move(out), Shape{m}, needs(a) || needs(x));
    if (nodes_[r.idx].needs_grad)
      nodes_[r.idx].back = [a, x, r, m, n](Tape& tp) {
        const auto& g = tp.nodes_[r.idx].grad;
        if (tp.needs(a)) {
          auto& ga = tp.grad_buf(a);
          const auto& xv2 = tp.val(x);
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += g[i] * xv2[j];
        }
        if (tp.needs(x)) {
          auto& gx = tp.grad_buf(x);
          const auto& av2 = tp.val(a);
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) gx[j] += av2[i * n + j] * g[i];
        }
      };
    return r;
  }

  /// A^T y: A[m,n], y[m] -> [n]
  Var tmatvec(Var a, Var y) {
    const Shape &sa = shape(a), &sy = shape(y);
    if (sa.size() != 2 || sy.size() != 1 || sa[0] != sy[0])
      throw ShapeError("tmatvec: " + shape_str(sa) + " x " + shape_str(sy));
    const std::size_t m = sa[0], n = sa[1];
    const auto& av = val(a);
    const auto& yv = val(y);
    std::vector<double> out(n, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
      const double yi = yv[i];
      for (std::size_t j = 0; j < n; ++j) out[j] += av[i * n + j] * yi;
    }
    Var r = push(std::move(out), Shape{n}, needs(a) || needs(y));
    if (nodes_[r.idx].needs_grad)
      nodes_[r.idx].back = [a, y, r, m, n](Tape& tp) {
        const auto& g = tp.nodes_[r.idx].grad;
        if (tp.needs(a)) {
          auto& ga = tp.grad_buf(a);
          const auto& yv2 = tp.val(y);
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += yv2[i] * g[j];
        }
        if (tp.needs(y)) {
          auto& gy = tp.grad_buf(y);
          const auto& av2 = tp.val(a);
          for (std::size_t i = 0; i < m; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < n; ++j) s += av2[i * n + j] * g[j];
            gy[i] += s;
          }
        }
      };
    return r;
  }

  /// A * B^T: A[m,k], B[n,k] -> [m,n]
  Var matmul_nt(Var a, Var b) {
    const Shape &sa = shape(a), &sb = shape(b);
    if (sa.size() != 2 || sb.size() != 2 || sa[1] != sb[1])
      throw ShapeError("matmul_nt: " + shape_str(sa) + " x " + shape_str(sb));
    const std::size_t m = sa[0], k = sa[1], n = sb[0];
    const auto& av = val(a);
    const auto& bv = val(b);
    std::vector<double> out(m * n, 0.0);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        double s = 0.0;
        for (std::size_t p = 0; p < k; ++p) s += av[i * k + p] * bv[j * k + p];
        out[i * n + j] = s;
      }
    Var r = push(std::move(out), Shape{m, n}, needs(a) || needs(b));
    if (nodes_[r.idx].needs_grad)
      nodes_[r.idx].back = [a, b, r, m, k, n](Tape& tp) {
        const auto& g = tp.nodes_[r.idx].grad;
        if (tp.needs(a)) {
          auto& ga = tp.grad_buf(a);
          const auto& bv2 = tp.val(b);
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) {
              const double gij = g[i * n + j];
              for (std::size_t p = 0; p < k; ++p) ga[i * k + p] += gij * bv2[j * k + p];
            }
        }
        if (tp.needs(b)) {
          auto& gb = tp.grad_buf(b);
          const auto& av2 = tp.val(a);
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) {
              const double gij = g[i * n + j];
              for (std::size_t p = 0; p < k; ++p) gb[j * k + p] += gij * av2[i * k + p];
            }
        }
      };
    return r;
  }

  /// Broadcast add of a row vector over every row: A[T,n] + v[n].
  Var add_rowvec(Var a, Var v) {
    const Shape &sa = shape(a), &sv = shape(v);
    if (sa.size() != 2 || sv.size() != 1 || sa[1] != sv[0])
      throw ShapeError("add_rowvec: " + shape_str(sa) + " + " + shape_str(sv));
    const std::size_t t = sa[0], n = sa[1];
    const auto& av = val(a);
    const auto& vv = val(v);
    std::vector<double> out(t * n);
    for (std::size_t i = 0; i < t; ++i)
      for (std::size_t j = 0; j < n; ++j) out[i * n + j] = av[i * n + j] + vv[j];
    Var r = push(std::move(out), sa, needs(a) || needs(v));
    if (nodes_[r.idx].needs_grad)
      nodes_[r.idx].back = [a, v, r, t, n](Tape& tp) {
        const auto& g = tp.nodes_[r.idx].grad;
        if (tp.needs(a)) tp.acc(a, g);
        if (tp.needs(v)) {
          auto& gv = tp.grad_buf(v);
          for (std::size_t i = 0; i < t; ++i)
            for (std::size_t j = 0; j < n; ++j) gv[j] += g[i * n + j];
        }
      };
    return r;
  }

  // ---- structure ----

  Var concat(const std::vector<Var>& parts) {
    if (parts.empty()) throw ShapeError("concat: no inputs");
    std::vector<double> out;
    bool ng = false;
    for (Var p : parts) {
      if (shape(p).size() != 1) throw ShapeError("concat: 1-D inputs only, got " + shape_str(shape(p)));
      const auto& pv = val(p);
      out.insert(out.end(), pv.begin(), pv.end());
      ng = ng || needs(p);
    }
    Shape s{out.size()};
    Var r = push(std::move(out), std::move(s), ng);
    if (nodes_[r.idx].needs_grad) {
      std::vector<Var> ps = parts;
      nodes_[r.idx].back = [ps, r](Tape& tp) {
        const auto& g = tp.nodes_[r.idx].grad;
        std::size_t off = 0;
        for (Var p : ps) {
          const std::size_t len = tp.val(p).size();
          if (tp.needs(p)) {
            auto& gp = tp.grad_buf(p);
            for (std::size_t i = 0; i < len; ++i) gp[i] += g[off + i];
          }
          off += len;
        }
      };
    }
    return r;
  }

  Var slice(Var a, std::size_t offset, std::size_t len) {
    const Shape& sa = shape(a);
    if (sa.size() != 1 || offset + len > sa[0])
      throw ShapeError("slice: [" + std::to_string(offset) + "," + std::to_string(offset + len) +
                       ") of " + shape_str(sa));
    const auto& av = val(a);
    std::vector<double> out(av.begin() + offset, av.begin() + offset + len);
    Var r = push(std::move(out), Shape{len}, needs(a));
    if (nodes_[r.idx].needs_grad)
      nodes_[r.idx].back = [a, offset, len, r](Tape& tp) {
        auto& ga = tp.grad_buf(a);
        const auto& g = tp.nodes_[r.idx].grad;
        for (std::size_t i = 0; i < len; ++i) ga[offset + i] += g[i];
      };
    return r;
  }

  /// Stacks equal-length 1-D rows into a [T,n] matrix.
  Var stack_rows(const std::vector<Var>& rows) {
    if (rows.empty()) throw ShapeError("stack_rows: no rows");
    const std::size_t n = shape(rows[0])[0];
    std::vector<double> out;
    out.reserve(rows.size() * n);
    bool ng = false;
    for (Var row : rows) {
      if (shape(row).size() != 1 || shape(row)[0] != n)
        throw ShapeError("stack_rows: row shape " + shape_str(shape(row)));
      const auto& rv = val(row);
      out.insert(out.end(), rv.begin(), rv.end());
      ng = ng || needs(row);
    }
    Var r = push(std::move(out), Shape{rows.size(), n}, ng);
    if (nodes_[r.idx].needs_grad) {
      std::vector<Var> rs = rows;
      nodes_[r.idx].back = [rs, n, r](Tape& tp) {
        const auto& g = tp.nodes_[r.idx].grad;
        for (std::size_t t = 0; t < rs.size(); ++t) {
          if (!tp.needs(rs[t])) continue;
          auto& gr = tp.grad_buf(rs[t]);
          for (std::size_t j = 0; j < n; ++j) gr[j] += g[t * n + j];
        }
      };
    }
    return r;
  }

  // ---- reductions ----

  /// Mean over axis 0 of a [T,n] matrix -> [n]; for a 1-D input, scalar mean.
  Var mean_axis0(Var a) {
    const Shape& sa = shape(a);
    const auto& av = val(a);
    if (sa.size() == 1) {
      const std::size_t n = sa[0];
      double s = 0.0;
      for (double x : av) s += x;
      Var r = push({s / static_cast<double>(n)}, Shape{1}, needs(a));
      if (nodes_[r.idx].needs_grad)
        nodes_[r.idx].back = [a, n, r](Tape& tp) {
          auto& ga = tp.grad_buf(a);
          const double g = tp.nodes_[r.idx].grad[0] / static_cast<double>(n);
          for (auto& x : ga) x += g;
        };
      return r;
    }
    if (sa.size() != 2) throw ShapeError("mean-over-axis: " + shape_str(sa));
    const std::size_t t = sa[0], n = sa[1];
    std::vector<double> out(n, 0.0);
    for (std::size_t i = 0; i < t; ++i)
      for (std::size_t j = 0; j < n; ++j) out[j] += av[i * n + j];
    for (auto& x : out) x /= static_cast<double>(t);
    Var r = push(std::move(out), Shape{n}, needs(a));
    if (nodes_[r.idx].needs_grad)
      nodes_[r.idx].back = [a, t, n, r](Tape& tp) {
        auto& ga = tp.grad_buf(a);
        const auto& g = tp.nodes_[r.idx].grad;
        const double inv = 1.0 / static_cast<double>(t);
        for (std::size_t i = 0; i < t; ++i)
          for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += g[j] * inv;
      };
    return r;
  }

  Var sum(Var a) {
    const auto& av = val(a);
    double s = 0.0;
    for (double x : av) s += x;
    Var r = push({s}, Shape{1}, needs(a));
    if (nodes_[r.idx].needs_grad)
      nodes_[r.idx].back = [a, r](Tape& tp) {
        auto& ga = tp.grad_buf(a);
        const double g = tp.nodes_[r.idx].grad[0];
        for (auto& x : ga) x += g;
      };
    return r;
  }

  // ---- nonlinearities ----

  Var tanh_(Var a) {
    const auto& av = val(a);
    std::vector<double> out(av.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(av[i]);
    Var r = push(std::move(out), shape(a), needs(a));
    if (nodes_[r.idx].needs_grad)
      nodes_[r.idx].back = [a, r](Tape& tp) {
        auto& ga = tp.grad_buf(a);
        const auto& g = tp.nodes_[r.idx].grad;
        const auto& y = tp.nodes_[r.idx].val;
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (1.0 - y[i] * y[i]);
      };
    return r;
  }

  Var sigmoid_(Var a) {
    const auto& av = val(a);
    std::vector<double> out(av.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-av[i]));
    Var r = push(std::move(out), shape(a), needs(a));
    if (nodes_[r.idx].needs_grad)
      nodes_[r.idx].back = [a, r](Tape& tp) {
        auto& ga = tp.grad_buf(a);
        const auto& g = tp.nodes_[r.idx].grad;
        const auto& y = tp.nodes_[r.idx].val;
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i] * (1.0 - y[i]);
      };
    return r;
  }

  Var log_(Var a) {
    const auto& av = val(a);
    std::vector<double> out(av.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::log(av[i]);
    Var r = push(std::move(out), shape(a), needs(a));
    if (nodes_[r.idx].needs_grad)
      nodes_[r.idx].back = [a, r](Tape& tp) {
        auto& ga = tp.grad_buf(a);
        const auto& g = tp.nodes_[r.idx].grad;
        const auto& x = tp.val(a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / x[i];
      };
    return r;
  }

  Var exp_(Var a) {
    const auto& av = val(a);
    std::vector<double> out(av.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(av[i]);
    Var r = push(std::move(out), shape(a), needs(a));
    if (nodes_[r.idx].needs_grad)
      nodes_[r.idx].back = [a, r](Tape& tp) {
        auto& ga = tp.grad_buf(a);
        const auto& g = tp.nodes_[r.idx].grad;
        const auto& y = tp.nodes_[r.idx].val;
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i];
      };
    return r;
  }

  /// Numerically stable softmax over a 1-D vector.
  Var softmax(Var a) {
    const Shape& sa = shape(a);
    if (sa.size() != 1) throw ShapeError("softmax: 1-D input expected, got " + shape_str(sa));
    const auto& av = val(a);
    double mx = av[0];
    for (double x : av) mx = std::max(mx, x);
    std::vector<double> out(av.size());
    double z = 0.0;
    for (std::size_t i = 0; i < av.size(); ++i) {
      out[i] = std::exp(av[i] - mx);
      z += out[i];
    }
    for (auto& x : out) x /= z;
    Var r = push(std::move(out), sa, needs(a));
    if (nodes_[r.idx].needs_grad)
      nodes_[r.idx].back = [a, r](Tape& tp) {
        auto& ga = tp.grad_buf(a);
        const auto& g = tp.nodes_[r.idx].grad;
        const auto& y = tp.nodes_[r.idx].val;
        double dot = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i) dot += g[i] * y[i];
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += y[i] * (g[i] - dot);
      };
    return r;
  }

  /// Row `row` of an embedding table [V,d] -> [d].
  Var embedding(Var table, std::size_t row) {
    const Shape& st = shape(table);
    if (st.size() != 2 || row >= st[0])
      throw ShapeError("embedding-lookup: row " + std::to_string(row) + " of " + shape_str(st));
    const std::size_t d = st[1];
    const auto& tv = val(table);
    std::vector<double> out(tv.begin() + row * d, tv.begin() + (row + 1) * d);
    Var r = push(std::move(out), Shape{d}, needs(table));
    if (nodes_[r.idx].needs_grad)
      nodes_[r.idx].back = [table, row, d, r](Tape& tp) {
        auto& gt = tp.grad_buf(table);
        const auto& g = tp.nodes_[r.idx].grad;
        for (std::size_t j = 0; j < d; ++j) gt[row * d + j] += g[j];
      };
    return r;
  }

  /// -log softmax(logits)[target], computed via log-sum-exp.
  Var cross_entropy(Var logits, std::size_t target) {
    const Shape& sl = shape(logits);
    if (sl.size() != 1 || target >= sl[0])
      throw ShapeError("cross-entropy: target " + std::to_string(target) + " for logits " +
                       shape_str(sl));
    const auto& lv = val(logits);
    double mx = lv[0];
    for (double x : lv) mx = std::max(mx, x);
    double z = 0.0;
    for (double x : lv) z += std::exp(x - mx);
    const double ce = std::log(z) + mx - lv[target];
    Var r = push({ce}, Shape{1}, needs(logits));
    if (nodes_[r.idx].needs_grad)
      nodes_[r.idx].back = [logits, target, r](Tape& tp) {
        auto& gl = tp.grad_buf(logits);
        const double g = tp.nodes_[r.idx].grad[0];
        const auto& lv2 = tp.val(logits);
        double mx2 = lv2[0];
        for (double x : lv2) mx2 = std::max(mx2, x);
        double z2 = 0.0;
        for (double x : lv2) z2 += std::exp(x - mx2);
        for (std::size_t i = 0; i < lv2.size(); ++i) {
          const double p = std::exp(lv2[i] - mx2) / z2;
          gl[i] += g * (p - (i == target ? 1.0 : 0.0));
        }
      };
    return r;
  }

  /// Generic dispatcher over the primitive op set.
  Var forward_op(OpKind kind, const std::vector<Var>& inputs, const OpAttrs& attrs = {}) {
    switch (kind) {
      case OpKind::add: return add(inputs.at(0), inputs.at(1));
      case OpKind::multiply: return mul(inputs.at(0), inputs.at(1));
      case OpKind::matmul:
        if (shape(inputs.at(1)).size() == 1) return matvec(inputs.at(0), inputs.at(1));
        return matmul(inputs.at(0), inputs.at(1));
      case OpKind::concat: return concat(inputs);
      case OpKind::slice: return slice(inputs.at(0), attrs.offset, attrs.len);
      case OpKind::mean_over_axis:
        if (attrs.axis != 0) throw ShapeError("mean-over-axis: only axis 0 is supported");
        return mean_axis0(inputs.at(0));
      case OpKind::tanh_op: return tanh_(inputs.at(0));
      case OpKind::sigmoid_op: return sigmoid_(inputs.at(0));
      case OpKind::softmax_op: return softmax(inputs.at(0));
      case OpKind::log_op: return log_(inputs.at(0));
      case OpKind::exp_op: return exp_(inputs.at(0));
      case OpKind::embedding_lookup: return embedding(inputs.at(0), attrs.index);
      case OpKind::cross_entropy: return cross_entropy(inputs.at(0), attrs.index);
    }
    throw ShapeError("forward_op: unknown op kind");
  }

  // ---- reverse sweep ----

  /// Accumulates d loss / d tensor into every bound parameter reachable from
  /// `loss`. The loss must be scalar.
  void backward(Var loss) {
    if (!loss.valid() || static_cast<std::size_t>(loss.idx) >= nodes_.size())
      throw ShapeError("backward: invalid loss handle");
    if (nodes_[loss.idx].val.size() != 1)
      throw ShapeError("backward: loss must be scalar, got " + shape_str(nodes_[loss.idx].shape));
    if (!grad_enabled_) throw ShapeError("backward: tape was built with gradients disabled");
    grad_buf_at(loss.idx)[0] = 1.0;
    for (int i = loss.idx; i >= 0; --i) {
      Node& n = nodes_[i];
      if (!n.needs_grad || n.grad.empty() || !n.back) continue;
      n.back(*this);
    }
  }

  // ---- access ----

  const std::vector<double>& val(Var v) const { return nodes_.at(v.idx).val; }
  const Shape& shape(Var v) const { return nodes_.at(v.idx).shape; }
  double scalar(Var v) const {
    const auto& x = val(v);
    if (x.size() != 1) throw ShapeError("scalar: shape " + shape_str(shape(v)));
    return x[0];
  }
  bool needs(Var v) const { return nodes_.at(v.idx).needs_grad; }
  const std::vector<double>& grad(Var v) const { return nodes_.at(v.idx).grad; }

 private:
  struct Node {
    std::vector<double> val;
    std::vector<double> grad;
    Shape shape;
    bool needs_grad = false;
    std::function<void(Tape&)> back;
  };

  Var push(std::vector<double> v, Shape s, bool needs_grad) {
    Node n;
    n.val = std::move(v);
    n.shape = std::move(s);
    n.needs_grad = needs_grad && grad_enabled_;
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  std::vector<double>& grad_buf_at(int idx) {
    Node& n = nodes_[idx];
    if (n.grad.size() != n.val.size()) n.grad.assign(n.val.size(), 0.0);
    return n.grad;
  }

  std::vector<double>& grad_buf(Var v) { return grad_buf_at(v.idx); }

  void acc(Var v, const std::vector<double>& g) {
    if (!needs(v)) return;
    auto& gv = grad_buf(v);
    for (std::size_t i = 0; i < g.size(); ++i) gv[i] += g[i];
  }

  void check_same(const char* op, Var a, Var b) const {
    if (shape(a) != shape(b))
      throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(shape(a)) + " vs " +
                       shape_str(shape(b)));
  }

  std::vector<Node> nodes_;
  std::unordered_map<const Tensor*, int> bound_;
  bool grad_enabled_;
};

}  // namespace jug
