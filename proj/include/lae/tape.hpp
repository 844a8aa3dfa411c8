// Reverse-mode differentiation over a linear tape of recorded operations.
//
// Nodes are appended in forward order, so every operation's inputs have
// smaller ids than its output and the backward pass is a single reverse
// sweep. Closures capture input ids plus whatever forward byproducts the
// gradient needs; they must never hold pointers into the node vector.
#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "lae/tensor.hpp"
#include "lae/util.hpp"

namespace lae {

template <typename Real>
class Tape {
 public:
  // backprop(tape, self): reads grad(self), accumulates into input grads.
  using Backprop = std::function<void(Tape&, int)>;

  struct Node {
    TensorT<Real> value;
    TensorT<Real> grad;  // allocated on first contribution
    bool needs_grad = false;
    bool touched = false;
    Backprop backprop;
  };

  explicit Tape(bool recording = true) : recording_(recording) {}

  bool recording() const { return recording_; }
  int size() const { return static_cast<int>(nodes_.size()); }

  int leaf(TensorT<Real> v, bool needs_grad = false) {
    Node n;
    n.value = std::move(v);
    n.needs_grad = recording_ && needs_grad;
    nodes_.push_back(std::move(n));
    return size() - 1;
  }

  int make(TensorT<Real> value, const std::vector<int>& inputs, Backprop backprop) {
    Node n;
    n.value = std::move(value);
    if (recording_) {
      for (int id : inputs)
        if (nodes_[id].needs_grad) {
          n.needs_grad = true;
          break;
        }
      if (n.needs_grad) n.backprop = std::move(backprop);
    }
    nodes_.push_back(std::move(n));
    return size() - 1;
  }

  const TensorT<Real>& value(int id) const { return nodes_[id].value; }
  bool needs_grad(int id) const { return nodes_[id].needs_grad; }

  // Gradient of a node; zeros if nothing was accumulated.
  const TensorT<Real>& grad(int id) { return grad_buf(id); }

  TensorT<Real>& grad_buf(int id) {
    Node& n = nodes_[id];
    if (n.grad.numel() == 0) n.grad = TensorT<Real>::zeros_like(n.value);
    return n.grad;
  }

  void mark_touched(int id) { nodes_[id].touched = true; }
  bool wants_grad(int id) const { return nodes_[id].needs_grad; }

  void backward(int loss_id) {
    if (!recording_) throw std::logic_error("backward() requires a recording tape");
    if (nodes_.empty() || loss_id < 0 || loss_id >= size())
      throw std::logic_error("backward() without a recorded graph");
    if (nodes_[loss_id].value.numel() != 1)
      throw std::logic_error("backward() expects a scalar loss node");
    grad_buf(loss_id).data[0] = Real(1);
    nodes_[loss_id].touched = true;
    for (int i = loss_id; i >= 0; --i) {
      Node& n = nodes_[i];
      if (n.touched && n.backprop) n.backprop(*this, i);
    }
  }

 private:
  std::vector<Node> nodes_;
  bool recording_;
};

namespace ops {

// Adds g into the grad buffer of `id` (no-op if that node does not need one).
template <typename Real>
inline void accum(Tape<Real>& t, int id, const TensorT<Real>& g) {
  if (!t.wants_grad(id)) return;
  auto& buf = t.grad_buf(id);
  for (size_t i = 0; i < buf.data.size(); ++i) buf.data[i] += g.data[i];
  t.mark_touched(id);
}

template <typename Real>
inline void accum_gemm(Tape<Real>& t, int id, const TensorT<Real>& a, bool ta,
                       const TensorT<Real>& b, bool tb) {
  if (!t.wants_grad(id)) return;
  gemm(a, ta, b, tb, t.grad_buf(id), /*accumulate=*/true);
  t.mark_touched(id);
}

// --- elementwise / structural ----------------------------------------------

template <typename Real>
int add(Tape<Real>& t, int a, int b) {
  const auto& va = t.value(a);
  const auto& vb = t.value(b);
  if (!va.same_shape(vb))
    throw ConfigError("add: shape mismatch " + va.shape_str() + " vs " + vb.shape_str());
  TensorT<Real> out = va;
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += vb.data[i];
  return t.make(std::move(out), {a, b}, [a, b](Tape<Real>& tp, int self) {
    const auto& g = tp.grad(self);
    accum(tp, a, g);
    accum(tp, b, g);
  });
}

// out = a + alpha * b  (alpha is a plain constant)
template <typename Real>
int add_scaled(Tape<Real>& t, int a, int b, Real alpha) {
  const auto& va = t.value(a);
  const auto& vb = t.value(b);
  if (!va.same_shape(vb)) throw ConfigError("add_scaled: shape mismatch");
  TensorT<Real> out = va;
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += alpha * vb.data[i];
  return t.make(std::move(out), {a, b}, [a, b, alpha](Tape<Real>& tp, int self) {
    const auto& g = tp.grad(self);
    accum(tp, a, g);
    if (tp.wants_grad(b)) {
      TensorT<Real> gb = g;
      for (Real& v : gb.data) v *= alpha;
      accum(tp, b, gb);
    }
  });
}

// out = x + c where c is an untracked constant (e.g. positional encoding).
template <typename Real>
int add_const(Tape<Real>& t, int x, const TensorT<Real>& c) {
  const auto& vx = t.value(x);
  if (!vx.same_shape(c)) throw ConfigError("add_const: shape mismatch");
  TensorT<Real> out = vx;
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += c.data[i];
  return t.make(std::move(out), {x},
                [x](Tape<Real>& tp, int self) { accum(tp, x, tp.grad(self)); });
}

template <typename Real>
int scale(Tape<Real>& t, int x, Real c) {
  TensorT<Real> out = t.value(x);
  for (Real& v : out.data) v *= c;
  return t.make(std::move(out), {x}, [x, c](Tape<Real>& tp, int self) {
    if (!tp.wants_grad(x)) return;
    TensorT<Real> g = tp.grad(self);
    for (Real& v : g.data) v *= c;
    accum(tp, x, g);
  });
}

// Elementwise product with an untracked mask times a constant (dropout).
template <typename Real>
int mul_mask(Tape<Real>& t, int x, TensorT<Real> mask, Real c) {
  const auto& vx = t.value(x);
  if (!vx.same_shape(mask)) throw ConfigError("mul_mask: shape mismatch");
  TensorT<Real> out = vx;
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] *= mask.data[i] * c;
  return t.make(std::move(out), {x}, [x, m = std::move(mask), c](Tape<Real>& tp, int self) {
    if (!tp.wants_grad(x)) return;
    TensorT<Real> g = tp.grad(self);
    for (size_t i = 0; i < g.data.size(); ++i) g.data[i] *= m.data[i] * c;
    accum(tp, x, g);
  });
}

// Value passes through, gradient does not (probe isolation).
template <typename Real>
int stop_gradient(Tape<Real>& t, int x) {
  return t.make(t.value(x), {}, nullptr);
}

template <typename Real>
int slice_cols(Tape<Real>& t, int x, int c0, int c1) {
  const auto& vx = t.value(x);
  const int rows = vx.rows(), cols = vx.cols();
  if (c0 < 0 || c1 > cols || c0 >= c1) throw ConfigError("slice_cols: bad range");
  TensorT<Real> out({rows, c1 - c0});
  for (int r = 0; r < rows; ++r)
    for (int c = c0; c < c1; ++c) out.at(r, c - c0) = vx.at(r, c);
  return t.make(std::move(out), {x}, [x, c0, c1, rows](Tape<Real>& tp, int self) {
    if (!tp.wants_grad(x)) return;
    const auto& g = tp.grad(self);
    auto& gx = tp.grad_buf(x);
    for (int r = 0; r < rows; ++r)
      for (int c = c0; c < c1; ++c) gx.at(r, c) += g.at(r, c - c0);
    tp.mark_touched(x);
  });
}

template <typename Real>
int hstack(Tape<Real>& t, const std::vector<int>& xs) {
  if (xs.empty()) throw ConfigError("hstack: no inputs");
  const int rows = t.value(xs[0]).rows();
  int total = 0;
  std::vector<int> widths;
  for (int id : xs) {
    if (t.value(id).rows() != rows) throw ConfigError("hstack: row mismatch");
    widths.push_back(t.value(id).cols());
    total += widths.back();
  }
  TensorT<Real> out({rows, total});
  int off = 0;
  for (int id : xs) {
    const auto& v = t.value(id);
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < v.cols(); ++c) out.at(r, off + c) = v.at(r, c);
    off += v.cols();
  }
  return t.make(std::move(out), xs, [xs, widths, rows](Tape<Real>& tp, int self) {
    const auto& g = tp.grad(self);
    int off2 = 0;
    for (size_t k = 0; k < xs.size(); ++k) {
      if (tp.wants_grad(xs[k])) {
        auto& gx = tp.grad_buf(xs[k]);
        for (int r = 0; r < rows; ++r)
          for (int c = 0; c < widths[k]; ++c) gx.at(r, c) += g.at(r, off2 + c);
        tp.mark_touched(xs[k]);
      }
      off2 += widths[k];
    }
  });
}

// --- linear algebra ----------------------------------------------------------

template <typename Real>
int matmul(Tape<Real>& t, int a, int b) {
  const auto& va = t.value(a);
  const auto& vb = t.value(b);
  TensorT<Real> out({va.rows(), vb.cols()});
  gemm(va, false, vb, false, out, false);
  return t.make(std::move(out), {a, b}, [a, b](Tape<Real>& tp, int self) {
    const auto& g = tp.grad(self);
    accum_gemm(tp, a, g, false, tp.value(b), true);   // dA += G * B^T
    accum_gemm(tp, b, tp.value(a), true, g, false);   // dB += A^T * G
  });
}

// out = a * b^T  (attention scores)
template <typename Real>
int matmul_nt(Tape<Real>& t, int a, int b) {
  const auto& va = t.value(a);
  const auto& vb = t.value(b);
  TensorT<Real> out({va.rows(), vb.rows()});
  gemm(va, false, vb, true, out, false);
  return t.make(std::move(out), {a, b}, [a, b](Tape<Real>& tp, int self) {
    const auto& g = tp.grad(self);
    accum_gemm(tp, a, g, false, tp.value(b), false);  // dA += G * B
    accum_gemm(tp, b, g, true, tp.value(a), false);   // dB += G^T * A
  });
}

// out = x * w + 1 b^T ; x: (T,Din), w: (Din,Dout), b: rank-1 (Dout).
template <typename Real>
int linear(Tape<Real>& t, int x, int w, int b) {
  const auto& vx = t.value(x);
  const auto& vw = t.value(w);
  const auto& vb = t.value(b);
  if (vb.rank() != 1 || vb.shape[0] != vw.cols()) throw ConfigError("linear: bias shape mismatch");
  TensorT<Real> out({vx.rows(), vw.cols()});
  gemm(vx, false, vw, false, out, false);
  for (int r = 0; r < out.rows(); ++r)
    for (int c = 0; c < out.cols(); ++c) out.at(r, c) += vb.data[c];
  return t.make(std::move(out), {x, w, b}, [x, w, b](Tape<Real>& tp, int self) {
    const auto& g = tp.grad(self);
    accum_gemm(tp, x, g, false, tp.value(w), true);
    accum_gemm(tp, w, tp.value(x), true, g, false);
    if (tp.wants_grad(b)) {
      auto& gb = tp.grad_buf(b);
      for (int r = 0; r < g.rows(); ++r)
        for (int c = 0; c < g.cols(); ++c) gb.data[c] += g.at(r, c);
      tp.mark_touched(b);
    }
  });
}

// --- nonlinearities ----------------------------------------------------------

// SiLU x*sigmoid(x); smooth, so central finite differences stay well behaved.
template <typename Real>
int silu(Tape<Real>& t, int x) {
  const auto& vx = t.value(x);
  TensorT<Real> out = vx;
  for (Real& v : out.data) v = v / (Real(1) + std::exp(-v));
  return t.make(std::move(out), {x}, [x](Tape<Real>& tp, int self) {
    if (!tp.wants_grad(x)) return;
    const auto& g = tp.grad(self);
    const auto& vx2 = tp.value(x);
    TensorT<Real> gx = TensorT<Real>::zeros_like(vx2);
    for (size_t i = 0; i < gx.data.size(); ++i) {
      const Real s = Real(1) / (Real(1) + std::exp(-vx2.data[i]));
      gx.data[i] = g.data[i] * s * (Real(1) + vx2.data[i] * (Real(1) - s));
    }
    accum(tp, x, gx);
  });
}

template <typename Real>
int softmax_rows(Tape<Real>& t, int x) {
  const auto& vx = t.value(x);
  TensorT<Real> out = vx;
  const int rows = vx.rows(), cols = vx.cols();
  for (int r = 0; r < rows; ++r) {
    Real mx = out.at(r, 0);
    for (int c = 1; c < cols; ++c) mx = std::max(mx, out.at(r, c));
    Real sum = 0;
    for (int c = 0; c < cols; ++c) {
      out.at(r, c) = std::exp(out.at(r, c) - mx);
      sum += out.at(r, c);
    }
    for (int c = 0; c < cols; ++c) out.at(r, c) /= sum;
  }
  return t.make(std::move(out), {x}, [x, rows, cols](Tape<Real>& tp, int self) {
    if (!tp.wants_grad(x)) return;
    const auto& g = tp.grad(self);
    const auto& y = tp.value(self);
    TensorT<Real> gx({rows, cols});
    for (int r = 0; r < rows; ++r) {
      Real dot = 0;
      for (int c = 0; c < cols; ++c) dot += g.at(r, c) * y.at(r, c);
      for (int c = 0; c < cols; ++c) gx.at(r, c) = y.at(r, c) * (g.at(r, c) - dot);
    }
    accum(tp, x, gx);
  });
}

template <typename Real>
int log_softmax_rows(Tape<Real>& t, int x) {
  const auto& vx = t.value(x);
  TensorT<Real> out = vx;
  const int rows = vx.rows(), cols = vx.cols();
  for (int r = 0; r < rows; ++r) {
    Real mx = out.at(r, 0);
    for (int c = 1; c < cols; ++c) mx = std::max(mx, out.at(r, c));
    Real sum = 0;
    for (int c = 0; c < cols; ++c) sum += std::exp(out.at(r, c) - mx);
    const Real lse = mx + std::log(sum);
    for (int c = 0; c < cols; ++c) out.at(r, c) -= lse;
  }
  return t.make(std::move(out), {x}, [x, rows, cols](Tape<Real>& tp, int self) {
    if (!tp.wants_grad(x)) return;
    const auto& g = tp.grad(self);
    const auto& y = tp.value(self);  // log-probs
    TensorT<Real> gx({rows, cols});
    for (int r = 0; r < rows; ++r) {
      Real gsum = 0;
      for (int c = 0; c < cols; ++c) gsum += g.at(r, c);
      for (int c = 0; c < cols; ++c) gx.at(r, c) = g.at(r, c) - std::exp(y.at(r, c)) * gsum;
    }
    accum(tp, x, gx);
  });
}

// Pre-affine row normalization followed by an elementwise affine map.
// gamma/beta are rank-1 of width cols.
template <typename Real>
int layer_norm(Tape<Real>& t, int x, int gamma, int beta, Real eps = Real(1e-5)) {
  const auto& vx = t.value(x);
  const auto& vg = t.value(gamma);
  const auto& vb = t.value(beta);
  const int rows = vx.rows(), cols = vx.cols();
  if (vg.rank() != 1 || vg.shape[0] != cols || vb.rank() != 1 || vb.shape[0] != cols)
    throw ConfigError("layer_norm: affine parameter shape mismatch");
  TensorT<Real> xhat({rows, cols});
  std::vector<Real> inv_std(rows);
  for (int r = 0; r < rows; ++r) {
    Real mean = 0;
    for (int c = 0; c < cols; ++c) mean += vx.at(r, c);
    mean /= cols;
    Real var = 0;
    for (int c = 0; c < cols; ++c) {
      const Real d = vx.at(r, c) - mean;
      var += d * d;
    }
    var /= cols;
    const Real istd = Real(1) / std::sqrt(var + eps);
    inv_std[r] = istd;
    for (int c = 0; c < cols; ++c) xhat.at(r, c) = (vx.at(r, c) - mean) * istd;
  }
  TensorT<Real> out({rows, cols});
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) out.at(r, c) = xhat.at(r, c) * vg.data[c] + vb.data[c];
  return t.make(std::move(out), {x, gamma, beta},
                [x, gamma, beta, xh = std::move(xhat), istds = std::move(inv_std), rows,
                 cols](Tape<Real>& tp, int self) {
    const auto& g = tp.grad(self);
    if (tp.wants_grad(gamma)) {
      auto& gg = tp.grad_buf(gamma);
      for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) gg.data[c] += g.at(r, c) * xh.at(r, c);
      tp.mark_touched(gamma);
    }
    if (tp.wants_grad(beta)) {
      auto& gb = tp.grad_buf(beta);
      for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) gb.data[c] += g.at(r, c);
      tp.mark_touched(beta);
    }
    if (tp.wants_grad(x)) {
      const auto& vg2 = tp.value(gamma);
      TensorT<Real> gx({rows, cols});
      for (int r = 0; r < rows; ++r) {
        Real mean_dxhat = 0, mean_dxhat_xhat = 0;
        for (int c = 0; c < cols; ++c) {
          const Real dxh = g.at(r, c) * vg2.data[c];
          mean_dxhat += dxh;
          mean_dxhat_xhat += dxh * xh.at(r, c);
        }
        mean_dxhat /= cols;
        mean_dxhat_xhat /= cols;
        for (int c = 0; c < cols; ++c) {
          const Real dxh = g.at(r, c) * vg2.data[c];
          gx.at(r, c) = istds[r] * (dxh - mean_dxhat - xh.at(r, c) * mean_dxhat_xhat);
        }
      }
      accum(tp, x, gx);
    }
  });
}

// --- reductions / losses -----------------------------------------------------

// Mean over rows: (T,D) -> (1,D).
template <typename Real>
int mean_rows(Tape<Real>& t, int x) {
  const auto& vx = t.value(x);
  const int rows = vx.rows(), cols = vx.cols();
  TensorT<Real> out({1, cols});
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) out.at(0, c) += vx.at(r, c);
  for (int c = 0; c < cols; ++c) out.at(0, c) /= rows;
  return t.make(std::move(out), {x}, [x, rows, cols](Tape<Real>& tp, int self) {
    if (!tp.wants_grad(x)) return;
    const auto& g = tp.grad(self);
    auto& gx = tp.grad_buf(x);
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c) gx.at(r, c) += g.at(0, c) / rows;
    tp.mark_touched(x);
  });
}

template <typename Real>
int sum_all(Tape<Real>& t, int x) {
  const auto& vx = t.value(x);
  Real s = 0;
  for (Real v : vx.data) s += v;
  return t.make(TensorT<Real>::scalar(s), {x}, [x](Tape<Real>& tp, int self) {
    if (!tp.wants_grad(x)) return;
    const Real g = tp.grad(self).data[0];
    auto& gx = tp.grad_buf(x);
    for (Real& v : gx.data) v += g;
    tp.mark_touched(x);
  });
}

// Softmax cross entropy from a single logit row (1,C) against a class label.
template <typename Real>
int cross_entropy_logits(Tape<Real>& t, int z, int label) {
  const auto& vz = t.value(z);
  const int cols = vz.cols();
  if (vz.rows() != 1 || label < 0 || label >= cols)
    throw ConfigError("cross_entropy_logits: bad input");
  Real mx = vz.data[0];
  for (int c = 1; c < cols; ++c) mx = std::max(mx, vz.data[c]);
  Real sum = 0;
  for (int c = 0; c < cols; ++c) sum += std::exp(vz.data[c] - mx);
  const Real lse = mx + std::log(sum);
  const Real loss = lse - vz.data[label];
  return t.make(TensorT<Real>::scalar(loss), {z}, [z, label, cols](Tape<Real>& tp, int self) {
    if (!tp.wants_grad(z)) return;
    const Real g = tp.grad(self).data[0];
    const auto& vz2 = tp.value(z);
    Real mx2 = vz2.data[0];
    for (int c = 1; c < cols; ++c) mx2 = std::max(mx2, vz2.data[c]);
    Real sum2 = 0;
    for (int c = 0; c < cols; ++c) sum2 += std::exp(vz2.data[c] - mx2);
    TensorT<Real> gz({1, cols});
    for (int c = 0; c < cols; ++c) {
      const Real p = std::exp(vz2.data[c] - mx2) / sum2;
      gz.data[c] = g * (p - (c == label ? Real(1) : Real(0)));
    }
    accum(tp, z, gz);
  });
}

// --- temporal unfolding (strided convolution via im2col + matmul) ------------

// x: (T, C). Output row i is the concatenation of rows s*i .. s*i+k-1.
template <typename Real>
int im2col_time(Tape<Real>& t, int x, int kernel, int stride) {
  const auto& vx = t.value(x);
  const int T = vx.rows(), C = vx.cols();
  if (T < kernel) throw DataError("im2col_time: sequence shorter than kernel");
  const int L = (T - kernel) / stride + 1;
  TensorT<Real> out({L, kernel * C});
  for (int i = 0; i < L; ++i)
    for (int d = 0; d < kernel; ++d)
      for (int c = 0; c < C; ++c) out.at(i, d * C + c) = vx.at(stride * i + d, c);
  return t.make(std::move(out), {x}, [x, kernel, stride, L, C](Tape<Real>& tp, int self) {
    if (!tp.wants_grad(x)) return;
    const auto& g = tp.grad(self);
    auto& gx = tp.grad_buf(x);
    for (int i = 0; i < L; ++i)
      for (int d = 0; d < kernel; ++d)
        for (int c = 0; c < C; ++c) gx.at(stride * i + d, c) += g.at(i, d * C + c);
    tp.mark_touched(x);
  });
}

}  // namespace ops
}  // namespace lae
