// Copyright 2026 the flow2gan authors
// SPDX-License-Identifier: Apache-2.0
#include "flow2gan/nn/autodiff.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "flow2gan/core/errors.hpp"

namespace flow2gan::ad {

namespace {

thread_local bool g_grad_enabled = true;
thread_local uint64_t g_order_counter = 0;

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

void check_same_shape(const Value& a, const Value& b, const char* op) {
  if (!a.val().same_shape(b.val()))
    throw InputError(std::string(op) + ": shape mismatch");
}

int64_t vec_dim(const Value& v) { return v.val().numel(); }

Value make_op(Tensor value, std::vector<Value> parents, std::function<void(Node&)> bw) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->order = ++g_order_counter;
  if (g_grad_enabled) {
    bool rg = false;
    for (const auto& p : parents) rg = rg || p.requires_grad();
    if (rg) {
      n->requires_grad = true;
      n->parents.reserve(parents.size());
      for (auto& p : parents) n->parents.push_back(p.node());
      n->backward_fn = std::move(bw);
    }
  }
  return Value(std::move(n));
}

}  // namespace

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }
bool grad_enabled() { return g_grad_enabled; }

Value::Value(Tensor t, bool requires_grad) {
  node_ = std::make_shared<Node>();
  node_->value = std::move(t);
  node_->order = ++g_order_counter;
  node_->requires_grad = requires_grad;
  if (requires_grad) node_->ensure_grad();
}

void backward(const Value& loss) {
  if (!loss.defined() || !loss.requires_grad())
    throw DomainError("backward: loss does not require gradients");
  if (loss.val().numel() != 1)
    throw DomainError("backward: loss must be a scalar");

  // Collect the reachable subgraph; creation order is a topological order.
  std::vector<Node*> nodes;
  std::unordered_set<Node*> seen;
  std::vector<Node*> stack{loss.node().get()};
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    Node* n = stack.back();
    stack.pop_back();
    nodes.push_back(n);
    for (const auto& p : n->parents)
      if (p->requires_grad && seen.insert(p.get()).second) stack.push_back(p.get());
  }
  std::sort(nodes.begin(), nodes.end(),
            [](const Node* a, const Node* b) { return a->order > b->order; });

  loss.node()->ensure_grad();
  loss.node()->grad.data[0] += 1.0;
  for (Node* n : nodes)
    if (n->backward_fn && !n->grad.data.empty()) n->backward_fn(*n);
}

// ---------------------------------------------------------------- arithmetic

Value add(const Value& a, const Value& b) {
  check_same_shape(a, b, "add");
  Tensor out = a.val();
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += b.val().data[i];
  return make_op(std::move(out), {a, b}, [](Node& self) {
    for (int p = 0; p < 2; ++p)
      if (self.parents[p]->requires_grad) self.parents[p]->accumulate(self.grad);
  });
}

Value sub(const Value& a, const Value& b) {
  check_same_shape(a, b, "sub");
  Tensor out = a.val();
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] -= b.val().data[i];
  return make_op(std::move(out), {a, b}, [](Node& self) {
    if (self.parents[0]->requires_grad) self.parents[0]->accumulate(self.grad);
    if (self.parents[1]->requires_grad) {
      Node& p = *self.parents[1];
      p.ensure_grad();
      for (size_t i = 0; i < p.grad.data.size(); ++i) p.grad.data[i] -= self.grad.data[i];
    }
  });
}

Value mul(const Value& a, const Value& b) {
  check_same_shape(a, b, "mul");
  Tensor out = a.val();
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] *= b.val().data[i];
  return make_op(std::move(out), {a, b}, [](Node& self) {
    Node& a = *self.parents[0];
    Node& b = *self.parents[1];
    if (a.requires_grad) {
      a.ensure_grad();
      for (size_t i = 0; i < a.grad.data.size(); ++i)
        a.grad.data[i] += self.grad.data[i] * b.value.data[i];
    }
    if (b.requires_grad) {
      b.ensure_grad();
      for (size_t i = 0; i < b.grad.data.size(); ++i)
        b.grad.data[i] += self.grad.data[i] * a.value.data[i];
    }
  });
}

Value neg(const Value& a) { return scale(a, -1.0); }

Value add_scalar(const Value& a, double c) {
  Tensor out = a.val();
  for (auto& v : out.data) v += c;
  return make_op(std::move(out), {a},
                 [](Node& self) { self.parents[0]->accumulate(self.grad); });
}

Value scale(const Value& a, double c) {
  Tensor out = a.val();
  for (auto& v : out.data) v *= c;
  return make_op(std::move(out), {a}, [c](Node& self) {
    Node& p = *self.parents[0];
    p.ensure_grad();
    for (size_t i = 0; i < p.grad.data.size(); ++i) p.grad.data[i] += c * self.grad.data[i];
  });
}

Value axpby(double a, const Value& x, double b, const Value& y) {
  check_same_shape(x, y, "axpby");
  Tensor out = x.val();
  for (size_t i = 0; i < out.data.size(); ++i)
    out.data[i] = a * out.data[i] + b * y.val().data[i];
  return make_op(std::move(out), {x, y}, [a, b](Node& self) {
    Node& px = *self.parents[0];
    Node& py = *self.parents[1];
    if (px.requires_grad) {
      px.ensure_grad();
      for (size_t i = 0; i < px.grad.data.size(); ++i)
        px.grad.data[i] += a * self.grad.data[i];
    }
    if (py.requires_grad) {
      py.ensure_grad();
      for (size_t i = 0; i < py.grad.data.size(); ++i)
        py.grad.data[i] += b * self.grad.data[i];
    }
  });
}

Value add_rowvec(const Value& x, const Value& v) {
  const int64_t rows = x.val().shape[0], cols = x.val().shape[1];
  if (vec_dim(v) != cols) throw InputError("add_rowvec: vector length mismatch");
  Tensor out = x.val();
  for (int64_t r = 0; r < rows; ++r)
    for (int64_t c = 0; c < cols; ++c) out.data[r * cols + c] += v.val().data[c];
  return make_op(std::move(out), {x, v}, [rows, cols](Node& self) {
    Node& px = *self.parents[0];
    Node& pv = *self.parents[1];
    if (px.requires_grad) px.accumulate(self.grad);
    if (pv.requires_grad) {
      pv.ensure_grad();
      for (int64_t r = 0; r < rows; ++r)
        for (int64_t c = 0; c < cols; ++c)
          pv.grad.data[c] += self.grad.data[r * cols + c];
    }
  });
}

Value affine_rows(const Value& x, const Value& s, const Value& b) {
  const int64_t rows = x.val().shape[0], cols = x.val().shape[1];
  if (vec_dim(s) != cols || vec_dim(b) != cols)
    throw InputError("affine_rows: vector length mismatch");
  Tensor out = x.val();
  for (int64_t r = 0; r < rows; ++r)
    for (int64_t c = 0; c < cols; ++c)
      out.data[r * cols + c] =
          out.data[r * cols + c] * (1.0 + s.val().data[c]) + b.val().data[c];
  return make_op(std::move(out), {x, s, b}, [rows, cols](Node& self) {
    Node& px = *self.parents[0];
    Node& ps = *self.parents[1];
    Node& pb = *self.parents[2];
    if (px.requires_grad) {
      px.ensure_grad();
      for (int64_t r = 0; r < rows; ++r)
        for (int64_t c = 0; c < cols; ++c)
          px.grad.data[r * cols + c] +=
              self.grad.data[r * cols + c] * (1.0 + ps.value.data[c]);
    }
    if (ps.requires_grad) {
      ps.ensure_grad();
      for (int64_t r = 0; r < rows; ++r)
        for (int64_t c = 0; c < cols; ++c)
          ps.grad.data[c] += self.grad.data[r * cols + c] * px.value.data[r * cols + c];
    }
    if (pb.requires_grad) {
      pb.ensure_grad();
      for (int64_t r = 0; r < rows; ++r)
        for (int64_t c = 0; c < cols; ++c) pb.grad.data[c] += self.grad.data[r * cols + c];
    }
  });
}

// ------------------------------------------------------------- nonlinearities

Value relu(const Value& a) {
  Tensor out = a.val();
  for (auto& v : out.data) v = v > 0.0 ? v : 0.0;
  return make_op(std::move(out), {a}, [](Node& self) {
    Node& p = *self.parents[0];
    p.ensure_grad();
    for (size_t i = 0; i < p.grad.data.size(); ++i)
      if (p.value.data[i] > 0.0) p.grad.data[i] += self.grad.data[i];
  });
}

Value leaky_relu(const Value& a, double slope) {
  Tensor out = a.val();
  for (auto& v : out.data) v = v > 0.0 ? v : slope * v;
  return make_op(std::move(out), {a}, [slope](Node& self) {
    Node& p = *self.parents[0];
    p.ensure_grad();
    for (size_t i = 0; i < p.grad.data.size(); ++i)
      p.grad.data[i] += self.grad.data[i] * (p.value.data[i] > 0.0 ? 1.0 : slope);
  });
}

Value prelu(const Value& x, const Value& alpha) {
  const int64_t rows = x.val().shape[0], cols = x.val().shape[1];
  if (vec_dim(alpha) != cols) throw InputError("prelu: alpha length mismatch");
  Tensor out = x.val();
  for (int64_t r = 0; r < rows; ++r)
    for (int64_t c = 0; c < cols; ++c) {
      double& v = out.data[r * cols + c];
      if (v < 0.0) v *= alpha.val().data[c];
    }
  return make_op(std::move(out), {x, alpha}, [rows, cols](Node& self) {
    Node& px = *self.parents[0];
    Node& pa = *self.parents[1];
    if (px.requires_grad) {
      px.ensure_grad();
      for (int64_t r = 0; r < rows; ++r)
        for (int64_t c = 0; c < cols; ++c) {
          const double xv = px.value.data[r * cols + c];
          px.grad.data[r * cols + c] +=
              self.grad.data[r * cols + c] * (xv > 0.0 ? 1.0 : pa.value.data[c]);
        }
    }
    if (pa.requires_grad) {
      pa.ensure_grad();
      for (int64_t r = 0; r < rows; ++r)
        for (int64_t c = 0; c < cols; ++c) {
          const double xv = px.value.data[r * cols + c];
          if (xv < 0.0) pa.grad.data[c] += self.grad.data[r * cols + c] * xv;
        }
    }
  });
}

Value abs_val(const Value& a) {
  Tensor out = a.val();
  for (auto& v : out.data) v = std::abs(v);
  return make_op(std::move(out), {a}, [](Node& self) {
    Node& p = *self.parents[0];
    p.ensure_grad();
    for (size_t i = 0; i < p.grad.data.size(); ++i) {
      const double v = p.value.data[i];
      if (v > 0.0)
        p.grad.data[i] += self.grad.data[i];
      else if (v < 0.0)
        p.grad.data[i] -= self.grad.data[i];
    }
  });
}

Value square(const Value& a) {
  Tensor out = a.val();
  for (auto& v : out.data) v *= v;
  return make_op(std::move(out), {a}, [](Node& self) {
    Node& p = *self.parents[0];
    p.ensure_grad();
    for (size_t i = 0; i < p.grad.data.size(); ++i)
      p.grad.data[i] += 2.0 * p.value.data[i] * self.grad.data[i];
  });
}

Value sqrt_val(const Value& a) {
  Tensor out = a.val();
  for (auto& v : out.data) v = std::sqrt(v);
  return make_op(std::move(out), {a}, [](Node& self) {
    Node& p = *self.parents[0];
    p.ensure_grad();
    for (size_t i = 0; i < p.grad.data.size(); ++i) {
      const double y = self.value.data[i];
      if (y > 0.0) p.grad.data[i] += self.grad.data[i] / (2.0 * y);
    }
  });
}

Value log_floor(const Value& a, double floor) {
  Tensor out = a.val();
  for (auto& v : out.data) v = std::log(std::max(v, floor));
  return make_op(std::move(out), {a}, [floor](Node& self) {
    Node& p = *self.parents[0];
    p.ensure_grad();
    for (size_t i = 0; i < p.grad.data.size(); ++i) {
      const double v = p.value.data[i];
      if (v > floor) p.grad.data[i] += self.grad.data[i] / v;
    }
  });
}

Value clamp(const Value& a, double lo, double hi) {
  Tensor out = a.val();
  for (auto& v : out.data) v = std::clamp(v, lo, hi);
  return make_op(std::move(out), {a}, [lo, hi](Node& self) {
    Node& p = *self.parents[0];
    p.ensure_grad();
    for (size_t i = 0; i < p.grad.data.size(); ++i) {
      const double v = p.value.data[i];
      if (v > lo && v < hi) p.grad.data[i] += self.grad.data[i];
    }
  });
}

// ----------------------------------------------------------------- reductions

Value sum(const Value& a) {
  double acc = 0.0;
  for (double v : a.val().data) acc += v;
  return make_op(Tensor::scalar(acc), {a}, [](Node& self) {
    Node& p = *self.parents[0];
    p.ensure_grad();
    const double g = self.grad.data[0];
    for (auto& v : p.grad.data) v += g;
  });
}

Value mean(const Value& a) {
  const double n = static_cast<double>(a.val().numel());
  double acc = 0.0;
  for (double v : a.val().data) acc += v;
  return make_op(Tensor::scalar(acc / n), {a}, [n](Node& self) {
    Node& p = *self.parents[0];
    p.ensure_grad();
    const double g = self.grad.data[0] / n;
    for (auto& v : p.grad.data) v += g;
  });
}

Value sum_mul(const Value& a, Tensor weights) {
  if (!a.val().same_shape(weights)) throw InputError("sum_mul: shape mismatch");
  double acc = 0.0;
  for (size_t i = 0; i < weights.data.size(); ++i) acc += a.val().data[i] * weights.data[i];
  return make_op(Tensor::scalar(acc), {a}, [w = std::move(weights)](Node& self) {
    Node& p = *self.parents[0];
    p.ensure_grad();
    const double g = self.grad.data[0];
    for (size_t i = 0; i < p.grad.data.size(); ++i) p.grad.data[i] += g * w.data[i];
  });
}

// ------------------------------------------------------------- linear algebra

Value matmul(const Value& a, const Value& b) {
  if (a.val().rank() != 2 || b.val().rank() != 2 || a.val().shape[1] != b.val().shape[0])
    throw InputError("matmul: incompatible shapes");
  const int64_t m = a.val().shape[0], k = a.val().shape[1], n = b.val().shape[1];
  Tensor out({m, n});
  {
    CMapMat A(a.val().data.data(), m, k);
    CMapMat B(b.val().data.data(), k, n);
    MapMat C(out.data.data(), m, n);
    C.noalias() = A * B;
  }
  return make_op(std::move(out), {a, b}, [m, k, n](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    CMapMat G(self.grad.data.data(), m, n);
    if (pa.requires_grad) {
      pa.ensure_grad();
      CMapMat B(pb.value.data.data(), k, n);
      MapMat dA(pa.grad.data.data(), m, k);
      dA.noalias() += G * B.transpose();
    }
    if (pb.requires_grad) {
      pb.ensure_grad();
      CMapMat A(pa.value.data.data(), m, k);
      MapMat dB(pb.grad.data.data(), k, n);
      dB.noalias() += A.transpose() * G;
    }
  });
}

Value dwconv1d(const Value& x, const Value& w, const Value& bias) {
  const int64_t frames = x.val().shape[0], dim = x.val().shape[1];
  const int64_t kernel = w.val().shape[1];
  if (w.val().shape[0] != dim || vec_dim(bias) != dim)
    throw InputError("dwconv1d: weight shape mismatch");
  if (kernel % 2 == 0) throw InputError("dwconv1d: kernel must be odd");
  const int64_t pad = (kernel - 1) / 2;

  Tensor out({frames, dim});
  for (int64_t f = 0; f < frames; ++f)
    for (int64_t d = 0; d < dim; ++d) {
      double acc = bias.val().data[d];
      for (int64_t t = 0; t < kernel; ++t) {
        const int64_t src = f + t - pad;
        if (src >= 0 && src < frames) acc += w.val().data[d * kernel + t] * x.val().data[src * dim + d];
      }
      out.data[f * dim + d] = acc;
    }
  return make_op(std::move(out), {x, w, bias}, [frames, dim, kernel, pad](Node& self) {
    Node& px = *self.parents[0];
    Node& pw = *self.parents[1];
    Node& pb = *self.parents[2];
    if (px.requires_grad) px.ensure_grad();
    if (pw.requires_grad) pw.ensure_grad();
    if (pb.requires_grad) pb.ensure_grad();
    for (int64_t f = 0; f < frames; ++f)
      for (int64_t d = 0; d < dim; ++d) {
        const double g = self.grad.data[f * dim + d];
        if (g == 0.0) continue;
        if (pb.requires_grad) pb.grad.data[d] += g;
        for (int64_t t = 0; t < kernel; ++t) {
          const int64_t src = f + t - pad;
          if (src < 0 || src >= frames) continue;
          if (px.requires_grad)
            px.grad.data[src * dim + d] += g * pw.value.data[d * kernel + t];
          if (pw.requires_grad)
            pw.grad.data[d * kernel + t] += g * px.value.data[src * dim + d];
        }
      }
  });
}

Value conv2d(const Value& x, const Value& w, const Value& bias, int stride_h,
             int stride_w, int pad_h, int pad_w) {
  if (x.val().rank() != 3 || w.val().rank() != 4)
    throw InputError("conv2d: expects x [C,H,W], w [O,C,kh,kw]");
  const int64_t C = x.val().shape[0], H = x.val().shape[1], W = x.val().shape[2];
  const int64_t O = w.val().shape[0], KH = w.val().shape[2], KW = w.val().shape[3];
  if (w.val().shape[1] != C || vec_dim(bias) != O)
    throw InputError("conv2d: channel mismatch");
  const int64_t OH = (H + 2 * pad_h - KH) / stride_h + 1;
  const int64_t OW = (W + 2 * pad_w - KW) / stride_w + 1;
  if (OH < 1 || OW < 1) throw InputError("conv2d: output would be empty");

  Tensor out({O, OH, OW});
  const double* xd = x.val().data.data();
  const double* wd = w.val().data.data();
  for (int64_t o = 0; o < O; ++o) {
    const double b = bias.val().data[o];
    for (int64_t i = 0; i < OH; ++i)
      for (int64_t j = 0; j < OW; ++j) {
        double acc = b;
        for (int64_t c = 0; c < C; ++c)
          for (int64_t a = 0; a < KH; ++a) {
            const int64_t y = i * stride_h + a - pad_h;
            if (y < 0 || y >= H) continue;
            const double* xrow = xd + (c * H + y) * W;
            const double* wrow = wd + ((o * C + c) * KH + a) * KW;
            for (int64_t t = 0; t < KW; ++t) {
              const int64_t s = j * stride_w + t - pad_w;
              if (s >= 0 && s < W) acc += wrow[t] * xrow[s];
            }
          }
        out.data[(o * OH + i) * OW + j] = acc;
      }
  }
  return make_op(std::move(out), {x, w, bias},
                 [C, H, W, O, KH, KW, OH, OW, stride_h, stride_w, pad_h, pad_w](Node& self) {
    Node& px = *self.parents[0];
    Node& pw = *self.parents[1];
    Node& pb = *self.parents[2];
    if (px.requires_grad) px.ensure_grad();
    if (pw.requires_grad) pw.ensure_grad();
    if (pb.requires_grad) pb.ensure_grad();
    for (int64_t o = 0; o < O; ++o)
      for (int64_t i = 0; i < OH; ++i)
        for (int64_t j = 0; j < OW; ++j) {
          const double g = self.grad.data[(o * OH + i) * OW + j];
          if (g == 0.0) continue;
          if (pb.requires_grad) pb.grad.data[o] += g;
          for (int64_t c = 0; c < C; ++c)
            for (int64_t a = 0; a < KH; ++a) {
              const int64_t y = i * stride_h + a - pad_h;
              if (y < 0 || y >= H) continue;
              for (int64_t t = 0; t < KW; ++t) {
                const int64_t s = j * stride_w + t - pad_w;
                if (s < 0 || s >= W) continue;
                const int64_t xi = (c * H + y) * W + s;
                const int64_t wi = ((o * C + c) * KH + a) * KW + t;
                if (px.requires_grad) px.grad.data[xi] += g * pw.value.data[wi];
                if (pw.requires_grad) pw.grad.data[wi] += g * px.value.data[xi];
              }
            }
        }
  });
}

// -------------------------------------------------------------- structure ops

Value repeat_rows(const Value& x, int factor) {
  if (factor < 1) throw InputError("repeat_rows: factor must be >= 1");
  const int64_t rows = x.val().shape[0], cols = x.val().shape[1];
  Tensor out({rows * factor, cols});
  for (int64_t r = 0; r < rows * factor; ++r)
    for (int64_t c = 0; c < cols; ++c)
      out.data[r * cols + c] = x.val().data[(r / factor) * cols + c];
  return make_op(std::move(out), {x}, [rows, cols, factor](Node& self) {
    Node& p = *self.parents[0];
    p.ensure_grad();
    for (int64_t r = 0; r < rows * factor; ++r)
      for (int64_t c = 0; c < cols; ++c)
        p.grad.data[(r / factor) * cols + c] += self.grad.data[r * cols + c];
  });
}

Value pad_reshape_period(const Value& x, int period) {
  if (x.val().rank() != 1) throw InputError("pad_reshape_period: expects rank-1 input");
  const int64_t len = x.val().numel();
  if (len < 1) throw InputError("pad_reshape_period: empty input");
  const int64_t rows = (len + period - 1) / period;
  Tensor out({1, rows, static_cast<int64_t>(period)});
  for (int64_t i = 0; i < len; ++i) out.data[i] = x.val().data[i];
  return make_op(std::move(out), {x}, [len](Node& self) {
    Node& p = *self.parents[0];
    p.ensure_grad();
    for (int64_t i = 0; i < len; ++i) p.grad.data[i] += self.grad.data[i];
  });
}

Value reshape(const Value& x, std::vector<int64_t> shape) {
  if (Tensor::count(shape) != x.val().numel())
    throw InputError("reshape: element count mismatch");
  Tensor out(std::move(shape), x.val().data);
  return make_op(std::move(out), {x}, [](Node& self) {
    Node& p = *self.parents[0];
    p.ensure_grad();
    for (size_t i = 0; i < p.grad.data.size(); ++i) p.grad.data[i] += self.grad.data[i];
  });
}

// -------------------------------------------------------------- normalization

Value bias_norm(const Value& x, const Value& bias, const Value& log_scale, double eps) {
  const int64_t rows = x.val().shape[0], cols = x.val().shape[1];
  if (vec_dim(bias) != cols || log_scale.val().numel() != 1)
    throw InputError("bias_norm: parameter shape mismatch");
  const double s = std::exp(log_scale.val().data[0]);
  Tensor out({rows, cols});
  std::vector<double> inv_rms(rows);
  for (int64_t r = 0; r < rows; ++r) {
    double m = 0.0;
    for (int64_t c = 0; c < cols; ++c) {
      const double u = x.val().data[r * cols + c] - bias.val().data[c];
      m += u * u;
    }
    m = m / static_cast<double>(cols) + eps;
    inv_rms[r] = 1.0 / std::sqrt(m);
    for (int64_t c = 0; c < cols; ++c)
      out.data[r * cols + c] = x.val().data[r * cols + c] * s * inv_rms[r];
  }
  return make_op(std::move(out), {x, bias, log_scale},
                 [rows, cols, s, inv_rms = std::move(inv_rms)](Node& self) {
    Node& px = *self.parents[0];
    Node& pb = *self.parents[1];
    Node& pg = *self.parents[2];
    if (px.requires_grad) px.ensure_grad();
    if (pb.requires_grad) pb.ensure_grad();
    if (pg.requires_grad) pg.ensure_grad();
    const double d = static_cast<double>(cols);
    for (int64_t r = 0; r < rows; ++r) {
      const double ir = inv_rms[r];
      double gx_dot = 0.0;
      for (int64_t c = 0; c < cols; ++c)
        gx_dot += self.grad.data[r * cols + c] * px.value.data[r * cols + c];
      // common factor of the 1/rms sensitivity
      const double k = s * gx_dot * ir * ir * ir / d;
      for (int64_t c = 0; c < cols; ++c) {
        const int64_t i = r * cols + c;
        const double u = px.value.data[i] - pb.value.data[c];
        if (px.requires_grad) px.grad.data[i] += s * ir * self.grad.data[i] - k * u;
        if (pb.requires_grad) pb.grad.data[c] += k * u;
      }
      if (pg.requires_grad) pg.grad.data[0] += s * gx_dot * ir;
    }
  });
}

// --------------------------------------------------------------- spectral ops

Value stft(const Value& x, const dsp::SpectralConfig& cfg) {
  if (x.val().rank() != 1) throw InputError("stft: expects rank-1 waveform");
  const int64_t len = x.val().numel();
  Tensor out = dsp::stft_concat(x.val().data, cfg);
  return make_op(std::move(out), {x}, [cfg, len](Node& self) {
    Node& p = *self.parents[0];
    p.ensure_grad();
    const std::vector<double> gx = dsp::stft_concat_adjoint(self.grad, len, cfg);
    for (int64_t i = 0; i < len; ++i) p.grad.data[i] += gx[i];
  });
}

Value istft(const Value& spec, const dsp::SpectralConfig& cfg, int64_t out_length) {
  const int64_t frames = spec.val().shape[0];
  Tensor out({out_length}, dsp::istft_concat(spec.val(), cfg, out_length));
  return make_op(std::move(out), {spec}, [cfg, frames](Node& self) {
    Node& p = *self.parents[0];
    p.ensure_grad();
    const Tensor gs = dsp::istft_concat_adjoint(self.grad.data, frames, cfg);
    for (size_t i = 0; i < gs.data.size(); ++i) p.grad.data[i] += gs.data[i];
  });
}

Value power_from_stft(const Value& spec) {
  const int64_t frames = spec.val().shape[0];
  const int64_t bins = spec.val().shape[1] / 2;
  Tensor out({frames, bins});
  for (int64_t k = 0; k < frames; ++k)
    for (int64_t b = 0; b < bins; ++b) {
      const double re = spec.val().at(k, b), im = spec.val().at(k, bins + b);
      out.at(k, b) = re * re + im * im;
    }
  return make_op(std::move(out), {spec}, [frames, bins](Node& self) {
    Node& p = *self.parents[0];
    p.ensure_grad();
    for (int64_t k = 0; k < frames; ++k)
      for (int64_t b = 0; b < bins; ++b) {
        const double g = 2.0 * self.grad.at(k, b);
        p.grad.at(k, b) += g * p.value.at(k, b);
        p.grad.at(k, bins + b) += g * p.value.at(k, bins + b);
      }
  });
}

Value mag_from_stft(const Value& spec, double eps) {
  const int64_t frames = spec.val().shape[0];
  const int64_t bins = spec.val().shape[1] / 2;
  Tensor out({frames, bins});
  for (int64_t k = 0; k < frames; ++k)
    for (int64_t b = 0; b < bins; ++b) {
      const double re = spec.val().at(k, b), im = spec.val().at(k, bins + b);
      out.at(k, b) = std::sqrt(re * re + im * im + eps);
    }
  return make_op(std::move(out), {spec}, [frames, bins](Node& self) {
    Node& p = *self.parents[0];
    p.ensure_grad();
    for (int64_t k = 0; k < frames; ++k)
      for (int64_t b = 0; b < bins; ++b) {
        const double g = self.grad.at(k, b) / self.value.at(k, b);
        p.grad.at(k, b) += g * p.value.at(k, b);
        p.grad.at(k, bins + b) += g * p.value.at(k, bins + b);
      }
  });
}

}  // namespace flow2gan::ad
