// Copyright (c) 2026 vqtts authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "vqtts/autograd.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace vqtts::ag {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

void check(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument("autograd: " + msg);
}

const Tensor& V(Value v) { return v.tape->val(v); }

bool any_needs_grad(std::initializer_list<Value> vs) {
  for (Value v : vs) {
    if (v.tape->needs_grad(v)) return true;
  }
  return false;
}

Tape* common_tape(std::initializer_list<Value> vs) {
  Tape* t = nullptr;
  for (Value v : vs) {
    check(v.valid(), "invalid value handle");
    if (t == nullptr) t = v.tape;
    check(t == v.tape, "values belong to different tapes");
  }
  return t;
}

}  // namespace

Value Tape::make(Tensor value, bool needs_grad, std::function<void(Tape&, Value)> back) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = needs_grad;
  n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return Value{this, static_cast<int32_t>(nodes_.size() - 1)};
}

Value Tape::leaf(Tensor value, bool needs_grad) {
  return make(std::move(value), needs_grad, nullptr);
}

const Tensor& Tape::val(Value v) const {
  return nodes_[static_cast<size_t>(v.id)].value;
}

Tensor& Tape::grad(Value v) {
  Node& n = nodes_[static_cast<size_t>(v.id)];
  if (n.grad.numel() == 0 && n.value.numel() > 0) {
    n.grad = Tensor::zeros(n.value.shape());
  }
  return n.grad;
}

bool Tape::needs_grad(Value v) const {
  return nodes_[static_cast<size_t>(v.id)].needs_grad;
}

void Tape::backward(Value root) {
  check(root.tape == this, "backward: foreign root");
  check(val(root).numel() == 1, "backward: root must be scalar");
  grad(root)[0] = 1.0;
  for (int64_t i = root.id; i >= 0; --i) {
    Node& n = nodes_[static_cast<size_t>(i)];
    if (!n.back) continue;
    if (n.grad.numel() == 0) continue;  // no downstream contribution
    n.back(*this, Value{this, static_cast<int32_t>(i)});
  }
}

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

Value add(Value a, Value b) {
  Tape* t = common_tape({a, b});
  check(V(a).same_shape(V(b)), "add: shape mismatch " + V(a).shape_str() + " vs " + V(b).shape_str());
  Tensor out = V(a);
  for (int64_t i = 0; i < out.numel(); ++i) out[i] += V(b)[i];
  bool ng = any_needs_grad({a, b});
  Value self;
  self = t->make(std::move(out), ng, [a, b](Tape& tp, Value self_v) {
    const Tensor& g = tp.grad(self_v);
    if (tp.needs_grad(a)) {
      Tensor& ga = tp.grad(a);
      for (int64_t i = 0; i < g.numel(); ++i) ga[i] += g[i];
    }
    if (tp.needs_grad(b)) {
      Tensor& gb = tp.grad(b);
      for (int64_t i = 0; i < g.numel(); ++i) gb[i] += g[i];
    }
  });
  return self;
}

Value sub(Value a, Value b) {
  Tape* t = common_tape({a, b});
  check(V(a).same_shape(V(b)), "sub: shape mismatch");
  Tensor out = V(a);
  for (int64_t i = 0; i < out.numel(); ++i) out[i] -= V(b)[i];
  bool ng = any_needs_grad({a, b});
  Value self;
  self = t->make(std::move(out), ng, [a, b](Tape& tp, Value self_v) {
    const Tensor& g = tp.grad(self_v);
    if (tp.needs_grad(a)) {
      Tensor& ga = tp.grad(a);
      for (int64_t i = 0; i < g.numel(); ++i) ga[i] += g[i];
    }
    if (tp.needs_grad(b)) {
      Tensor& gb = tp.grad(b);
      for (int64_t i = 0; i < g.numel(); ++i) gb[i] -= g[i];
    }
  });
  return self;
}

Value mul(Value a, Value b) {
  Tape* t = common_tape({a, b});
  check(V(a).same_shape(V(b)), "mul: shape mismatch");
  Tensor out = V(a);
  for (int64_t i = 0; i < out.numel(); ++i) out[i] *= V(b)[i];
  bool ng = any_needs_grad({a, b});
  Value self;
  self = t->make(std::move(out), ng, [a, b](Tape& tp, Value self_v) {
    const Tensor& g = tp.grad(self_v);
    if (tp.needs_grad(a)) {
      Tensor& ga = tp.grad(a);
      const Tensor& vb = tp.val(b);
      for (int64_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * vb[i];
    }
    if (tp.needs_grad(b)) {
      Tensor& gb = tp.grad(b);
      const Tensor& va = tp.val(a);
      for (int64_t i = 0; i < g.numel(); ++i) gb[i] += g[i] * va[i];
    }
  });
  return self;
}

Value scale(Value a, double s) {
  Tensor out = V(a);
  for (int64_t i = 0; i < out.numel(); ++i) out[i] *= s;
  Value self;
  self = a.tape->make(std::move(out), a.tape->needs_grad(a),
                      [a, s](Tape& tp, Value self_v) {
                        const Tensor& g = tp.grad(self_v);
                        if (!tp.needs_grad(a)) return;
                        Tensor& ga = tp.grad(a);
                        for (int64_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * s;
                      });
  return self;
}

Value add_scalar(Value a, double s) {
  Tensor out = V(a);
  for (int64_t i = 0; i < out.numel(); ++i) out[i] += s;
  Value self;
  self = a.tape->make(std::move(out), a.tape->needs_grad(a),
                      [a](Tape& tp, Value self_v) {
                        const Tensor& g = tp.grad(self_v);
                        if (!tp.needs_grad(a)) return;
                        Tensor& ga = tp.grad(a);
                        for (int64_t i = 0; i < g.numel(); ++i) ga[i] += g[i];
                      });
  return self;
}

Value neg(Value a) { return scale(a, -1.0); }

Value add_rowvec(Value x, Value bias) {
  Tape* t = common_tape({x, bias});
  check(V(x).rank() == 2 && V(bias).rank() == 1, "add_rowvec: expects [T,N] and [N]");
  check(V(x).dim(1) == V(bias).dim(0), "add_rowvec: width mismatch");
  int64_t T = V(x).dim(0), N = V(x).dim(1);
  Tensor out = V(x);
  for (int64_t i = 0; i < T; ++i)
    for (int64_t j = 0; j < N; ++j) out[i * N + j] += V(bias)[j];
  bool ng = any_needs_grad({x, bias});
  Value self;
  self = t->make(std::move(out), ng, [x, bias, T, N](Tape& tp, Value self_v) {
    const Tensor& g = tp.grad(self_v);
    if (tp.needs_grad(x)) {
      Tensor& gx = tp.grad(x);
      for (int64_t i = 0; i < g.numel(); ++i) gx[i] += g[i];
    }
    if (tp.needs_grad(bias)) {
      Tensor& gb = tp.grad(bias);
      for (int64_t i = 0; i < T; ++i)
        for (int64_t j = 0; j < N; ++j) gb[j] += g[i * N + j];
    }
  });
  return self;
}

namespace {

template <typename Fwd, typename Dfn>
Value unary_ew(Value a, Fwd f, Dfn dfn) {
  Tensor out = V(a);
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = f(out[i]);
  Value self;
  self = a.tape->make(std::move(out), a.tape->needs_grad(a),
                      [a, dfn](Tape& tp, Value self_v) {
                        const Tensor& g = tp.grad(self_v);
                        if (!tp.needs_grad(a)) return;
                        Tensor& ga = tp.grad(a);
                        const Tensor& va = tp.val(a);
                        const Tensor& vo = tp.val(self_v);
                        for (int64_t i = 0; i < g.numel(); ++i) {
                          ga[i] += g[i] * dfn(va[i], vo[i]);
                        }
                      });
  return self;
}

}  // namespace

Value relu(Value a) {
  return unary_ew(
      a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Value leaky_relu(Value a, double slope) {
  return unary_ew(
      a, [slope](double x) { return x > 0.0 ? x : slope * x; },
      [slope](double x, double) { return x > 0.0 ? 1.0 : slope; });
}

Value gelu(Value a) {
  // exact erf form; smooth everywhere, which keeps finite-difference
  // gradient checks tight.
  constexpr double kInvSqrt2 = 0.7071067811865475244;
  constexpr double kInvSqrt2Pi = 0.3989422804014326779;
  return unary_ew(
      a,
      [](double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); },
      [](double x, double) {
        double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
        double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
        return cdf + x * pdf;
      });
}

Value tanh_op(Value a) {
  return unary_ew(
      a, [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

Value sigmoid(Value a) {
  return unary_ew(
      a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
      [](double, double y) { return y * (1.0 - y); });
}

Value exp_op(Value a) {
  return unary_ew(
      a, [](double x) { return std::exp(x); },
      [](double, double y) { return y; });
}

Value log_op(Value a) {
  return unary_ew(
      a, [](double x) { return std::log(x); },
      [](double x, double) { return 1.0 / x; });
}

Value sqrt_op(Value a, double eps) {
  return unary_ew(
      a, [eps](double x) { return std::sqrt(x + eps); },
      [](double, double y) { return 0.5 / y; });
}

Value abs_op(Value a) {
  return unary_ew(
      a, [](double x) { return std::fabs(x); },
      [](double x, double) { return x >= 0.0 ? 1.0 : -1.0; });
}

Value pow2(Value a) {
  return unary_ew(
      a, [](double x) { return x * x; },
      [](double x, double) { return 2.0 * x; });
}

// ---------------------------------------------------------------------------
// shape / indexing
// ---------------------------------------------------------------------------

Value transpose(Value a) {
  check(V(a).rank() == 2, "transpose: rank must be 2");
  int64_t M = V(a).dim(0), N = V(a).dim(1);
  Tensor out({N, M});
  for (int64_t i = 0; i < M; ++i)
    for (int64_t j = 0; j < N; ++j) out[j * M + i] = V(a)[i * N + j];
  Value self;
  self = a.tape->make(std::move(out), a.tape->needs_grad(a),
                      [a, M, N](Tape& tp, Value self_v) {
                        const Tensor& g = tp.grad(self_v);
                        if (!tp.needs_grad(a)) return;
                        Tensor& ga = tp.grad(a);
                        for (int64_t i = 0; i < M; ++i)
                          for (int64_t j = 0; j < N; ++j) ga[i * N + j] += g[j * M + i];
                      });
  return self;
}

Value reshape(Value a, std::vector<int64_t> shape) {
  Tensor out = V(a).reshaped(shape);
  Value self;
  self = a.tape->make(std::move(out), a.tape->needs_grad(a),
                      [a](Tape& tp, Value self_v) {
                        const Tensor& g = tp.grad(self_v);
                        if (!tp.needs_grad(a)) return;
                        Tensor& ga = tp.grad(a);
                        for (int64_t i = 0; i < g.numel(); ++i) ga[i] += g[i];
                      });
  return self;
}

Value slice_rows(Value a, int64_t start, int64_t count) {
  check(V(a).rank() == 2, "slice_rows: rank must be 2");
  int64_t T = V(a).dim(0), N = V(a).dim(1);
  check(start >= 0 && count >= 0 && start + count <= T, "slice_rows: out of range");
  Tensor out({count, N});
  std::copy(V(a).data() + start * N, V(a).data() + (start + count) * N, out.data());
  Value self;
  self = a.tape->make(std::move(out), a.tape->needs_grad(a),
                      [a, start, N, count](Tape& tp, Value self_v) {
                        const Tensor& g = tp.grad(self_v);
                        if (!tp.needs_grad(a)) return;
                        Tensor& ga = tp.grad(a);
                        for (int64_t i = 0; i < count * N; ++i) ga[start * N + i] += g[i];
                      });
  return self;
}

Value slice_cols(Value a, int64_t start, int64_t count) {
  check(V(a).rank() == 2, "slice_cols: rank must be 2");
  int64_t T = V(a).dim(0), N = V(a).dim(1);
  check(start >= 0 && count >= 0 && start + count <= N, "slice_cols: out of range");
  Tensor out({T, count});
  for (int64_t i = 0; i < T; ++i)
    std::copy(V(a).data() + i * N + start, V(a).data() + i * N + start + count,
              out.data() + i * count);
  Value self;
  self = a.tape->make(std::move(out), a.tape->needs_grad(a),
                      [a, start, T, N, count](Tape& tp, Value self_v) {
                        const Tensor& g = tp.grad(self_v);
                        if (!tp.needs_grad(a)) return;
                        Tensor& ga = tp.grad(a);
                        for (int64_t i = 0; i < T; ++i)
                          for (int64_t j = 0; j < count; ++j)
                            ga[i * N + start + j] += g[i * count + j];
                      });
  return self;
}

Value concat_cols(std::span<const Value> parts) {
  check(!parts.empty(), "concat_cols: empty");
  Tape* t = parts[0].tape;
  int64_t T = V(parts[0]).dim(0);
  int64_t total = 0;
  bool ng = false;
  for (Value p : parts) {
    check(p.tape == t, "concat_cols: mixed tapes");
    check(V(p).rank() == 2 && V(p).dim(0) == T, "concat_cols: row mismatch");
    total += V(p).dim(1);
    ng = ng || t->needs_grad(p);
  }
  Tensor out({T, total});
  int64_t off = 0;
  for (Value p : parts) {
    int64_t n = V(p).dim(1);
    for (int64_t i = 0; i < T; ++i)
      std::copy(V(p).data() + i * n, V(p).data() + (i + 1) * n,
                out.data() + i * total + off);
    off += n;
  }
  std::vector<Value> ps(parts.begin(), parts.end());
  Value self;
  self = t->make(std::move(out), ng, [ps, T, total](Tape& tp, Value self_v) {
    const Tensor& g = tp.grad(self_v);
    int64_t off = 0;
    for (Value p : ps) {
      int64_t n = tp.val(p).dim(1);
      if (tp.needs_grad(p)) {
        Tensor& gp = tp.grad(p);
        for (int64_t i = 0; i < T; ++i)
          for (int64_t j = 0; j < n; ++j) gp[i * n + j] += g[i * total + off + j];
      }
      off += n;
    }
  });
  return self;
}

Value concat_rows(std::span<const Value> parts) {
  check(!parts.empty(), "concat_rows: empty");
  Tape* t = parts[0].tape;
  int64_t N = V(parts[0]).dim(1);
  int64_t total = 0;
  bool ng = false;
  for (Value p : parts) {
    check(p.tape == t, "concat_rows: mixed tapes");
    check(V(p).rank() == 2 && V(p).dim(1) == N, "concat_rows: col mismatch");
    total += V(p).dim(0);
    ng = ng || t->needs_grad(p);
  }
  Tensor out({total, N});
  int64_t off = 0;
  for (Value p : parts) {
    int64_t rows = V(p).dim(0);
    std::copy(V(p).data(), V(p).data() + rows * N, out.data() + off * N);
    off += rows;
  }
  std::vector<Value> ps(parts.begin(), parts.end());
  Value self;
  self = t->make(std::move(out), ng, [ps, N](Tape& tp, Value self_v) {
    const Tensor& g = tp.grad(self_v);
    int64_t off = 0;
    for (Value p : ps) {
      int64_t rows = tp.val(p).dim(0);
      if (tp.needs_grad(p)) {
        Tensor& gp = tp.grad(p);
        for (int64_t i = 0; i < rows * N; ++i) gp[i] += g[off * N + i];
      }
      off += rows;
    }
  });
  return self;
}

Value repeat_rows(Value a, const std::vector<int64_t>& repeats) {
  check(V(a).rank() == 2, "repeat_rows: rank must be 2");
  int64_t T = V(a).dim(0), N = V(a).dim(1);
  check(static_cast<int64_t>(repeats.size()) == T, "repeat_rows: repeats size mismatch");
  int64_t total = 0;
  for (int64_t r : repeats) {
    check(r >= 0, "repeat_rows: negative repeat");
    total += r;
  }
  Tensor out({total, N});
  int64_t o = 0;
  for (int64_t i = 0; i < T; ++i)
    for (int64_t r = 0; r < repeats[static_cast<size_t>(i)]; ++r, ++o)
      std::copy(V(a).data() + i * N, V(a).data() + (i + 1) * N, out.data() + o * N);
  Value self;
  self = a.tape->make(std::move(out), a.tape->needs_grad(a),
                      [a, repeats, N](Tape& tp, Value self_v) {
                        const Tensor& g = tp.grad(self_v);
                        if (!tp.needs_grad(a)) return;
                        Tensor& ga = tp.grad(a);
                        int64_t o = 0;
                        for (size_t i = 0; i < repeats.size(); ++i)
                          for (int64_t r = 0; r < repeats[i]; ++r, ++o)
                            for (int64_t j = 0; j < N; ++j)
                              ga[static_cast<int64_t>(i) * N + j] += g[o * N + j];
                      });
  return self;
}

Value upsample_rows(Value a, int64_t factor) {
  check(factor >= 1, "upsample_rows: factor must be >= 1");
  std::vector<int64_t> reps(static_cast<size_t>(V(a).dim(0)), factor);
  return repeat_rows(a, reps);
}

Value select_rows(Value a, const std::vector<int64_t>& rows) {
  check(V(a).rank() == 2, "select_rows: rank must be 2");
  int64_t T = V(a).dim(0), N = V(a).dim(1);
  Tensor out({static_cast<int64_t>(rows.size()), N});
  for (size_t i = 0; i < rows.size(); ++i) {
    check(rows[i] >= 0 && rows[i] < T, "select_rows: index out of range");
    std::copy(V(a).data() + rows[i] * N, V(a).data() + (rows[i] + 1) * N,
              out.data() + static_cast<int64_t>(i) * N);
  }
  Value self;
  self = a.tape->make(std::move(out), a.tape->needs_grad(a),
                      [a, rows, N](Tape& tp, Value self_v) {
                        const Tensor& g = tp.grad(self_v);
                        if (!tp.needs_grad(a)) return;
                        Tensor& ga = tp.grad(a);
                        for (size_t i = 0; i < rows.size(); ++i)
                          for (int64_t j = 0; j < N; ++j)
                            ga[rows[i] * N + j] += g[static_cast<int64_t>(i) * N + j];
                      });
  return self;
}

// ---------------------------------------------------------------------------
// reductions / linear algebra
// ---------------------------------------------------------------------------

Value matmul(Value a, Value b) {
  Tape* t = common_tape({a, b});
  check(V(a).rank() == 2 && V(b).rank() == 2, "matmul: rank must be 2");
  int64_t M = V(a).dim(0), K = V(a).dim(1), N = V(b).dim(1);
  check(V(b).dim(0) == K, "matmul: inner dimension mismatch " + V(a).shape_str() +
                              " x " + V(b).shape_str());
  Tensor out({M, N});
  {
    CMapMat ma(V(a).data(), M, K), mb(V(b).data(), K, N);
    MapMat mo(out.data(), M, N);
    mo.noalias() = ma * mb;
  }
  bool ng = any_needs_grad({a, b});
  Value self;
  self = t->make(std::move(out), ng, [a, b, M, K, N](Tape& tp, Value self_v) {
    const Tensor& g = tp.grad(self_v);
    CMapMat mg(g.data(), M, N);
    if (tp.needs_grad(a)) {
      Tensor& ga = tp.grad(a);
      CMapMat mb(tp.val(b).data(), K, N);
      MapMat mga(ga.data(), M, K);
      mga.noalias() += mg * mb.transpose();
    }
    if (tp.needs_grad(b)) {
      Tensor& gb = tp.grad(b);
      CMapMat ma(tp.val(a).data(), M, K);
      MapMat mgb(gb.data(), K, N);
      mgb.noalias() += ma.transpose() * mg;
    }
  });
  return self;
}

Value sum(Value a) {
  double s = 0.0;
  for (int64_t i = 0; i < V(a).numel(); ++i) s += V(a)[i];
  Tensor out({1});
  out[0] = s;
  Value self;
  self = a.tape->make(std::move(out), a.tape->needs_grad(a),
                      [a](Tape& tp, Value self_v) {
                        double g = tp.grad(self_v)[0];
                        if (!tp.needs_grad(a)) return;
                        Tensor& ga = tp.grad(a);
                        for (int64_t i = 0; i < ga.numel(); ++i) ga[i] += g;
                      });
  return self;
}

Value mean(Value a) {
  int64_t n = V(a).numel();
  check(n > 0, "mean: empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(n));
}

Value row_mean(Value a) {
  check(V(a).rank() == 2, "row_mean: rank must be 2");
  int64_t T = V(a).dim(0), N = V(a).dim(1);
  check(T > 0, "row_mean: zero rows");
  Tensor out({N});
  for (int64_t i = 0; i < T; ++i)
    for (int64_t j = 0; j < N; ++j) out[j] += V(a)[i * N + j];
  for (int64_t j = 0; j < N; ++j) out[j] /= static_cast<double>(T);
  Value self;
  self = a.tape->make(std::move(out), a.tape->needs_grad(a),
                      [a, T, N](Tape& tp, Value self_v) {
                        const Tensor& g = tp.grad(self_v);
                        if (!tp.needs_grad(a)) return;
                        Tensor& ga = tp.grad(a);
                        for (int64_t i = 0; i < T; ++i)
                          for (int64_t j = 0; j < N; ++j)
                            ga[i * N + j] += g[j] / static_cast<double>(T);
                      });
  return self;
}

// ---------------------------------------------------------------------------
// softmax family
// ---------------------------------------------------------------------------

Value softmax_rows(Value a) {
  check(V(a).rank() == 2, "softmax_rows: rank must be 2");
  int64_t T = V(a).dim(0), N = V(a).dim(1);
  Tensor out({T, N});
  for (int64_t i = 0; i < T; ++i) {
    const double* row = V(a).data() + i * N;
    double mx = row[0];
    for (int64_t j = 1; j < N; ++j) mx = std::max(mx, row[j]);
    double z = 0.0;
    for (int64_t j = 0; j < N; ++j) {
      double e = std::exp(row[j] - mx);
      out[i * N + j] = e;
      z += e;
    }
    for (int64_t j = 0; j < N; ++j) out[i * N + j] /= z;
  }
  Value self;
  self = a.tape->make(std::move(out), a.tape->needs_grad(a),
                      [a, T, N](Tape& tp, Value self_v) {
                        const Tensor& g = tp.grad(self_v);
                        if (!tp.needs_grad(a)) return;
                        const Tensor& y = tp.val(self_v);
                        Tensor& ga = tp.grad(a);
                        for (int64_t i = 0; i < T; ++i) {
                          double dot = 0.0;
                          for (int64_t j = 0; j < N; ++j)
                            dot += g[i * N + j] * y[i * N + j];
                          for (int64_t j = 0; j < N; ++j)
                            ga[i * N + j] += y[i * N + j] * (g[i * N + j] - dot);
                        }
                      });
  return self;
}

Value log_softmax_rows(Value a) {
  check(V(a).rank() == 2, "log_softmax_rows: rank must be 2");
  int64_t T = V(a).dim(0), N = V(a).dim(1);
  Tensor out({T, N});
  for (int64_t i = 0; i < T; ++i) {
    const double* row = V(a).data() + i * N;
    double mx = row[0];
    for (int64_t j = 1; j < N; ++j) mx = std::max(mx, row[j]);
    double z = 0.0;
    for (int64_t j = 0; j < N; ++j) z += std::exp(row[j] - mx);
    double lz = mx + std::log(z);
    for (int64_t j = 0; j < N; ++j) out[i * N + j] = row[j] - lz;
  }
  Value self;
  self = a.tape->make(std::move(out), a.tape->needs_grad(a),
                      [a, T, N](Tape& tp, Value self_v) {
                        const Tensor& g = tp.grad(self_v);
                        if (!tp.needs_grad(a)) return;
                        const Tensor& y = tp.val(self_v);
                        Tensor& ga = tp.grad(a);
                        for (int64_t i = 0; i < T; ++i) {
                          double gsum = 0.0;
                          for (int64_t j = 0; j < N; ++j) gsum += g[i * N + j];
                          for (int64_t j = 0; j < N; ++j)
                            ga[i * N + j] += g[i * N + j] - std::exp(y[i * N + j]) * gsum;
                        }
                      });
  return self;
}

Value cross_entropy_rows(Value logits, const std::vector<int64_t>& targets) {
  check(V(logits).rank() == 2, "cross_entropy_rows: rank must be 2");
  int64_t T = V(logits).dim(0);
  check(static_cast<int64_t>(targets.size()) == T, "cross_entropy_rows: target count");
  Value ls = log_softmax_rows(logits);
  int64_t N = V(ls).dim(1);
  for (int64_t i = 0; i < T; ++i)
    check(targets[static_cast<size_t>(i)] >= 0 && targets[static_cast<size_t>(i)] < N,
          "cross_entropy_rows: target out of range");
  Tensor out({1});
  double acc = 0.0;
  for (int64_t i = 0; i < T; ++i) acc -= V(ls)[i * N + targets[static_cast<size_t>(i)]];
  out[0] = acc / static_cast<double>(T);
  Value self;
  self = logits.tape->make(std::move(out), logits.tape->needs_grad(ls),
                           [ls, targets, T, N](Tape& tp, Value self_v) {
                             double g = tp.grad(self_v)[0];
                             if (!tp.needs_grad(ls)) return;
                             Tensor& gl = tp.grad(ls);
                             for (int64_t i = 0; i < T; ++i)
                               gl[i * N + targets[static_cast<size_t>(i)]] -=
                                   g / static_cast<double>(T);
                           });
  return self;
}

// ---------------------------------------------------------------------------
// layer norm
// ---------------------------------------------------------------------------

Value layer_norm_rows(Value x, Value gamma, Value beta, double eps) {
  Tape* t = common_tape({x, gamma, beta});
  check(V(x).rank() == 2, "layer_norm_rows: rank must be 2");
  int64_t T = V(x).dim(0), N = V(x).dim(1);
  check(V(gamma).rank() == 1 && V(gamma).dim(0) == N, "layer_norm_rows: gamma shape");
  check(V(beta).rank() == 1 && V(beta).dim(0) == N, "layer_norm_rows: beta shape");
  Tensor out({T, N});
  Tensor xhat({T, N});
  Tensor inv_std({T});
  for (int64_t i = 0; i < T; ++i) {
    const double* row = V(x).data() + i * N;
    double m = 0.0;
    for (int64_t j = 0; j < N; ++j) m += row[j];
    m /= static_cast<double>(N);
    double var = 0.0;
    for (int64_t j = 0; j < N; ++j) var += (row[j] - m) * (row[j] - m);
    var /= static_cast<double>(N);
    double is = 1.0 / std::sqrt(var + eps);
    inv_std[i] = is;
    for (int64_t j = 0; j < N; ++j) {
      double xh = (row[j] - m) * is;
      xhat[i * N + j] = xh;
      out[i * N + j] = xh * V(gamma)[j] + V(beta)[j];
    }
  }
  bool ng = any_needs_grad({x, gamma, beta});
  Value self;
  self = t->make(std::move(out), ng,
                 [x, gamma, beta, xhat, inv_std, T, N](Tape& tp, Value self_v) {
                   const Tensor& g = tp.grad(self_v);
                   if (tp.needs_grad(gamma)) {
                     Tensor& gg = tp.grad(gamma);
                     for (int64_t i = 0; i < T; ++i)
                       for (int64_t j = 0; j < N; ++j)
                         gg[j] += g[i * N + j] * xhat[i * N + j];
                   }
                   if (tp.needs_grad(beta)) {
                     Tensor& gb = tp.grad(beta);
                     for (int64_t i = 0; i < T; ++i)
                       for (int64_t j = 0; j < N; ++j) gb[j] += g[i * N + j];
                   }
                   if (tp.needs_grad(x)) {
                     Tensor& gx = tp.grad(x);
                     const Tensor& vg = tp.val(gamma);
                     for (int64_t i = 0; i < T; ++i) {
                       double sum_dy = 0.0, sum_dy_xhat = 0.0;
                       for (int64_t j = 0; j < N; ++j) {
                         double dy = g[i * N + j] * vg[j];
                         sum_dy += dy;
                         sum_dy_xhat += dy * xhat[i * N + j];
                       }
                       double inv_n = 1.0 / static_cast<double>(N);
                       for (int64_t j = 0; j < N; ++j) {
                         double dy = g[i * N + j] * vg[j];
                         gx[i * N + j] += inv_std[i] *
                             (dy - inv_n * sum_dy - xhat[i * N + j] * inv_n * sum_dy_xhat);
                       }
                     }
                   }
                 });
  return self;
}

// ---------------------------------------------------------------------------
// embedding
// ---------------------------------------------------------------------------

Value embedding_rows(Value table, const std::vector<int64_t>& ids) {
  check(V(table).rank() == 2, "embedding_rows: table rank must be 2");
  int64_t Vn = V(table).dim(0), E = V(table).dim(1);
  Tensor out({static_cast<int64_t>(ids.size()), E});
  for (size_t i = 0; i < ids.size(); ++i) {
    check(ids[i] >= 0 && ids[i] < Vn, "embedding_rows: id out of range");
    std::copy(V(table).data() + ids[i] * E, V(table).data() + (ids[i] + 1) * E,
              out.data() + static_cast<int64_t>(i) * E);
  }
  Value self;
  self = table.tape->make(std::move(out), table.tape->needs_grad(table),
                          [table, ids, E](Tape& tp, Value self_v) {
                            const Tensor& g = tp.grad(self_v);
                            if (!tp.needs_grad(table)) return;
                            Tensor& gt = tp.grad(table);
                            for (size_t i = 0; i < ids.size(); ++i)
                              for (int64_t j = 0; j < E; ++j)
                                gt[ids[i] * E + j] += g[static_cast<int64_t>(i) * E + j];
                          });
  return self;
}

// ---------------------------------------------------------------------------
// convolutions
// ---------------------------------------------------------------------------

Value conv1d(Value x, Value w, Value bias, int64_t stride, int64_t pad, int64_t dilation) {
  Tape* t = common_tape({x, w, bias});
  check(V(x).rank() == 2 && V(w).rank() == 3, "conv1d: x [T,Cin], w [Cout,Cin,K]");
  int64_t T = V(x).dim(0), Cin = V(x).dim(1);
  int64_t Cout = V(w).dim(0), K = V(w).dim(2);
  check(V(w).dim(1) == Cin, "conv1d: channel mismatch");
  check(V(bias).rank() == 1 && V(bias).dim(0) == Cout, "conv1d: bias shape");
  check(stride >= 1 && pad >= 0 && dilation >= 1, "conv1d: bad hyperparameters");
  int64_t span = (K - 1) * dilation + 1;
  int64_t Tout = (T + 2 * pad - span) / stride + 1;
  check(Tout >= 1, "conv1d: output would be empty");
  Tensor out({Tout, Cout});
  const Tensor& vx = V(x);
  const Tensor& vw = V(w);
  for (int64_t o = 0; o < Tout; ++o) {
    for (int64_t co = 0; co < Cout; ++co) {
      double acc = V(bias)[co];
      for (int64_t k = 0; k < K; ++k) {
        int64_t ti = o * stride + k * dilation - pad;
        if (ti < 0 || ti >= T) continue;
        const double* xr = vx.data() + ti * Cin;
        const double* wr = vw.data() + (co * Cin) * K + k;
        for (int64_t ci = 0; ci < Cin; ++ci) acc += xr[ci] * wr[ci * K];
      }
      out[o * Cout + co] = acc;
    }
  }
  bool ng = any_needs_grad({x, w, bias});
  Value self;
  self = t->make(std::move(out), ng,
                 [x, w, bias, stride, pad, dilation, T, Cin, Cout, K, Tout](Tape& tp, Value self_v) {
                   const Tensor& g = tp.grad(self_v);
                   const Tensor& vx = tp.val(x);
                   const Tensor& vw = tp.val(w);
                   bool nx = tp.needs_grad(x), nw = tp.needs_grad(w), nb = tp.needs_grad(bias);
                   Tensor* gx = nx ? &tp.grad(x) : nullptr;
                   Tensor* gw = nw ? &tp.grad(w) : nullptr;
                   Tensor* gb = nb ? &tp.grad(bias) : nullptr;
                   for (int64_t o = 0; o < Tout; ++o) {
                     for (int64_t co = 0; co < Cout; ++co) {
                       double go = g[o * Cout + co];
                       if (go == 0.0) continue;
                       if (nb) (*gb)[co] += go;
                       for (int64_t k = 0; k < K; ++k) {
                         int64_t ti = o * stride + k * dilation - pad;
                         if (ti < 0 || ti >= T) continue;
                         for (int64_t ci = 0; ci < Cin; ++ci) {
                           if (nw) (*gw)[(co * Cin + ci) * K + k] += go * vx[ti * Cin + ci];
                           if (nx) (*gx)[ti * Cin + ci] += go * vw[(co * Cin + ci) * K + k];
                         }
                       }
                     }
                   }
                 });
  return self;
}

Value conv1d_transposed(Value x, Value w, Value bias, int64_t stride, int64_t pad) {
  Tape* t = common_tape({x, w, bias});
  check(V(x).rank() == 2 && V(w).rank() == 3, "conv1d_transposed: x [T,Cin], w [Cin,Cout,K]");
  int64_t T = V(x).dim(0), Cin = V(x).dim(1);
  int64_t Cout = V(w).dim(1), K = V(w).dim(2);
  check(V(w).dim(0) == Cin, "conv1d_transposed: channel mismatch");
  check(V(bias).rank() == 1 && V(bias).dim(0) == Cout, "conv1d_transposed: bias shape");
  int64_t Tout = (T - 1) * stride + K - 2 * pad;
  check(Tout >= 1, "conv1d_transposed: output would be empty");
  Tensor out({Tout, Cout});
  for (int64_t o = 0; o < Tout; ++o)
    for (int64_t co = 0; co < Cout; ++co) out[o * Cout + co] = V(bias)[co];
  const Tensor& vx = V(x);
  const Tensor& vw = V(w);
  for (int64_t ti = 0; ti < T; ++ti) {
    for (int64_t k = 0; k < K; ++k) {
      int64_t o = ti * stride + k - pad;
      if (o < 0 || o >= Tout) continue;
      const double* xr = vx.data() + ti * Cin;
      for (int64_t ci = 0; ci < Cin; ++ci) {
        double xv = xr[ci];
        if (xv == 0.0) continue;
        const double* wr = vw.data() + (ci * Cout) * K + k;
        double* orow = out.data() + o * Cout;
        for (int64_t co = 0; co < Cout; ++co) orow[co] += xv * wr[co * K];
      }
    }
  }
  bool ng = any_needs_grad({x, w, bias});
  Value self;
  self = t->make(std::move(out), ng,
                 [x, w, bias, stride, pad, T, Cin, Cout, K, Tout](Tape& tp, Value self_v) {
                   const Tensor& g = tp.grad(self_v);
                   const Tensor& vx = tp.val(x);
                   const Tensor& vw = tp.val(w);
                   bool nx = tp.needs_grad(x), nw = tp.needs_grad(w), nb = tp.needs_grad(bias);
                   Tensor* gx = nx ? &tp.grad(x) : nullptr;
                   Tensor* gw = nw ? &tp.grad(w) : nullptr;
                   Tensor* gb = nb ? &tp.grad(bias) : nullptr;
                   if (nb) {
                     for (int64_t o = 0; o < Tout; ++o)
                       for (int64_t co = 0; co < Cout; ++co) (*gb)[co] += g[o * Cout + co];
                   }
                   for (int64_t ti = 0; ti < T; ++ti) {
                     for (int64_t k = 0; k < K; ++k) {
                       int64_t o = ti * stride + k - pad;
                       if (o < 0 || o >= Tout) continue;
                       const double* grow = g.data() + o * Cout;
                       for (int64_t ci = 0; ci < Cin; ++ci) {
                         for (int64_t co = 0; co < Cout; ++co) {
                           double go = grow[co];
                           if (go == 0.0) continue;
                           if (nx) (*gx)[ti * Cin + ci] += go * vw[(ci * Cout + co) * K + k];
                           if (nw) (*gw)[(ci * Cout + co) * K + k] += go * vx[ti * Cin + ci];
                         }
                       }
                     }
                   }
                 });
  return self;
}

Value avg_pool_rows(Value x, int64_t factor, bool ceil_mode) {
  check(V(x).rank() == 2, "avg_pool_rows: rank must be 2");
  check(factor >= 1, "avg_pool_rows: factor must be >= 1");
  int64_t T = V(x).dim(0), N = V(x).dim(1);
  int64_t Tout = ceil_mode ? (T + factor - 1) / factor : T / factor;
  check(Tout >= 1, "avg_pool_rows: output would be empty");
  Tensor out({Tout, N});
  std::vector<int64_t> counts(static_cast<size_t>(Tout));
  for (int64_t o = 0; o < Tout; ++o) {
    int64_t lo = o * factor;
    int64_t hi = std::min(T, lo + factor);
    counts[static_cast<size_t>(o)] = hi - lo;
    for (int64_t i = lo; i < hi; ++i)
      for (int64_t j = 0; j < N; ++j) out[o * N + j] += V(x)[i * N + j];
    for (int64_t j = 0; j < N; ++j) out[o * N + j] /= static_cast<double>(hi - lo);
  }
  Value self;
  self = x.tape->make(std::move(out), x.tape->needs_grad(x),
                      [x, factor, counts, T, N, Tout](Tape& tp, Value self_v) {
                        const Tensor& g = tp.grad(self_v);
                        if (!tp.needs_grad(x)) return;
                        Tensor& gx = tp.grad(x);
                        for (int64_t o = 0; o < Tout; ++o) {
                          int64_t lo = o * factor;
                          int64_t hi = std::min(T, lo + factor);
                          double inv = 1.0 / static_cast<double>(counts[static_cast<size_t>(o)]);
                          for (int64_t i = lo; i < hi; ++i)
                            for (int64_t j = 0; j < N; ++j)
                              gx[i * N + j] += g[o * N + j] * inv;
                        }
                      });
  return self;
}

// ---------------------------------------------------------------------------
// losses
// ---------------------------------------------------------------------------

Value mse(Value a, Value b) {
  Value d = sub(a, b);
  return mean(pow2(d));
}

Value mse_masked(Value a, Value b, const std::vector<double>& row_mask) {
  check(V(a).rank() == 2, "mse_masked: rank must be 2");
  check(V(a).same_shape(V(b)), "mse_masked: shape mismatch");
  int64_t T = V(a).dim(0), N = V(a).dim(1);
  check(static_cast<int64_t>(row_mask.size()) == T, "mse_masked: mask size");
  double valid = 0.0;
  for (double m : row_mask) valid += m;
  check(valid > 0.0, "mse_masked: empty mask");
  Value d = sub(a, b);
  Value d2 = pow2(d);
  // Scale rows by mask, then weight-sum.
  Tensor mask_mat({T, N});
  for (int64_t i = 0; i < T; ++i)
    for (int64_t j = 0; j < N; ++j)
      mask_mat[i * N + j] = row_mask[static_cast<size_t>(i)];
  Value masked = mul(d2, a.tape->constant(std::move(mask_mat)));
  return scale(sum(masked), 1.0 / (valid * static_cast<double>(N)));
}

Value l1(Value a, Value b) { return mean(abs_op(sub(a, b))); }

// ---------------------------------------------------------------------------
// forward-sum alignment
// ---------------------------------------------------------------------------

Value forward_sum_nll(Value log_align) {
  check(V(log_align).rank() == 2, "forward_sum_nll: rank must be 2");
  int64_t Tc = V(log_align).dim(0), Tm = V(log_align).dim(1);
  check(Tc >= Tm, "forward_sum_nll: needs at least as many frames as tokens");
  const double kNegInf = -std::numeric_limits<double>::infinity();
  Tensor alpha({Tc, Tm});
  for (int64_t i = 0; i < alpha.numel(); ++i) alpha[i] = kNegInf;
  auto lae = [](double x, double y) {
    if (x == -std::numeric_limits<double>::infinity()) return y;
    if (y == -std::numeric_limits<double>::infinity()) return x;
    double mx = std::max(x, y);
    return mx + std::log1p(std::exp(-std::fabs(x - y)));
  };
  const Tensor& la = V(log_align);
  alpha[0 * Tm + 0] = la[0 * Tm + 0];
  for (int64_t t = 1; t < Tc; ++t) {
    for (int64_t j = 0; j < Tm; ++j) {
      double stay = alpha[(t - 1) * Tm + j];
      double step = j > 0 ? alpha[(t - 1) * Tm + j - 1] : kNegInf;
      double prev = lae(stay, step);
      if (prev == kNegInf) continue;
      alpha[t * Tm + j] = la[t * Tm + j] + prev;
    }
  }
  double ll = alpha[(Tc - 1) * Tm + (Tm - 1)];
  check(std::isfinite(ll), "forward_sum_nll: no feasible path");
  Tensor out({1});
  out[0] = -ll;
  Value self;
  self = log_align.tape->make(
      std::move(out), log_align.tape->needs_grad(log_align),
      [log_align, alpha, Tc, Tm](Tape& tp, Value self_v) {
        double g = tp.grad(self_v)[0];
        if (!tp.needs_grad(log_align)) return;
        Tensor& gl = tp.grad(log_align);
        // dL/d(alpha): reverse sweep over the recursion.
        Tensor dalpha({Tc, Tm});
        dalpha[(Tc - 1) * Tm + (Tm - 1)] = -g;
        for (int64_t t = Tc - 1; t >= 1; --t) {
          for (int64_t j = 0; j < Tm; ++j) {
            double da = dalpha[t * Tm + j];
            if (da == 0.0 || !std::isfinite(alpha[t * Tm + j])) continue;
            gl[t * Tm + j] += da;
            // alpha[t][j] = la[t][j] + lae(stay, step)
            double stay = alpha[(t - 1) * Tm + j];
            double step = j > 0 ? alpha[(t - 1) * Tm + j - 1]
                                : -std::numeric_limits<double>::infinity();
            double mx = std::max(stay, step);
            double zs = std::exp(stay - mx), zt = std::exp(step - mx);
            double zsum = zs + zt;
            if (std::isfinite(stay)) dalpha[(t - 1) * Tm + j] += da * (zs / zsum);
            if (j > 0 && std::isfinite(step)) dalpha[(t - 1) * Tm + j - 1] += da * (zt / zsum);
          }
        }
        if (std::isfinite(alpha[0])) gl[0] += dalpha[0];
      });
  return self;
}

// ---------------------------------------------------------------------------
// straight-through / constants
// ---------------------------------------------------------------------------

Value straight_through(Value pre, const Tensor& quantized) {
  check(V(pre).same_shape(quantized), "straight_through: shape mismatch");
  Tensor out = quantized;
  Value self;
  self = pre.tape->make(std::move(out), pre.tape->needs_grad(pre),
                        [pre](Tape& tp, Value self_v) {
                          const Tensor& g = tp.grad(self_v);
                          if (!tp.needs_grad(pre)) return;
                          Tensor& gp = tp.grad(pre);
                          for (int64_t i = 0; i < g.numel(); ++i) gp[i] += g[i];
                        });
  return self;
}

Value stop_grad(Value a) { return a.tape->constant(V(a)); }

Value frame_signal(Value x, int64_t win, int64_t hop) {
  check(V(x).rank() == 1, "frame_signal: rank must be 1");
  check(win >= 1 && hop >= 1, "frame_signal: bad window/hop");
  int64_t N = V(x).dim(0);
  check(N >= 1, "frame_signal: empty signal");
  int64_t frames = (N + hop - 1) / hop;
  Tensor out({frames, win});
  for (int64_t f = 0; f < frames; ++f) {
    for (int64_t k = 0; k < win; ++k) {
      int64_t i = f * hop + k;
      out[f * win + k] = i < N ? V(x)[i] : 0.0;
    }
  }
  Value self;
  self = x.tape->make(std::move(out), x.tape->needs_grad(x),
                      [x, win, hop, N, frames](Tape& tp, Value self_v) {
                        const Tensor& g = tp.grad(self_v);
                        if (!tp.needs_grad(x)) return;
                        Tensor& gx = tp.grad(x);
                        for (int64_t f = 0; f < frames; ++f)
                          for (int64_t k = 0; k < win; ++k) {
                            int64_t i = f * hop + k;
                            if (i < N) gx[i] += g[f * win + k];
                          }
                      });
  return self;
}

Value constant_like(Tape& t, const Tensor& v) { return t.constant(v); }

}  // namespace vqtts::ag
