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

#ifndef VQTTS_AUTOGRAD_HPP_
#define VQTTS_AUTOGRAD_HPP_

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "vqtts/tensor.hpp"

namespace vqtts::ag {

class Tape;

// Handle into a tape node. Cheap to copy; owns nothing.
struct Value {
  Tape* tape = nullptr;
  int32_t id = -1;
  bool valid() const { return tape != nullptr && id >= 0; }
};

// Dynamic tape for reverse-mode differentiation. Nodes are appended in
// forward order; Tape::backward replays the registered closures in reverse.
// One tape per training step, discarded afterwards.
class Tape {
 public:
  Value leaf(Tensor value, bool needs_grad = true);
  Value constant(Tensor value) { return leaf(std::move(value), false); }

  const Tensor& val(Value v) const;
  Tensor& grad(Value v);
  bool needs_grad(Value v) const;

  // Seeds d(root)/d(root) = 1 and propagates. Root must be a scalar.
  void backward(Value root);

  size_t size() const { return nodes_.size(); }

  // Internal: used by op implementations. The closure receives the tape
  // and the handle of the node it belongs to.
  Value make(Tensor value, bool needs_grad, std::function<void(Tape&, Value)> back);

 private:
  struct Node {
    Tensor value;
    Tensor grad;  // allocated lazily, same shape as value
    bool needs_grad = false;
    std::function<void(Tape&, Value)> back;
  };
  std::vector<Node> nodes_;
};

// ---- elementwise / arithmetic ----
Value add(Value a, Value b);
Value sub(Value a, Value b);
Value mul(Value a, Value b);
Value scale(Value a, double s);
Value add_scalar(Value a, double s);
Value neg(Value a);
// x: [T,N], bias: [N] broadcast over rows.
Value add_rowvec(Value x, Value bias);
// x: [T,N], row: [N] -> every row of x gets row added (same as add_rowvec).
Value relu(Value a);
Value leaky_relu(Value a, double slope);
Value gelu(Value a);
Value tanh_op(Value a);
Value sigmoid(Value a);
Value exp_op(Value a);
Value log_op(Value a);
Value sqrt_op(Value a, double eps = 0.0);
Value abs_op(Value a);
Value pow2(Value a);

// ---- shape / indexing ----
Value transpose(Value a);                                  // [M,N] -> [N,M]
Value reshape(Value a, std::vector<int64_t> shape);
Value slice_rows(Value a, int64_t start, int64_t count);   // [T,N] -> [count,N]
Value slice_cols(Value a, int64_t start, int64_t count);   // [T,N] -> [T,count]
Value concat_cols(std::span<const Value> parts);
Value concat_rows(std::span<const Value> parts);
// Repeats row i of a `repeats[i]` times (FastSpeech length regulator).
Value repeat_rows(Value a, const std::vector<int64_t>& repeats);
// Nearest-neighbour upsampling along rows by an integer factor.
Value upsample_rows(Value a, int64_t factor);
Value select_rows(Value a, const std::vector<int64_t>& rows);

// ---- reductions / linear algebra ----
Value matmul(Value a, Value b);  // [M,K]x[K,N] -> [M,N]
Value sum(Value a);              // -> scalar [1]
Value mean(Value a);             // -> scalar [1]
Value row_mean(Value a);         // [T,N] -> [N]

// ---- rows-as-distributions ----
Value softmax_rows(Value a);
Value log_softmax_rows(Value a);
// mean over rows of -log_softmax(a)[i, target[i]].
Value cross_entropy_rows(Value logits, const std::vector<int64_t>& targets);

// ---- normalization ----
Value layer_norm_rows(Value x, Value gamma, Value beta, double eps = 1e-5);

// ---- tables ----
// table: [V,E]; output row i = table[ids[i], :]. Gradient scatters to rows.
Value embedding_rows(Value table, const std::vector<int64_t>& ids);

// ---- convolutions over [T, C] sequences ----
// w: [Cout, Cin, K]; 'same'-style explicit padding; dilation supported.
Value conv1d(Value x, Value w, Value bias, int64_t stride, int64_t pad,
             int64_t dilation = 1);
// w: [Cin, Cout, K]; output length (T-1)*stride + K - 2*pad.
Value conv1d_transposed(Value x, Value w, Value bias, int64_t stride, int64_t pad);
// Mean over non-overlapping row windows; ceil_mode averages the final
// partial window over its actual size.
Value avg_pool_rows(Value x, int64_t factor, bool ceil_mode);

// ---- losses ----
Value mse(Value a, Value b);            // mean of squared differences
Value mse_masked(Value a, Value b, const std::vector<double>& row_mask);
Value l1(Value a, Value b);

// ---- structured ----
// log_align: [T_frames, T_tokens] of per-frame log-probabilities. Returns
// -log sum over monotonic paths that start at token 0, end at the last
// token, and advance by 0 or 1 token per frame.
Value forward_sum_nll(Value log_align);

// Forward takes the quantized tensor, backward passes gradients through to
// the pre-quantization input unchanged.
Value straight_through(Value pre, const Tensor& quantized);
Value stop_grad(Value a);

// Frames a 1-D signal [N] into [num_frames, win] rows with hop `hop`,
// zero-padding the tail; backward is overlap-add.
Value frame_signal(Value x, int64_t win, int64_t hop);

Value constant_like(Tape& t, const Tensor& v);

}  // namespace vqtts::ag

#endif  // VQTTS_AUTOGRAD_HPP_
