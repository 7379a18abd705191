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

#ifndef VQTTS_NN_HPP_
#define VQTTS_NN_HPP_

#include <cstdint>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "vqtts/autograd.hpp"
#include "vqtts/rng.hpp"
#include "vqtts/tensor.hpp"

namespace vqtts::nn {

// Named parameter tensors with deterministic iteration order.
class ParamStore {
 public:
  Tensor& create(const std::string& name, Tensor init);
  Tensor& get(const std::string& name);
  const Tensor& get(const std::string& name) const;
  bool has(const std::string& name) const;
  void remove(const std::string& name);
  const std::vector<std::string>& names() const { return order_; }
  int64_t total_params() const;

 private:
  std::vector<std::string> order_;
  std::unordered_map<std::string, Tensor> tensors_;
};

// One forward/backward pass: binds parameters onto a fresh tape (memoized
// per name) so gradients can be read back after Tape::backward.
class Graph {
 public:
  explicit Graph(ParamStore& params) : params_(&params) {}

  ag::Tape& tape() { return tape_; }
  ParamStore& params() { return *params_; }

  // Parameter leaf (needs_grad unless globally frozen via freeze()).
  ag::Value p(const std::string& name);
  ag::Value input(Tensor t) { return tape_.constant(std::move(t)); }

  // Marks a name prefix as frozen for this graph; matching parameters are
  // bound as constants.
  void freeze_prefix(const std::string& prefix);

  void backward(ag::Value loss) { tape_.backward(loss); }

  // Gradients of all bound, non-frozen parameters.
  std::map<std::string, Tensor> grads();

 private:
  ParamStore* params_;
  ag::Tape tape_;
  std::unordered_map<std::string, ag::Value> bound_;
  std::vector<std::string> frozen_prefixes_;
  bool is_frozen(const std::string& name) const;
};

// ---- initializers ----
Tensor xavier_init(Rng& rng, int64_t fan_in, int64_t fan_out, std::vector<int64_t> shape);

// ---- layers ----
// Each layer registers its tensors in a ParamStore under `prefix` at init
// time and replays them through the Graph at call time.

struct Linear {
  std::string prefix;
  int64_t in = 0, out = 0;
  void init(ParamStore& ps, Rng& rng);
  ag::Value operator()(Graph& g, ag::Value x) const;  // x: [T,in] -> [T,out]
};

struct LayerNorm {
  std::string prefix;
  int64_t dim = 0;
  void init(ParamStore& ps);
  ag::Value operator()(Graph& g, ag::Value x) const;
};

struct Conv1d {
  std::string prefix;
  int64_t in = 0, out = 0, kernel = 1, stride = 1, pad = 0, dilation = 1;
  void init(ParamStore& ps, Rng& rng);
  ag::Value operator()(Graph& g, ag::Value x) const;  // x: [T,in]
};

struct ConvTranspose1d {
  std::string prefix;
  int64_t in = 0, out = 0, kernel = 1, stride = 1, pad = 0;
  void init(ParamStore& ps, Rng& rng);
  ag::Value operator()(Graph& g, ag::Value x) const;
};

struct Embedding {
  std::string prefix;
  int64_t count = 0, dim = 0;
  void init(ParamStore& ps, Rng& rng);
  ag::Value operator()(Graph& g, const std::vector<int64_t>& ids) const;
};

// Pre-LN transformer block: multi-head self-attention followed by a
// 1-D convolutional feed-forward (the FastSpeech "FFT" block).
struct AttentionBlock {
  std::string prefix;
  int64_t dim = 0, heads = 0, ff_dim = 0, ff_kernel = 3;
  Linear wq, wk, wv, wo;
  Conv1d ff1, ff2;
  LayerNorm ln1, ln2;
  void init(ParamStore& ps, Rng& rng);
  ag::Value operator()(Graph& g, ag::Value x) const;
};

// Sinusoidal position table for a [T, dim] sequence.
Tensor sinusoidal_positions(int64_t T, int64_t dim);

}  // namespace vqtts::nn

#endif  // VQTTS_NN_HPP_
