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

#include "vqtts/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace vqtts::nn {

Tensor& ParamStore::create(const std::string& name, Tensor init) {
  if (tensors_.count(name)) throw std::invalid_argument("ParamStore: duplicate " + name);
  order_.push_back(name);
  return tensors_.emplace(name, std::move(init)).first->second;
}

Tensor& ParamStore::get(const std::string& name) {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw std::invalid_argument("ParamStore: unknown " + name);
  return it->second;
}

const Tensor& ParamStore::get(const std::string& name) const {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw std::invalid_argument("ParamStore: unknown " + name);
  return it->second;
}

bool ParamStore::has(const std::string& name) const { return tensors_.count(name) > 0; }

void ParamStore::remove(const std::string& name) {
  tensors_.erase(name);
  for (auto it = order_.begin(); it != order_.end(); ++it) {
    if (*it == name) {
      order_.erase(it);
      break;
    }
  }
}

int64_t ParamStore::total_params() const {
  int64_t n = 0;
  for (const auto& name : order_) n += tensors_.at(name).numel();
  return n;
}

bool Graph::is_frozen(const std::string& name) const {
  for (const auto& pre : frozen_prefixes_) {
    if (name.rfind(pre, 0) == 0) return true;
  }
  return false;
}

ag::Value Graph::p(const std::string& name) {
  auto it = bound_.find(name);
  if (it != bound_.end()) return it->second;
  ag::Value v = tape_.leaf(params_->get(name), !is_frozen(name));
  bound_.emplace(name, v);
  return v;
}

void Graph::freeze_prefix(const std::string& prefix) { frozen_prefixes_.push_back(prefix); }

std::map<std::string, Tensor> Graph::grads() {
  std::map<std::string, Tensor> out;
  for (auto& [name, v] : bound_) {
    if (!tape_.needs_grad(v)) continue;
    out.emplace(name, tape_.grad(v));
  }
  return out;
}

Tensor xavier_init(Rng& rng, int64_t fan_in, int64_t fan_out, std::vector<int64_t> shape) {
  double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  return rng.uniform_tensor(std::move(shape), -limit, limit);
}

void Linear::init(ParamStore& ps, Rng& rng) {
  ps.create(prefix + ".w", xavier_init(rng, in, out, {in, out}));
  ps.create(prefix + ".b", Tensor::zeros({out}));
}

ag::Value Linear::operator()(Graph& g, ag::Value x) const {
  return ag::add_rowvec(ag::matmul(x, g.p(prefix + ".w")), g.p(prefix + ".b"));
}

void LayerNorm::init(ParamStore& ps) {
  ps.create(prefix + ".gamma", Tensor::full({dim}, 1.0));
  ps.create(prefix + ".beta", Tensor::zeros({dim}));
}

ag::Value LayerNorm::operator()(Graph& g, ag::Value x) const {
  return ag::layer_norm_rows(x, g.p(prefix + ".gamma"), g.p(prefix + ".beta"));
}

void Conv1d::init(ParamStore& ps, Rng& rng) {
  ps.create(prefix + ".w", xavier_init(rng, in * kernel, out * kernel, {out, in, kernel}));
  ps.create(prefix + ".b", Tensor::zeros({out}));
}

ag::Value Conv1d::operator()(Graph& g, ag::Value x) const {
  return ag::conv1d(x, g.p(prefix + ".w"), g.p(prefix + ".b"), stride, pad, dilation);
}

void ConvTranspose1d::init(ParamStore& ps, Rng& rng) {
  ps.create(prefix + ".w", xavier_init(rng, in * kernel, out * kernel, {in, out, kernel}));
  ps.create(prefix + ".b", Tensor::zeros({out}));
}

ag::Value ConvTranspose1d::operator()(Graph& g, ag::Value x) const {
  return ag::conv1d_transposed(x, g.p(prefix + ".w"), g.p(prefix + ".b"), stride, pad);
}

void Embedding::init(ParamStore& ps, Rng& rng) {
  ps.create(prefix + ".table", rng.normal_tensor({count, dim}, 0.0, 0.02));
}

ag::Value Embedding::operator()(Graph& g, const std::vector<int64_t>& ids) const {
  return ag::embedding_rows(g.p(prefix + ".table"), ids);
}

void AttentionBlock::init(ParamStore& ps, Rng& rng) {
  if (dim % heads != 0) throw std::invalid_argument("AttentionBlock: dim % heads != 0");
  wq = {prefix + ".wq", dim, dim};
  wk = {prefix + ".wk", dim, dim};
  wv = {prefix + ".wv", dim, dim};
  wo = {prefix + ".wo", dim, dim};
  wq.init(ps, rng);
  wk.init(ps, rng);
  wv.init(ps, rng);
  wo.init(ps, rng);
  ff1 = {prefix + ".ff1", dim, ff_dim, ff_kernel, 1, (ff_kernel - 1) / 2, 1};
  ff2 = {prefix + ".ff2", ff_dim, dim, ff_kernel, 1, (ff_kernel - 1) / 2, 1};
  ff1.init(ps, rng);
  ff2.init(ps, rng);
  ln1 = {prefix + ".ln1", dim};
  ln2 = {prefix + ".ln2", dim};
  ln1.init(ps);
  ln2.init(ps);
}

ag::Value AttentionBlock::operator()(Graph& g, ag::Value x) const {
  const int64_t dh = dim / heads;
  ag::Value xn = ln1(g, x);
  ag::Value q = wq(g, xn);
  ag::Value k = wk(g, xn);
  ag::Value v = wv(g, xn);
  std::vector<ag::Value> head_outs;
  head_outs.reserve(static_cast<size_t>(heads));
  double inv_scale = 1.0 / std::sqrt(static_cast<double>(dh));
  for (int64_t h = 0; h < heads; ++h) {
    ag::Value qh = ag::slice_cols(q, h * dh, dh);
    ag::Value kh = ag::slice_cols(k, h * dh, dh);
    ag::Value vh = ag::slice_cols(v, h * dh, dh);
    ag::Value scores = ag::scale(ag::matmul(qh, ag::transpose(kh)), inv_scale);
    ag::Value attn = ag::softmax_rows(scores);
    head_outs.push_back(ag::matmul(attn, vh));
  }
  ag::Value merged = ag::concat_cols(head_outs);
  ag::Value attn_out = wo(g, merged);
  ag::Value res1 = ag::add(x, attn_out);
  ag::Value rn = ln2(g, res1);
  ag::Value h1 = ag::gelu(ff1(g, rn));
  ag::Value h2 = ff2(g, h1);
  return ag::add(res1, h2);
}

Tensor sinusoidal_positions(int64_t T, int64_t dim) {
  Tensor pe({T, dim});
  for (int64_t t = 0; t < T; ++t) {
    for (int64_t i = 0; i < dim; i += 2) {
      double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) /
                             static_cast<double>(dim));
      pe[t * dim + i] = std::sin(static_cast<double>(t) * freq);
      if (i + 1 < dim) pe[t * dim + i + 1] = std::cos(static_cast<double>(t) * freq);
    }
  }
  return pe;
}

}  // namespace vqtts::nn
