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

#include "vqtts/optim.hpp"

#include <cmath>

namespace vqtts::nn {

void Adam::step(ParamStore& params, const std::map<std::string, Tensor>& grads) {
  ++t_;
  double lr = cfg_.lr;
  if (cfg_.warmup_steps > 0 && t_ <= cfg_.warmup_steps) {
    lr = cfg_.lr * static_cast<double>(t_) / static_cast<double>(cfg_.warmup_steps);
  }

  double clip_scale = 1.0;
  if (cfg_.grad_clip > 0.0) {
    double sq = 0.0;
    for (const auto& [name, g] : grads) {
      (void)name;
      for (int64_t i = 0; i < g.numel(); ++i) sq += g[i] * g[i];
    }
    double norm = std::sqrt(sq);
    if (norm > cfg_.grad_clip) clip_scale = cfg_.grad_clip / norm;
  }

  double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));

  for (const auto& [name, g] : grads) {
    Tensor& p = params.get(name);
    auto mit = m_.find(name);
    if (mit == m_.end()) {
      m_.emplace(name, Tensor::zeros(p.shape()));
      v_.emplace(name, Tensor::zeros(p.shape()));
      mit = m_.find(name);
    }
    Tensor& m = mit->second;
    Tensor& v = v_.at(name);
    for (int64_t i = 0; i < p.numel(); ++i) {
      double gi = g[i] * clip_scale;
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * gi;
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * gi * gi;
      double mhat = m[i] / bc1;
      double vhat = v[i] / bc2;
      p[i] -= lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

}  // namespace vqtts::nn
