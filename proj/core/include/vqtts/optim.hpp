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

#ifndef VQTTS_OPTIM_HPP_
#define VQTTS_OPTIM_HPP_

#include <cstdint>
#include <map>
#include <string>
#include <unordered_map>

#include "vqtts/nn.hpp"
#include "vqtts/tensor.hpp"

namespace vqtts::nn {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int64_t warmup_steps = 0;   // linear warmup from 0 to lr
  double grad_clip = 5.0;     // global-norm clip; <= 0 disables
};

class Adam {
 public:
  explicit Adam(AdamConfig cfg) : cfg_(cfg) {}

  // Applies one update; missing state slots are created on first use.
  void step(ParamStore& params, const std::map<std::string, Tensor>& grads);

  int64_t steps_taken() const { return t_; }
  const AdamConfig& config() const { return cfg_; }
  void set_lr(double lr) { cfg_.lr = lr; }

 private:
  AdamConfig cfg_;
  int64_t t_ = 0;
  std::unordered_map<std::string, Tensor> m_, v_;
};

}  // namespace vqtts::nn

#endif  // VQTTS_OPTIM_HPP_
