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

#ifndef VQTTS_RNG_HPP_
#define VQTTS_RNG_HPP_

#include <cstdint>
#include <vector>

#include "vqtts/tensor.hpp"

namespace vqtts {

// Deterministic generator (xoshiro256** seeded via splitmix64). Standard
// library distributions are implementation-defined, so sampling is done by
// hand to keep corpora and checkpoints reproducible byte for byte.
class Rng {
 public:
  explicit Rng(uint64_t seed);

  uint64_t next_u64();
  // Uniform in [0, 1).
  double uniform();
  double uniform(double lo, double hi);
  // Inclusive bounds.
  int64_t uniform_int(int64_t lo, int64_t hi);
  double normal();
  double normal(double mean, double stddev);

  // Derives an independent stream; forking with distinct tags gives
  // per-utterance / per-module generators from one master seed.
  Rng fork(uint64_t stream_tag) const;

  Tensor normal_tensor(std::vector<int64_t> shape, double mean, double stddev);
  Tensor uniform_tensor(std::vector<int64_t> shape, double lo, double hi);

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (int64_t i = static_cast<int64_t>(v.size()) - 1; i > 0; --i) {
      int64_t j = uniform_int(0, i);
      std::swap(v[static_cast<size_t>(i)], v[static_cast<size_t>(j)]);
    }
  }

 private:
  uint64_t s_[4];
  bool have_cached_normal_ = false;
  double cached_normal_ = 0.0;
  uint64_t seed_;
};

}  // namespace vqtts

#endif  // VQTTS_RNG_HPP_
