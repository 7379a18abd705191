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

#ifndef VQTTS_SERIALIZE_HPP_
#define VQTTS_SERIALIZE_HPP_

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "vqtts/tensor.hpp"

namespace vqtts::io {

// Shared checkpoint container: magic + version + named typed sections +
// trailing FNV-1a hash. Round-trips are byte-exact; the payload hash also
// serves as the checkpoint identity for compatibility checks.
class Archive {
 public:
  Archive() = default;

  void put_tensor(const std::string& name, const Tensor& t);
  void put_i64(const std::string& name, int64_t v);
  void put_f64(const std::string& name, double v);
  void put_string(const std::string& name, const std::string& v);
  void put_i64_vec(const std::string& name, const std::vector<int64_t>& v);

  bool has(const std::string& name) const;
  const Tensor& tensor(const std::string& name) const;
  int64_t i64(const std::string& name) const;
  double f64(const std::string& name) const;
  const std::string& str(const std::string& name) const;
  const std::vector<int64_t>& i64_vec(const std::string& name) const;

  std::vector<std::string> tensor_names() const;

  void save(const std::string& path) const;
  static Archive load(const std::string& path);

  // FNV-1a over the serialized payload (excluding the hash field itself).
  uint64_t content_hash() const;

 private:
  // Insertion order kept for deterministic byte layout.
  std::vector<std::pair<std::string, uint8_t>> order_;  // name -> type tag
  std::map<std::string, Tensor> tensors_;
  std::map<std::string, int64_t> ints_;
  std::map<std::string, double> floats_;
  std::map<std::string, std::string> strings_;
  std::map<std::string, std::vector<int64_t>> int_vecs_;

  std::vector<uint8_t> serialize_payload() const;
};

uint64_t fnv1a(const uint8_t* data, size_t n, uint64_t seed = 0xcbf29ce484222325ULL);

}  // namespace vqtts::io

#endif  // VQTTS_SERIALIZE_HPP_
