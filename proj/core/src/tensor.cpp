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

#include "vqtts/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace vqtts {

int64_t Tensor::shape_numel(const std::vector<int64_t>& shape) {
  int64_t n = 1;
  for (int64_t d : shape) {
    if (d < 0) throw std::invalid_argument("Tensor: negative dimension");
    n *= d;
  }
  return n;
}

Tensor::Tensor(std::vector<int64_t> shape)
    : shape_(std::move(shape)),
      data_(static_cast<size_t>(shape_numel(shape_)), 0.0) {}

Tensor::Tensor(std::vector<int64_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_numel(shape_) != static_cast<int64_t>(data_.size())) {
    throw std::invalid_argument("Tensor: shape/data size mismatch");
  }
}

Tensor Tensor::zeros(std::vector<int64_t> shape) { return Tensor(std::move(shape)); }

Tensor Tensor::full(std::vector<int64_t> shape, double value) {
  Tensor t(std::move(shape));
  for (auto& x : t.data_) x = value;
  return t;
}

Tensor Tensor::row(std::initializer_list<double> values) {
  Tensor t({static_cast<int64_t>(values.size())});
  int64_t i = 0;
  for (double v : values) t.data_[static_cast<size_t>(i++)] = v;
  return t;
}

int64_t Tensor::dim(int64_t i) const {
  if (i < 0 || i >= rank()) throw std::out_of_range("Tensor::dim index");
  return shape_[static_cast<size_t>(i)];
}

double& Tensor::at(int64_t i) {
  if (rank() != 1 || i < 0 || i >= dim(0)) throw std::out_of_range("Tensor::at(i)");
  return data_[static_cast<size_t>(i)];
}

double& Tensor::at(int64_t i, int64_t j) {
  if (rank() != 2 || i < 0 || i >= dim(0) || j < 0 || j >= dim(1)) {
    throw std::out_of_range("Tensor::at(i,j)");
  }
  return data_[static_cast<size_t>(i * dim(1) + j)];
}

double& Tensor::at(int64_t i, int64_t j, int64_t k) {
  if (rank() != 3 || i < 0 || i >= dim(0) || j < 0 || j >= dim(1) || k < 0 || k >= dim(2)) {
    throw std::out_of_range("Tensor::at(i,j,k)");
  }
  return data_[static_cast<size_t>((i * dim(1) + j) * dim(2) + k)];
}

double Tensor::at(int64_t i) const { return const_cast<Tensor*>(this)->at(i); }
double Tensor::at(int64_t i, int64_t j) const { return const_cast<Tensor*>(this)->at(i, j); }
double Tensor::at(int64_t i, int64_t j, int64_t k) const {
  return const_cast<Tensor*>(this)->at(i, j, k);
}

Tensor Tensor::reshaped(std::vector<int64_t> shape) const {
  if (shape_numel(shape) != numel()) {
    throw std::invalid_argument("Tensor::reshaped: element count mismatch");
  }
  return Tensor(std::move(shape), data_);
}

bool Tensor::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << "(";
  for (size_t i = 0; i < shape_.size(); ++i) {
    if (i) os << ",";
    os << shape_[i];
  }
  os << ")";
  return os.str();
}

}  // namespace vqtts
