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

#include "vqtts/serialize.hpp"

#include <cstring>
#include <fstream>

#include "vqtts/errors.hpp"

namespace vqtts::io {

namespace {

constexpr char kMagic[8] = {'V', 'Q', 'T', 'T', 'S', 'C', 'K', '1'};
constexpr uint32_t kVersion = 1;

enum Tag : uint8_t {
  kTensor = 0,
  kInt = 1,
  kFloat = 2,
  kString = 3,
  kIntVec = 4,
};

void put_bytes(std::vector<uint8_t>& buf, const void* p, size_t n) {
  const auto* b = static_cast<const uint8_t*>(p);
  buf.insert(buf.end(), b, b + n);
}

template <typename T>
void put_pod(std::vector<uint8_t>& buf, T v) {
  put_bytes(buf, &v, sizeof(T));
}

void put_str(std::vector<uint8_t>& buf, const std::string& s) {
  put_pod<uint32_t>(buf, static_cast<uint32_t>(s.size()));
  put_bytes(buf, s.data(), s.size());
}

class Reader {
 public:
  Reader(const uint8_t* data, size_t n) : data_(data), n_(n) {}

  template <typename T>
  T pod() {
    T v;
    need(sizeof(T));
    std::memcpy(&v, data_ + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }

  std::string str() {
    uint32_t n = pod<uint32_t>();
    need(n);
    std::string s(reinterpret_cast<const char*>(data_ + pos_), n);
    pos_ += n;
    return s;
  }

  void raw(void* out, size_t n) {
    need(n);
    std::memcpy(out, data_ + pos_, n);
    pos_ += n;
  }

  size_t pos() const { return pos_; }
  size_t remaining() const { return n_ - pos_; }

 private:
  void need(size_t n) {
    if (pos_ + n > n_) throw DataError("checkpoint: truncated file");
  }
  const uint8_t* data_;
  size_t n_;
  size_t pos_ = 0;
};

}  // namespace

uint64_t fnv1a(const uint8_t* data, size_t n, uint64_t seed) {
  uint64_t h = seed;
  for (size_t i = 0; i < n; ++i) {
    h ^= data[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

void Archive::put_tensor(const std::string& name, const Tensor& t) {
  order_.emplace_back(name, kTensor);
  tensors_[name] = t;
}
void Archive::put_i64(const std::string& name, int64_t v) {
  order_.emplace_back(name, kInt);
  ints_[name] = v;
}
void Archive::put_f64(const std::string& name, double v) {
  order_.emplace_back(name, kFloat);
  floats_[name] = v;
}
void Archive::put_string(const std::string& name, const std::string& v) {
  order_.emplace_back(name, kString);
  strings_[name] = v;
}
void Archive::put_i64_vec(const std::string& name, const std::vector<int64_t>& v) {
  order_.emplace_back(name, kIntVec);
  int_vecs_[name] = v;
}

bool Archive::has(const std::string& name) const {
  for (const auto& [n, tag] : order_) {
    (void)tag;
    if (n == name) return true;
  }
  return false;
}

const Tensor& Archive::tensor(const std::string& name) const {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw DataError("checkpoint: missing tensor '" + name + "'");
  return it->second;
}
int64_t Archive::i64(const std::string& name) const {
  auto it = ints_.find(name);
  if (it == ints_.end()) throw DataError("checkpoint: missing int '" + name + "'");
  return it->second;
}
double Archive::f64(const std::string& name) const {
  auto it = floats_.find(name);
  if (it == floats_.end()) throw DataError("checkpoint: missing float '" + name + "'");
  return it->second;
}
const std::string& Archive::str(const std::string& name) const {
  auto it = strings_.find(name);
  if (it == strings_.end()) throw DataError("checkpoint: missing string '" + name + "'");
  return it->second;
}
const std::vector<int64_t>& Archive::i64_vec(const std::string& name) const {
  auto it = int_vecs_.find(name);
  if (it == int_vecs_.end()) throw DataError("checkpoint: missing int list '" + name + "'");
  return it->second;
}

std::vector<std::string> Archive::tensor_names() const {
  std::vector<std::string> out;
  for (const auto& [n, tag] : order_) {
    if (tag == kTensor) out.push_back(n);
  }
  return out;
}

std::vector<uint8_t> Archive::serialize_payload() const {
  std::vector<uint8_t> buf;
  put_bytes(buf, kMagic, sizeof(kMagic));
  put_pod<uint32_t>(buf, kVersion);
  put_pod<uint32_t>(buf, static_cast<uint32_t>(order_.size()));
  for (const auto& [name, tag] : order_) {
    put_str(buf, name);
    put_pod<uint8_t>(buf, tag);
    switch (tag) {
      case kTensor: {
        const Tensor& t = tensors_.at(name);
        put_pod<uint8_t>(buf, static_cast<uint8_t>(t.rank()));
        for (int64_t i = 0; i < t.rank(); ++i) put_pod<int64_t>(buf, t.dim(i));
        put_bytes(buf, t.data(), sizeof(double) * static_cast<size_t>(t.numel()));
        break;
      }
      case kInt:
        put_pod<int64_t>(buf, ints_.at(name));
        break;
      case kFloat:
        put_pod<double>(buf, floats_.at(name));
        break;
      case kString:
        put_str(buf, strings_.at(name));
        break;
      case kIntVec: {
        const auto& v = int_vecs_.at(name);
        put_pod<uint32_t>(buf, static_cast<uint32_t>(v.size()));
        put_bytes(buf, v.data(), sizeof(int64_t) * v.size());
        break;
      }
      default:
        throw DataError("checkpoint: unknown tag");
    }
  }
  return buf;
}

uint64_t Archive::content_hash() const {
  std::vector<uint8_t> payload = serialize_payload();
  return fnv1a(payload.data(), payload.size());
}

void Archive::save(const std::string& path) const {
  std::vector<uint8_t> payload = serialize_payload();
  uint64_t h = fnv1a(payload.data(), payload.size());
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("checkpoint: cannot open '" + path + "' for writing");
  os.write(reinterpret_cast<const char*>(payload.data()),
           static_cast<std::streamsize>(payload.size()));
  os.write(reinterpret_cast<const char*>(&h), sizeof(h));
  if (!os) throw DataError("checkpoint: write failed for '" + path + "'");
}

Archive Archive::load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("checkpoint: cannot open '" + path + "'");
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(is)),
                             std::istreambuf_iterator<char>());
  if (bytes.size() < sizeof(kMagic) + sizeof(uint32_t) * 2 + sizeof(uint64_t)) {
    throw DataError("checkpoint: file too small '" + path + "'");
  }
  uint64_t stored_hash;
  std::memcpy(&stored_hash, bytes.data() + bytes.size() - sizeof(uint64_t), sizeof(uint64_t));
  size_t payload_size = bytes.size() - sizeof(uint64_t);
  if (fnv1a(bytes.data(), payload_size) != stored_hash) {
    throw DataError("checkpoint: hash mismatch (corrupt file) '" + path + "'");
  }

  Reader r(bytes.data(), payload_size);
  char magic[8];
  r.raw(magic, sizeof(magic));
  if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw DataError("checkpoint: bad magic in '" + path + "'");
  }
  uint32_t version = r.pod<uint32_t>();
  if (version != kVersion) {
    throw DataError("checkpoint: unsupported version in '" + path + "'");
  }
  uint32_t count = r.pod<uint32_t>();
  Archive a;
  for (uint32_t i = 0; i < count; ++i) {
    std::string name = r.str();
    uint8_t tag = r.pod<uint8_t>();
    switch (tag) {
      case kTensor: {
        uint8_t rank = r.pod<uint8_t>();
        std::vector<int64_t> shape(rank);
        for (auto& d : shape) d = r.pod<int64_t>();
        Tensor t(shape);
        r.raw(t.data(), sizeof(double) * static_cast<size_t>(t.numel()));
        a.put_tensor(name, std::move(t));
        break;
      }
      case kInt:
        a.put_i64(name, r.pod<int64_t>());
        break;
      case kFloat:
        a.put_f64(name, r.pod<double>());
        break;
      case kString:
        a.put_string(name, r.str());
        break;
      case kIntVec: {
        uint32_t n = r.pod<uint32_t>();
        std::vector<int64_t> v(n);
        r.raw(v.data(), sizeof(int64_t) * n);
        a.put_i64_vec(name, std::move(v));
        break;
      }
      default:
        throw DataError("checkpoint: unknown section tag in '" + path + "'");
    }
  }
  return a;
}

}  // namespace vqtts::io
