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

#include "vqtts/wav_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "vqtts/errors.hpp"

namespace vqtts::io {

namespace {

template <typename T>
void wr(std::ofstream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T rd(std::ifstream& is) {
  T v;
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  return v;
}

}  // namespace

void write_wav(const std::string& path, const std::vector<double>& samples, int sample_rate) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("wav: cannot open '" + path + "' for writing");
  uint32_t data_bytes = static_cast<uint32_t>(samples.size() * 2);
  os.write("RIFF", 4);
  wr<uint32_t>(os, 36 + data_bytes);
  os.write("WAVE", 4);
  os.write("fmt ", 4);
  wr<uint32_t>(os, 16);
  wr<uint16_t>(os, 1);  // PCM
  wr<uint16_t>(os, 1);  // mono
  wr<uint32_t>(os, static_cast<uint32_t>(sample_rate));
  wr<uint32_t>(os, static_cast<uint32_t>(sample_rate * 2));
  wr<uint16_t>(os, 2);
  wr<uint16_t>(os, 16);
  os.write("data", 4);
  wr<uint32_t>(os, data_bytes);
  for (double s : samples) {
    double c = std::clamp(s, -1.0, 1.0);
    auto q = static_cast<int16_t>(std::lrint(c * 32767.0));
    wr<int16_t>(os, q);
  }
  if (!os) throw DataError("wav: write failed for '" + path + "'");
}

std::vector<double> read_wav(const std::string& path, int expect_rate) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("wav: cannot open '" + path + "'");
  char tag[4];
  is.read(tag, 4);
  if (!is || std::memcmp(tag, "RIFF", 4) != 0) throw DataError("wav: not RIFF '" + path + "'");
  rd<uint32_t>(is);
  is.read(tag, 4);
  if (!is || std::memcmp(tag, "WAVE", 4) != 0) throw DataError("wav: not WAVE '" + path + "'");

  uint16_t channels = 0, bits = 0;
  uint32_t rate = 0;
  std::vector<double> samples;
  bool got_fmt = false, got_data = false;
  while (is && !(got_fmt && got_data)) {
    is.read(tag, 4);
    if (!is) break;
    uint32_t size = rd<uint32_t>(is);
    if (std::memcmp(tag, "fmt ", 4) == 0) {
      uint16_t fmt = rd<uint16_t>(is);
      channels = rd<uint16_t>(is);
      rate = rd<uint32_t>(is);
      rd<uint32_t>(is);
      rd<uint16_t>(is);
      bits = rd<uint16_t>(is);
      if (size > 16) is.seekg(size - 16, std::ios::cur);
      if (fmt != 1) throw DataError("wav: only PCM supported '" + path + "'");
      got_fmt = true;
    } else if (std::memcmp(tag, "data", 4) == 0) {
      if (!got_fmt) throw DataError("wav: data before fmt '" + path + "'");
      if (channels != 1) throw DataError("wav: only mono supported '" + path + "'");
      if (bits != 16) throw DataError("wav: only 16-bit supported '" + path + "'");
      size_t n = size / 2;
      samples.resize(n);
      for (size_t i = 0; i < n; ++i) {
        samples[i] = static_cast<double>(rd<int16_t>(is)) / 32767.0;
      }
      got_data = true;
    } else {
      is.seekg(size + (size & 1), std::ios::cur);
    }
  }
  if (!got_fmt || !got_data) throw DataError("wav: missing chunks in '" + path + "'");
  if (expect_rate > 0 && static_cast<int>(rate) != expect_rate) {
    throw DataError("wav: unexpected sample rate in '" + path + "'");
  }
  return samples;
}

}  // namespace vqtts::io
