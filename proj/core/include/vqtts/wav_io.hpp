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

#ifndef VQTTS_WAV_IO_HPP_
#define VQTTS_WAV_IO_HPP_

#include <string>
#include <vector>

namespace vqtts::io {

inline constexpr int kSampleRate = 16000;

// Mono 16-bit PCM only. Samples in [-1, 1]; writing clips out-of-range
// values and quantizes symmetrically so a read-back round-trips bit-exact.
void write_wav(const std::string& path, const std::vector<double>& samples,
               int sample_rate = kSampleRate);
std::vector<double> read_wav(const std::string& path, int expect_rate = kSampleRate);

}  // namespace vqtts::io

#endif  // VQTTS_WAV_IO_HPP_
