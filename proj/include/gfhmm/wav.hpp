// Copyright 2026  The gfhmm authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// 16-bit PCM mono WAV reader and writer.

#ifndef GFHMM_WAV_HPP
#define GFHMM_WAV_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <optional>
#include <string>
#include <vector>

#include "gfhmm/error.hpp"
#include "gfhmm/signal.hpp"

namespace gfhmm {

namespace detail {

inline std::uint32_t read_le32(const unsigned char* p) {
  return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) | (std::uint32_t(p[2]) << 16) |
         (std::uint32_t(p[3]) << 24);
}

inline std::uint16_t read_le16(const unsigned char* p) {
  return std::uint16_t(p[0] | (p[1] << 8));
}

inline void put_le32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

inline void put_le16(std::vector<unsigned char>& out, std::uint16_t v) {
  out.push_back(static_cast<unsigned char>(v & 0xff));
  out.push_back(static_cast<unsigned char>(v >> 8));
}

}  // namespace detail

/// Reads a RIFF/WAVE file. When `expected_rate` is set, a file at any other
/// rate is rejected.
inline AudioSignal read_wav(const std::string& path,
                            std::optional<int> expected_rate = std::nullopt) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kIo, "cannot open " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    fail(ErrorKind::kIo, path + ": not a RIFF/WAVE file");

  bool have_fmt = false;
  std::uint16_t channels = 0, bits = 0, format = 0;
  std::uint32_t rate = 0;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::uint32_t size = detail::read_le32(&bytes[pos + 4]);
    const unsigned char* body = &bytes[pos + 8];
    const std::size_t avail = bytes.size() - (pos + 8);
    if (std::memcmp(&bytes[pos], "fmt ", 4) == 0) {
      if (size < 16 || avail < 16) fail(ErrorKind::kIo, path + ": truncated fmt chunk");
      format = detail::read_le16(body);
      channels = detail::read_le16(body + 2);
      rate = detail::read_le32(body + 4);
      bits = detail::read_le16(body + 14);
      have_fmt = true;
    } else if (std::memcmp(&bytes[pos], "data", 4) == 0) {
      if (!have_fmt) fail(ErrorKind::kIo, path + ": data chunk before fmt chunk");
      if (format != 1) fail(ErrorKind::kIo, path + ": only PCM is supported");
      if (channels != 1) fail(ErrorKind::kIo, path + ": mono required");
      if (bits != 16) fail(ErrorKind::kIo, path + ": unsupported bit depth " + std::to_string(bits));
      if (expected_rate && int(rate) != *expected_rate)
        fail(ErrorKind::kIo, path + ": sample rate mismatch (" + std::to_string(rate) +
                                 " Hz, expected " + std::to_string(*expected_rate) + " Hz)");
      const std::size_t n = std::min<std::size_t>(size, avail) / 2;
      AudioSignal sig;
      sig.sample_rate = int(rate);
      sig.samples.resize(n);
      for (std::size_t i = 0; i < n; ++i)
        sig.samples[i] = double(std::int16_t(detail::read_le16(body + 2 * i))) / 32768.0;
      return sig;
    }
    pos += 8 + size + (size & 1u);
  }
  fail(ErrorKind::kIo, path + ": no data chunk");
}

/// Writes 16-bit PCM mono; samples are clipped to [-1, 1] first.
inline void write_wav(const std::string& path, const AudioSignal& signal) {
  require(signal.sample_rate > 0, "sample rate must be positive");
  const auto data_bytes = static_cast<std::uint32_t>(signal.size() * 2);
  std::vector<unsigned char> out;
  out.reserve(44 + data_bytes);
  out.insert(out.end(), {'R', 'I', 'F', 'F'});
  detail::put_le32(out, 36 + data_bytes);
  out.insert(out.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  detail::put_le32(out, 16);
  detail::put_le16(out, 1);
  detail::put_le16(out, 1);
  detail::put_le32(out, std::uint32_t(signal.sample_rate));
  detail::put_le32(out, std::uint32_t(signal.sample_rate) * 2);
  detail::put_le16(out, 2);
  detail::put_le16(out, 16);
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  detail::put_le32(out, data_bytes);
  for (double s : signal.samples) {
    const double clipped = std::clamp(s, -1.0, 1.0);
    const long q = std::clamp(std::lround(clipped * 32768.0), -32768L, 32767L);
    detail::put_le16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(q)));
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) fail(ErrorKind::kIo, "cannot write " + path);
  f.write(reinterpret_cast<const char*>(out.data()), std::streamsize(out.size()));
  if (!f) fail(ErrorKind::kIo, "write failed: " + path);
}

}  // namespace gfhmm

#endif  // GFHMM_WAV_HPP
