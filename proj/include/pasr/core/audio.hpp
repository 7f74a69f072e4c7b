// Copyright 2026 The pasr Authors.
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

#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace pasr {

/// Mono waveform with samples nominally in [-1, 1].
struct Waveform {
  std::vector<double> samples;
  int sample_rate = 16000;

  bool empty() const { return samples.empty(); }
  double duration_s() const {
    return sample_rate > 0 ? static_cast<double>(samples.size()) / sample_rate : 0.0;
  }
  bool operator==(const Waveform&) const = default;
};

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline void put_u16(std::ostream& os, std::uint16_t v) {
  unsigned char b[2] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8)};
  os.write(reinterpret_cast<const char*>(b), 2);
}

inline std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline std::uint16_t get_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

}  // namespace detail

/// Writes 16-bit PCM mono RIFF/WAVE. Samples are clipped to [-1, 1].
inline void write_wav(const std::filesystem::path& path, const Waveform& wav) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for writing: " + path.string());
  const auto n = static_cast<std::uint32_t>(wav.samples.size());
  os.write("RIFF", 4);
  detail::put_u32(os, 36 + n * 2);
  os.write("WAVE", 4);
  os.write("fmt ", 4);
  detail::put_u32(os, 16);
  detail::put_u16(os, 1);  // PCM
  detail::put_u16(os, 1);  // mono
  detail::put_u32(os, static_cast<std::uint32_t>(wav.sample_rate));
  detail::put_u32(os, static_cast<std::uint32_t>(wav.sample_rate) * 2);
  detail::put_u16(os, 2);
  detail::put_u16(os, 16);
  os.write("data", 4);
  detail::put_u32(os, n * 2);
  for (double s : wav.samples) {
    const double c = s > 1.0 ? 1.0 : (s < -1.0 ? -1.0 : s);
    const auto q = static_cast<std::int16_t>(std::lround(c * 32767.0));
    detail::put_u16(os, static_cast<std::uint16_t>(q));
  }
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

/// Reads mono 16-bit PCM or 32-bit float WAVE. Multi-channel input is
/// downmixed by averaging.
inline Waveform read_wav(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open audio: " + path.string());
  std::vector<unsigned char> buf((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  if (buf.size() < 12 || std::memcmp(buf.data(), "RIFF", 4) != 0 || std::memcmp(buf.data() + 8, "WAVE", 4) != 0) {
    throw std::runtime_error("not a RIFF/WAVE file: " + path.string());
  }
  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  std::size_t pos = 12;
  Waveform out;
  bool have_fmt = false;
  while (pos + 8 <= buf.size()) {
    const std::uint32_t size = detail::get_u32(buf.data() + pos + 4);
    const unsigned char* body = buf.data() + pos + 8;
    if (pos + 8 + size > buf.size()) throw std::runtime_error("truncated chunk in " + path.string());
    if (std::memcmp(buf.data() + pos, "fmt ", 4) == 0) {
      format = detail::get_u16(body);
      channels = detail::get_u16(body + 2);
      rate = detail::get_u32(body + 4);
      bits = detail::get_u16(body + 14);
      have_fmt = true;
    } else if (std::memcmp(buf.data() + pos, "data", 4) == 0) {
      if (!have_fmt || channels == 0) throw std::runtime_error("data before fmt in " + path.string());
      const std::size_t width = bits / 8;
      const std::size_t frames = size / (width * channels);
      out.samples.resize(frames);
      for (std::size_t f = 0; f < frames; ++f) {
        double acc = 0.0;
        for (std::size_t c = 0; c < channels; ++c) {
          const unsigned char* p = body + (f * channels + c) * width;
          if (format == 1 && bits == 16) {
            acc += static_cast<std::int16_t>(detail::get_u16(p)) / 32767.0;
          } else if (format == 3 && bits == 32) {
            float v;
            std::memcpy(&v, p, 4);
            acc += v;
          } else {
            throw std::runtime_error("unsupported WAVE encoding in " + path.string());
          }
        }
        out.samples[f] = acc / channels;
      }
    }
    pos += 8 + size + (size & 1);
  }
  if (!have_fmt) throw std::runtime_error("missing fmt chunk in " + path.string());
  out.sample_rate = static_cast<int>(rate);
  return out;
}

}  // namespace pasr
