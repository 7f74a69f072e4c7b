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

// Deterministic stand-ins for the text generator, the TTS model, and the
// filtering recognizer. They share a tone codec: every byte of the
// normalized text becomes a 20 ms sine at (byte - 16) * 50 Hz, which falls
// exactly on a DFT bin of the 320-sample segment at 16 kHz.
//
// Requests and responses:
//   generate:   {"task":"generate","examples":[...],"index":i,"attempt":a} -> {"text":...}
//   tts:        {"task":"tts","text":...,"description":...,"sample_rate":sr} -> {"sample_rate":sr,"samples":[...]}
//   transcribe: {"task":"transcribe","sample_rate":sr,"samples":[...]} -> {"text":...}

#pragma once

#include <cmath>
#include <set>
#include <string>
#include <vector>

#include "pasr/core/client.hpp"
#include "pasr/core/rng.hpp"
#include "pasr/core/text.hpp"

namespace pasr {

inline constexpr int kToneSegment = 320;
inline constexpr int kToneRate = 16000;
inline constexpr unsigned char kToneMinByte = 32;
inline constexpr unsigned char kToneMaxByte = 126;

inline double tone_frequency(unsigned char b) { return (static_cast<double>(b) - 16.0) * 50.0; }

inline std::vector<double> tone_encode(std::string_view text, double amplitude = 0.5) {
  std::vector<double> out;
  out.reserve(text.size() * kToneSegment);
  for (char ch : text) {
    auto b = static_cast<unsigned char>(ch);
    if (b < kToneMinByte || b > kToneMaxByte) b = '?';
    const double f = tone_frequency(b);
    for (int i = 0; i < kToneSegment; ++i) out.push_back(amplitude * std::sin(2.0 * M_PI * f * i / kToneRate));
  }
  return out;
}

/// Per segment, the candidate byte with the largest Goertzel power.
inline std::string tone_decode(const std::vector<double>& samples) {
  std::string out;
  for (std::size_t start = 0; start + kToneSegment <= samples.size(); start += kToneSegment) {
    double best_power = -1.0;
    unsigned char best = '?';
    for (int b = kToneMinByte; b <= kToneMaxByte; ++b) {
      const double w = 2.0 * M_PI * tone_frequency(static_cast<unsigned char>(b)) / kToneRate;
      const double coeff = 2.0 * std::cos(w);
      double s1 = 0.0;
      double s2 = 0.0;
      for (int i = 0; i < kToneSegment; ++i) {
        const double s0 = samples[start + static_cast<std::size_t>(i)] + coeff * s1 - s2;
        s2 = s1;
        s1 = s0;
      }
      const double power = s1 * s1 + s2 * s2 - coeff * s1 * s2;
      if (power > best_power) {
        best_power = power;
        best = static_cast<unsigned char>(b);
      }
    }
    out.push_back(static_cast<char>(best));
  }
  return out;
}

/// Recombines words of the prompt examples into numbered sentences.
class StubTextGenerator final : public ModelClient {
 public:
  json call(const json& req) override {
    if (req.value("task", "") != "generate") throw ClientError("stub generator: unsupported task");
    std::vector<std::string> pool;
    std::set<std::string> seen;
    for (const auto& e : req.at("examples")) {
      for (auto& w : normalize_text(e.get<std::string>())) {
        if (seen.insert(w).second) pool.push_back(std::move(w));
      }
    }
    if (pool.empty()) throw ClientError("stub generator: no example words");
    const auto index = req.value("index", 0L);
    const auto attempt = req.value("attempt", 0L);
    Rng rng(splitmix64(static_cast<std::uint64_t>(index) * 0x9E3779B97F4A7C15ULL + static_cast<std::uint64_t>(attempt)));
    const long len = rng.uniform_int(3, 6);
    std::string text;
    for (long i = 0; i < len; ++i) {
      if (!text.empty()) text += ' ';
      text += pool[rng.uniform_index(pool.size())];
    }
    return {{"text", text}};
  }
  bool concurrent_safe() const override { return true; }
  std::string describe() const override { return "stub:generate"; }
};

/// Tone-codec TTS. A deterministic `garble_fraction` of texts get every other
/// word shifted one letter so that the filter has something to reject; the
/// noise level in the description adds seeded low-level noise.
class StubTts final : public ModelClient {
 public:
  explicit StubTts(double garble_fraction = 0.0) : garble_(garble_fraction) {}

  json call(const json& req) override {
    if (req.value("task", "") != "tts") throw ClientError("stub tts: unsupported task");
    const int sr = req.value("sample_rate", kToneRate);
    if (sr != kToneRate) throw ClientError("stub tts: only 16000 Hz is supported");
    std::string text = normalized_string(req.at("text").get<std::string>());
    const std::string desc = req.value("description", "");
    const std::uint64_t h = fnv1a64(text);
    if (static_cast<double>(splitmix64(h) >> 11) * 0x1.0p-53 < garble_) text = garble(text);
    std::vector<double> samples = tone_encode(text);
    double noise = 0.0;
    if (desc.find("slightly noisy") != std::string::npos) {
      noise = 0.01;
    } else if (desc.find("noisy") != std::string::npos) {
      noise = 0.03;
    }
    if (noise > 0.0) {
      Rng rng(fnv1a64(desc, h));
      for (auto& x : samples) x += noise * rng.normal();
    }
    return {{"sample_rate", sr}, {"samples", samples}};
  }
  bool concurrent_safe() const override { return true; }
  std::string describe() const override { return "stub:tts"; }

  static std::string garble(const std::string& text) {
    std::string out = text;
    bool odd = false;
    bool in_word = false;
    for (char& c : out) {
      if (c == ' ') {
        in_word = false;
        continue;
      }
      if (!in_word) {
        in_word = true;
        odd = !odd;
      }
      if (odd && c >= 'a' && c <= 'z') c = c == 'z' ? 'a' : static_cast<char>(c + 1);
    }
    return out;
  }

 private:
  double garble_;
};

/// Tone-codec recognizer.
class StubRecognizer final : public ModelClient {
 public:
  json call(const json& req) override {
    if (req.value("task", "") != "transcribe") throw ClientError("stub asr: unsupported task");
    if (req.value("sample_rate", kToneRate) != kToneRate) throw ClientError("stub asr: only 16000 Hz is supported");
    return {{"text", tone_decode(req.at("samples").get<std::vector<double>>())}};
  }
  bool concurrent_safe() const override { return true; }
  std::string describe() const override { return "stub:transcribe"; }
};

}  // namespace pasr
