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

// Small synthetic speech corpus for desk-scale runs. Each word is a two-tone
// chord whose frequencies come from a hash of the word; each speaker scales
// all frequencies by a fixed factor. Audio is held inline.

#pragma once

#include <array>
#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "pasr/core/audio.hpp"
#include "pasr/core/rng.hpp"
#include "pasr/manifests/manifest.hpp"

namespace pasr {

struct ToyCorpusConfig {
  int speakers = 4;
  int train_per_speaker = 8;
  int dev_per_speaker = 2;
  int words_min = 2;
  int words_max = 4;
  /// Words drawn from the first `vocabulary` entries of the built-in list.
  int vocabulary = 24;
  double word_seconds = 0.12;
  double gap_seconds = 0.03;
  int sample_rate = 16000;
  std::uint64_t seed = 0;
};

inline const std::vector<std::string>& toy_words() {
  static const std::vector<std::string> w{
      "open",  "close", "lights", "music", "play", "stop",  "call",  "mom",    "turn",  "on",   "off",  "the",
      "door",  "timer", "set",    "five",  "ten",  "start", "radio", "volume", "up",    "down", "next", "song",
      "alarm", "today", "what",   "time",  "is",   "it",    "warm",  "cold",   "water", "tea",  "lamp", "fan"};
  return w;
}

/// Two-tone rendering of `word` scaled by `speaker_factor`.
inline void append_word_tone(std::vector<double>& out, const std::string& word, double speaker_factor, double seconds,
                             int sample_rate) {
  const std::uint64_t h = fnv1a64(word);
  const double f1 = (250.0 + 50.0 * static_cast<double>(h % 24)) * speaker_factor;
  const double f2 = (1500.0 + 80.0 * static_cast<double>((h >> 16) % 48)) * speaker_factor;
  const auto n = static_cast<std::size_t>(std::lround(seconds * sample_rate));
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / sample_rate;
    const double env = std::sin(M_PI * static_cast<double>(i) / static_cast<double>(n));
    out.push_back(env * (0.3 * std::sin(2.0 * M_PI * f1 * t) + 0.2 * std::sin(2.0 * M_PI * f2 * t)));
  }
}

inline Manifest make_toy_corpus(const ToyCorpusConfig& cfg) {
  const auto& words = toy_words();
  if (cfg.vocabulary < 1 || cfg.vocabulary > static_cast<int>(words.size())) {
    throw std::invalid_argument("toy corpus vocabulary must be in [1, " + std::to_string(words.size()) + "]");
  }
  if (cfg.words_min < 1 || cfg.words_max < cfg.words_min) throw std::invalid_argument("toy corpus word counts invalid");
  Rng rng(derive_seed(cfg.seed, "toy_corpus"));
  Manifest m;
  m.metadata["corpus"] = "toy";
  m.metadata["sample_rate"] = cfg.sample_rate;
  static constexpr std::array<Etiology, 5> kEtiologies{Etiology::parkinson, Etiology::als, Etiology::cerebral_palsy,
                                                       Etiology::down_syndrome, Etiology::stroke};
  for (int s = 0; s < cfg.speakers; ++s) {
    const double factor = 0.85 + 0.3 * rng.uniform01();
    const std::string spk = "spk" + std::to_string(s);
    for (int k = 0; k < cfg.train_per_speaker + cfg.dev_per_speaker; ++k) {
      Utterance u;
      u.id = spk + "_" + std::to_string(k);
      u.speaker_id = spk;
      u.etiology = kEtiologies[static_cast<std::size_t>(s) % kEtiologies.size()];
      u.category = Category::command;
      u.split = k < cfg.train_per_speaker ? Split::train : Split::dev;
      u.gender = s % 2 == 0 ? Gender::female : Gender::male;
      const long n = rng.uniform_int(cfg.words_min, cfg.words_max);
      Waveform w;
      w.sample_rate = cfg.sample_rate;
      const auto gap = static_cast<std::size_t>(std::lround(cfg.gap_seconds * cfg.sample_rate));
      w.samples.assign(gap, 0.0);
      for (long i = 0; i < n; ++i) {
        const std::string& word = words[rng.uniform_index(static_cast<std::size_t>(cfg.vocabulary))];
        if (!u.transcript.empty()) u.transcript += ' ';
        u.transcript += word;
        append_word_tone(w.samples, word, factor, cfg.word_seconds, cfg.sample_rate);
        w.samples.insert(w.samples.end(), gap, 0.0);
      }
      for (auto& x : w.samples) x += 1e-3 * rng.normal();
      u.duration_s = static_cast<double>(w.samples.size()) / cfg.sample_rate;
      u.audio = std::move(w);
      m.records.push_back(std::move(u));
    }
  }
  return m;
}

/// Writes every inline waveform to <dir>/audio/<id>.wav and rewrites the
/// records to reference them relative to `dir`.
inline Manifest materialize_audio(Manifest m, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "audio");
  for (auto& u : m.records) {
    if (const auto* w = std::get_if<Waveform>(&u.audio)) {
      const std::string rel = "audio/" + u.id + ".wav";
      write_wav(dir / rel, *w);
      u.audio = rel;
    }
  }
  m.base_dir = dir;
  return m;
}

}  // namespace pasr
