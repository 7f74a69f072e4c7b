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

// SemScore composite:
//
//   100 * (w_sem * s_sem + w_phon * (1 - d_phon) + w_nli * s_nli)
//
// s_sem and s_nli come from external scorers (semantic similarity and
// entailment probability); d_phon is the normalized phoneme edit distance.
// The default weights (1/3 each) are a placeholder, not published values.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <memory>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "pasr/core/client.hpp"
#include "pasr/core/rng.hpp"
#include "pasr/core/text.hpp"
#include "pasr/metrics/edit_distance.hpp"

namespace pasr {

class GraphemeToPhoneme {
 public:
  virtual ~GraphemeToPhoneme() = default;
  virtual std::vector<std::string> phonemes(std::string_view text) = 0;
};

/// Letter and digraph rules over normalized text; word boundaries are dropped.
class RuleG2P final : public GraphemeToPhoneme {
 public:
  std::vector<std::string> phonemes(std::string_view text) override {
    static constexpr std::array<std::pair<std::string_view, std::string_view>, 15> kDigraphs{{
        {"th", "TH"}, {"sh", "SH"}, {"ch", "CH"}, {"ph", "F"},  {"ng", "NG"},
        {"ck", "K"},  {"qu", "KW"}, {"ee", "IY"}, {"oo", "UW"}, {"ea", "IY"},
        {"ai", "EY"}, {"ay", "EY"}, {"ou", "AW"}, {"ow", "OW"}, {"wh", "W"},
    }};
    static constexpr std::array<std::string_view, 26> kLetters{
        "AE", "B", "K", "D", "EH", "F", "G", "HH", "IH", "JH", "K", "L", "M",
        "N",  "AA", "P", "K", "R", "S", "T", "AH", "V", "W", "KS", "Y", "Z"};
    std::vector<std::string> out;
    for (const auto& word : normalize_text(text)) {
      std::size_t i = 0;
      while (i < word.size()) {
        if (i + 1 < word.size()) {
          const std::string_view pair(word.data() + i, 2);
          auto it = std::find_if(kDigraphs.begin(), kDigraphs.end(), [&](const auto& d) { return d.first == pair; });
          if (it != kDigraphs.end()) {
            out.emplace_back(it->second);
            i += 2;
            continue;
          }
        }
        const char c = word[i];
        if (c >= 'a' && c <= 'z') {
          out.emplace_back(kLetters[static_cast<std::size_t>(c - 'a')]);
        } else if (c >= '0' && c <= '9') {
          out.emplace_back(std::string("DIGIT") + c);
        } else if (c != '\'') {
          out.emplace_back(1, c);
        }
        ++i;
      }
    }
    return out;
  }
};

/// {"task":"g2p","text"} -> {"phonemes": [...]}.
class ClientG2P final : public GraphemeToPhoneme {
 public:
  explicit ClientG2P(std::shared_ptr<ModelClient> client) : client_(std::move(client)) {}
  std::vector<std::string> phonemes(std::string_view text) override {
    json resp = client_->call({{"task", "g2p"}, {"text", text}});
    if (!resp.contains("phonemes") || !resp["phonemes"].is_array()) throw ClientError("g2p client returned no phonemes");
    return resp["phonemes"].get<std::vector<std::string>>();
  }

 private:
  std::shared_ptr<ModelClient> client_;
};

/// edit(ph_ref, ph_hyp) / max(|ph_ref|, |ph_hyp|); 0 when both are empty.
inline double phonetic_distance(std::string_view reference, std::string_view hypothesis, GraphemeToPhoneme& g2p) {
  const auto r = g2p.phonemes(reference);
  const auto h = g2p.phonemes(hypothesis);
  const std::size_t denom = std::max(r.size(), h.size());
  if (denom == 0) return 0.0;
  return static_cast<double>(edit_counts(r, h).errors()) / static_cast<double>(denom);
}

/// Scores a (reference, hypothesis) pair in [0, 1].
class TextPairScorer {
 public:
  virtual ~TextPairScorer() = default;
  virtual double score(std::string_view reference, std::string_view hypothesis) = 0;
};

class ConstantScorer final : public TextPairScorer {
 public:
  explicit ConstantScorer(double v) : v_(v) {}
  double score(std::string_view, std::string_view) override { return v_; }

 private:
  double v_;
};

/// Plumbing stand-in: 1 when the normalized texts match, otherwise a value
/// in [0, 1) derived from an FNV-1a hash of the pair and `salt`. Carries no
/// information about meaning.
class HashStubScorer final : public TextPairScorer {
 public:
  explicit HashStubScorer(std::string salt) : salt_(std::move(salt)) {}
  double score(std::string_view reference, std::string_view hypothesis) override {
    const std::string r = normalized_string(reference);
    const std::string h = normalized_string(hypothesis);
    if (r == h) return 1.0;
    const std::uint64_t x = splitmix64(fnv1a64(h, fnv1a64(r, fnv1a64(salt_))));
    return static_cast<double>(x >> 11) * 0x1.0p-53;
  }

 private:
  std::string salt_;
};

/// {"task": task, "reference", "hypothesis"} -> {"score": x}.
class ClientScorer final : public TextPairScorer {
 public:
  ClientScorer(std::string task, std::shared_ptr<ModelClient> client) : task_(std::move(task)), client_(std::move(client)) {}
  double score(std::string_view reference, std::string_view hypothesis) override {
    json resp = client_->call({{"task", task_}, {"reference", reference}, {"hypothesis", hypothesis}});
    if (!resp.contains("score") || !resp["score"].is_number()) throw ClientError(task_ + " client returned no score");
    return resp["score"].get<double>();
  }

 private:
  std::string task_;
  std::shared_ptr<ModelClient> client_;
};

struct SemScoreWeights {
  double semantic = 1.0 / 3.0;
  double phonetic = 1.0 / 3.0;
  double nli = 1.0 / 3.0;

  std::vector<std::string> violations() const {
    std::vector<std::string> v;
    if (semantic < 0 || phonetic < 0 || nli < 0) v.emplace_back("semscore weights must be non-negative");
    if (std::abs(semantic + phonetic + nli - 1.0) > 1e-9) v.emplace_back("semscore weights must sum to 1");
    return v;
  }
  void validate() const {
    auto v = violations();
    if (!v.empty()) throw std::invalid_argument(v.front());
  }
};

struct SemScoreClients {
  std::shared_ptr<TextPairScorer> semantic;
  std::shared_ptr<TextPairScorer> nli;
  std::shared_ptr<GraphemeToPhoneme> g2p;

  /// Bundled deterministic stubs.
  static SemScoreClients stubs() {
    return SemScoreClients{std::make_shared<HashStubScorer>("semantic"), std::make_shared<HashStubScorer>("nli"),
                           std::make_shared<RuleG2P>()};
  }
};

inline double semscore(std::string_view reference, std::string_view hypothesis, SemScoreClients& clients,
                       const SemScoreWeights& w) {
  w.validate();
  auto unit = [](double x, const char* what) {
    if (!std::isfinite(x)) throw ClientError(std::string(what) + " score is not finite");
    return std::clamp(x, 0.0, 1.0);
  };
  const double s_sem = unit(clients.semantic->score(reference, hypothesis), "semantic");
  const double s_nli = unit(clients.nli->score(reference, hypothesis), "nli");
  const double d_phon = unit(phonetic_distance(reference, hypothesis, *clients.g2p), "phonetic");
  const double v = 100.0 * (w.semantic * s_sem + w.phonetic * (1.0 - d_phon) + w.nli * s_nli);
  return std::clamp(v, 0.0, 100.0);
}

}  // namespace pasr
