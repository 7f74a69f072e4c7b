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

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <future>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "pasr/core/audio.hpp"
#include "pasr/core/client.hpp"
#include "pasr/core/rng.hpp"
#include "pasr/core/text.hpp"
#include "pasr/manifests/manifest.hpp"
#include "pasr/metrics/edit_distance.hpp"

namespace pasr {

// ---------------------------------------------------------------------------
// Prompt seeds and transcript generation

struct PromptSeed {
  std::vector<std::string> examples;
  std::string template_id = "recombine-v1";

  bool operator==(const PromptSeed&) const = default;
};

/// k distinct transcripts from the train split, in draw order. Records with
/// the same normalized transcript count once.
inline PromptSeed sample_prompt_seed(const Manifest& m, std::size_t k, std::uint64_t seed) {
  std::vector<std::string> pool;
  std::set<std::string> seen;
  for (const auto& r : m.records) {
    if (r.split == Split::train && seen.insert(normalized_string(r.transcript)).second) pool.push_back(r.transcript);
  }
  if (pool.size() < k) {
    throw std::invalid_argument("sample_prompt_seed: " + std::to_string(pool.size()) + " distinct train transcripts, " +
                                std::to_string(k) + " required");
  }
  Rng rng(seed);
  PromptSeed s;
  for (std::size_t i : rng.sample_without_replacement(pool.size(), k)) s.examples.push_back(pool[i]);
  return s;
}

inline std::string render_instruction(const PromptSeed& seed) {
  std::string out =
      "Write one new short sentence a speaker might say to a voice assistant. Match the vocabulary, topics, and "
      "phrasing of these examples, but do not repeat any of them:\n";
  for (std::size_t i = 0; i < seed.examples.size(); ++i) {
    out += std::to_string(i + 1) + ". " + seed.examples[i] + "\n";
  }
  return out;
}

class RetryBudgetExhausted : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GenerationStats {
  long requests = 0;
  long retries = 0;
};

/// `n` transcripts. An empty output or one equal (after normalization) to a
/// seed example is regenerated, at most `retry_bound` times per transcript.
/// `first_index` offsets the per-transcript index sent to the client.
inline std::vector<std::string> generate_transcripts(ModelClient& client, const PromptSeed& seed, std::size_t n,
                                                     GenerationStats* stats = nullptr, int retry_bound = 5,
                                                     long first_index = 0) {
  if (n == 0) throw std::invalid_argument("generate_transcripts: n must be >= 1");
  std::set<std::string> banned;
  for (const auto& e : seed.examples) banned.insert(normalized_string(e));
  const std::string instruction = render_instruction(seed);
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) {
    bool done = false;
    for (int attempt = 0; attempt <= retry_bound && !done; ++attempt) {
      json req = {{"task", "generate"},
                  {"template", seed.template_id},
                  {"instruction", instruction},
                  {"examples", seed.examples},
                  {"index", first_index + static_cast<long>(i)},
                  {"attempt", attempt}};
      if (stats != nullptr) ++stats->requests;
      json resp = client.call(req);
      if (!resp.contains("text") || !resp["text"].is_string()) throw ClientError("generator returned no text");
      std::string text = resp["text"].get<std::string>();
      const std::string norm = normalized_string(text);
      if (norm.empty() || banned.count(norm) != 0) {
        if (stats != nullptr && attempt < retry_bound) ++stats->retries;
        continue;
      }
      out.push_back(std::move(text));
      done = true;
    }
    if (!done) {
      throw RetryBudgetExhausted("generate_transcripts: transcript " + std::to_string(i) + " still invalid after " +
                                 std::to_string(retry_bound) + " retries");
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Voice attributes

struct AttributeBins {
  std::vector<std::string> speaking_rates{"very slow", "slow", "moderate", "fast"};
  /// Words-per-second upper edges of all rate bins but the last.
  std::vector<double> rate_edges{1.0, 2.0, 3.0};
  std::vector<std::string> pitches{"very low", "low", "moderate", "high", "very high"};
  std::vector<std::string> noise_levels{"quiet", "slightly noisy", "noisy"};

  std::vector<std::string> violations() const {
    std::vector<std::string> v;
    if (speaking_rates.empty() || pitches.empty() || noise_levels.empty()) v.emplace_back("synth attribute bins must be non-empty");
    if (rate_edges.size() + 1 != speaking_rates.size()) v.emplace_back("synth.rate_edges must have one fewer entry than speaking_rates");
    if (!std::is_sorted(rate_edges.begin(), rate_edges.end())) v.emplace_back("synth.rate_edges must be ascending");
    return v;
  }
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(AttributeBins, speaking_rates, rate_edges, pitches, noise_levels)

struct VoiceAttributes {
  Gender gender = Gender::female;
  std::string speaking_rate;
  std::string pitch;
  std::string noise_level;
  std::string rendered_description;

  bool operator==(const VoiceAttributes&) const = default;
};

inline std::string render_description(Gender g, const std::string& rate, const std::string& pitch,
                                      const std::string& noise) {
  return "A " + std::string(to_string(g)) + " speaker with a " + pitch + " pitch speaks at a " + rate +
         " pace in a " + noise + " environment.";
}

inline std::string rate_bin(const Utterance& u, const AttributeBins& bins) {
  if (!(u.duration_s > 0.0)) return bins.speaking_rates[bins.speaking_rates.size() / 2];
  const double wps = static_cast<double>(normalize_text(u.transcript).size()) / u.duration_s;
  std::size_t i = 0;
  while (i < bins.rate_edges.size() && wps >= bins.rate_edges[i]) ++i;
  return bins.speaking_rates[i];
}

/// Gender and speaking rate come from one uniformly drawn gender-labeled
/// train record; pitch and noise level are uniform over their bins.
inline VoiceAttributes sample_attributes(const Manifest& m, std::uint64_t seed, const AttributeBins& bins = {}) {
  if (auto v = bins.violations(); !v.empty()) throw std::invalid_argument(v.front());
  std::vector<const Utterance*> labeled;
  for (const auto& r : m.records) {
    if (r.split == Split::train && r.gender) labeled.push_back(&r);
  }
  if (labeled.empty()) throw std::invalid_argument("sample_attributes: no gender-labeled train records");
  Rng rng(seed);
  const Utterance& u = *labeled[rng.uniform_index(labeled.size())];
  VoiceAttributes a;
  a.gender = *u.gender;
  a.speaking_rate = rate_bin(u, bins);
  a.pitch = bins.pitches[rng.uniform_index(bins.pitches.size())];
  a.noise_level = bins.noise_levels[rng.uniform_index(bins.noise_levels.size())];
  a.rendered_description = render_description(a.gender, a.speaking_rate, a.pitch, a.noise_level);
  return a;
}

template <typename Json>
void to_json(Json& j, const VoiceAttributes& a) {
  j = Json{{"gender", std::string(to_string(a.gender))},
                     {"speaking_rate", a.speaking_rate},
                     {"pitch", a.pitch},
                     {"noise_level", a.noise_level},
                     {"description", a.rendered_description}};
}

template <typename Json>
void from_json(const Json& j, VoiceAttributes& a) {
  auto g = parse_gender(j.at("gender").template get<std::string>());
  if (!g) throw std::invalid_argument("unknown gender in voice attributes");
  a.gender = *g;
  a.speaking_rate = j.at("speaking_rate").template get<std::string>();
  a.pitch = j.at("pitch").template get<std::string>();
  a.noise_level = j.at("noise_level").template get<std::string>();
  a.rendered_description = j.at("description").template get<std::string>();
}

// ---------------------------------------------------------------------------
// Synthesis and filtering

struct SynthCandidate {
  std::string prompt;
  VoiceAttributes attributes;
  Waveform audio;
  std::optional<double> filter_wer;
  std::string recognized;
  /// Set when the candidate could not be scored.
  std::string rejection_reason;
};

inline SynthCandidate synthesize(ModelClient& tts, const std::string& transcript, const VoiceAttributes& attrs,
                                 int sample_rate = 16000) {
  if (normalize_text(transcript).empty()) throw std::invalid_argument("synthesize: empty transcript");
  json resp = tts.call({{"task", "tts"},
                        {"text", transcript},
                        {"description", attrs.rendered_description},
                        {"sample_rate", sample_rate}});
  SynthCandidate c;
  c.prompt = transcript;
  c.attributes = attrs;
  c.audio.sample_rate = resp.value("sample_rate", sample_rate);
  if (!resp.contains("samples")) throw ClientError("tts returned no samples");
  c.audio.samples = resp["samples"].get<std::vector<double>>();
  if (c.audio.samples.empty()) throw ClientError("tts returned empty audio");
  return c;
}

namespace detail {

/// Applies `fn` to 0..n-1 with at most `parallelism` calls in flight; results
/// keep index order.
template <typename R, typename Fn>
std::vector<R> ordered_fan_out(std::size_t n, int parallelism, Fn fn) {
  std::vector<R> out(n);
  if (parallelism <= 1) {
    for (std::size_t i = 0; i < n; ++i) out[i] = fn(i);
    return out;
  }
  for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(parallelism)) {
    const std::size_t end = std::min(n, start + static_cast<std::size_t>(parallelism));
    std::vector<std::future<R>> fs;
    for (std::size_t i = start; i < end; ++i) fs.push_back(std::async(std::launch::async, fn, i));
    for (std::size_t i = start; i < end; ++i) out[i] = fs[i - start].get();
  }
  return out;
}

}  // namespace detail

inline std::vector<SynthCandidate> synthesize_all(ModelClient& tts, const std::vector<std::string>& transcripts,
                                                  const std::vector<VoiceAttributes>& attrs, int parallelism = 1) {
  if (transcripts.size() != attrs.size()) throw std::invalid_argument("synthesize_all: size mismatch");
  const int p = tts.concurrent_safe() ? parallelism : 1;
  return detail::ordered_fan_out<SynthCandidate>(transcripts.size(), p,
                                                 [&](std::size_t i) { return synthesize(tts, transcripts[i], attrs[i]); });
}

struct FilterResult {
  std::vector<SynthCandidate> accepted;
  std::vector<SynthCandidate> rejected;
};

inline constexpr double kDefaultFilterThreshold = 35.0;

/// Accepted iff the recognizer's WER against the prompt is strictly below
/// `threshold`. A recognizer failure rejects that candidate with a reason
/// and leaves filter_wer unset.
inline FilterResult filter_intelligibility(std::vector<SynthCandidate> candidates, ModelClient& asr,
                                           double threshold = kDefaultFilterThreshold, int parallelism = 1) {
  const int p = asr.concurrent_safe() ? parallelism : 1;
  struct Scored {
    std::optional<double> wer;
    std::string text;
    std::string error;
  };
  auto scored = detail::ordered_fan_out<Scored>(candidates.size(), p, [&](std::size_t i) {
    Scored s;
    try {
      const auto& c = candidates[i];
      json resp = asr.call({{"task", "transcribe"}, {"sample_rate", c.audio.sample_rate}, {"samples", c.audio.samples}});
      if (!resp.contains("text") || !resp["text"].is_string()) throw ClientError("recognizer returned no text");
      s.text = resp["text"].get<std::string>();
      const auto ref = normalize_text(c.prompt);
      if (ref.empty()) throw std::invalid_argument("candidate prompt is empty after normalization");
      s.wer = wer(edit_counts(ref, normalize_text(s.text)));
    } catch (const std::exception& e) {
      s.error = e.what();
    }
    return s;
  });
  FilterResult r;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    auto& c = candidates[i];
    c.filter_wer = scored[i].wer;
    c.recognized = scored[i].text;
    c.rejection_reason = scored[i].error;
    if (c.filter_wer && *c.filter_wer < threshold) {
      r.accepted.push_back(std::move(c));
    } else {
      if (c.rejection_reason.empty()) c.rejection_reason = "wer " + format_percent(*c.filter_wer) + " >= threshold";
      r.rejected.push_back(std::move(c));
    }
  }
  return r;
}

// ---------------------------------------------------------------------------
// Pools on disk

/// First unused <dir>/vNNN (v001, v002, ...). Existing versions are never reused.
inline std::filesystem::path next_version_dir(const std::filesystem::path& dir) {
  for (int v = 1; v < 100000; ++v) {
    char name[16];
    std::snprintf(name, sizeof(name), "v%03d", v);
    auto p = dir / name;
    if (!std::filesystem::exists(p)) return p;
  }
  throw std::runtime_error("no free version directory under " + dir.string());
}

/// Writes accepted candidates to a fresh <out>/vNNN: audio/<id>.wav and
/// manifest.jsonl (provenance synthetic, etiology unknown, split train).
inline Manifest export_pool(const std::vector<SynthCandidate>& accepted, const std::filesystem::path& out) {
  if (accepted.empty()) throw std::invalid_argument("export_pool: nothing to export");
  const auto dir = next_version_dir(out);
  std::filesystem::create_directories(dir / "audio");
  Manifest m;
  m.metadata["corpus"] = "synthetic";
  m.metadata["sample_rate"] = accepted.front().audio.sample_rate;
  for (std::size_t i = 0; i < accepted.size(); ++i) {
    const auto& c = accepted[i];
    if (!c.filter_wer) throw std::invalid_argument("export_pool: candidate without filter_wer");
    char id[32];
    std::snprintf(id, sizeof(id), "synth_%06zu", i + 1);
    Utterance u;
    u.id = id;
    u.audio = "audio/" + u.id + ".wav";
    u.transcript = c.prompt;
    u.speaker_id = "synthetic_" + std::string(to_string(c.attributes.gender));
    u.etiology = Etiology::unknown;
    u.category = Category::unknown;
    u.split = Split::train;
    u.duration_s = c.audio.duration_s();
    u.provenance = Provenance::synthetic;
    u.gender = c.attributes.gender;
    u.filter_wer = c.filter_wer;
    write_wav(dir / std::get<std::string>(u.audio), c.audio);
    m.records.push_back(std::move(u));
  }
  save_manifest(dir / "manifest.jsonl", m);
  m.base_dir = dir;
  return m;
}

/// Unfiltered candidates: <dir>/candidates.jsonl plus audio/<id>.wav.
inline void save_candidate_pool(const std::vector<SynthCandidate>& cands, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "audio");
  std::ofstream os(dir / "candidates.jsonl", std::ios::binary);
  if (!os) throw std::runtime_error("cannot write candidate pool in " + dir.string());
  for (std::size_t i = 0; i < cands.size(); ++i) {
    char id[32];
    std::snprintf(id, sizeof(id), "cand_%06zu", i + 1);
    const std::string rel = std::string("audio/") + id + ".wav";
    write_wav(dir / rel, cands[i].audio);
    nlohmann::ordered_json j;
    j["id"] = id;
    j["prompt"] = cands[i].prompt;
    j["attributes"] = cands[i].attributes;
    j["audio"] = rel;
    os << j.dump() << "\n";
  }
}

inline std::vector<SynthCandidate> load_candidate_pool(const std::filesystem::path& dir) {
  std::ifstream is(dir / "candidates.jsonl");
  if (!is) throw std::runtime_error("no candidates.jsonl in " + dir.string());
  std::vector<SynthCandidate> out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    auto j = nlohmann::json::parse(line);
    SynthCandidate c;
    c.prompt = j.at("prompt").get<std::string>();
    c.attributes = j.at("attributes").get<VoiceAttributes>();
    c.audio = read_wav(dir / j.at("audio").get<std::string>());
    out.push_back(std::move(c));
  }
  return out;
}

// ---------------------------------------------------------------------------
// End to end

struct SynthConfig {
  std::size_t prompt_examples = 10;
  std::size_t candidates = 20;
  std::size_t sentences_per_seed = 10;
  int retry_bound = 5;
  double threshold = kDefaultFilterThreshold;
  int parallelism = 1;
  AttributeBins bins;

  std::vector<std::string> violations() const {
    std::vector<std::string> v = bins.violations();
    if (prompt_examples < 1) v.emplace_back("synth.prompt_examples must be >= 1");
    if (sentences_per_seed < 1) v.emplace_back("synth.sentences_per_seed must be >= 1");
    if (retry_bound < 0) v.emplace_back("synth.retry_bound must be >= 0");
    if (!(threshold > 0.0)) v.emplace_back("synth.threshold must be > 0");
    if (parallelism < 1) v.emplace_back("synth.parallelism must be >= 1");
    return v;
  }
};

/// Prompt seeds, transcripts, attributes, and audio for `cfg.candidates`
/// candidates. A fresh prompt seed is drawn for every `sentences_per_seed`.
inline std::vector<SynthCandidate> generate_candidates(const SynthConfig& cfg, const Manifest& train, ModelClient& llm,
                                                       ModelClient& tts, std::uint64_t seed,
                                                       GenerationStats* stats = nullptr) {
  if (auto v = cfg.violations(); !v.empty()) throw std::invalid_argument(v.front());
  std::vector<std::string> transcripts;
  std::vector<VoiceAttributes> attrs;
  for (std::size_t chunk = 0; transcripts.size() < cfg.candidates; ++chunk) {
    const auto ps = sample_prompt_seed(train, cfg.prompt_examples, derive_seed(seed, "prompt:" + std::to_string(chunk)));
    const std::size_t n = std::min(cfg.sentences_per_seed, cfg.candidates - transcripts.size());
    auto t = generate_transcripts(llm, ps, n, stats, cfg.retry_bound, static_cast<long>(transcripts.size()));
    transcripts.insert(transcripts.end(), t.begin(), t.end());
  }
  for (std::size_t i = 0; i < transcripts.size(); ++i) {
    attrs.push_back(sample_attributes(train, derive_seed(seed, "attributes:" + std::to_string(i)), cfg.bins));
  }
  return synthesize_all(tts, transcripts, attrs, cfg.parallelism);
}

}  // namespace pasr
