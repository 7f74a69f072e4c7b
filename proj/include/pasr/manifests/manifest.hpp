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

#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_set>
#include <variant>
#include <vector>

#include "json.hpp"
#include "pasr/core/audio.hpp"
#include "pasr/core/rng.hpp"

namespace pasr {

using ordered_json = nlohmann::ordered_json;

enum class Etiology { parkinson, als, cerebral_palsy, down_syndrome, stroke, unknown };
enum class Category { command, novel_sentence, spontaneous, unknown };
enum class Split { train, dev, test };
enum class Provenance { real, synthetic };
enum class Gender { male, female };

namespace detail {

template <typename E, std::size_t N>
struct EnumNames {
  std::array<std::pair<E, std::string_view>, N> entries;

  std::string_view name(E e) const {
    for (const auto& [v, s] : entries) {
      if (v == e) return s;
    }
    throw std::logic_error("unnamed enum value");
  }
  std::optional<E> parse(std::string_view s) const {
    for (const auto& [v, n] : entries) {
      if (n == s) return v;
    }
    return std::nullopt;
  }
};

inline constexpr EnumNames<Etiology, 6> kEtiologyNames{{{{Etiology::parkinson, "parkinson"},
                                                         {Etiology::als, "als"},
                                                         {Etiology::cerebral_palsy, "cerebral_palsy"},
                                                         {Etiology::down_syndrome, "down_syndrome"},
                                                         {Etiology::stroke, "stroke"},
                                                         {Etiology::unknown, "unknown"}}}};
inline constexpr EnumNames<Category, 4> kCategoryNames{{{{Category::command, "command"},
                                                         {Category::novel_sentence, "novel_sentence"},
                                                         {Category::spontaneous, "spontaneous"},
                                                         {Category::unknown, "unknown"}}}};
inline constexpr EnumNames<Split, 3> kSplitNames{
    {{{Split::train, "train"}, {Split::dev, "dev"}, {Split::test, "test"}}}};
inline constexpr EnumNames<Provenance, 2> kProvenanceNames{
    {{{Provenance::real, "real"}, {Provenance::synthetic, "synthetic"}}}};
inline constexpr EnumNames<Gender, 2> kGenderNames{{{{Gender::male, "male"}, {Gender::female, "female"}}}};

}  // namespace detail

inline std::string_view to_string(Etiology e) { return detail::kEtiologyNames.name(e); }
inline std::string_view to_string(Category c) { return detail::kCategoryNames.name(c); }
inline std::string_view to_string(Split s) { return detail::kSplitNames.name(s); }
inline std::string_view to_string(Provenance p) { return detail::kProvenanceNames.name(p); }
inline std::string_view to_string(Gender g) { return detail::kGenderNames.name(g); }

inline std::optional<Etiology> parse_etiology(std::string_view s) { return detail::kEtiologyNames.parse(s); }
inline std::optional<Category> parse_category(std::string_view s) { return detail::kCategoryNames.parse(s); }
inline std::optional<Split> parse_split(std::string_view s) { return detail::kSplitNames.parse(s); }
inline std::optional<Provenance> parse_provenance(std::string_view s) { return detail::kProvenanceNames.parse(s); }
inline std::optional<Gender> parse_gender(std::string_view s) { return detail::kGenderNames.parse(s); }

/// Either a path (relative paths resolve against the manifest directory) or
/// inline samples.
using AudioRef = std::variant<std::string, Waveform>;

struct Utterance {
  std::string id;
  AudioRef audio;
  std::string transcript;
  std::string speaker_id;
  Etiology etiology = Etiology::unknown;
  Category category = Category::unknown;
  Split split = Split::train;
  double duration_s = 0.0;
  Provenance provenance = Provenance::real;
  std::optional<Gender> gender;
  std::optional<double> filter_wer;

  bool operator==(const Utterance&) const = default;
};

struct Manifest {
  std::vector<Utterance> records;
  ordered_json metadata = ordered_json::object();
  /// Directory used to resolve relative audio paths. Not serialized.
  std::filesystem::path base_dir;

  std::size_t size() const { return records.size(); }
  std::size_t count(Split s) const {
    std::size_t n = 0;
    for (const auto& r : records) n += (r.split == s);
    return n;
  }
  std::optional<int> sample_rate() const {
    if (metadata.contains("sample_rate")) return metadata["sample_rate"].get<int>();
    return std::nullopt;
  }
};

/// Failure while reading a manifest; `line()` is 1-based, 0 when not tied to a line.
class ManifestError : public std::runtime_error {
 public:
  ManifestError(std::size_t line, const std::string& what)
      : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

struct ManifestLoadOptions {
  /// Unknown keys are errors when strict, warnings otherwise.
  bool strict = true;
  std::function<void(const std::string&)> on_warning = [](const std::string& msg) {
    std::cerr << "warning: " << msg << "\n";
  };
};

/// Key of the optional first-line metadata record.
inline constexpr std::string_view kManifestMetaKey = "__manifest__";

namespace detail {

inline constexpr std::array<std::string_view, 11> kUtteranceKeys = {
    "id",    "audio",      "transcript", "speaker_id", "etiology", "category",
    "split", "duration_s", "provenance", "gender",     "filter_wer"};

inline ordered_json audio_to_json(const AudioRef& a) {
  if (const auto* path = std::get_if<std::string>(&a)) return *path;
  const auto& w = std::get<Waveform>(a);
  ordered_json j = ordered_json::object();
  j["sample_rate"] = w.sample_rate;
  j["samples"] = w.samples;
  return j;
}

template <typename E>
E required_enum(const ordered_json& j, const char* key, std::optional<E> (*parse)(std::string_view),
                std::size_t line) {
  if (!j.contains(key)) throw ManifestError(line, std::string("missing required field '") + key + "'");
  if (!j[key].is_string()) throw ManifestError(line, std::string("field '") + key + "' must be a string");
  const auto s = j[key].get<std::string>();
  auto v = parse(s);
  if (!v) throw ManifestError(line, std::string("unknown ") + key + " value '" + s + "'");
  return *v;
}

inline std::string required_string(const ordered_json& j, const char* key, std::size_t line) {
  if (!j.contains(key)) throw ManifestError(line, std::string("missing required field '") + key + "'");
  if (!j[key].is_string()) throw ManifestError(line, std::string("field '") + key + "' must be a string");
  return j[key].get<std::string>();
}

}  // namespace detail

inline ordered_json utterance_to_json(const Utterance& u) {
  ordered_json j = ordered_json::object();
  j["id"] = u.id;
  j["audio"] = detail::audio_to_json(u.audio);
  j["transcript"] = u.transcript;
  j["speaker_id"] = u.speaker_id;
  j["etiology"] = to_string(u.etiology);
  j["category"] = to_string(u.category);
  j["split"] = to_string(u.split);
  j["duration_s"] = u.duration_s;
  j["provenance"] = to_string(u.provenance);
  if (u.gender) j["gender"] = to_string(*u.gender);
  if (u.filter_wer) j["filter_wer"] = *u.filter_wer;
  return j;
}

inline Utterance utterance_from_json(const ordered_json& j, std::size_t line, const ManifestLoadOptions& opts) {
  if (!j.is_object()) throw ManifestError(line, "record must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    bool known = false;
    for (auto k : detail::kUtteranceKeys) known = known || (k == key);
    if (!known) {
      if (opts.strict) throw ManifestError(line, "unknown field '" + key + "'");
      if (opts.on_warning) opts.on_warning("line " + std::to_string(line) + ": ignoring unknown field '" + key + "'");
    }
  }
  Utterance u;
  u.id = detail::required_string(j, "id", line);
  if (u.id.empty()) throw ManifestError(line, "empty id");
  if (!j.contains("audio")) throw ManifestError(line, "missing required field 'audio'");
  const auto& a = j["audio"];
  if (a.is_string()) {
    u.audio = a.get<std::string>();
  } else if (a.is_object() && a.contains("samples") && a.contains("sample_rate")) {
    Waveform w;
    w.sample_rate = a["sample_rate"].get<int>();
    w.samples = a["samples"].get<std::vector<double>>();
    u.audio = std::move(w);
  } else {
    throw ManifestError(line, "field 'audio' must be a path or {sample_rate, samples}");
  }
  u.transcript = detail::required_string(j, "transcript", line);
  u.speaker_id = detail::required_string(j, "speaker_id", line);
  u.etiology = detail::required_enum<Etiology>(j, "etiology", parse_etiology, line);
  u.category = detail::required_enum<Category>(j, "category", parse_category, line);
  u.split = detail::required_enum<Split>(j, "split", parse_split, line);
  if (!j.contains("duration_s")) throw ManifestError(line, "missing required field 'duration_s'");
  if (!j["duration_s"].is_number()) throw ManifestError(line, "field 'duration_s' must be a number");
  u.duration_s = j["duration_s"].get<double>();
  if (!(u.duration_s >= 0.0)) throw ManifestError(line, "duration_s must be >= 0");
  u.provenance = detail::required_enum<Provenance>(j, "provenance", parse_provenance, line);
  if (j.contains("gender")) u.gender = detail::required_enum<Gender>(j, "gender", parse_gender, line);
  if (j.contains("filter_wer")) {
    if (!j["filter_wer"].is_number()) throw ManifestError(line, "field 'filter_wer' must be a number");
    u.filter_wer = j["filter_wer"].get<double>();
  }
  return u;
}

/// Checks record-level and cross-record invariants; `lines[i]` is the source
/// line of record i (0 when records were built in memory).
inline void validate_manifest(const Manifest& m, const std::vector<std::size_t>& lines = {}) {
  auto line_of = [&](std::size_t i) { return i < lines.size() ? lines[i] : std::size_t{0}; };
  std::unordered_set<std::string> seen;
  std::optional<int> rate = m.sample_rate();
  for (std::size_t i = 0; i < m.records.size(); ++i) {
    const auto& u = m.records[i];
    if (!seen.insert(u.id).second) throw ManifestError(line_of(i), "duplicate id '" + u.id + "'");
    if ((u.split == Split::train || u.split == Split::dev) && u.transcript.empty()) {
      throw ManifestError(line_of(i), "empty transcript on " + std::string(to_string(u.split)) + " record '" + u.id + "'");
    }
    if (u.filter_wer && u.provenance != Provenance::synthetic) {
      throw ManifestError(line_of(i), "filter_wer on non-synthetic record '" + u.id + "'");
    }
    if (const auto* w = std::get_if<Waveform>(&u.audio)) {
      if (!rate) rate = w->sample_rate;
      if (w->sample_rate != *rate) {
        throw ManifestError(line_of(i), "sample rate " + std::to_string(w->sample_rate) + " differs from manifest rate " +
                                            std::to_string(*rate));
      }
    }
  }
}

inline Manifest read_manifest(std::istream& is, const ManifestLoadOptions& opts = {}) {
  Manifest m;
  std::vector<std::size_t> lines;
  std::string text;
  std::size_t line = 0;
  while (std::getline(is, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    ordered_json j;
    try {
      j = ordered_json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
      throw ManifestError(line, std::string("parse error: ") + e.what());
    }
    if (j.is_object() && j.size() == 1 && j.contains(std::string(kManifestMetaKey))) {
      if (!m.records.empty()) throw ManifestError(line, "metadata record must precede utterances");
      m.metadata = j[std::string(kManifestMetaKey)];
      if (!m.metadata.is_object()) throw ManifestError(line, "metadata must be an object");
      continue;
    }
    m.records.push_back(utterance_from_json(j, line, opts));
    lines.push_back(line);
  }
  validate_manifest(m, lines);
  return m;
}

inline Manifest load_manifest(const std::filesystem::path& path, const ManifestLoadOptions& opts = {}) {
  std::ifstream is(path);
  if (!is) throw ManifestError(0, "cannot open manifest: " + path.string());
  Manifest m = read_manifest(is, opts);
  m.base_dir = path.parent_path();
  return m;
}

inline void write_manifest(std::ostream& os, const Manifest& m) {
  if (!m.metadata.empty()) {
    ordered_json meta = ordered_json::object();
    meta[std::string(kManifestMetaKey)] = m.metadata;
    os << meta.dump() << "\n";
  }
  for (const auto& u : m.records) os << utterance_to_json(u).dump() << "\n";
}

inline void save_manifest(const std::filesystem::path& path, const Manifest& m) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for writing: " + path.string());
  write_manifest(os, m);
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

/// Loads (or returns) the waveform of `u`.
inline Waveform load_audio(const Utterance& u, const Manifest& m) {
  if (const auto* w = std::get_if<Waveform>(&u.audio)) return *w;
  std::filesystem::path p = std::get<std::string>(u.audio);
  if (p.is_relative()) p = m.base_dir / p;
  Waveform w = read_wav(p);
  if (auto rate = m.sample_rate(); rate && *rate != w.sample_rate) {
    throw ManifestError(0, "audio " + p.string() + " has sample rate " + std::to_string(w.sample_rate) +
                               ", manifest declares " + std::to_string(*rate));
  }
  return w;
}

inline Manifest filter_split(const Manifest& m, Split s) {
  Manifest out;
  out.metadata = m.metadata;
  out.base_dir = m.base_dir;
  for (const auto& r : m.records) {
    if (r.split == s) out.records.push_back(r);
  }
  return out;
}

enum class DevStratification { by_utterance, by_speaker };

/// Seeded subset of the dev split.
///
/// by_utterance draws ceil(fraction * |dev|) records. by_speaker draws
/// ceil(fraction * |dev speakers|) speakers and keeps all of their dev records.
/// Selected records keep their manifest order.
inline Manifest subsample_dev(const Manifest& m, double fraction, std::uint64_t seed,
                              DevStratification mode = DevStratification::by_utterance) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw std::invalid_argument("subsample_dev: fraction must be in (0, 1]");
  std::vector<std::size_t> dev;
  for (std::size_t i = 0; i < m.records.size(); ++i) {
    if (m.records[i].split == Split::dev) dev.push_back(i);
  }
  if (dev.empty()) throw std::invalid_argument("subsample_dev: manifest has no dev records");
  Rng rng(seed);
  std::vector<bool> keep(m.records.size(), false);
  if (mode == DevStratification::by_utterance) {
    const auto k = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(dev.size()) - 1e-9));
    for (std::size_t j : rng.sample_without_replacement(dev.size(), k)) keep[dev[j]] = true;
  } else {
    std::vector<std::string> speakers;
    std::set<std::string> seen;
    for (std::size_t i : dev) {
      if (seen.insert(m.records[i].speaker_id).second) speakers.push_back(m.records[i].speaker_id);
    }
    const auto k = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(speakers.size()) - 1e-9));
    std::set<std::string> chosen;
    for (std::size_t j : rng.sample_without_replacement(speakers.size(), k)) chosen.insert(speakers[j]);
    for (std::size_t i : dev) keep[i] = chosen.count(m.records[i].speaker_id) != 0;
  }
  Manifest out;
  out.metadata = m.metadata;
  out.base_dir = m.base_dir;
  for (std::size_t i = 0; i < m.records.size(); ++i) {
    if (keep[i]) out.records.push_back(m.records[i]);
  }
  return out;
}

/// All real train records followed by round(ratio * |real train|) synthetic
/// records drawn without replacement from the synthetic pool. round() is
/// half-away-from-zero.
inline Manifest mix_synthetic(const Manifest& real, const Manifest& synthetic, double ratio, std::uint64_t seed) {
  if (!(ratio >= 0.0 && ratio <= 1.0)) throw std::invalid_argument("mix_synthetic: ratio must be in [0, 1]");
  Manifest out;
  out.metadata = real.metadata;
  out.base_dir = real.base_dir;
  for (const auto& r : real.records) {
    if (r.split == Split::train) out.records.push_back(r);
  }
  const auto n_real = out.records.size();
  const auto want = static_cast<std::size_t>(std::round(ratio * static_cast<double>(n_real)));
  if (want > synthetic.records.size()) {
    throw std::invalid_argument("mix_synthetic: synthetic pool has " + std::to_string(synthetic.records.size()) +
                                " records, " + std::to_string(want) + " required");
  }
  Rng rng(seed);
  std::unordered_set<std::string> ids;
  for (const auto& r : out.records) ids.insert(r.id);
  for (std::size_t j : rng.sample_without_replacement(synthetic.records.size(), want)) {
    Utterance u = synthetic.records[j];
    if (!ids.insert(u.id).second) throw std::invalid_argument("mix_synthetic: id collision on '" + u.id + "'");
    // Relative audio paths must stay resolvable from the real manifest's directory.
    if (auto* p = std::get_if<std::string>(&u.audio);
        p != nullptr && std::filesystem::path(*p).is_relative() && synthetic.base_dir != real.base_dir) {
      *p = std::filesystem::absolute(synthetic.base_dir / *p).lexically_normal().string();
    }
    out.records.push_back(std::move(u));
  }
  return out;
}

}  // namespace pasr
