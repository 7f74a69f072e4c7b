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
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "pasr/core/text.hpp"
#include "pasr/manifests/manifest.hpp"
#include "pasr/metrics/edit_distance.hpp"
#include "pasr/metrics/semscore.hpp"

namespace pasr {

struct HypothesisResult {
  Utterance utterance;
  std::string hypothesis;
};

struct Hypothesis {
  std::string id;
  std::string text;
};

inline std::vector<Hypothesis> read_hypotheses(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open hypotheses: " + path.string());
  std::vector<Hypothesis> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(is, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      auto j = nlohmann::json::parse(line);
      out.push_back({j.at("id").get<std::string>(), j.at("text").get<std::string>()});
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error(path.string() + " line " + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

inline void write_hypotheses(const std::filesystem::path& path, const std::vector<Hypothesis>& hyps) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for writing: " + path.string());
  for (const auto& h : hyps) os << nlohmann::ordered_json{{"id", h.id}, {"text", h.text}}.dump() << "\n";
}

/// Pairs every manifest record with its hypothesis by id; a record without a
/// hypothesis is an error.
inline std::vector<HypothesisResult> join_hypotheses(const Manifest& m, const std::vector<Hypothesis>& hyps) {
  std::unordered_map<std::string, const std::string*> by_id;
  for (const auto& h : hyps) {
    if (!by_id.emplace(h.id, &h.text).second) throw std::invalid_argument("duplicate hypothesis id '" + h.id + "'");
  }
  std::vector<HypothesisResult> out;
  out.reserve(m.records.size());
  for (const auto& u : m.records) {
    auto it = by_id.find(u.id);
    if (it == by_id.end()) throw std::invalid_argument("no hypothesis for utterance '" + u.id + "'");
    out.push_back({u, *it->second});
  }
  return out;
}

inline EditCounts utterance_counts(std::string_view reference, std::string_view hypothesis) {
  return edit_counts(normalize_text(reference), normalize_text(hypothesis));
}

struct ReportRow {
  std::string label;
  EditCounts counts;
  double semscore_sum = 0.0;
  long utterances = 0;

  /// NaN when the pooled reference is empty.
  double wer_percent() const {
    return counts.reference_length > 0 ? wer(counts) : std::numeric_limits<double>::quiet_NaN();
  }
  double mean_semscore() const {
    return utterances > 0 ? semscore_sum / static_cast<double>(utterances) : std::numeric_limits<double>::quiet_NaN();
  }
};

struct ScoreReport {
  ReportRow overall{"overall", {}, 0.0, 0};
  /// Non-empty etiology groups in enum order.
  std::vector<ReportRow> etiologies;

  nlohmann::ordered_json to_json() const {
    auto row = [](const ReportRow& r) {
      nlohmann::ordered_json j;
      const double w = r.wer_percent();
      const double s = r.mean_semscore();
      j["wer"] = std::isfinite(w) ? nlohmann::ordered_json(w) : nlohmann::ordered_json(nullptr);
      j["semscore"] = std::isfinite(s) ? nlohmann::ordered_json(s) : nlohmann::ordered_json(nullptr);
      j["utterances"] = r.utterances;
      j["reference_tokens"] = r.counts.reference_length;
      j["substitutions"] = r.counts.substitutions;
      j["deletions"] = r.counts.deletions;
      j["insertions"] = r.counts.insertions;
      return j;
    };
    nlohmann::ordered_json j;
    j["overall"] = row(overall);
    j["etiologies"] = nlohmann::ordered_json::array();
    for (const auto& r : etiologies) {
      auto e = row(r);
      e["etiology"] = r.label;
      j["etiologies"].push_back(std::move(e));
    }
    return j;
  }

  std::string to_table() const {
    auto num = [](double v) { return std::isfinite(v) ? format_percent(v) : std::string("n/a"); };
    std::vector<std::array<std::string, 5>> cells;
    cells.push_back({"etiology", "WER", "SemScore", "utterances", "ref tokens"});
    auto add = [&](const ReportRow& r) {
      cells.push_back({r.label, num(r.wer_percent()), num(r.mean_semscore()), std::to_string(r.utterances),
                       std::to_string(r.counts.reference_length)});
    };
    for (const auto& r : etiologies) add(r);
    add(overall);
    std::array<std::size_t, 5> width{};
    for (const auto& row : cells) {
      for (std::size_t c = 0; c < 5; ++c) width[c] = std::max(width[c], row[c].size());
    }
    std::ostringstream os;
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i == cells.size() - 1) {
        std::size_t total = 0;
        for (auto w : width) total += w + 2;
        os << std::string(total - 2, '-') << "\n";
      }
      for (std::size_t c = 0; c < 5; ++c) {
        if (c == 0) {
          os << std::left << std::setw(static_cast<int>(width[c])) << cells[i][c];
        } else {
          os << "  " << std::right << std::setw(static_cast<int>(width[c])) << cells[i][c];
        }
      }
      os << "\n";
    }
    return os.str();
  }
};

/// Pooled WER and mean SemScore overall and per etiology.
inline ScoreReport report(const std::vector<HypothesisResult>& results, const SemScoreWeights& weights,
                          SemScoreClients& clients) {
  weights.validate();
  ScoreReport rep;
  std::map<Etiology, ReportRow> groups;
  for (const auto& r : results) {
    const EditCounts c = utterance_counts(r.utterance.transcript, r.hypothesis);
    const double s = semscore(r.utterance.transcript, r.hypothesis, clients, weights);
    for (ReportRow* row : {&rep.overall, &groups[r.utterance.etiology]}) {
      row->counts += c;
      row->semscore_sum += s;
      row->utterances += 1;
    }
  }
  for (auto& [e, row] : groups) {
    row.label = std::string(to_string(e));
    rep.etiologies.push_back(row);
  }
  return rep;
}

}  // namespace pasr
