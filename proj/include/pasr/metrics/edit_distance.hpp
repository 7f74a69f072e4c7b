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
#include <cmath>
#include <cstdio>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace pasr {

struct EditCounts {
  long substitutions = 0;
  long deletions = 0;
  long insertions = 0;
  long reference_length = 0;

  long errors() const { return substitutions + deletions + insertions; }

  EditCounts& operator+=(const EditCounts& o) {
    substitutions += o.substitutions;
    deletions += o.deletions;
    insertions += o.insertions;
    reference_length += o.reference_length;
    return *this;
  }
  friend EditCounts operator+(EditCounts a, const EditCounts& b) { return a += b; }
  bool operator==(const EditCounts&) const = default;
};

/// Minimal unit-cost alignment of `hyp` against `ref`. Among equal-cost
/// alignments the one with the most substitutions wins, which also fixes the
/// insertion and deletion counts.
template <typename T>
EditCounts edit_counts(std::span<const T> ref, std::span<const T> hyp) {
  const std::size_t n = ref.size();
  const std::size_t m = hyp.size();
  auto better = [](const EditCounts& a, const EditCounts& b) {
    if (a.errors() != b.errors()) return a.errors() < b.errors();
    return a.substitutions > b.substitutions;
  };
  std::vector<EditCounts> prev(m + 1), cur(m + 1);
  for (std::size_t j = 0; j <= m; ++j) prev[j].insertions = static_cast<long>(j);
  for (std::size_t i = 1; i <= n; ++i) {
    cur[0] = EditCounts{};
    cur[0].deletions = static_cast<long>(i);
    for (std::size_t j = 1; j <= m; ++j) {
      EditCounts best = prev[j - 1];
      best.substitutions += ref[i - 1] == hyp[j - 1] ? 0 : 1;
      EditCounts ins = cur[j - 1];
      ++ins.insertions;
      if (better(ins, best)) best = ins;
      EditCounts del = prev[j];
      ++del.deletions;
      if (better(del, best)) best = del;
      cur[j] = best;
    }
    std::swap(prev, cur);
  }
  EditCounts c = prev[m];
  c.reference_length = static_cast<long>(n);
  return c;
}

template <typename T>
EditCounts edit_counts(const std::vector<T>& ref, const std::vector<T>& hyp) {
  return edit_counts(std::span<const T>(ref), std::span<const T>(hyp));
}

/// 100 * (S + D + I) / N_ref.
inline double wer(const EditCounts& c) {
  if (c.reference_length <= 0) throw std::invalid_argument("wer: zero reference length");
  return 100.0 * static_cast<double>(c.errors()) / static_cast<double>(c.reference_length);
}

/// WER of pooled counts (not the mean of per-utterance WERs).
inline double wer(std::span<const EditCounts> counts) {
  EditCounts total;
  for (const auto& c : counts) total += c;
  return wer(total);
}

/// Two-decimal rendering used in reports.
inline std::string format_percent(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

}  // namespace pasr
