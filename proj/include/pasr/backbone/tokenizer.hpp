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

#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "pasr/core/text.hpp"

namespace pasr {

/// Word-level vocabulary over normalized text. Ids 0..3 are PAD, BOS, EOS, UNK.
class WordTokenizer {
 public:
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kUnk = 3;

  WordTokenizer() : words_{"<pad>", "<bos>", "<eos>", "<unk>"} { rebuild_index(); }

  explicit WordTokenizer(std::vector<std::string> words) : words_(std::move(words)) {
    if (words_.size() < 4) throw std::invalid_argument("tokenizer vocabulary lacks special tokens");
    rebuild_index();
  }

  /// Vocabulary from the sorted set of normalized words in `texts`.
  template <typename Range>
  static WordTokenizer build(const Range& texts) {
    std::set<std::string> uniq;
    for (const auto& t : texts) {
      for (auto& w : normalize_text(t)) uniq.insert(std::move(w));
    }
    WordTokenizer tok;
    for (const auto& w : uniq) tok.words_.push_back(w);
    tok.rebuild_index();
    return tok;
  }

  int size() const { return static_cast<int>(words_.size()); }
  const std::vector<std::string>& words() const { return words_; }

  /// BOS w_1 .. w_n EOS
  std::vector<int> encode(std::string_view text) const {
    std::vector<int> ids{kBos};
    for (const auto& w : normalize_text(text)) {
      auto it = index_.find(w);
      ids.push_back(it == index_.end() ? kUnk : it->second);
    }
    ids.push_back(kEos);
    return ids;
  }

  /// Joins word ids with spaces; special ids are skipped.
  std::string decode(const std::vector<int>& ids) const {
    std::string out;
    for (int id : ids) {
      if (id == kPad || id == kBos || id == kEos) continue;
      if (id < 0 || id >= size()) throw std::out_of_range("token id out of range");
      if (!out.empty()) out += ' ';
      out += words_[static_cast<std::size_t>(id)];
    }
    return out;
  }

 private:
  void rebuild_index() {
    index_.clear();
    for (std::size_t i = 0; i < words_.size(); ++i) index_.emplace(words_[i], static_cast<int>(i));
  }

  std::vector<std::string> words_;
  std::map<std::string, int, std::less<>> index_;
};

}  // namespace pasr
