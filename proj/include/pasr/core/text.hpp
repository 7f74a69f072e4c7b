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

#include <string>
#include <string_view>
#include <vector>

namespace pasr {

namespace detail {
// Bytes >= 0x80 (UTF-8 sequences) count as word characters.
inline bool is_word_byte(unsigned char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c >= 0x80;
}
}  // namespace detail

/// Lowercases ASCII, replaces punctuation with spaces (an apostrophe survives
/// only between two word characters), collapses whitespace and splits.
/// normalize_text(join(normalize_text(s))) == normalize_text(s).
inline std::vector<std::string> normalize_text(std::string_view raw) {
  std::string cleaned;
  cleaned.reserve(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const auto c = static_cast<unsigned char>(raw[i]);
    if (detail::is_word_byte(c)) {
      cleaned.push_back(c >= 'A' && c <= 'Z' ? static_cast<char>(c - 'A' + 'a') : static_cast<char>(c));
    } else if (c == '\'' && i > 0 && i + 1 < raw.size() &&
               detail::is_word_byte(static_cast<unsigned char>(raw[i - 1])) &&
               detail::is_word_byte(static_cast<unsigned char>(raw[i + 1]))) {
      cleaned.push_back('\'');
    } else {
      cleaned.push_back(' ');
    }
  }
  std::vector<std::string> tokens;
  std::string cur;
  for (char c : cleaned) {
    if (c == ' ') {
      if (!cur.empty()) tokens.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

inline std::string join_tokens(const std::vector<std::string>& tokens, std::string_view sep = " ") {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i > 0) out += sep;
    out += tokens[i];
  }
  return out;
}

inline std::string normalized_string(std::string_view raw) { return join_tokens(normalize_text(raw)); }

}  // namespace pasr
