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

#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

namespace pasr {

struct BackboneConfig {
  /// Feature bins F expected at the encoder input.
  int input_dim = 80;
  /// Model width b.
  int width = 64;
  int encoder_layers = 2;
  int decoder_layers = 2;
  int heads = 4;
  int ffn_dim = 128;
  int vocab_size = 64;
  int bos_id = 1;
  int eos_id = 2;
  int pad_id = 0;
  /// Decoder positions available, BOS included.
  int max_decode_len = 32;
  /// Cross-attention skips memory rows whose L2 norm is exactly zero.
  bool mask_zero_memory_rows = true;

  std::vector<std::string> violations() const {
    std::vector<std::string> v;
    if (input_dim < 1) v.emplace_back("backbone.input_dim must be >= 1");
    if (width < 1) v.emplace_back("backbone.width must be >= 1");
    if (heads < 1) v.emplace_back("backbone.heads must be >= 1");
    if (heads >= 1 && width % heads != 0) v.emplace_back("backbone.width must be divisible by backbone.heads");
    if (encoder_layers < 0 || decoder_layers < 0) v.emplace_back("backbone layer counts must be >= 0");
    if (ffn_dim < 1) v.emplace_back("backbone.ffn_dim must be >= 1");
    if (max_decode_len < 2) v.emplace_back("backbone.max_decode_len must be >= 2");
    for (int id : {bos_id, eos_id, pad_id}) {
      if (id < 0 || id >= vocab_size) v.emplace_back("backbone special token id out of vocabulary range");
    }
    if (bos_id == eos_id || bos_id == pad_id || eos_id == pad_id) {
      v.emplace_back("backbone special token ids must be distinct");
    }
    return v;
  }

  void validate() const {
    auto v = violations();
    if (!v.empty()) throw std::invalid_argument(v.front());
  }

  bool operator==(const BackboneConfig&) const = default;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(BackboneConfig, input_dim, width, encoder_layers, decoder_layers,
                                                heads, ffn_dim, vocab_size, bos_id, eos_id, pad_id, max_decode_len,
                                                mask_zero_memory_rows)

}  // namespace pasr
