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

// Checkpoint container, version 1. All integers little-endian.
//
//   bytes 0..7   magic "PASRCKPT"
//   u32          format version (1)
//   u64          header length H
//   H bytes      UTF-8 JSON header:
//                  {"kind": "model" | "adapter",
//                   "backbone": BackboneConfig,
//                   "vocabulary": [...],
//                   "adapter_spec": AdapterSpec | null,
//                   "merged": bool,
//                   "conditioning_sources": [...],
//                   "mapping_dropout": p}
//   u64          tensor count
//   per tensor:  u32 name length, name bytes, u8 trainable flag,
//                u64 rows, u64 cols, rows*cols IEEE-754 binary64 row-major
//
// An "adapter" checkpoint carries only adapter.* and mapping.* tensors and
// is applied onto a model whose backbone config matches.

#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "pasr/adapters/adapters.hpp"
#include "pasr/backbone/model.hpp"

namespace pasr {

inline constexpr char kCheckpointMagic[8] = {'P', 'A', 'S', 'R', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

template <typename T>
void put_le(std::ostream& os, T v) {
  static_assert(std::is_integral_v<T>);
  unsigned char b[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i) b[i] = static_cast<unsigned char>(static_cast<std::uint64_t>(v) >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), sizeof(T));
}

template <typename T>
T get_le(std::istream& is) {
  unsigned char b[sizeof(T)];
  if (!is.read(reinterpret_cast<char*>(b), sizeof(T))) throw CheckpointError("truncated checkpoint");
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return static_cast<T>(v);
}

inline void put_f64(std::ostream& os, double d) {
  std::uint64_t u;
  std::memcpy(&u, &d, 8);
  put_le(os, u);
}

inline double get_f64(std::istream& is) {
  const auto u = get_le<std::uint64_t>(is);
  double d;
  std::memcpy(&d, &u, 8);
  return d;
}

inline nlohmann::json checkpoint_header(const Model& m, const char* kind) {
  return nlohmann::json{{"kind", kind},
                        {"backbone", m.config},
                        {"vocabulary", m.tokenizer.words()},
                        {"adapter_spec", m.adapter_spec},
                        {"merged", m.merged},
                        {"conditioning_sources", m.conditioning_sources},
                        {"mapping_dropout", m.mapping_dropout}};
}

inline void write_container(std::ostream& os, const nlohmann::json& header, const std::vector<const Parameter*>& tensors) {
  os.write(kCheckpointMagic, 8);
  put_le<std::uint32_t>(os, kCheckpointVersion);
  const std::string h = header.dump();
  put_le<std::uint64_t>(os, h.size());
  os.write(h.data(), static_cast<std::streamsize>(h.size()));
  put_le<std::uint64_t>(os, tensors.size());
  for (const Parameter* p : tensors) {
    put_le<std::uint32_t>(os, static_cast<std::uint32_t>(p->name.size()));
    os.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
    put_le<std::uint8_t>(os, p->trainable ? 1 : 0);
    put_le<std::uint64_t>(os, static_cast<std::uint64_t>(p->value.rows()));
    put_le<std::uint64_t>(os, static_cast<std::uint64_t>(p->value.cols()));
    for (Eigen::Index r = 0; r < p->value.rows(); ++r) {
      for (Eigen::Index c = 0; c < p->value.cols(); ++c) put_f64(os, p->value(r, c));
    }
  }
}

struct Container {
  nlohmann::json header;
  std::vector<Parameter> tensors;
};

inline Container read_container(std::istream& is) {
  char magic[8];
  if (!is.read(magic, 8) || std::memcmp(magic, kCheckpointMagic, 8) != 0) throw CheckpointError("not a pasr checkpoint");
  const auto version = get_le<std::uint32_t>(is);
  if (version != kCheckpointVersion) throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  const auto hlen = get_le<std::uint64_t>(is);
  std::string h(hlen, '\0');
  if (!is.read(h.data(), static_cast<std::streamsize>(hlen))) throw CheckpointError("truncated checkpoint header");
  Container c;
  c.header = nlohmann::json::parse(h);
  const auto count = get_le<std::uint64_t>(is);
  for (std::uint64_t i = 0; i < count; ++i) {
    Parameter p;
    const auto nlen = get_le<std::uint32_t>(is);
    p.name.resize(nlen);
    if (!is.read(p.name.data(), nlen)) throw CheckpointError("truncated tensor name");
    p.trainable = get_le<std::uint8_t>(is) != 0;
    const auto rows = get_le<std::uint64_t>(is);
    const auto cols = get_le<std::uint64_t>(is);
    p.value.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index r = 0; r < p.value.rows(); ++r) {
      for (Eigen::Index cc = 0; cc < p.value.cols(); ++cc) p.value(r, cc) = get_f64(is);
    }
    c.tensors.push_back(std::move(p));
  }
  return c;
}

}  // namespace detail

inline void save_checkpoint(const std::filesystem::path& path, const Model& m) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw CheckpointError("cannot open for writing: " + path.string());
  std::vector<const Parameter*> all;
  for (const auto& p : m.params) all.push_back(&p);
  detail::write_container(os, detail::checkpoint_header(m, "model"), all);
  if (!os) throw CheckpointError("write failed: " + path.string());
}

inline Model load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("cannot open checkpoint: " + path.string());
  auto c = detail::read_container(is);
  if (c.header.value("kind", "") != "model") throw CheckpointError(path.string() + " is not a full model checkpoint");
  Model m;
  m.config = c.header.at("backbone").get<BackboneConfig>();
  m.tokenizer = WordTokenizer(c.header.at("vocabulary").get<std::vector<std::string>>());
  m.adapter_spec = c.header.at("adapter_spec");
  m.merged = c.header.value("merged", false);
  m.conditioning_sources = c.header.value("conditioning_sources", std::vector<std::string>{});
  m.mapping_dropout = c.header.value("mapping_dropout", 0.1);
  for (auto& p : c.tensors) m.params.add(p.name, std::move(p.value), p.trainable);
  attach_adapter_hooks(m);
  return m;
}

/// Writes only adapter factors/state and mapping networks.
inline void save_adapter_checkpoint(const std::filesystem::path& path, const Model& m) {
  if (m.adapter_spec.is_null()) throw CheckpointError("model has no adapters to save");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw CheckpointError("cannot open for writing: " + path.string());
  std::vector<const Parameter*> sel;
  for (const auto& p : m.params) {
    if (is_adapter_param(p.name) || is_mapping_param(p.name)) sel.push_back(&p);
  }
  detail::write_container(os, detail::checkpoint_header(m, "adapter"), sel);
  if (!os) throw CheckpointError("write failed: " + path.string());
}

/// Applies an adapter checkpoint onto a base model with the same backbone.
inline Model apply_adapter_checkpoint(const Model& base, const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("cannot open checkpoint: " + path.string());
  auto c = detail::read_container(is);
  if (c.header.value("kind", "") != "adapter") throw CheckpointError(path.string() + " is not an adapter checkpoint");
  if (c.header.at("backbone").get<BackboneConfig>() != base.config) {
    throw CheckpointError("adapter checkpoint was trained on a different backbone configuration");
  }
  if (!base.adapter_spec.is_null() || base.merged) throw CheckpointError("base model already carries adapters");
  Model m = base;
  const AdapterSpec spec = c.header.at("adapter_spec").get<AdapterSpec>();
  for (auto& p : m.params) p.trainable = is_mapping_param(p.name) || spec.method == AdapterMethod::fft;
  for (auto& p : c.tensors) {
    if (m.params.contains(p.name)) {
      auto& dst = m.params.at(p.name);
      if (dst.value.rows() != p.value.rows() || dst.value.cols() != p.value.cols()) {
        throw CheckpointError("shape mismatch for " + p.name);
      }
      dst.value = p.value;
      dst.trainable = p.trainable;
    } else {
      m.params.add(p.name, std::move(p.value), p.trainable);
    }
  }
  m.adapter_spec = spec;
  m.conditioning_sources = c.header.value("conditioning_sources", std::vector<std::string>{});
  m.mapping_dropout = c.header.value("mapping_dropout", 0.1);
  attach_adapter_hooks(m);
  return m;
}

}  // namespace pasr
