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

// Personalization by pooled audio embeddings.
//
// Each registered source yields a U x a frame matrix for an utterance; the
// frames are averaged into one a-vector, projected to the model width b by
// a two-layer tanh network, and the projected vectors are prepended (in
// registry order, without positional encoding) to the encoder memory that
// the decoder cross-attends over.

#pragma once

#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "pasr/backbone/model.hpp"
#include "pasr/core/audio.hpp"
#include "pasr/core/autodiff.hpp"
#include "pasr/core/client.hpp"
#include "pasr/core/rng.hpp"
#include "pasr/frontend/features.hpp"

namespace pasr {

struct AudioEmbedding {
  Eigen::VectorXd vector;
  std::string source;
};

/// e' = W2 tanh(W1 e + b1) + b2, with dropout on the hidden activation.
struct MappingNetwork {
  Matrix w1;  // h x a
  Matrix b1;  // 1 x h
  Matrix w2;  // b x h
  Matrix b2;  // 1 x b
  double dropout_p = 0.1;

  int input_dim() const { return static_cast<int>(w1.cols()); }
  int hidden_dim() const { return static_cast<int>(w1.rows()); }
  int output_dim() const { return static_cast<int>(w2.rows()); }

  static MappingNetwork random(int a, int h, int b, Rng& rng, double dropout_p = 0.1) {
    MappingNetwork n;
    n.w1 = detail::init_weight(rng, h, a);
    n.b1 = Matrix::Zero(1, h);
    n.w2 = detail::init_weight(rng, b, h);
    n.b2 = Matrix::Zero(1, b);
    n.dropout_p = dropout_p;
    return n;
  }
};

/// Arithmetic mean of the rows of a U x a matrix.
inline AudioEmbedding pool_embedding(const Matrix& frames, std::string source = {}) {
  if (frames.rows() == 0) throw std::invalid_argument("pool_embedding: no frames");
  if (!frames.allFinite()) throw std::invalid_argument("pool_embedding: non-finite frame values");
  return AudioEmbedding{frames.colwise().mean().transpose(), std::move(source)};
}

/// Graph form of the mapping network on a 1 x a row. Dropout (inverted,
/// scaled by 1/(1-p)) is applied to the hidden activation when training.
inline Var map_embedding_graph(Var e, Var w1, Var b1, Var w2, Var b2, double dropout_p, const ForwardContext& ctx) {
  if (e.cols() != w1.cols()) {
    throw std::invalid_argument("map_embedding: embedding length " + std::to_string(e.cols()) +
                                " != network input " + std::to_string(w1.cols()));
  }
  Var hidden = ops::tanh(ops::add_row(ops::matmul_nt(e, w1), b1));
  if (ctx.training && dropout_p > 0.0) {
    if (ctx.rng == nullptr) throw std::invalid_argument("map_embedding: training dropout needs an rng");
    Matrix mask(hidden.rows(), hidden.cols());
    for (Eigen::Index i = 0; i < mask.size(); ++i) {
      mask.data()[i] = ctx.rng->bernoulli(dropout_p) ? 0.0 : 1.0 / (1.0 - dropout_p);
    }
    hidden = ops::mul(hidden, e.tape->constant(std::move(mask)));
  }
  return ops::add_row(ops::matmul_nt(hidden, w2), b2);
}

/// Projects `e` into the model width. Deterministic when not training, and
/// deterministic under a fixed `rng` seed when training.
inline Eigen::VectorXd map_embedding(const AudioEmbedding& e, const MappingNetwork& net, bool training,
                                     Rng* rng = nullptr) {
  if (e.vector.size() != net.input_dim()) {
    throw std::invalid_argument("map_embedding: embedding length " + std::to_string(e.vector.size()) +
                                " != network input " + std::to_string(net.input_dim()));
  }
  Tape t(false);
  Var out = map_embedding_graph(t.constant(e.vector.transpose()), t.constant(net.w1), t.constant(net.b1),
                                t.constant(net.w2), t.constant(net.b2), net.dropout_p,
                                ForwardContext{training, rng});
  return out.value().row(0).transpose();
}

/// Prepends the mapped vectors (in order) to the memory rows.
inline LatentSequence condition(const LatentSequence& memory, std::span<const Eigen::VectorXd> mapped) {
  for (const auto& v : mapped) {
    if (v.size() != memory.width()) {
      throw std::invalid_argument("condition: mapped width " + std::to_string(v.size()) + " != memory width " +
                                  std::to_string(memory.width()));
    }
  }
  LatentSequence out;
  const auto n = static_cast<Eigen::Index>(mapped.size());
  out.vectors.resize(n + memory.length(), memory.width());
  for (Eigen::Index i = 0; i < n; ++i) out.vectors.row(i) = mapped[static_cast<std::size_t>(i)].transpose();
  out.vectors.bottomRows(memory.length()) = memory.vectors;
  return out;
}

inline Var condition_graph(Var memory, std::span<const Var> mapped) {
  if (mapped.empty()) return memory;
  std::vector<Var> parts(mapped.begin(), mapped.end());
  for (const Var& v : parts) {
    if (v.rows() != 1 || v.cols() != memory.cols()) throw std::invalid_argument("condition: width mismatch");
  }
  parts.push_back(memory);
  return ops::concat_rows(parts);
}

// ---------------------------------------------------------------------------
// Extractor clients

/// Source of per-utterance embedding frames (U x a).
class EmbeddingExtractor {
 public:
  virtual ~EmbeddingExtractor() = default;
  virtual const std::string& source() const = 0;
  virtual int dimension() const = 0;
  virtual Matrix extract_frames(const Waveform& wav) = 0;
  virtual bool concurrent_safe() const { return true; }
};

/// Returns a fixed vector as a single frame.
class FixedVectorExtractor final : public EmbeddingExtractor {
 public:
  FixedVectorExtractor(std::string source, Eigen::VectorXd v, int declared_dim = -1)
      : source_(std::move(source)), v_(std::move(v)), dim_(declared_dim < 0 ? static_cast<int>(v_.size()) : declared_dim) {}
  const std::string& source() const override { return source_; }
  int dimension() const override { return dim_; }
  Matrix extract_frames(const Waveform&) override { return v_.transpose(); }

 private:
  std::string source_;
  Eigen::VectorXd v_;
  int dim_;
};

/// Deterministic stand-in for a speaker-vector model: coarse log-Mel band
/// energies, one frame per 25 ms window with a 10 ms hop.
class BandEnergyExtractor final : public EmbeddingExtractor {
 public:
  BandEnergyExtractor(std::string source, int dim, int sample_rate = 16000) : source_(std::move(source)) {
    cfg_.n_mels = dim;
    cfg_.sample_rate = sample_rate;
    cfg_.normalize = false;
  }
  const std::string& source() const override { return source_; }
  int dimension() const override { return cfg_.n_mels; }
  Matrix extract_frames(const Waveform& wav) override {
    Matrix f = log_mel(wav, cfg_).frames;
    // Bring log energies into a tanh-friendly range.
    return f / 10.0;
  }

 private:
  std::string source_;
  FrontendConfig cfg_;
};

/// Delegates to a ModelClient: {"task":"embed","source","sample_rate","samples"}
/// plus any `extra` fields (e.g. "layer") -> {"frames": [[...], ...]} or
/// {"vector": [...]}.
class ClientExtractor final : public EmbeddingExtractor {
 public:
  ClientExtractor(std::string source, int dim, std::shared_ptr<ModelClient> client, json extra = json::object())
      : source_(std::move(source)), dim_(dim), client_(std::move(client)), extra_(std::move(extra)) {}
  const std::string& source() const override { return source_; }
  int dimension() const override { return dim_; }
  bool concurrent_safe() const override { return client_->concurrent_safe(); }
  Matrix extract_frames(const Waveform& wav) override {
    json req = {{"task", "embed"}, {"source", source_}, {"sample_rate", wav.sample_rate}, {"samples", wav.samples}};
    for (auto it = extra_.begin(); it != extra_.end(); ++it) req[it.key()] = it.value();
    json resp = client_->call(req);
    std::vector<std::vector<double>> rows;
    if (resp.contains("frames")) {
      rows = resp["frames"].get<std::vector<std::vector<double>>>();
    } else if (resp.contains("vector")) {
      rows.push_back(resp["vector"].get<std::vector<double>>());
    } else {
      throw ClientError("embedding client for '" + source_ + "' returned neither frames nor vector");
    }
    if (rows.empty()) return Matrix(0, dim_);
    Matrix out(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows[0].size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i].size() != rows[0].size()) throw ClientError("embedding client returned ragged frames");
      for (std::size_t j = 0; j < rows[i].size(); ++j) out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    }
    return out;
  }

 private:
  std::string source_;
  int dim_;
  std::shared_ptr<ModelClient> client_;
  json extra_;
};

/// Runs the extractor, checks its declared dimension, and pools the frames.
inline AudioEmbedding extract_embedding(EmbeddingExtractor& client, const Waveform& wav) {
  Matrix frames = client.extract_frames(wav);
  if (frames.cols() != client.dimension()) {
    throw std::invalid_argument("extractor '" + client.source() + "' declared dimension " +
                                std::to_string(client.dimension()) + " but returned " + std::to_string(frames.cols()) +
                                " values");
  }
  return pool_embedding(frames, client.source());
}

struct RegistryEntry {
  std::string source;
  std::shared_ptr<EmbeddingExtractor> extractor;
  int dim = 0;
  int hidden = 0;
};

/// Ordered embedding sources; the order fixes the concatenation order.
class EmbeddingProviderRegistry {
 public:
  void add(std::shared_ptr<EmbeddingExtractor> extractor, int hidden = 0) {
    RegistryEntry e;
    e.source = extractor->source();
    e.dim = extractor->dimension();
    e.hidden = hidden > 0 ? hidden : e.dim;
    for (const auto& x : entries_) {
      if (x.source == e.source) throw std::invalid_argument("duplicate embedding source '" + e.source + "'");
    }
    e.extractor = std::move(extractor);
    entries_.push_back(std::move(e));
  }
  const std::vector<RegistryEntry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }

 private:
  std::vector<RegistryEntry> entries_;
};

inline std::string mapping_param(const std::string& source, const char* part) {
  return "mapping." + source + "." + part;
}

/// Adds one trainable mapping network per registry entry to the model.
/// Entries already present keep their weights; the recorded order must match.
inline void attach_mapping_networks(Model& m, const EmbeddingProviderRegistry& reg, std::uint64_t seed,
                                    double dropout_p = 0.1) {
  std::vector<std::string> order;
  for (const auto& e : reg.entries()) order.push_back(e.source);
  if (!m.conditioning_sources.empty() && m.conditioning_sources != order) {
    throw std::invalid_argument("registry order differs from the model's recorded conditioning order");
  }
  Rng rng(derive_seed(seed, "mapping"));
  for (const auto& e : reg.entries()) {
    if (m.params.contains(mapping_param(e.source, "w1"))) {
      if (m.params.at(mapping_param(e.source, "w1")).value.cols() != e.dim) {
        throw std::invalid_argument("mapping network for '" + e.source + "' has a different input dimension");
      }
      continue;
    }
    MappingNetwork net = MappingNetwork::random(e.dim, e.hidden, m.config.width, rng, dropout_p);
    m.params.add(mapping_param(e.source, "w1"), net.w1);
    m.params.add(mapping_param(e.source, "b1"), net.b1);
    m.params.add(mapping_param(e.source, "w2"), net.w2);
    m.params.add(mapping_param(e.source, "b2"), net.b2);
  }
  m.conditioning_sources = order;
  m.mapping_dropout = dropout_p;
}

inline MappingNetwork mapping_network(const Model& m, const std::string& source) {
  MappingNetwork n;
  n.w1 = m.params.at(mapping_param(source, "w1")).value;
  n.b1 = m.params.at(mapping_param(source, "b1")).value;
  n.w2 = m.params.at(mapping_param(source, "w2")).value;
  n.b2 = m.params.at(mapping_param(source, "b2")).value;
  n.dropout_p = m.mapping_dropout;
  return n;
}

/// Graph: pooled embeddings (one per recorded source, in order) to the
/// conditioned memory.
inline Var conditioned_memory_graph(Tape& t, const Model& m, Var memory, std::span<const Eigen::VectorXd> pooled,
                                    const ForwardContext& ctx) {
  if (pooled.size() != m.conditioning_sources.size()) {
    throw std::invalid_argument("conditioning: got " + std::to_string(pooled.size()) + " embeddings for " +
                                std::to_string(m.conditioning_sources.size()) + " sources");
  }
  std::vector<Var> mapped;
  for (std::size_t i = 0; i < pooled.size(); ++i) {
    const auto& s = m.conditioning_sources[i];
    mapped.push_back(map_embedding_graph(
        t.constant(pooled[i].transpose()), t.param(m.params.at(mapping_param(s, "w1"))),
        t.param(m.params.at(mapping_param(s, "b1"))), t.param(m.params.at(mapping_param(s, "w2"))),
        t.param(m.params.at(mapping_param(s, "b2"))), m.mapping_dropout, ctx));
  }
  return condition_graph(memory, mapped);
}

/// Pooled embeddings for `wav`, one per registry entry.
inline std::vector<Eigen::VectorXd> extract_all(const EmbeddingProviderRegistry& reg, const Waveform& wav) {
  std::vector<Eigen::VectorXd> out;
  for (const auto& e : reg.entries()) {
    AudioEmbedding emb = extract_embedding(*e.extractor, wav);
    if (emb.vector.size() != e.dim) {
      throw std::invalid_argument("embedding for '" + e.source + "' has dimension " +
                                  std::to_string(emb.vector.size()) + ", registry expects " + std::to_string(e.dim));
    }
    out.push_back(std::move(emb.vector));
  }
  return out;
}

/// Per-utterance embedding vectors stored as <dir>/<source>/<utterance id>.vec
/// (one value per line, 17 significant digits).
class EmbeddingCache {
 public:
  explicit EmbeddingCache(std::filesystem::path dir) : dir_(std::move(dir)) {}

  std::filesystem::path path_for(const std::string& source, const std::string& id) const {
    return dir_ / source / (id + ".vec");
  }

  std::optional<Eigen::VectorXd> get(const std::string& source, const std::string& id) const {
    std::ifstream is(path_for(source, id));
    if (!is) return std::nullopt;
    std::vector<double> v;
    double x;
    while (is >> x) v.push_back(x);
    return Eigen::Map<Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
  }

  void put(const std::string& source, const std::string& id, const Eigen::VectorXd& v) const {
    std::filesystem::create_directories(dir_ / source);
    std::ofstream os(path_for(source, id));
    os.precision(17);
    for (Eigen::Index i = 0; i < v.size(); ++i) os << v(i) << "\n";
    if (!os) throw std::runtime_error("cannot write embedding cache entry for " + id);
  }

 private:
  std::filesystem::path dir_;
};

}  // namespace pasr
