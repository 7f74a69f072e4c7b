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

// Reference encoder-decoder transformer.
//
// Encoder: odd-length inputs repeat their last frame once; a kernel-2,
// stride-2 convolution (pairs of frames -> width b) with GELU halves the
// length to M = floor(T/2); sinusoidal positions are added; pre-LN blocks
// of self-attention and feed-forward follow, then a final layer norm.
//
// Decoder: token embedding plus learned positions; pre-LN blocks of causal
// self-attention, cross-attention over the memory and feed-forward; a final
// layer norm and an output projection to vocabulary logits.
//
// Every attention projection is a named site ("encoder.layers.0.self_attn.
// query", ...). A hook registered for a site adds its output to the base
// projection; the adapters module attaches through these hooks.

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "pasr/backbone/config.hpp"
#include "pasr/backbone/tokenizer.hpp"
#include "pasr/core/autodiff.hpp"
#include "pasr/core/parameters.hpp"
#include "pasr/core/rng.hpp"
#include "pasr/frontend/features.hpp"

namespace pasr {

/// M x b encoder output (or conditioned memory).
struct LatentSequence {
  Matrix vectors;

  Eigen::Index length() const { return vectors.rows(); }
  Eigen::Index width() const { return vectors.cols(); }
};

/// Next-token probabilities over the vocabulary.
struct TokenDistribution {
  Eigen::VectorXd probabilities;

  int argmax() const {
    int best = 0;
    for (int i = 1; i < probabilities.size(); ++i) {
      if (probabilities(i) > probabilities(best)) best = i;
    }
    return best;
  }
};

struct ForwardContext {
  bool training = false;
  /// Dropout source; required when training with non-zero dropout.
  Rng* rng = nullptr;
};

/// Returns the additive delta for a projection site given its input rows.
using SiteHook = std::function<Var(Tape&, const ParameterStore&, Var x, const ForwardContext&)>;

struct ProjectionSite {
  std::string name;        // full site name
  std::string short_name;  // query | key | value | out | cross_query | ...
  std::string weight;      // parameter holding the d_out x d_in weight
  std::string bias;
  int d_in = 0;
  int d_out = 0;
};

struct Model {
  BackboneConfig config;
  ParameterStore params;
  WordTokenizer tokenizer;
  /// Keyed by full site name.
  std::map<std::string, SiteHook> hooks;
  /// Serialized adapter specification; null when no adapters were injected.
  nlohmann::json adapter_spec;
  bool merged = false;
  /// Conditioning sources in concatenation order.
  std::vector<std::string> conditioning_sources;
  double mapping_dropout = 0.1;
};

inline std::vector<ProjectionSite> projection_sites(const BackboneConfig& cfg) {
  std::vector<ProjectionSite> sites;
  auto add_block = [&](const std::string& prefix, const std::string& short_prefix) {
    for (const char* proj : {"query", "key", "value", "out"}) {
      ProjectionSite s;
      s.name = prefix + "." + proj;
      s.short_name = short_prefix + proj;
      s.weight = s.name + ".weight";
      s.bias = s.name + ".bias";
      s.d_in = cfg.width;
      s.d_out = cfg.width;
      sites.push_back(std::move(s));
    }
  };
  for (int i = 0; i < cfg.encoder_layers; ++i) add_block("encoder.layers." + std::to_string(i) + ".self_attn", "");
  for (int i = 0; i < cfg.decoder_layers; ++i) {
    add_block("decoder.layers." + std::to_string(i) + ".self_attn", "");
    add_block("decoder.layers." + std::to_string(i) + ".cross_attn", "cross_");
  }
  return sites;
}

namespace detail {

inline Matrix init_weight(Rng& rng, int rows, int cols) {
  Matrix w(rows, cols);
  const double sd = 1.0 / std::sqrt(static_cast<double>(cols));
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = rng.normal(0.0, sd);
  return w;
}

inline void add_linear(ParameterStore& ps, Rng& rng, const std::string& name, int d_in, int d_out) {
  ps.add(name + ".weight", init_weight(rng, d_out, d_in));
  ps.add(name + ".bias", Matrix::Zero(1, d_out));
}

inline void add_norm(ParameterStore& ps, const std::string& name, int d) {
  ps.add(name + ".gain", Matrix::Ones(1, d));
  ps.add(name + ".bias", Matrix::Zero(1, d));
}

inline void add_attention(ParameterStore& ps, Rng& rng, const std::string& prefix, int b) {
  for (const char* proj : {"query", "key", "value", "out"}) add_linear(ps, rng, prefix + "." + proj, b, b);
}

inline void add_ffn(ParameterStore& ps, Rng& rng, const std::string& prefix, int b, int ffn) {
  add_linear(ps, rng, prefix + ".fc1", b, ffn);
  add_linear(ps, rng, prefix + ".fc2", ffn, b);
}

}  // namespace detail

/// Reference backbone with seeded random initialization.
inline Model make_reference_backbone(const BackboneConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  Model m;
  m.config = cfg;
  auto& ps = m.params;
  const int b = cfg.width;
  detail::add_linear(ps, rng, "encoder.subsample", 2 * cfg.input_dim, b);
  for (int i = 0; i < cfg.encoder_layers; ++i) {
    const std::string p = "encoder.layers." + std::to_string(i);
    detail::add_norm(ps, p + ".ln1", b);
    detail::add_attention(ps, rng, p + ".self_attn", b);
    detail::add_norm(ps, p + ".ln2", b);
    detail::add_ffn(ps, rng, p + ".ffn", b, cfg.ffn_dim);
  }
  detail::add_norm(ps, "encoder.ln_final", b);
  {
    Matrix emb = detail::init_weight(rng, cfg.vocab_size, b);
    ps.add("decoder.embed", emb);
    ps.add("decoder.pos", detail::init_weight(rng, cfg.max_decode_len, b) * 0.1);
  }
  for (int i = 0; i < cfg.decoder_layers; ++i) {
    const std::string p = "decoder.layers." + std::to_string(i);
    detail::add_norm(ps, p + ".ln1", b);
    detail::add_attention(ps, rng, p + ".self_attn", b);
    detail::add_norm(ps, p + ".ln2", b);
    detail::add_attention(ps, rng, p + ".cross_attn", b);
    detail::add_norm(ps, p + ".ln3", b);
    detail::add_ffn(ps, rng, p + ".ffn", b, cfg.ffn_dim);
  }
  detail::add_norm(ps, "decoder.ln_final", b);
  detail::add_linear(ps, rng, "decoder.out", b, cfg.vocab_size);
  return m;
}

/// Sets every parameter to zero.
inline void zero_parameters(Model& m) {
  for (auto& p : m.params) p.value.setZero();
}

/// Sinusoidal position table, rows = positions.
inline Matrix sinusoidal_positions(Eigen::Index length, int width) {
  Matrix pe(length, width);
  for (Eigen::Index pos = 0; pos < length; ++pos) {
    for (int i = 0; i < width; ++i) {
      const double freq = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / width);
      pe(pos, i) = (i % 2 == 0) ? std::sin(pos * freq) : std::cos(pos * freq);
    }
  }
  return pe;
}

using BoolMatrix = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>;

namespace detail {

inline Var linear(Tape& t, const Model& m, const std::string& name, Var x, const ForwardContext& ctx) {
  Var w = t.param(m.params.at(name + ".weight"));
  Var b = t.param(m.params.at(name + ".bias"));
  Var y = ops::add_row(ops::matmul_nt(x, w), b);
  if (auto it = m.hooks.find(name); it != m.hooks.end()) y = ops::add(y, it->second(t, m.params, x, ctx));
  return y;
}

inline Var norm(Tape& t, const Model& m, const std::string& name, Var x) {
  return ops::layer_norm(x, t.param(m.params.at(name + ".gain")), t.param(m.params.at(name + ".bias")));
}

inline Var attention(Tape& t, const Model& m, const std::string& prefix, Var xq, Var xkv, const BoolMatrix& allowed,
                     const ForwardContext& ctx) {
  const int heads = m.config.heads;
  const int dh = m.config.width / heads;
  Var q = linear(t, m, prefix + ".query", xq, ctx);
  Var k = linear(t, m, prefix + ".key", xkv, ctx);
  Var v = linear(t, m, prefix + ".value", xkv, ctx);
  std::vector<Var> outs;
  outs.reserve(static_cast<std::size_t>(heads));
  const double inv = 1.0 / std::sqrt(static_cast<double>(dh));
  for (int h = 0; h < heads; ++h) {
    Var qh = ops::slice_cols(q, h * dh, dh);
    Var kh = ops::slice_cols(k, h * dh, dh);
    Var vh = ops::slice_cols(v, h * dh, dh);
    Var p = ops::masked_softmax(ops::scale(ops::matmul_nt(qh, kh), inv), allowed);
    outs.push_back(ops::matmul(p, vh));
  }
  Var cat = heads == 1 ? outs[0] : ops::concat_cols(outs);
  return linear(t, m, prefix + ".out", cat, ctx);
}

inline Var ffn(Tape& t, const Model& m, const std::string& prefix, Var x, const ForwardContext& ctx) {
  return linear(t, m, prefix + ".fc2", ops::gelu(linear(t, m, prefix + ".fc1", x, ctx)), ctx);
}

}  // namespace detail

/// Pairs consecutive frames after odd-length padding: row i = [x_2i, x_2i+1].
inline Matrix stack_frame_pairs(const Matrix& features) {
  const Eigen::Index T = features.rows();
  const Eigen::Index F = features.cols();
  const Eigen::Index M = T / 2;
  Matrix out(M, 2 * F);
  for (Eigen::Index i = 0; i < M; ++i) {
    out.block(i, 0, 1, F) = features.row(2 * i);
    out.block(i, F, 1, F) = features.row(2 * i + 1);
  }
  return out;
}

/// Encoder graph: T x F features to M x b memory, M = floor(T/2). The
/// trailing frame of an odd-length input has no partner and is dropped.
inline Var encode_graph(Tape& t, const Model& m, const Matrix& features, const ForwardContext& ctx) {
  const auto& cfg = m.config;
  if (features.rows() < 2) throw std::invalid_argument("encode: need at least 2 frames");
  if (features.cols() != cfg.input_dim) {
    throw std::invalid_argument("encode: feature width " + std::to_string(features.cols()) + " != configured " +
                                std::to_string(cfg.input_dim));
  }
  Var pairs = t.constant(stack_frame_pairs(features));
  Var x = ops::gelu(detail::linear(t, m, "encoder.subsample", pairs, ctx));
  x = ops::add(x, t.constant(sinusoidal_positions(x.rows(), cfg.width)));
  const BoolMatrix all = BoolMatrix::Constant(x.rows(), x.rows(), true);
  for (int i = 0; i < cfg.encoder_layers; ++i) {
    const std::string p = "encoder.layers." + std::to_string(i);
    Var h = detail::norm(t, m, p + ".ln1", x);
    x = ops::add(x, detail::attention(t, m, p + ".self_attn", h, h, all, ctx));
    x = ops::add(x, detail::ffn(t, m, p + ".ffn", detail::norm(t, m, p + ".ln2", x), ctx));
  }
  return detail::norm(t, m, "encoder.ln_final", x);
}

/// Decoder graph: logits for every prefix position (row i scores the token
/// following tokens[0..i]).
inline Var decode_graph(Tape& t, const Model& m, std::span<const int> tokens, Var memory,
                        const ForwardContext& ctx) {
  const auto& cfg = m.config;
  const auto L = static_cast<Eigen::Index>(tokens.size());
  if (L == 0) throw std::invalid_argument("decode: empty prefix");
  if (L > cfg.max_decode_len) {
    throw std::invalid_argument("decode: prefix length " + std::to_string(L) + " exceeds max_decode_len " +
                                std::to_string(cfg.max_decode_len));
  }
  if (memory.rows() == 0) throw std::invalid_argument("decode: empty memory");
  if (memory.cols() != cfg.width) throw std::invalid_argument("decode: memory width mismatch");
  std::vector<int> positions(static_cast<std::size_t>(L));
  for (Eigen::Index i = 0; i < L; ++i) positions[static_cast<std::size_t>(i)] = static_cast<int>(i);
  Var x = ops::add(ops::gather_rows(t.param(m.params.at("decoder.embed")), tokens),
                   ops::gather_rows(t.param(m.params.at("decoder.pos")), positions));

  BoolMatrix causal(L, L);
  for (Eigen::Index i = 0; i < L; ++i) {
    for (Eigen::Index j = 0; j < L; ++j) causal(i, j) = j <= i;
  }
  const Eigen::Index M = memory.rows();
  BoolMatrix cross = BoolMatrix::Constant(L, M, true);
  if (cfg.mask_zero_memory_rows) {
    for (Eigen::Index j = 0; j < M; ++j) {
      if (memory.value().row(j).squaredNorm() == 0.0) cross.col(j).setConstant(false);
    }
  }
  for (int i = 0; i < cfg.decoder_layers; ++i) {
    const std::string p = "decoder.layers." + std::to_string(i);
    Var h = detail::norm(t, m, p + ".ln1", x);
    x = ops::add(x, detail::attention(t, m, p + ".self_attn", h, h, causal, ctx));
    x = ops::add(x, detail::attention(t, m, p + ".cross_attn", detail::norm(t, m, p + ".ln2", x), memory, cross, ctx));
    x = ops::add(x, detail::ffn(t, m, p + ".ffn", detail::norm(t, m, p + ".ln3", x), ctx));
  }
  return detail::linear(t, m, "decoder.out", detail::norm(t, m, "decoder.ln_final", x), ctx);
}

/// Inference-mode encoder.
inline LatentSequence encode(const Model& m, const FeatureMatrix& features) {
  Tape t(false);
  return LatentSequence{encode_graph(t, m, features.frames, ForwardContext{}).value()};
}

inline Eigen::VectorXd softmax(const Eigen::VectorXd& z) {
  Eigen::VectorXd e = (z.array() - z.maxCoeff()).exp();
  return e / e.sum();
}

/// Next-token distribution after `prefix` (which must start with BOS).
inline TokenDistribution decode_step(const Model& m, std::span<const int> prefix, const LatentSequence& memory) {
  if (prefix.empty() || prefix.front() != m.config.bos_id) throw std::invalid_argument("decode_step: prefix must begin with BOS");
  Tape t(false);
  Var logits = decode_graph(t, m, prefix, t.constant(memory.vectors), ForwardContext{});
  return TokenDistribution{softmax(logits.value().row(logits.rows() - 1).transpose())};
}

/// Greedy decoding from BOS: argmax each step (lowest id on ties), stopping
/// at EOS or after `max_len` emitted tokens. Returned tokens exclude BOS/EOS.
/// `max_len` is capped so the prefix fits the decoder's positions.
inline std::vector<int> greedy_decode(const Model& m, const LatentSequence& memory, int max_len) {
  if (max_len < 1) throw std::invalid_argument("greedy_decode: max_len must be >= 1");
  const int cap = std::min(max_len, m.config.max_decode_len);
  std::vector<int> prefix{m.config.bos_id};
  for (int step = 0; step < cap; ++step) {
    Tape t(false);
    Var logits = decode_graph(t, m, prefix, t.constant(memory.vectors), ForwardContext{});
    const auto last = logits.value().row(logits.rows() - 1);
    int best = 0;
    for (int j = 1; j < last.size(); ++j) {
      if (last(j) > last(best)) best = j;
    }
    if (best == m.config.eos_id) break;
    prefix.push_back(best);
  }
  return {prefix.begin() + 1, prefix.end()};
}

}  // namespace pasr
