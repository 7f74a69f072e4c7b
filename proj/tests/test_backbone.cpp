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

#include <gtest/gtest.h>

#include <cmath>
#include <fstream>

#include "pasr/backbone/checkpoint.hpp"
#include "pasr/backbone/model.hpp"
#include "pasr/core/rng.hpp"
#include "test_support.hpp"

namespace pasr {
namespace {

BackboneConfig small_config() {
  BackboneConfig c;
  c.input_dim = 6;
  c.width = 8;
  c.heads = 2;
  c.ffn_dim = 16;
  c.encoder_layers = 1;
  c.decoder_layers = 1;
  c.vocab_size = 10;
  c.max_decode_len = 8;
  return c;
}

FeatureMatrix random_features(Eigen::Index frames, int bins, std::uint64_t seed) {
  Rng rng(seed);
  FeatureMatrix f;
  f.frames.resize(frames, bins);
  for (Eigen::Index i = 0; i < f.frames.size(); ++i) f.frames.data()[i] = rng.normal(0.0, 1.0);
  return f;
}

LatentSequence random_memory(Eigen::Index rows, int width, std::uint64_t seed) {
  return LatentSequence{random_features(rows, width, seed).frames};
}

TEST(Encode, LengthHalvesWithFloor) {
  const Model m = make_reference_backbone(small_config(), 3);
  for (Eigen::Index T : {2, 3, 10, 17, 100, 101}) {
    const auto z = encode(m, random_features(T, 6, static_cast<std::uint64_t>(T)));
    EXPECT_EQ(z.vectors.rows(), T / 2) << "T=" << T;
    EXPECT_EQ(z.vectors.cols(), 8);
    EXPECT_TRUE(z.vectors.allFinite());
  }
}

TEST(Encode, DefaultConfigMapsOneHundredOneFramesToFifty) {
  const Model m = make_reference_backbone(BackboneConfig{}, 1);
  const auto z = encode(m, random_features(101, 80, 5));
  EXPECT_EQ(z.vectors.rows(), 50);
  EXPECT_EQ(z.vectors.cols(), 64);
}

TEST(Encode, Deterministic) {
  const Model a = make_reference_backbone(small_config(), 11);
  const Model b = make_reference_backbone(small_config(), 11);
  const auto f = random_features(21, 6, 2);
  EXPECT_EQ(encode(a, f).vectors, encode(b, f).vectors);
  EXPECT_EQ(encode(a, f).vectors, encode(a, f).vectors);
}

TEST(Encode, RejectsBadInput) {
  const Model m = make_reference_backbone(small_config(), 1);
  EXPECT_THROW(encode(m, random_features(1, 6, 1)), std::invalid_argument);
  EXPECT_THROW(encode(m, random_features(10, 5, 1)), std::invalid_argument);
}

TEST(DecodeStep, DistributionSumsToOne) {
  const Model m = make_reference_backbone(small_config(), 4);
  const auto mem = random_memory(7, 8, 9);
  Rng rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<int> prefix{m.config.bos_id};
    const int len = static_cast<int>(rng.uniform_int(0, 6));
    for (int i = 0; i < len; ++i) prefix.push_back(static_cast<int>(rng.uniform_int(0, 9)));
    const auto d = decode_step(m, prefix, mem);
    ASSERT_EQ(d.probabilities.size(), 10);
    EXPECT_NEAR(d.probabilities.sum(), 1.0, 1e-6);
    EXPECT_GE(d.probabilities.minCoeff(), 0.0);
  }
}

TEST(DecodeStep, RequiresBos) {
  const Model m = make_reference_backbone(small_config(), 4);
  const auto mem = random_memory(3, 8, 9);
  EXPECT_THROW(decode_step(m, std::vector<int>{5}, mem), std::invalid_argument);
  EXPECT_THROW(decode_step(m, std::vector<int>{}, mem), std::invalid_argument);
}

TEST(DecodeStep, Causal) {
  const Model m = make_reference_backbone(small_config(), 6);
  const auto mem = random_memory(5, 8, 2);
  const std::vector<int> full{1, 4, 7, 5, 9, 3};
  Tape t(false);
  const Matrix logits = decode_graph(t, m, full, t.constant(mem.vectors), ForwardContext{}).value();
  for (std::size_t i = 0; i < full.size(); ++i) {
    const std::vector<int> prefix(full.begin(), full.begin() + static_cast<long>(i) + 1);
    const auto d = decode_step(m, prefix, mem);
    const Eigen::VectorXd expect = softmax(logits.row(static_cast<long>(i)).transpose());
    EXPECT_LT((d.probabilities - expect).cwiseAbs().maxCoeff(), 1e-5) << "position " << i;
  }
  std::vector<int> changed = full;
  changed[4] = 6;
  Tape t2(false);
  const Matrix other = decode_graph(t2, m, changed, t2.constant(mem.vectors), ForwardContext{}).value();
  EXPECT_LT((other.topRows(4) - logits.topRows(4)).cwiseAbs().maxCoeff(), 1e-5);
  EXPECT_GT((other.row(4) - logits.row(4)).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(DecodeStep, ZeroParametersGiveUniform) {
  Model m = make_reference_backbone(small_config(), 6);
  zero_parameters(m);
  const auto d = decode_step(m, std::vector<int>{1, 5, 5}, random_memory(4, 8, 1));
  for (int i = 0; i < 10; ++i) EXPECT_NEAR(d.probabilities(i), 0.1, 1e-12);
}

TEST(DecodeStep, ZeroMemoryRowsAreIgnored) {
  const Model m = make_reference_backbone(small_config(), 8);
  const auto mem = random_memory(4, 8, 3);
  LatentSequence padded{Matrix::Zero(7, 8)};
  padded.vectors.topRows(4) = mem.vectors;
  const std::vector<int> prefix{1, 3, 4};
  const auto a = decode_step(m, prefix, mem);
  const auto b = decode_step(m, prefix, padded);
  EXPECT_LT((a.probabilities - b.probabilities).cwiseAbs().maxCoeff(), 1e-12);
}

// Zero weights make each layer an identity on the residual stream, so the
// final norm sees only the position row and decoder.out reads it back.
Model chain_model(const std::vector<int>& sequence) {
  Model m = make_reference_backbone(small_config(), 1);
  zero_parameters(m);
  for (auto& p : m.params) {
    if (p.name.find(".gain") != std::string::npos) p.value.setOnes();
  }
  auto& pos = m.params.at("decoder.pos").value;
  auto& out = m.params.at("decoder.out.weight").value;
  for (std::size_t i = 0; i < sequence.size(); ++i) {
    pos(static_cast<long>(i), static_cast<long>(i)) = 10.0;
    out(sequence[i], static_cast<long>(i)) = 1.0;
  }
  return m;
}

TEST(GreedyDecode, FollowsCraftedChain) {
  const Model m = chain_model({5, 6, 2});
  const auto mem = random_memory(3, 8, 4);
  EXPECT_EQ(greedy_decode(m, mem, 8), (std::vector<int>{5, 6}));
}

TEST(GreedyDecode, EosFirstGivesEmpty) {
  const Model m = chain_model({2});
  EXPECT_TRUE(greedy_decode(m, random_memory(3, 8, 4), 8).empty());
}

TEST(GreedyDecode, RespectsLengthCap) {
  const Model m = chain_model({5, 6, 7, 2});
  const auto mem = random_memory(3, 8, 4);
  EXPECT_EQ(greedy_decode(m, mem, 2), (std::vector<int>{5, 6}));
  EXPECT_THROW(greedy_decode(m, mem, 0), std::invalid_argument);
}

TEST(GreedyDecode, TiesGoToLowestId) {
  Model m = make_reference_backbone(small_config(), 2);
  zero_parameters(m);
  m.params.at("decoder.out.bias").value(0, 7) = 1.0;
  m.params.at("decoder.out.bias").value(0, 4) = 1.0;
  const auto out = greedy_decode(m, random_memory(3, 8, 1), 3);
  EXPECT_EQ(out, (std::vector<int>{4, 4, 4}));
}

TEST(GreedyDecode, DeterministicAndMonotoneInvariant) {
  const Model m = make_reference_backbone(small_config(), 21);
  Rng rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    const auto mem = random_memory(2 + trial, 8, 100 + static_cast<std::uint64_t>(trial));
    const auto base = greedy_decode(m, mem, 8);
    EXPECT_EQ(base, greedy_decode(m, mem, 8));
    Model scaled = m;
    const double c = rng.uniform(0.1, 5.0);
    const double shift = rng.uniform(-3.0, 3.0);
    scaled.params.at("decoder.out.weight").value *= c;
    scaled.params.at("decoder.out.bias").value = scaled.params.at("decoder.out.bias").value * c;
    scaled.params.at("decoder.out.bias").value.array() += shift;
    EXPECT_EQ(base, greedy_decode(scaled, mem, 8));
  }
}

double sequence_loss(const Model& m, const Matrix& feats, const std::vector<int>& tokens) {
  Tape t(false);
  Var mem = encode_graph(t, m, feats, ForwardContext{});
  std::vector<int> in(tokens.begin(), tokens.end() - 1);
  std::vector<int> target(tokens.begin() + 1, tokens.end());
  Var logits = decode_graph(t, m, in, mem, ForwardContext{});
  return ops::cross_entropy_sum(logits, target, m.config.pad_id).value()(0, 0);
}

TEST(Gradients, MatchFiniteDifferences) {
  for (std::uint64_t seed : {1u, 2u}) {
    Model m = make_reference_backbone(small_config(), seed);
    // Non-trivial norm parameters so their gradients are exercised.
    Rng rng(seed + 50);
    for (auto& p : m.params) {
      if (p.name.find(".gain") != std::string::npos || p.name.find("ln") != std::string::npos) {
        for (Eigen::Index i = 0; i < p.value.size(); ++i) p.value.data()[i] += rng.normal(0.0, 0.2);
      }
    }
    const Matrix feats = random_features(9, 6, seed).frames;
    const std::vector<int> tokens{1, 4, 8, 3, 2};

    {
      Tape t;
      Var mem = encode_graph(t, m, feats, ForwardContext{});
      std::vector<int> in(tokens.begin(), tokens.end() - 1);
      std::vector<int> target(tokens.begin() + 1, tokens.end());
      Var loss = ops::cross_entropy_sum(decode_graph(t, m, in, mem, ForwardContext{}), target, m.config.pad_id);
      for (auto& p : m.params) p.zero_grad();
      t.backward(loss);
      t.accumulate_into(m.params);
    }

    const double h = 1e-5;
    for (auto& p : m.params) {
      const Eigen::Index n = p.value.size();
      for (int k = 0; k < 4; ++k) {
        const Eigen::Index idx = static_cast<Eigen::Index>(rng.uniform_index(static_cast<std::size_t>(n)));
        const double orig = p.value.data()[idx];
        p.value.data()[idx] = orig + h;
        const double up = sequence_loss(m, feats, tokens);
        p.value.data()[idx] = orig - h;
        const double down = sequence_loss(m, feats, tokens);
        p.value.data()[idx] = orig;
        const double numeric = (up - down) / (2 * h);
        const double analytic = p.grad.data()[idx];
        const double scale = std::max({std::abs(numeric), std::abs(analytic), 1e-3});
        EXPECT_LE(std::abs(numeric - analytic) / scale, 1e-4) << p.name << "[" << idx << "]";
      }
    }
  }
}

TEST(Tokenizer, SortedVocabularyAndRoundTrip) {
  const auto tok = WordTokenizer::build(std::vector<std::string>{"turn on the light", "Open the door"});
  ASSERT_EQ(tok.size(), 4 + 6);
  EXPECT_EQ(tok.words()[4], "door");
  EXPECT_EQ(tok.words()[9], "turn");
  const auto ids = tok.encode("open the light");
  EXPECT_EQ(ids.front(), WordTokenizer::kBos);
  EXPECT_EQ(ids.back(), WordTokenizer::kEos);
  EXPECT_EQ(tok.decode(ids), "open the light");
  EXPECT_EQ(tok.encode("open window")[2], WordTokenizer::kUnk);
}

TEST(Config, CollectsViolations) {
  BackboneConfig c;
  c.width = 10;
  c.heads = 4;
  c.eos_id = c.bos_id;
  const auto v = c.violations();
  EXPECT_GE(v.size(), 2u);
  EXPECT_THROW(make_reference_backbone(c, 1), std::invalid_argument);
  EXPECT_TRUE(BackboneConfig{}.violations().empty());
}

TEST(Checkpoint, RoundTripIsExact) {
  testing::TempDir dir;
  Model m = make_reference_backbone(small_config(), 33);
  m.tokenizer = WordTokenizer::build(std::vector<std::string>{"a b c"});
  save_checkpoint(dir / "m.ckpt", m);
  const Model back = load_checkpoint(dir / "m.ckpt");
  EXPECT_EQ(back.config, m.config);
  EXPECT_EQ(back.tokenizer.words(), m.tokenizer.words());
  ASSERT_EQ(back.params.size(), m.params.size());
  for (const auto& p : m.params) EXPECT_EQ(back.params.at(p.name).value, p.value) << p.name;
  const auto mem = random_memory(4, 8, 2);
  EXPECT_EQ(greedy_decode(back, mem, 8), greedy_decode(m, mem, 8));
}

TEST(Checkpoint, RejectsCorruptFiles) {
  testing::TempDir dir;
  testing::write_file(dir / "junk.ckpt", "not a checkpoint at all");
  EXPECT_THROW(load_checkpoint(dir / "junk.ckpt"), CheckpointError);
  EXPECT_THROW(load_checkpoint(dir / "missing.ckpt"), CheckpointError);

  save_checkpoint(dir / "m.ckpt", make_reference_backbone(small_config(), 1));
  const std::string bytes = testing::read_file(dir / "m.ckpt");
  testing::write_file(dir / "cut.ckpt", bytes.substr(0, bytes.size() / 2));
  EXPECT_ANY_THROW(load_checkpoint(dir / "cut.ckpt"));
}

}  // namespace
}  // namespace pasr
