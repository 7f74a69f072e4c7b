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
#include <set>

#include "pasr/core/rng.hpp"
#include "pasr/frontend/features.hpp"

namespace pasr {
namespace {

Waveform sine(double hz, int n, int rate = 16000, double amp = 0.5) {
  Waveform w;
  w.sample_rate = rate;
  for (int i = 0; i < n; ++i) w.samples.push_back(amp * std::sin(2.0 * M_PI * hz * i / rate));
  return w;
}

Waveform noise(int n, std::uint64_t seed) {
  Rng rng(seed);
  Waveform w;
  for (int i = 0; i < n; ++i) w.samples.push_back(0.1 * rng.normal());
  return w;
}

FeatureMatrix ramp(int t, int f) {
  FeatureMatrix m;
  m.frames.resize(t, f);
  for (int i = 0; i < t; ++i) {
    for (int j = 0; j < f; ++j) m.frames(i, j) = 1.0 + i * 0.01 + j;
  }
  return m;
}

TEST(LogMel, FrameCount) {
  FrontendConfig cfg;
  EXPECT_EQ(cfg.window_samples(), 400);
  EXPECT_EQ(cfg.hop_samples(), 160);
  const auto f = log_mel(noise(16000, 1), cfg);
  EXPECT_EQ(f.num_frames(), 98);
  EXPECT_EQ(f.num_bins(), 80);
  for (int len : {400, 401, 559, 560, 12345}) {
    EXPECT_EQ(log_mel(noise(len, 2), cfg).num_frames(), 1 + (len - 400) / 160) << len;
  }
}

TEST(LogMel, SilenceSitsOnTheFloor) {
  FrontendConfig cfg;
  Waveform w;
  w.samples.assign(16000, 0.0);
  const auto f = log_mel(w, cfg);
  EXPECT_TRUE((f.frames.array() == std::log(cfg.energy_floor)).all());
}

TEST(LogMel, SineAtBinCenterPeaksInThatBin) {
  FrontendConfig cfg;
  cfg.n_mels = 40;
  // Independent HTK mel oracle.
  auto mel = [](double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); };
  auto inv = [](double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); };
  const double lo = mel(0.0);
  const double hi = mel(8000.0);
  for (int k : {8, 15, 22, 30, 37}) {
    const double hz = inv(lo + (hi - lo) * (k + 1) / (cfg.n_mels + 1));
    EXPECT_NEAR(mel_bin_center_hz(cfg, k), hz, 1e-9);
    const auto f = log_mel(sine(hz, 16000), cfg);
    Eigen::Index arg = 0;
    f.frames.row(f.num_frames() / 2).maxCoeff(&arg);
    EXPECT_EQ(arg, k) << hz << " Hz";
  }
}

TEST(LogMel, ScaleShiftsLogEnergyByTwiceLogScale) {
  FrontendConfig cfg;
  const Waveform w = noise(8000, 5);
  for (double c : {0.5, 3.0, 10.0}) {
    Waveform s = w;
    for (auto& x : s.samples) x *= c;
    const auto a = log_mel(w, cfg);
    const auto b = log_mel(s, cfg);
    const double floor = std::log(cfg.energy_floor);
    for (Eigen::Index i = 0; i < a.frames.size(); ++i) {
      if (a.frames.data()[i] > floor + 1.0 && b.frames.data()[i] > floor + 1.0) {
        EXPECT_NEAR(b.frames.data()[i] - a.frames.data()[i], 2.0 * std::log(c), 1e-9);
      }
    }
  }
}

TEST(LogMel, Deterministic) {
  FrontendConfig cfg;
  const Waveform w = noise(5000, 8);
  EXPECT_EQ(log_mel(w, cfg).frames, log_mel(w, cfg).frames);
}

TEST(LogMel, Errors) {
  FrontendConfig cfg;
  EXPECT_THROW(log_mel(noise(399, 1), cfg), std::invalid_argument);
  EXPECT_THROW(log_mel(Waveform{}, cfg), std::invalid_argument);
  Waveform w = noise(1000, 1);
  w.sample_rate = 8000;
  EXPECT_THROW(log_mel(w, cfg), std::invalid_argument);
}

TEST(Normalize, ZeroMeanUnitVariancePerBin) {
  const auto f = normalize_features(ramp(50, 4));
  for (int c = 0; c < 4; ++c) {
    EXPECT_NEAR(f.frames.col(c).mean(), 0.0, 1e-12);
    EXPECT_NEAR(f.frames.col(c).squaredNorm() / 50.0, 1.0, 1e-12);
  }
}

TEST(SpecAugment, ZeroMasksIsIdentity) {
  SpecAugmentPolicy p;
  p.num_freq_masks = 0;
  p.num_time_masks = 0;
  const auto in = ramp(30, 20);
  EXPECT_EQ(spec_augment(in, p, 3).frames, in.frames);
}

TEST(SpecAugment, TwoFreqMasksAlterAtMostTenBins) {
  SpecAugmentPolicy p;
  p.num_freq_masks = 2;
  p.max_freq_width = 5;
  p.num_time_masks = 0;
  const auto in = ramp(30, 40);
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const auto out = spec_augment(in, p, seed);
    int altered = 0;
    for (int c = 0; c < 40; ++c) altered += (out.frames.col(c) != in.frames.col(c)) ? 1 : 0;
    EXPECT_LE(altered, 10);
  }
}

TEST(SpecAugmentProperty, ShapeKeptUnmaskedCellsBitIdenticalMaskedCellsFilled) {
  Rng rng(17);
  for (int trial = 0; trial < 100; ++trial) {
    SpecAugmentPolicy p;
    p.num_freq_masks = static_cast<int>(rng.uniform_int(0, 3));
    p.num_time_masks = static_cast<int>(rng.uniform_int(0, 3));
    p.max_freq_width = static_cast<int>(rng.uniform_int(0, 12));
    p.max_time_width = static_cast<int>(rng.uniform_int(0, 40));
    p.fill = rng.uniform01() < 0.5 ? MaskFill::zero : MaskFill::per_utterance_mean;
    const int t = static_cast<int>(rng.uniform_int(1, 60));
    const int f = static_cast<int>(rng.uniform_int(1, 20));
    const auto in = ramp(t, f);
    const auto seed = rng.uniform_int(0, 1 << 30);
    const auto out = spec_augment(in, p, seed);
    ASSERT_EQ(out.frames.rows(), t);
    ASSERT_EQ(out.frames.cols(), f);
    const auto masks = sample_masks(t, f, p, seed);
    const double fill = p.fill == MaskFill::zero ? 0.0 : in.frames.mean();
    for (int i = 0; i < t; ++i) {
      for (int j = 0; j < f; ++j) {
        bool masked = false;
        for (const auto& b : masks.time) masked = masked || (i >= b.start && i < b.start + b.width);
        for (const auto& b : masks.freq) masked = masked || (j >= b.start && j < b.start + b.width);
        if (masked) {
          EXPECT_EQ(out.frames(i, j), fill);
        } else {
          EXPECT_EQ(out.frames(i, j), in.frames(i, j));
        }
      }
    }
    EXPECT_EQ(spec_augment(in, p, seed).frames, out.frames);
  }
}

// Probability that one band of width U{0..W} at start U{0..D-w} covers index i.
double band_cover_probability(int i, int max_width, int dim) {
  const int w_max = std::min(max_width, dim);
  double p = 0.0;
  for (int w = 0; w <= w_max; ++w) {
    const int positions = dim - w + 1;
    int covering = 0;
    for (int s = 0; s < positions; ++s) covering += (i >= s && i < s + w) ? 1 : 0;
    p += static_cast<double>(covering) / positions / (w_max + 1);
  }
  return p;
}

TEST(SpecAugment, MonteCarloMaskedFractionMatchesAnalyticExpectation) {
  const int t = 100;
  const int f = 80;
  SpecAugmentPolicy p;
  p.num_freq_masks = 2;
  p.max_freq_width = 27;
  p.num_time_masks = 2;
  p.max_time_width = 40;
  double expected = 0.0;
  for (int i = 0; i < t; ++i) {
    const double rows_clear = std::pow(1.0 - band_cover_probability(i, p.max_time_width, t), p.num_time_masks);
    for (int j = 0; j < f; ++j) {
      const double cols_clear = std::pow(1.0 - band_cover_probability(j, p.max_freq_width, f), p.num_freq_masks);
      expected += 1.0 - rows_clear * cols_clear;
    }
  }
  expected /= t * f;
  FeatureMatrix ones;
  ones.frames = Matrix::Ones(t, f);
  double masked = 0.0;
  const int seeds = 10000;
  for (int s = 0; s < seeds; ++s) masked += (spec_augment(ones, p, static_cast<std::uint64_t>(s)).frames.array() == 0.0).count();
  const double empirical = masked / (static_cast<double>(seeds) * t * f);
  EXPECT_NEAR(empirical, expected, 0.1 * expected) << "expected " << expected;
  // Much tighter than the required band in practice.
  EXPECT_NEAR(empirical, expected, 0.01);
}

}  // namespace
}  // namespace pasr
