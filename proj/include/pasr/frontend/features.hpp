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

#include <Eigen/Dense>
#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "pasr/core/audio.hpp"
#include "pasr/core/parameters.hpp"
#include "pasr/core/rng.hpp"

namespace pasr {

/// T x F log-Mel frames.
struct FeatureMatrix {
  Matrix frames;
  double frame_shift_ms = 10.0;
  int sample_rate = 16000;

  Eigen::Index num_frames() const { return frames.rows(); }
  Eigen::Index num_bins() const { return frames.cols(); }
};

enum class MaskFill { zero, per_utterance_mean };

struct SpecAugmentPolicy {
  int num_freq_masks = 2;
  int max_freq_width = 27;
  int num_time_masks = 2;
  int max_time_width = 100;
  MaskFill fill = MaskFill::zero;
};

struct FrontendConfig {
  int sample_rate = 16000;
  int n_mels = 80;
  double window_ms = 25.0;
  double hop_ms = 10.0;
  /// Mel energies are clamped to at least this value before the log.
  double energy_floor = 1e-10;
  double f_min = 0.0;
  /// <= 0 means Nyquist.
  double f_max = 0.0;
  /// Per-utterance mean/variance normalization, applied before SpecAugment.
  bool normalize = true;
  SpecAugmentPolicy specaugment;

  int window_samples() const { return static_cast<int>(std::lround(window_ms * sample_rate / 1000.0)); }
  int hop_samples() const { return static_cast<int>(std::lround(hop_ms * sample_rate / 1000.0)); }
  int fft_size() const {
    int n = 1;
    while (n < window_samples()) n <<= 1;
    return n;
  }
  double nyquist_or_fmax() const { return f_max > 0.0 ? f_max : sample_rate / 2.0; }
};

/// HTK mel scale.
inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

/// Center frequency of mel bin `k` (0-based) for the given configuration.
inline double mel_bin_center_hz(const FrontendConfig& cfg, int k) {
  const double lo = hz_to_mel(cfg.f_min);
  const double hi = hz_to_mel(cfg.nyquist_or_fmax());
  const double step = (hi - lo) / (cfg.n_mels + 1);
  return mel_to_hz(lo + step * (k + 1));
}

/// n_mels x (fft_size/2 + 1) triangular filters, triangles defined in the mel
/// domain with unit peak (HTK convention).
inline Matrix mel_filterbank(const FrontendConfig& cfg) {
  const int n_fft = cfg.fft_size();
  const int n_bins = n_fft / 2 + 1;
  const double lo = hz_to_mel(cfg.f_min);
  const double hi = hz_to_mel(cfg.nyquist_or_fmax());
  const double step = (hi - lo) / (cfg.n_mels + 1);
  Matrix fb = Matrix::Zero(cfg.n_mels, n_bins);
  for (int m = 0; m < cfg.n_mels; ++m) {
    const double left = lo + step * m;
    const double center = left + step;
    const double right = center + step;
    for (int b = 0; b < n_bins; ++b) {
      const double mel = hz_to_mel(static_cast<double>(b) * cfg.sample_rate / n_fft);
      if (mel > left && mel <= center) {
        fb(m, b) = (mel - left) / (center - left);
      } else if (mel > center && mel < right) {
        fb(m, b) = (right - mel) / (right - center);
      }
    }
  }
  return fb;
}

/// Log-Mel features: periodic Hann window, power spectrum, HTK filterbank,
/// log(max(energy, energy_floor)). T = 1 + floor((len - window) / hop).
inline FeatureMatrix log_mel(const Waveform& wav, const FrontendConfig& cfg) {
  if (wav.empty()) throw std::invalid_argument("log_mel: empty waveform");
  if (wav.sample_rate != cfg.sample_rate) {
    throw std::invalid_argument("log_mel: sample rate " + std::to_string(wav.sample_rate) + " != configured " +
                                std::to_string(cfg.sample_rate));
  }
  const int win = cfg.window_samples();
  const int hop = cfg.hop_samples();
  if (win <= 0 || hop <= 0 || cfg.n_mels <= 0) throw std::invalid_argument("log_mel: invalid configuration");
  const auto len = static_cast<long>(wav.samples.size());
  if (len < win) {
    throw std::invalid_argument("log_mel: waveform of " + std::to_string(len) + " samples is shorter than one " +
                                std::to_string(win) + "-sample window");
  }
  const long frames = 1 + (len - win) / hop;
  const int n_fft = cfg.fft_size();
  const int n_bins = n_fft / 2 + 1;
  const Matrix fb = mel_filterbank(cfg);

  std::vector<double> window(static_cast<std::size_t>(win));
  for (int i = 0; i < win; ++i) window[static_cast<std::size_t>(i)] = 0.5 - 0.5 * std::cos(2.0 * M_PI * i / win);

  Eigen::FFT<double> fft;
  std::vector<double> buf(static_cast<std::size_t>(n_fft));
  std::vector<std::complex<double>> spec;
  Eigen::VectorXd power(n_bins);

  FeatureMatrix out;
  out.sample_rate = cfg.sample_rate;
  out.frame_shift_ms = cfg.hop_ms;
  out.frames.resize(frames, cfg.n_mels);
  for (long t = 0; t < frames; ++t) {
    std::fill(buf.begin(), buf.end(), 0.0);
    const long start = t * hop;
    for (int i = 0; i < win; ++i) {
      buf[static_cast<std::size_t>(i)] = wav.samples[static_cast<std::size_t>(start + i)] * window[static_cast<std::size_t>(i)];
    }
    fft.fwd(spec, buf);
    for (int b = 0; b < n_bins; ++b) power(b) = std::norm(spec[static_cast<std::size_t>(b)]);
    Eigen::VectorXd mel = fb * power;
    for (int m = 0; m < cfg.n_mels; ++m) out.frames(t, m) = std::log(std::max(mel(m), cfg.energy_floor));
  }
  return out;
}

/// Per-bin mean/variance normalization over time. Bins with standard
/// deviation below `min_std` are only mean-centered.
inline FeatureMatrix normalize_features(FeatureMatrix f, double min_std = 1e-8) {
  const double n = static_cast<double>(f.frames.rows());
  for (Eigen::Index c = 0; c < f.frames.cols(); ++c) {
    auto col = f.frames.col(c);
    const double mean = col.mean();
    col.array() -= mean;
    const double sd = std::sqrt(col.squaredNorm() / n);
    if (sd > min_std) col /= sd;
  }
  return f;
}

/// One sampled band: [start, start + width).
struct MaskBand {
  int start = 0;
  int width = 0;
};

struct SpecAugmentMasks {
  std::vector<MaskBand> freq;
  std::vector<MaskBand> time;
};

/// Draws mask bands for a frames x bins matrix. Each band draws
/// width ~ U{0..W} then start ~ U{0..dim-width}, where W is the policy width
/// clamped to the matrix dimension. Frequency bands are drawn first.
inline SpecAugmentMasks sample_masks(Eigen::Index frames, Eigen::Index bins, const SpecAugmentPolicy& policy,
                                     std::uint64_t seed) {
  Rng rng(seed);
  SpecAugmentMasks masks;
  auto draw = [&rng](int max_width, Eigen::Index dim) {
    const long w_max = std::clamp<long>(max_width, 0, static_cast<long>(dim));
    MaskBand b;
    b.width = static_cast<int>(rng.uniform_int(0, w_max));
    b.start = static_cast<int>(rng.uniform_int(0, static_cast<long>(dim) - b.width));
    return b;
  };
  for (int i = 0; i < policy.num_freq_masks; ++i) masks.freq.push_back(draw(policy.max_freq_width, bins));
  for (int i = 0; i < policy.num_time_masks; ++i) masks.time.push_back(draw(policy.max_time_width, frames));
  return masks;
}

/// Frequency and time masking. Shape is preserved; cells outside every band
/// are copied unchanged; masked cells take the fill value (0, or the mean of
/// the input matrix).
inline FeatureMatrix spec_augment(const FeatureMatrix& in, const SpecAugmentPolicy& policy, std::uint64_t seed) {
  FeatureMatrix out = in;
  const Eigen::Index frames = in.frames.rows();
  const Eigen::Index bins = in.frames.cols();
  if (frames == 0 || bins == 0) return out;
  const SpecAugmentMasks masks = sample_masks(frames, bins, policy, seed);
  const double fill = policy.fill == MaskFill::zero ? 0.0 : in.frames.mean();
  for (const auto& b : masks.freq) {
    if (b.width > 0) out.frames.middleCols(b.start, b.width).setConstant(fill);
  }
  for (const auto& b : masks.time) {
    if (b.width > 0) out.frames.middleRows(b.start, b.width).setConstant(fill);
  }
  return out;
}

}  // namespace pasr
