// Copyright 2026  The gfhmm authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Framing, log-spectral analysis and masked overlap-add synthesis.

#ifndef GFHMM_SIGNAL_HPP
#define GFHMM_SIGNAL_HPP

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <span>
#include <utility>
#include <vector>

#include <unsupported/Eigen/FFT>

#include "gfhmm/error.hpp"

namespace gfhmm {

struct AudioSignal {
  std::vector<double> samples;
  int sample_rate = 8000;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
};

/// Analysis/synthesis geometry. Defaults are 32 ms frames with a 10 ms shift
/// at 8 kHz and a 256-point DFT, giving 129-bin log spectra.
struct FramingConfig {
  std::size_t frame_len = 256;
  std::size_t hop = 80;
  std::size_t dft_size = 256;
  double log_floor = 1e-10;

  std::size_t bins() const { return dft_size / 2 + 1; }

  void validate() const {
    require(hop > 0 && hop <= frame_len && frame_len <= dft_size,
            "framing requires 0 < hop <= frame_len <= dft_size");
    require(log_floor > 0.0, "log floor must be positive");
  }

  bool operator==(const FramingConfig&) const = default;
};

/// log10-magnitude spectrum of one frame, bins 0..D/2.
using LogSpectralFrame = std::vector<double>;
using LogSpectrogram = std::vector<LogSpectralFrame>;

/// Per-bin {0,1} gains over bins 0..D/2.
using BinaryMask = std::vector<std::uint8_t>;

namespace detail {

inline Eigen::FFT<double>& fft_engine() {
  thread_local Eigen::FFT<double> engine;
  return engine;
}

}  // namespace detail

/// Periodic (DFT-even) Hamming window.
inline std::vector<double> hamming_window(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i)
    w[i] = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * double(i) / double(n));
  return w;
}

/// Periodic (DFT-even) Hann window.
inline std::vector<double> hann_window(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i)
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * double(i) / double(n));
  return w;
}

/// Number of frames for a signal of `num_samples` samples. Short signals are
/// padded to one frame.
inline std::size_t frame_count(std::size_t num_samples, const FramingConfig& cfg) {
  if (num_samples <= cfg.frame_len) return 1;
  return (num_samples - cfg.frame_len) / cfg.hop + 1;
}

/// Splits a signal into frames; frame r starts at sample r*hop (0-based).
inline std::vector<std::vector<double>> frame_signal(const AudioSignal& signal,
                                                     const FramingConfig& cfg) {
  cfg.validate();
  require(!signal.empty(), "empty input");
  const std::size_t count = frame_count(signal.size(), cfg);
  std::vector<std::vector<double>> frames(count, std::vector<double>(cfg.frame_len, 0.0));
  for (std::size_t r = 0; r < count; ++r) {
    const std::size_t start = r * cfg.hop;
    const std::size_t stop = std::min(start + cfg.frame_len, signal.size());
    std::copy(signal.samples.begin() + start, signal.samples.begin() + stop,
              frames[r].begin());
  }
  return frames;
}

/// Full D-point DFT of a frame multiplied by the analysis window and
/// zero-padded to D.
inline std::vector<std::complex<double>> analysis_dft(std::span<const double> frame,
                                                      const FramingConfig& cfg) {
  require(frame.size() == cfg.frame_len, "frame length does not match framing config");
  static thread_local std::vector<double> window;
  if (window.size() != cfg.frame_len) window = hamming_window(cfg.frame_len);
  std::vector<std::complex<double>> buf(cfg.dft_size, {0.0, 0.0});
  for (std::size_t i = 0; i < frame.size(); ++i) buf[i] = frame[i] * window[i];
  std::vector<std::complex<double>> out;
  detail::fft_engine().fwd(out, buf);
  return out;
}

inline LogSpectralFrame log_magnitude(std::span<const std::complex<double>> spectrum,
                                      const FramingConfig& cfg) {
  LogSpectralFrame values(cfg.bins());
  for (std::size_t d = 0; d < values.size(); ++d)
    values[d] = std::log10(std::max(std::abs(spectrum[d]), cfg.log_floor));
  return values;
}

inline LogSpectralFrame log_spectrum(std::span<const double> frame, const FramingConfig& cfg) {
  cfg.validate();
  return log_magnitude(analysis_dft(frame, cfg), cfg);
}

/// Frames a signal and returns its log spectrogram.
inline LogSpectrogram analyze(const AudioSignal& signal, const FramingConfig& cfg) {
  const auto frames = frame_signal(signal, cfg);
  LogSpectrogram out;
  out.reserve(frames.size());
  for (const auto& f : frames) out.push_back(log_spectrum(f, cfg));
  return out;
}

/// Overlap-adds time-domain frames (already inverse transformed, length D or
/// longer than frame_len) with the Hann synthesis window and divides by the
/// accumulated analysis*synthesis window envelope.
inline std::vector<double> overlap_add(const std::vector<std::vector<double>>& frames,
                                       std::size_t num_samples, const FramingConfig& cfg) {
  const auto analysis = hamming_window(cfg.frame_len);
  const auto synthesis = hann_window(cfg.frame_len);
  const std::size_t span_len = std::max(num_samples, (frames.size() - 1) * cfg.hop + cfg.frame_len);
  std::vector<double> acc(span_len, 0.0), envelope(span_len, 0.0);
  for (std::size_t r = 0; r < frames.size(); ++r) {
    const std::size_t start = r * cfg.hop;
    for (std::size_t i = 0; i < cfg.frame_len; ++i) {
      acc[start + i] += synthesis[i] * frames[r][i];
      envelope[start + i] += synthesis[i] * analysis[i];
    }
  }
  std::vector<double> out(num_samples);
  for (std::size_t t = 0; t < num_samples; ++t)
    out[t] = acc[t] / std::max(envelope[t], 1e-3);
  return out;
}

/// Inverse D-point DFT of a conjugate-symmetric spectrum; returns the real
/// part.
inline std::vector<double> inverse_dft_real(const std::vector<std::complex<double>>& spectrum) {
  std::vector<std::complex<double>> time;
  detail::fft_engine().inv(time, spectrum);
  std::vector<double> out(time.size());
  for (std::size_t i = 0; i < time.size(); ++i) out[i] = time[i].real();
  return out;
}

/// Applies a half-spectrum mask to a full D-bin spectrum, mirroring onto the
/// upper bins.
inline void apply_mask(std::vector<std::complex<double>>& spectrum, const BinaryMask& mask) {
  const std::size_t n = spectrum.size();
  for (std::size_t d = 0; d < n; ++d) {
    const std::size_t half = d <= n / 2 ? d : n - d;
    if (!mask[half]) spectrum[d] = {0.0, 0.0};
  }
}

/// Masks every frame of `mixture` and resynthesizes by overlap-add.
inline AudioSignal reconstruct(const AudioSignal& mixture, const std::vector<BinaryMask>& masks,
                               const FramingConfig& cfg) {
  const auto frames = frame_signal(mixture, cfg);
  require(masks.size() == frames.size(), "mask count does not match frame count");
  std::vector<std::vector<double>> synth(frames.size());
  for (std::size_t r = 0; r < frames.size(); ++r) {
    require(masks[r].size() == cfg.bins(), "mask dimension does not match framing config");
    auto spectrum = analysis_dft(frames[r], cfg);
    apply_mask(spectrum, masks[r]);
    synth[r] = inverse_dft_real(spectrum);
  }
  return {overlap_add(synth, mixture.size(), cfg), mixture.sample_rate};
}

inline std::pair<AudioSignal, AudioSignal> apply_masks_and_reconstruct(
    const AudioSignal& mixture, const std::vector<BinaryMask>& masks_x,
    const std::vector<BinaryMask>& masks_v, const FramingConfig& cfg) {
  require(masks_x.size() == masks_v.size(), "target and interference mask counts differ");
  return {reconstruct(mixture, masks_x, cfg), reconstruct(mixture, masks_v, cfg)};
}

}  // namespace gfhmm

#endif  // GFHMM_SIGNAL_HPP
