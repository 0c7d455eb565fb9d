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

// Mixture fabrication at a controlled TIR, SNR scoring and synthetic sources.

#ifndef GFHMM_EVAL_HPP
#define GFHMM_EVAL_HPP

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "gfhmm/error.hpp"
#include "gfhmm/gain.hpp"
#include "gfhmm/models.hpp"
#include "gfhmm/signal.hpp"

namespace gfhmm {

inline AudioSignal scaled(const AudioSignal& s, double factor) {
  AudioSignal out = s;
  for (double& x : out.samples) x *= factor;
  return out;
}

inline AudioSignal normalize_rms(const AudioSignal& s) {
  const double g = rms(s.samples);
  require(g > 0.0, "silent input");
  return scaled(s, 1.0 / g);
}

/// Scales both sources to unit RMS.
inline std::pair<AudioSignal, AudioSignal> normalize_equal_power(const AudioSignal& x,
                                                                 const AudioSignal& v) {
  return {normalize_rms(x), normalize_rms(v)};
}

struct Mixture {
  AudioSignal mixture;
  AudioSignal target;        // g_x * x
  AudioSignal interference;  // g_v * v
  double gx = 0.0;
  double gv = 0.0;
};

/// y = g_x x + g_v v with g_x^2 + g_v^2 = 1 and 10 log10(g_x^2 / g_v^2) = theta.
/// Inputs are trimmed to the shorter length.
inline Mixture mix_at_tir(const AudioSignal& x, const AudioSignal& v, double theta) {
  const std::size_t n = std::min(x.size(), v.size());
  require(n > 0, "empty input after trimming");
  require(x.sample_rate == v.sample_rate, "sources differ in sample rate");
  Mixture m;
  m.gx = 1.0 / std::sqrt(1.0 + std::pow(10.0, -theta / 10.0));
  m.gv = 1.0 / std::sqrt(1.0 + std::pow(10.0, theta / 10.0));
  m.mixture.sample_rate = m.target.sample_rate = m.interference.sample_rate = x.sample_rate;
  m.mixture.samples.resize(n);
  m.target.samples.resize(n);
  m.interference.samples.resize(n);
  for (std::size_t t = 0; t < n; ++t) {
    m.target.samples[t] = m.gx * x.samples[t];
    m.interference.samples[t] = m.gv * v.samples[t];
    m.mixture.samples[t] = m.target.samples[t] + m.interference.samples[t];
  }
  return m;
}

/// 10 log10(sum z^2 / sum (z - z_hat)^2), capped at 100 dB.
inline double snr_db(const AudioSignal& reference, const AudioSignal& estimate) {
  const std::size_t n = std::min(reference.size(), estimate.size());
  double ref = 0.0, err = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    ref += reference.samples[t] * reference.samples[t];
    const double e = reference.samples[t] - estimate.samples[t];
    err += e * e;
  }
  require(ref > 0.0, "silent reference");
  if (err < 1e-10 * ref) return 100.0;
  return 10.0 * std::log10(ref / err);
}

enum class SynthKind { kHmmSample, kTonal, kFilteredNoise };

inline SynthKind parse_synth_kind(std::string_view s) {
  if (s == "hmm_sample") return SynthKind::kHmmSample;
  if (s == "tonal") return SynthKind::kTonal;
  if (s == "filtered_noise") return SynthKind::kFilteredNoise;
  fail(ErrorKind::kInvalidArgument, "unknown synth kind '" + std::string(s) + "'");
}

struct SynthSpec {
  SynthKind kind = SynthKind::kHmmSample;
  int speaker = 0;
  std::uint64_t seed = 0;
  double duration = 2.0;  // seconds
  int sample_rate = 8000;
  const HmmModel* model = nullptr;  // required for kHmmSample
};

/// A generative speaker model with formant-like log spectral envelopes on top
/// of a speaker-specific harmonic comb, and sticky transitions.
inline HmmModel make_synthetic_speaker(int speaker, std::size_t states, const FramingConfig& cfg,
                                       std::uint64_t seed = 0) {
  require(states >= 1, "synthetic speaker needs at least one state");
  const std::size_t bins = cfg.bins();
  std::mt19937_64 rng(seed * 1000003ULL + std::uint64_t(speaker) * 7919ULL + 17ULL);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  // Pitch spacing in bins differs by speaker. Every fourth state is a quiet,
  // unvoiced one; the rest are voiced with a harmonic comb and three formants.
  const double pitch = double(bins) / 129.0 * (4.0 + 2.7 * double(speaker % 4));

  HmmModel m;
  m.states.resize(states);
  std::size_t index = 0;
  for (auto& st : m.states) {
    st.mean.assign(bins, 0.0);
    st.var.assign(bins, 0.05);
    const bool voiced = (index++ % 4) != 0;
    const double level = voiced ? -0.2 + 0.5 * unit(rng) : -1.5 + 0.3 * unit(rng);
    const double tilt = voiced ? 1.0 + unit(rng) : -0.5 + unit(rng);
    const double spacing = pitch * (0.9 + 0.2 * unit(rng));
    const double voicing = voiced ? 1.0 : 0.0;
    double centers[3], widths[3], heights[3];
    for (int f = 0; f < 3; ++f) {
      centers[f] = double(bins) * (0.05 + 0.28 * f + 0.2 * unit(rng));
      widths[f] = double(bins) * (0.02 + 0.04 * unit(rng));
      heights[f] = voiced ? 0.6 + 0.5 * unit(rng) : 0.2 * unit(rng);
    }
    for (std::size_t d = 0; d < bins; ++d) {
      const double x = double(d);
      double v = level - tilt * x / double(bins);
      for (int f = 0; f < 3; ++f) {
        const double z = (x - centers[f]) / widths[f];
        v += heights[f] * std::exp(-0.5 * z * z);
      }
      v += voicing * 0.5 * (1.0 + std::cos(2.0 * std::numbers::pi * x / spacing)) - voicing * 0.5;
      st.mean[d] = v;
    }
  }
  const double stay = states > 1 ? 0.92 : 1.0;
  m.log_pi.assign(states, -std::log(double(states)));
  m.log_trans.assign(states * states, 0.0);
  for (std::size_t i = 0; i < states; ++i)
    for (std::size_t j = 0; j < states; ++j)
      m.log_trans[i * states + j] =
          std::log(i == j ? stay : (1.0 - stay) / double(states - 1));
  return m;
}

namespace detail {

inline std::size_t sample_index(std::mt19937_64& rng, const std::vector<double>& log_probs) {
  std::vector<double> w(log_probs.size());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = std::exp(log_probs[i]);
  std::discrete_distribution<std::size_t> dist(w.begin(), w.end());
  return dist(rng);
}

}  // namespace detail

/// Draws a state path and one log spectrum per frame from `model` directly in
/// the log spectral domain.
inline LogSpectrogram sample_hmm_sequence(const HmmModel& model, std::size_t frames,
                                          std::uint64_t seed,
                                          std::vector<std::size_t>* states = nullptr) {
  require(frames > 0, "frame count must be positive");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const std::size_t k = model.num_states();
  LogSpectrogram out;
  out.reserve(frames);
  std::size_t state = detail::sample_index(rng, model.log_pi);
  std::vector<double> row(k);
  for (std::size_t r = 0; r < frames; ++r) {
    if (r > 0) {
      for (std::size_t j = 0; j < k; ++j) row[j] = model.log_a(state, j);
      state = detail::sample_index(rng, row);
    }
    const auto& g = model.states[state];
    LogSpectralFrame f(g.dim());
    for (std::size_t d = 0; d < f.size(); ++d) f[d] = g.mean[d] + std::sqrt(g.var[d]) * normal(rng);
    out.push_back(std::move(f));
    if (states) states->push_back(state);
  }
  return out;
}

/// Draws a state path and one log spectrum per frame from `model`, then
/// synthesizes audio with random phases and overlap-add. Also returns the
/// drawn log spectra and states when requested.
inline AudioSignal sample_hmm_audio(const HmmModel& model, std::size_t num_samples, int sample_rate,
                                    const FramingConfig& cfg, std::uint64_t seed,
                                    LogSpectrogram* drawn = nullptr,
                                    std::vector<std::size_t>* states = nullptr) {
  require(model.dim() == cfg.bins(), "model dimension does not match framing",
          ErrorKind::kModelMismatch);
  require(num_samples > 0, "duration must be positive");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  const std::size_t frames = frame_count(num_samples, cfg);
  const std::size_t k = model.num_states();
  const std::size_t n = cfg.dft_size;
  std::vector<std::vector<double>> time_frames(frames);
  std::size_t state = detail::sample_index(rng, model.log_pi);
  std::vector<double> row(k);
  for (std::size_t r = 0; r < frames; ++r) {
    if (r > 0) {
      for (std::size_t j = 0; j < k; ++j) row[j] = model.log_a(state, j);
      state = detail::sample_index(rng, row);
    }
    const auto& g = model.states[state];
    LogSpectralFrame logspec(cfg.bins());
    for (std::size_t d = 0; d < logspec.size(); ++d)
      logspec[d] = g.mean[d] + std::sqrt(g.var[d]) * normal(rng);
    std::vector<std::complex<double>> spec(n);
    for (std::size_t d = 0; d <= n / 2; ++d) {
      const double mag = std::pow(10.0, logspec[d]);
      if (d == 0 || 2 * d == n) {
        spec[d] = {phase(rng) < std::numbers::pi ? mag : -mag, 0.0};
      } else {
        spec[d] = std::polar(mag, phase(rng));
        spec[n - d] = std::conj(spec[d]);
      }
    }
    time_frames[r] = inverse_dft_real(spec);
    if (drawn) drawn->push_back(std::move(logspec));
    if (states) states->push_back(state);
  }
  return {overlap_add(time_frames, num_samples, cfg), sample_rate};
}

/// Deterministic synthetic source for experiments without a speech corpus.
inline AudioSignal synth_source(const SynthSpec& spec, const FramingConfig& cfg = {}) {
  require(spec.duration > 0.0 && spec.sample_rate > 0, "duration and rate must be positive");
  const auto n = std::size_t(std::llround(spec.duration * spec.sample_rate));
  require(n > 0, "duration must be positive");
  const double fs = spec.sample_rate;
  std::mt19937_64 rng(spec.seed * 2654435761ULL + std::uint64_t(spec.speaker));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  switch (spec.kind) {
    case SynthKind::kHmmSample: {
      require(spec.model != nullptr, "hmm_sample requires a model");
      return sample_hmm_audio(*spec.model, n, spec.sample_rate, cfg,
                              spec.seed * 2654435761ULL + std::uint64_t(spec.speaker));
    }
    case SynthKind::kTonal: {
      // Harmonic series on a speaker-specific fundamental with a slow
      // syllable-rate amplitude envelope.
      const double f0 = 110.0 * (1.0 + 0.45 * double(spec.speaker));
      const double rate = 3.0 + 2.0 * unit(rng);
      const double env_phase = 2.0 * std::numbers::pi * unit(rng);
      std::vector<double> phases;
      for (double f = f0; f < 0.45 * fs && phases.size() < 20; f += f0)
        phases.push_back(2.0 * std::numbers::pi * unit(rng));
      AudioSignal s{std::vector<double>(n, 0.0), spec.sample_rate};
      for (std::size_t t = 0; t < n; ++t) {
        const double time = double(t) / fs;
        double v = 0.0;
        for (std::size_t h = 0; h < phases.size(); ++h)
          v += std::sin(2.0 * std::numbers::pi * f0 * double(h + 1) * time + phases[h]) / double(h + 1);
        s.samples[t] = v * (0.6 + 0.4 * std::sin(2.0 * std::numbers::pi * rate * time + env_phase));
      }
      return s;
    }
    case SynthKind::kFilteredNoise: {
      // White noise through a two-pole resonator at a speaker-specific
      // centre frequency.
      const double fc = 400.0 + std::fmod(700.0 * double(spec.speaker), 0.4 * fs);
      const double radius = 0.97;
      const double a1 = 2.0 * radius * std::cos(2.0 * std::numbers::pi * fc / fs);
      const double a2 = -radius * radius;
      std::normal_distribution<double> normal(0.0, 1.0);
      AudioSignal s{std::vector<double>(n, 0.0), spec.sample_rate};
      double y1 = 0.0, y2 = 0.0;
      for (std::size_t t = 0; t < n; ++t) {
        const double y = normal(rng) + a1 * y1 + a2 * y2;
        s.samples[t] = y;
        y2 = y1;
        y1 = y;
      }
      return s;
    }
  }
  fail(ErrorKind::kInvalidArgument, "unknown synth kind");
}

}  // namespace gfhmm

#endif  // GFHMM_EVAL_HPP
