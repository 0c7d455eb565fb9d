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

// Gain algebra: mapping the target-to-interference ratio (theta, dB) onto
// the log10 source gains under the energy constraint
//   g_y^2 = G0^2 (g_x^2 + g_v^2),  theta = 10 log10(g_x^2 / g_v^2).

#ifndef GFHMM_GAIN_HPP
#define GFHMM_GAIN_HPP

#include <cmath>
#include <numeric>
#include <span>

#include "gfhmm/error.hpp"
#include "gfhmm/signal.hpp"

namespace gfhmm {

struct GainContext {
  double gy = 1.0;   // observation RMS
  double g0 = 1.0;   // nominal source RMS
  double theta_min = -15.0;
  double theta_max = 15.0;

  void validate() const {
    require(gy > 0.0 && std::isfinite(gy), "observation gain must be positive");
    require(g0 > 0.0 && std::isfinite(g0), "nominal gain must be positive");
    require(theta_min < theta_max, "theta interval is empty");
  }

  /// Context for the non-gain-adapted baselines: with g_y/G0 = sqrt(2) and
  /// theta = 0 both source gains are exactly one.
  static GainContext unit_gains() {
    GainContext ctx;
    ctx.gy = std::sqrt(2.0);
    ctx.g0 = 1.0;
    return ctx;
  }
};

struct GainPair {
  double log10_gx = 0.0;
  double log10_gv = 0.0;
};

/// g(theta) = log10[(g_y/G0) (1 + 10^(-theta/10))^(-1/2)].
///
/// Written as log10(g_y/G0) - 0.5 log10(1 + 10^(-theta/10)) so large |theta|
/// stays accurate.
inline double g_of_theta(double theta, const GainContext& ctx) {
  return std::log10(ctx.gy / ctx.g0) - 0.5 * std::log10(1.0 + std::pow(10.0, -theta / 10.0));
}

inline GainPair gains_from_theta(double theta, const GainContext& ctx) {
  return {g_of_theta(theta, ctx), g_of_theta(-theta, ctx)};
}

inline double rms(std::span<const double> samples) {
  if (samples.empty()) return 0.0;
  const double energy = std::inner_product(samples.begin(), samples.end(), samples.begin(), 0.0);
  return std::sqrt(energy / double(samples.size()));
}

inline double estimate_gy(const AudioSignal& signal) {
  require(!signal.empty(), "empty input");
  const double g = rms(signal.samples);
  require(g > 0.0, "silent observation");
  return g;
}

/// Square root of the mean per-signal power. Training audio is normalized to
/// unit RMS, so this is 1 in practice.
inline double estimate_g0(std::span<const AudioSignal> training) {
  require(!training.empty(), "no training signals");
  double power = 0.0;
  for (const auto& s : training) {
    require(!s.empty(), "empty training signal");
    const double g = rms(s.samples);
    power += g * g;
  }
  return std::sqrt(power / double(training.size()));
}

}  // namespace gfhmm

#endif  // GFHMM_GAIN_HPP
