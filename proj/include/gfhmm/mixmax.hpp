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

// MIXMAX observation model: the mixture log spectrum is approximated by the
// element-wise maximum of the gain-shifted source log spectra.

#ifndef GFHMM_MIXMAX_HPP
#define GFHMM_MIXMAX_HPP

#include <algorithm>
#include <cstddef>
#include <span>
#include <vector>

#include "gfhmm/error.hpp"
#include "gfhmm/gain.hpp"
#include "gfhmm/models.hpp"
#include "gfhmm/signal.hpp"

namespace gfhmm {

inline LogSpectralFrame mixmax_combine(std::span<const double> x, std::span<const double> v,
                                       const GainPair& gp) {
  require(x.size() == v.size(), "dimension mismatch");
  LogSpectralFrame y(x.size());
  for (std::size_t d = 0; d < x.size(); ++d)
    y[d] = std::max(x[d] + gp.log10_gx, v[d] + gp.log10_gv);
  return y;
}

/// Joint emission log-likelihood of `y` given a target and interference state.
/// Per bin, the Gaussian of whichever shifted mean is larger is used; the
/// target wins ties.
inline double log_b_jk(std::span<const double> y, const PreparedGaussian& sx,
                       const PreparedGaussian& sv, const GainPair& gp) {
  double acc = 0.0;
  for (std::size_t d = 0; d < y.size(); ++d) {
    const double mx = sx.mean[d] + gp.log10_gx;
    const double mv = sv.mean[d] + gp.log10_gv;
    double z, log_sigma;
    if (mx >= mv) {
      z = (y[d] - mx) * sx.inv_sigma[d];
      log_sigma = sx.log_sigma[d];
    } else {
      z = (y[d] - mv) * sv.inv_sigma[d];
      log_sigma = sv.log_sigma[d];
    }
    acc += -0.5 * z * z - log_sigma - kHalfLog2Pi;
  }
  return acc;
}

inline double log_b_jk(std::span<const double> y, const DiagGaussian& state_x,
                       const DiagGaussian& state_v, const GainPair& gp) {
  require(y.size() == state_x.dim() && y.size() == state_v.dim(), "dimension mismatch");
  return log_b_jk(y, PreparedGaussian(state_x), PreparedGaussian(state_v), gp);
}

inline std::vector<PreparedGaussian> prepare_states(const HmmModel& m) {
  std::vector<PreparedGaussian> out;
  out.reserve(m.num_states());
  for (const auto& s : m.states) out.emplace_back(s);
  return out;
}

}  // namespace gfhmm

#endif  // GFHMM_MIXMAX_HPP
