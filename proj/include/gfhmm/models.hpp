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

// Diagonal-Gaussian HMM speaker models: likelihoods, initialization from a
// VQ codebook and multi-utterance Baum-Welch training.
//
// Likelihoods are natural-log throughout; the features themselves are log10
// magnitudes.

#ifndef GFHMM_MODELS_HPP
#define GFHMM_MODELS_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <numbers>
#include <span>
#include <vector>

#include "gfhmm/error.hpp"
#include "gfhmm/quantize.hpp"
#include "gfhmm/signal.hpp"

namespace gfhmm {

inline constexpr double kVarianceFloor = 1e-4;
inline constexpr double kHalfLog2Pi = 0.91893853320467274178;  // 0.5 ln(2 pi)

struct DiagGaussian {
  std::vector<double> mean;
  std::vector<double> var;

  std::size_t dim() const { return mean.size(); }
  bool operator==(const DiagGaussian&) const = default;
};

struct HmmModel {
  std::vector<double> log_pi;
  std::vector<double> log_trans;  // row-major K x K, row = from-state
  std::vector<DiagGaussian> states;

  std::size_t num_states() const { return states.size(); }
  std::size_t dim() const { return states.empty() ? 0 : states.front().dim(); }
  double log_a(std::size_t from, std::size_t to) const {
    return log_trans[from * num_states() + to];
  }

  /// Throws if the parameters are not a valid K-state model.
  void validate(double tol = 1e-6) const {
    const std::size_t k = num_states();
    require(k >= 1, "model has no states", ErrorKind::kModelMismatch);
    require(log_pi.size() == k && log_trans.size() == k * k, "model parameter sizes disagree",
            ErrorKind::kModelMismatch);
    const std::size_t d = dim();
    for (const auto& s : states) {
      require(s.mean.size() == d && s.var.size() == d, "state dimensions disagree",
              ErrorKind::kModelMismatch);
      for (double v : s.var) require(v > 0.0, "non-positive variance", ErrorKind::kNumeric);
    }
    double total = 0.0;
    for (double lp : log_pi) total += std::exp(lp);
    require(std::abs(total - 1.0) <= tol, "initial probabilities do not sum to one",
            ErrorKind::kNumeric);
    for (std::size_t i = 0; i < k; ++i) {
      double row = 0.0;
      for (std::size_t j = 0; j < k; ++j) row += std::exp(log_a(i, j));
      require(std::abs(row - 1.0) <= tol, "transition row does not sum to one",
              ErrorKind::kNumeric);
    }
  }

  bool operator==(const HmmModel&) const = default;
};

/// A Gaussian with its per-dimension constants cached for repeated scoring.
struct PreparedGaussian {
  std::vector<double> mean;
  std::vector<double> inv_sigma;
  std::vector<double> log_sigma;

  explicit PreparedGaussian(const DiagGaussian& g) : mean(g.mean) {
    inv_sigma.resize(g.var.size());
    log_sigma.resize(g.var.size());
    for (std::size_t d = 0; d < g.var.size(); ++d) {
      require(g.var[d] > 0.0, "non-positive variance", ErrorKind::kNumeric);
      const double sigma = std::sqrt(g.var[d]);
      inv_sigma[d] = 1.0 / sigma;
      log_sigma[d] = std::log(sigma);
    }
  }

  double log_density(std::span<const double> x) const {
    double acc = 0.0;
    for (std::size_t d = 0; d < mean.size(); ++d) {
      const double z = (x[d] - mean[d]) * inv_sigma[d];
      acc += -0.5 * z * z - log_sigma[d] - kHalfLog2Pi;
    }
    return acc;
  }
};

inline double log_gaussian_diag(std::span<const double> x, const DiagGaussian& g) {
  require(x.size() == g.dim() && g.var.size() == g.dim(), "dimension mismatch");
  return PreparedGaussian(g).log_density(x);
}

/// Means and variances from the codevectors and cells; initial state
/// probabilities from cell occupancy (floored at 1e-6); uniform transitions.
inline HmmModel init_hmm_from_codebook(const Codebook& cb, double variance_floor = kVarianceFloor) {
  const std::size_t k = cb.size();
  require(k >= 1, "empty codebook");
  require(cb.variances.size() == k && cb.occupancy.size() == k,
          "codebook lacks variances or occupancy");
  HmmModel m;
  m.states.resize(k);
  double total = 0.0;
  for (std::size_t c : cb.occupancy) total += double(c);
  std::vector<double> pi(k);
  for (std::size_t j = 0; j < k; ++j) {
    m.states[j].mean = cb.codevectors[j];
    m.states[j].var = cb.variances[j];
    for (double& v : m.states[j].var) v = std::max(v, variance_floor);
    pi[j] = std::max(total > 0.0 ? double(cb.occupancy[j]) / total : 1.0 / double(k), 1e-6);
  }
  const double norm = [&] {
    double s = 0.0;
    for (double p : pi) s += p;
    return s;
  }();
  m.log_pi.resize(k);
  for (std::size_t j = 0; j < k; ++j) m.log_pi[j] = std::log(pi[j] / norm);
  m.log_trans.assign(k * k, -std::log(double(k)));
  return m;
}

struct BaumWelchOptions {
  double rel_tol = 1e-5;
  std::size_t max_iters = 15;
  double variance_floor = kVarianceFloor;
};

struct BaumWelchResult {
  HmmModel model;
  /// Total log-likelihood of the model entering each iteration, followed by
  /// that of the returned model.
  std::vector<double> log_likelihood;
  std::size_t iterations = 0;  // M-steps performed
  bool converged = false;
};

namespace detail {

struct EmAccumulators {
  std::vector<double> pi;
  std::vector<double> trans;
  std::vector<double> occ;
  std::vector<std::vector<double>> sum;
  std::vector<std::vector<double>> sum_sq;
  double log_likelihood = 0.0;

  EmAccumulators(std::size_t k, std::size_t dim)
      : pi(k, 0.0), trans(k * k, 0.0), occ(k, 0.0), sum(k, std::vector<double>(dim, 0.0)),
        sum_sq(k, std::vector<double>(dim, 0.0)) {}
};

/// Scaled forward-backward over one utterance. Emission likelihoods are
/// normalized per frame by their maximum; the offsets are added back into the
/// log-likelihood. Statistics are accumulated only when `acc_stats` is set.
inline void forward_backward(const LogSpectrogram& utt, const HmmModel& m,
                             const std::vector<PreparedGaussian>& prepared, EmAccumulators& acc,
                             bool acc_stats) {
  const std::size_t k = m.num_states();
  const std::size_t len = utt.size();
  std::vector<double> b(len * k), alpha(len * k), beta(len * k), scale(len);
  std::vector<double> pi(k), a(k * k);
  for (std::size_t j = 0; j < k; ++j) pi[j] = std::exp(m.log_pi[j]);
  for (std::size_t i = 0; i < k * k; ++i) a[i] = std::exp(m.log_trans[i]);

  double offset = 0.0;
  for (std::size_t r = 0; r < len; ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < k; ++j) {
      b[r * k + j] = prepared[j].log_density(utt[r]);
      mx = std::max(mx, b[r * k + j]);
    }
    require(std::isfinite(mx), "non-finite emission likelihood", ErrorKind::kNumeric);
    for (std::size_t j = 0; j < k; ++j) b[r * k + j] = std::exp(b[r * k + j] - mx);
    offset += mx;
  }

  for (std::size_t r = 0; r < len; ++r) {
    double c = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      double s = 0.0;
      if (r == 0) {
        s = pi[j];
      } else {
        for (std::size_t i = 0; i < k; ++i) s += alpha[(r - 1) * k + i] * a[i * k + j];
      }
      alpha[r * k + j] = s * b[r * k + j];
      c += alpha[r * k + j];
    }
    require(c > 0.0 && std::isfinite(c), "forward recursion underflow", ErrorKind::kNumeric);
    scale[r] = c;
    for (std::size_t j = 0; j < k; ++j) alpha[r * k + j] /= c;
  }
  double ll = offset;
  for (double c : scale) ll += std::log(c);
  acc.log_likelihood += ll;
  if (!acc_stats) return;

  for (std::size_t j = 0; j < k; ++j) beta[(len - 1) * k + j] = 1.0;
  for (std::size_t r = len - 1; r-- > 0;) {
    for (std::size_t i = 0; i < k; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < k; ++j)
        s += a[i * k + j] * b[(r + 1) * k + j] * beta[(r + 1) * k + j];
      beta[r * k + i] = s / scale[r + 1];
    }
  }

  const std::size_t dim = m.dim();
  for (std::size_t r = 0; r < len; ++r) {
    for (std::size_t j = 0; j < k; ++j) {
      const double gamma = alpha[r * k + j] * beta[r * k + j];
      if (r == 0) acc.pi[j] += gamma;
      acc.occ[j] += gamma;
      if (gamma == 0.0) continue;
      auto& s1 = acc.sum[j];
      auto& s2 = acc.sum_sq[j];
      for (std::size_t d = 0; d < dim; ++d) {
        const double x = utt[r][d];
        s1[d] += gamma * x;
        s2[d] += gamma * x * x;
      }
    }
    if (r + 1 == len) continue;
    for (std::size_t i = 0; i < k; ++i) {
      const double ai = alpha[r * k + i] / scale[r + 1];
      if (ai == 0.0) continue;
      for (std::size_t j = 0; j < k; ++j)
        acc.trans[i * k + j] += ai * a[i * k + j] * b[(r + 1) * k + j] * beta[(r + 1) * k + j];
    }
  }
}

inline EmAccumulators expectation(std::span<const LogSpectrogram> utterances, const HmmModel& m,
                                  bool acc_stats) {
  std::vector<PreparedGaussian> prepared;
  prepared.reserve(m.num_states());
  for (const auto& s : m.states) prepared.emplace_back(s);
  EmAccumulators acc(m.num_states(), m.dim());
  for (const auto& utt : utterances)
    if (!utt.empty()) forward_backward(utt, m, prepared, acc, acc_stats);
  return acc;
}

inline HmmModel maximization(const EmAccumulators& acc, const HmmModel& old, double variance_floor) {
  const std::size_t k = old.num_states();
  const std::size_t dim = old.dim();
  HmmModel m = old;
  double pi_total = 0.0;
  for (double p : acc.pi) pi_total += p;
  for (std::size_t j = 0; j < k; ++j) m.log_pi[j] = std::log(acc.pi[j] / pi_total);
  for (std::size_t i = 0; i < k; ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < k; ++j) row += acc.trans[i * k + j];
    if (row <= 0.0) continue;
    for (std::size_t j = 0; j < k; ++j) m.log_trans[i * k + j] = std::log(acc.trans[i * k + j] / row);
  }
  for (std::size_t j = 0; j < k; ++j) {
    const double occ = acc.occ[j];
    if (occ < 1e-10) continue;
    auto& st = m.states[j];
    for (std::size_t d = 0; d < dim; ++d) {
      const double mu = acc.sum[j][d] / occ;
      st.mean[d] = mu;
      st.var[d] = std::max(acc.sum_sq[j][d] / occ - mu * mu, variance_floor);
    }
  }
  return m;
}

}  // namespace detail

/// Total log-likelihood of the utterances under the model.
inline double sequence_log_likelihood(std::span<const LogSpectrogram> utterances,
                                      const HmmModel& m) {
  return detail::expectation(utterances, m, false).log_likelihood;
}

/// Multi-utterance EM. Stops when |dLL| < rel_tol * |LL| or after max_iters
/// M-steps. `on_iteration(iter, ll)` is called with each new log-likelihood.
inline BaumWelchResult baum_welch(
    std::span<const LogSpectrogram> utterances, const HmmModel& init,
    const BaumWelchOptions& opts = {},
    const std::function<void(std::size_t, double)>& on_iteration = {}) {
  bool any = false;
  for (const auto& u : utterances) {
    any = any || !u.empty();
    for (const auto& f : u)
      require(f.size() == init.dim(), "training frame dimension does not match model",
              ErrorKind::kModelMismatch);
  }
  require(any, "empty training set");
  init.validate();

  BaumWelchResult res;
  res.model = init;
  auto acc = detail::expectation(utterances, res.model, true);
  res.log_likelihood.push_back(acc.log_likelihood);
  if (on_iteration) on_iteration(0, acc.log_likelihood);
  while (res.iterations < opts.max_iters) {
    res.model = detail::maximization(acc, res.model, opts.variance_floor);
    ++res.iterations;
    const double prev = acc.log_likelihood;
    const bool last = res.iterations == opts.max_iters;
    acc = detail::expectation(utterances, res.model, !last);
    res.log_likelihood.push_back(acc.log_likelihood);
    if (on_iteration) on_iteration(res.iterations, acc.log_likelihood);
    if (std::abs(acc.log_likelihood - prev) < opts.rel_tol * std::abs(acc.log_likelihood)) {
      res.converged = true;
      break;
    }
  }
  return res;
}

}  // namespace gfhmm

#endif  // GFHMM_MODELS_HPP
