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

// LBG vector quantization of log spectra and the gain-adapted VQ decoder.

#ifndef GFHMM_QUANTIZE_HPP
#define GFHMM_QUANTIZE_HPP

#include <algorithm>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "gfhmm/error.hpp"
#include "gfhmm/gain.hpp"
#include "gfhmm/signal.hpp"

namespace gfhmm {

struct Codebook {
  std::vector<std::vector<double>> codevectors;
  std::vector<std::vector<double>> variances;
  std::vector<std::size_t> occupancy;

  std::size_t size() const { return codevectors.size(); }
  std::size_t dim() const { return codevectors.empty() ? 0 : codevectors.front().size(); }

  bool operator==(const Codebook&) const = default;
};

struct LbgOptions {
  std::size_t codebook_size = 64;
  std::size_t max_iters = 50;  // Lloyd iterations per splitting level
  double rel_tol = 1e-4;
  double split_delta = 0.01;
  double variance_floor = 1e-4;
};

struct LbgResult {
  Codebook codebook;
  /// Mean squared error after each assignment step, one vector per
  /// splitting level.
  std::vector<std::vector<double>> distortion;
};

namespace detail {

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t d = 0; d < a.size(); ++d) {
    const double e = a[d] - b[d];
    s += e * e;
  }
  return s;
}

inline std::size_t nearest(std::span<const double> x,
                           const std::vector<std::vector<double>>& centroids, double* dist) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < centroids.size(); ++k) {
    const double dk = squared_distance(x, centroids[k]);
    if (dk < best_d) {
      best_d = dk;
      best = k;
    }
  }
  if (dist) *dist = best_d;
  return best;
}

inline bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

}  // namespace detail

/// Trains a K-entry codebook by binary splitting from the global centroid,
/// with Lloyd iterations at every level. Also records per-cluster diagonal
/// variances and occupancies for HMM initialization.
inline LbgResult train_lbg(std::span<const LogSpectralFrame> vectors, const LbgOptions& opts) {
  const std::size_t k_target = opts.codebook_size;
  require(detail::is_power_of_two(k_target), "codebook size must be a power of two");
  require(vectors.size() >= k_target, "too few training vectors for the codebook size");
  const std::size_t dim = vectors.front().size();
  require(dim > 0, "training vectors are empty");
  for (const auto& v : vectors) require(v.size() == dim, "training vectors differ in dimension");

  const std::size_t n = vectors.size();
  std::vector<std::vector<double>> centroids(1, std::vector<double>(dim, 0.0));
  for (const auto& v : vectors)
    for (std::size_t d = 0; d < dim; ++d) centroids[0][d] += v[d];
  for (double& c : centroids[0]) c /= double(n);

  std::vector<std::size_t> assign(n, 0);
  std::vector<double> dist(n, 0.0);
  LbgResult result;

  auto update_centroids = [&] {
    const std::size_t k = centroids.size();
    std::vector<std::vector<double>> sums(k, std::vector<double>(dim, 0.0));
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      ++counts[assign[i]];
      for (std::size_t d = 0; d < dim; ++d) sums[assign[i]][d] += vectors[i][d];
    }
    for (std::size_t c = 0; c < k; ++c)
      if (counts[c] > 0)
        for (std::size_t d = 0; d < dim; ++d) centroids[c][d] = sums[c][d] / double(counts[c]);

    // Empty cells take the vector farthest from its centroid in the most
    // populous cell.
    std::vector<bool> taken(n, false);
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] > 0) continue;
      const auto donor = std::size_t(std::max_element(counts.begin(), counts.end()) - counts.begin());
      std::size_t far = n;
      double far_d = -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (assign[i] != donor || taken[i]) continue;
        const double di = detail::squared_distance(vectors[i], centroids[donor]);
        if (di > far_d) {
          far_d = di;
          far = i;
        }
      }
      if (far == n) continue;
      taken[far] = true;
      centroids[c] = vectors[far];
      assign[far] = c;
      --counts[donor];
      counts[c] = 1;
    }
  };

  while (true) {
    std::vector<double> trace;
    double prev = std::numeric_limits<double>::infinity();
    for (std::size_t it = 0; it < std::max<std::size_t>(opts.max_iters, 1); ++it) {
      double total = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        assign[i] = detail::nearest(vectors[i], centroids, &dist[i]);
        total += dist[i];
      }
      const double distortion = total / double(n);
      trace.push_back(distortion);
      const bool settled =
          distortion == 0.0 || (std::isfinite(prev) && (prev - distortion) < opts.rel_tol * prev);
      update_centroids();
      if (settled) break;
      prev = distortion;
    }
    result.distortion.push_back(std::move(trace));
    if (centroids.size() >= k_target) break;

    std::vector<std::vector<double>> split;
    split.reserve(centroids.size() * 2);
    for (const auto& c : centroids) {
      auto lo = c, hi = c;
      for (std::size_t d = 0; d < dim; ++d) {
        lo[d] -= opts.split_delta;
        hi[d] += opts.split_delta;
      }
      split.push_back(std::move(lo));
      split.push_back(std::move(hi));
    }
    centroids = std::move(split);
  }

  // Final statistics against the final partition.
  for (std::size_t i = 0; i < n; ++i) assign[i] = detail::nearest(vectors[i], centroids, nullptr);
  Codebook& cb = result.codebook;
  const std::size_t k = centroids.size();
  cb.occupancy.assign(k, 0);
  std::vector<std::vector<double>> sums(k, std::vector<double>(dim, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    ++cb.occupancy[assign[i]];
    for (std::size_t d = 0; d < dim; ++d) sums[assign[i]][d] += vectors[i][d];
  }
  cb.codevectors = centroids;
  for (std::size_t c = 0; c < k; ++c)
    if (cb.occupancy[c] > 0)
      for (std::size_t d = 0; d < dim; ++d) cb.codevectors[c][d] = sums[c][d] / double(cb.occupancy[c]);
  cb.variances.assign(k, std::vector<double>(dim, 0.0));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t d = 0; d < dim; ++d) {
      const double e = vectors[i][d] - cb.codevectors[assign[i]][d];
      cb.variances[assign[i]][d] += e * e;
    }
  for (std::size_t c = 0; c < k; ++c)
    for (double& v : cb.variances[c]) {
      if (cb.occupancy[c] > 0) v /= double(cb.occupancy[c]);
      v = std::max(v, opts.variance_floor);
    }
  return result;
}

struct GvqFrameMatch {
  std::size_t index_x = 0;
  std::size_t index_v = 0;
  double cost = 0.0;
};

namespace detail {

inline std::vector<std::vector<double>> shifted(const std::vector<std::vector<double>>& vecs,
                                                double shift) {
  auto out = vecs;
  for (auto& v : out)
    for (double& x : v) x += shift;
  return out;
}

inline double mixmax_cost(std::span<const double> y, std::span<const double> sx,
                          std::span<const double> sv) {
  double s = 0.0;
  for (std::size_t d = 0; d < y.size(); ++d) {
    const double e = y[d] - std::max(sx[d], sv[d]);
    s += e * e;
  }
  return s;
}

/// Exhaustive K^2 search over pre-shifted codevectors; ties go to the
/// smallest (i, j).
inline GvqFrameMatch best_pair(std::span<const double> y,
                               const std::vector<std::vector<double>>& sx,
                               const std::vector<std::vector<double>>& sv) {
  GvqFrameMatch best{0, 0, std::numeric_limits<double>::infinity()};
  for (std::size_t i = 0; i < sx.size(); ++i)
    for (std::size_t j = 0; j < sv.size(); ++j) {
      const double c = mixmax_cost(y, sx[i], sv[j]);
      if (c < best.cost) best = {i, j, c};
    }
  return best;
}

inline void check_codebooks(const Codebook& cb_x, const Codebook& cb_v, std::size_t dim) {
  require(cb_x.size() > 0 && cb_v.size() > 0, "empty codebook", ErrorKind::kModelMismatch);
  require(cb_x.dim() == dim && cb_v.dim() == dim, "codebook dimension does not match observation",
          ErrorKind::kModelMismatch);
}

}  // namespace detail

/// Minimizes sum_d (y(d) - max(c_x^i(d) + g(theta), c_v^j(d) + g(-theta)))^2
/// over all codevector pairs.
inline GvqFrameMatch gvq_frame_decode(std::span<const double> y, const Codebook& cb_x,
                                      const Codebook& cb_v, double theta, const GainContext& ctx) {
  detail::check_codebooks(cb_x, cb_v, y.size());
  const GainPair gp = gains_from_theta(theta, ctx);
  return detail::best_pair(y, detail::shifted(cb_x.codevectors, gp.log10_gx),
                           detail::shifted(cb_v.codevectors, gp.log10_gv));
}

struct GvqScore {
  std::vector<std::size_t> index_x;
  std::vector<std::size_t> index_v;
  double q = 0.0;  // negated total cost, always <= 0
};

/// Decodes every frame independently at a per-frame theta.
inline GvqScore gvq_score(const LogSpectrogram& y_seq, const Codebook& cb_x, const Codebook& cb_v,
                          std::span<const double> frame_thetas, const GainContext& ctx) {
  require(!y_seq.empty(), "empty observation sequence");
  require(frame_thetas.size() == y_seq.size(), "theta schedule length does not match sequence");
  detail::check_codebooks(cb_x, cb_v, y_seq.front().size());
  GvqScore out;
  out.index_x.resize(y_seq.size());
  out.index_v.resize(y_seq.size());
  std::vector<std::vector<double>> sx, sv;
  double current = std::numeric_limits<double>::quiet_NaN();
  for (std::size_t r = 0; r < y_seq.size(); ++r) {
    require(y_seq[r].size() == cb_x.dim(), "observation dimension changes within sequence",
            ErrorKind::kModelMismatch);
    if (!(frame_thetas[r] == current)) {
      current = frame_thetas[r];
      const GainPair gp = gains_from_theta(current, ctx);
      sx = detail::shifted(cb_x.codevectors, gp.log10_gx);
      sv = detail::shifted(cb_v.codevectors, gp.log10_gv);
    }
    const auto m = detail::best_pair(y_seq[r], sx, sv);
    out.index_x[r] = m.index_x;
    out.index_v[r] = m.index_v;
    out.q -= m.cost;
  }
  return out;
}

inline GvqScore gvq_score(const LogSpectrogram& y_seq, const Codebook& cb_x, const Codebook& cb_v,
                          double theta, const GainContext& ctx) {
  const std::vector<double> thetas(y_seq.size(), theta);
  return gvq_score(y_seq, cb_x, cb_v, thetas, ctx);
}

/// Q(theta) for fixed index sequences over frames [begin, end).
inline double gvq_objective(const LogSpectrogram& y_seq, std::span<const std::size_t> index_x,
                            std::span<const std::size_t> index_v, const Codebook& cb_x,
                            const Codebook& cb_v, double theta, const GainContext& ctx,
                            std::size_t begin = 0, std::size_t end = std::size_t(-1)) {
  end = std::min(end, y_seq.size());
  require(index_x.size() == y_seq.size() && index_v.size() == y_seq.size(),
          "index sequence length does not match observation");
  const GainPair gp = gains_from_theta(theta, ctx);
  double q = 0.0;
  std::vector<double> sx(cb_x.dim()), sv(cb_v.dim());
  for (std::size_t r = begin; r < end; ++r) {
    require(index_x[r] < cb_x.size() && index_v[r] < cb_v.size(), "codevector index out of range");
    const auto& cx = cb_x.codevectors[index_x[r]];
    const auto& cv = cb_v.codevectors[index_v[r]];
    for (std::size_t d = 0; d < sx.size(); ++d) {
      sx[d] = cx[d] + gp.log10_gx;
      sv[d] = cv[d] + gp.log10_gv;
    }
    q -= detail::mixmax_cost(y_seq[r], sx, sv);
  }
  return q;
}

}  // namespace gfhmm

#endif  // GFHMM_QUANTIZE_HPP
