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

// Joint decoding of two HMM chains (parallel Viterbi) and of the
// target-to-interference ratio theta, plus the gain-adapted VQ counterpart.
//
// State indices are 0-based.

#ifndef GFHMM_DECODE_HPP
#define GFHMM_DECODE_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "gfhmm/error.hpp"
#include "gfhmm/gain.hpp"
#include "gfhmm/mixmax.hpp"
#include "gfhmm/models.hpp"
#include "gfhmm/quantize.hpp"

namespace gfhmm {

struct DecodeResult {
  std::vector<std::size_t> path_x;
  std::vector<std::size_t> path_v;
  double logprob = 0.0;  // P(theta), natural log
  double theta_hat = 0.0;
  std::vector<double> frame_thetas;
  std::vector<double> segment_thetas;
  std::size_t iterations = 1;
  /// Alternation objective: P(theta_t), then L(theta_t+1 | paths_t), ...
  std::vector<double> objective_trace;
};

/// Half-open frame range sharing one theta.
struct Segment {
  std::size_t begin = 0;
  std::size_t end = 0;
};

/// Splits R frames into mega-frames of `megaframe_frames`; a trailing
/// remainder shorter than a full mega-frame joins the previous one, so
/// sequences shorter than two mega-frames get a single segment. Zero means
/// one segment for the whole sequence.
inline std::vector<Segment> megaframe_segments(std::size_t num_frames, std::size_t megaframe_frames) {
  if (megaframe_frames == 0 || num_frames < 2 * megaframe_frames) return {{0, num_frames}};
  std::vector<Segment> out;
  for (std::size_t b = 0; b + megaframe_frames <= num_frames; b += megaframe_frames)
    out.push_back({b, b + megaframe_frames});
  out.back().end = num_frames;
  return out;
}

inline std::vector<double> expand_thetas(const std::vector<Segment>& segments,
                                         std::span<const double> segment_thetas,
                                         std::size_t num_frames) {
  std::vector<double> out(num_frames, 0.0);
  for (std::size_t s = 0; s < segments.size(); ++s)
    for (std::size_t r = segments[s].begin; r < segments[s].end; ++r) out[r] = segment_thetas[s];
  return out;
}

/// b_hat(j, k) for every frame, stored [r][j*K + k].
class EmissionTable {
 public:
  EmissionTable(std::size_t frames, std::size_t states)
      : frames_(frames), states_(states), values_(frames * states * states, 0.0) {}

  std::size_t frames() const { return frames_; }
  std::size_t states() const { return states_; }
  double& at(std::size_t r, std::size_t j, std::size_t k) {
    return values_[(r * states_ + j) * states_ + k];
  }
  double at(std::size_t r, std::size_t j, std::size_t k) const {
    return values_[(r * states_ + j) * states_ + k];
  }
  std::span<const double> frame(std::size_t r) const {
    return {values_.data() + r * states_ * states_, states_ * states_};
  }

 private:
  std::size_t frames_;
  std::size_t states_;
  std::vector<double> values_;
};

namespace detail {

inline void check_pair(const LogSpectrogram& y_seq, const HmmModel& lx, const HmmModel& lv) {
  require(!y_seq.empty(), "empty observation sequence");
  require(lx.num_states() == lv.num_states(), "target and interference models differ in K",
          ErrorKind::kModelMismatch);
  require(lx.dim() == lv.dim(), "target and interference models differ in dimension",
          ErrorKind::kModelMismatch);
  for (const auto& y : y_seq)
    require(y.size() == lx.dim(), "observation dimension does not match models",
            ErrorKind::kModelMismatch);
}

}  // namespace detail

inline EmissionTable emission_table(const LogSpectrogram& y_seq,
                                    const std::vector<PreparedGaussian>& px,
                                    const std::vector<PreparedGaussian>& pv,
                                    std::span<const double> frame_thetas, const GainContext& ctx) {
  require(frame_thetas.size() == y_seq.size(), "theta schedule length does not match sequence");
  const std::size_t k = px.size();
  EmissionTable table(y_seq.size(), k);
  GainPair gp;
  double current = std::numeric_limits<double>::quiet_NaN();
  for (std::size_t r = 0; r < y_seq.size(); ++r) {
    if (!(frame_thetas[r] == current)) {
      current = frame_thetas[r];
      gp = gains_from_theta(current, ctx);
    }
    for (std::size_t j = 0; j < k; ++j)
      for (std::size_t l = 0; l < k; ++l) table.at(r, j, l) = log_b_jk(y_seq[r], px[j], pv[l], gp);
  }
  return table;
}

enum class Recursion {
  kTwoStage,  // max over i, then over l: O(K^3) per frame
  kNaive,     // joint max over (i, l): O(K^4) per frame
};

/// One Viterbi recursion without the emission term:
///   score(j,k) = max_{i,l} delta(i,l) + a_x(i,j) + a_v(l,k).
/// Ties go to the lexicographically smallest (i, l).
struct ViterbiStep {
  std::vector<double> score;        // [j*K + k]
  std::vector<std::uint32_t> from;  // packed i*K + l
};

inline ViterbiStep viterbi_step(std::span<const double> delta, const HmmModel& lx,
                                const HmmModel& lv, Recursion mode = Recursion::kTwoStage) {
  const std::size_t k = lx.num_states();
  ViterbiStep out{std::vector<double>(k * k), std::vector<std::uint32_t>(k * k)};
  if (mode == Recursion::kNaive) {
    for (std::size_t j = 0; j < k; ++j)
      for (std::size_t kk = 0; kk < k; ++kk) {
        double best = (delta[0] + lx.log_a(0, j)) + lv.log_a(0, kk);
        std::uint32_t arg = 0;
        for (std::size_t i = 0; i < k; ++i)
          for (std::size_t l = 0; l < k; ++l) {
            const double v = (delta[i * k + l] + lx.log_a(i, j)) + lv.log_a(l, kk);
            if (v > best) {
              best = v;
              arg = std::uint32_t(i * k + l);
            }
          }
        out.score[j * k + kk] = best;
        out.from[j * k + kk] = arg;
      }
    return out;
  }

  // Stage 1: best predecessor i for every (j, l).
  std::vector<double> partial(k * k);
  std::vector<std::uint32_t> partial_arg(k * k);
  for (std::size_t j = 0; j < k; ++j)
    for (std::size_t l = 0; l < k; ++l) {
      double best = delta[l] + lx.log_a(0, j);
      std::uint32_t arg = 0;
      for (std::size_t i = 1; i < k; ++i) {
        const double v = delta[i * k + l] + lx.log_a(i, j);
        if (v > best) {
          best = v;
          arg = std::uint32_t(i);
        }
      }
      partial[j * k + l] = best;
      partial_arg[j * k + l] = arg;
    }
  // Stage 2: best l for every (j, k). On ties prefer the smaller i, then the
  // smaller l, which reproduces the joint lexicographic rule.
  for (std::size_t j = 0; j < k; ++j)
    for (std::size_t kk = 0; kk < k; ++kk) {
      double best = partial[j * k] + lv.log_a(0, kk);
      std::uint32_t best_i = partial_arg[j * k];
      std::uint32_t best_l = 0;
      for (std::size_t l = 1; l < k; ++l) {
        const double v = partial[j * k + l] + lv.log_a(l, kk);
        const std::uint32_t i = partial_arg[j * k + l];
        if (v > best || (v == best && i < best_i)) {
          best = v;
          best_i = i;
          best_l = std::uint32_t(l);
        }
      }
      out.score[j * k + kk] = best;
      out.from[j * k + kk] = std::uint32_t(best_i * k + best_l);
    }
  return out;
}

/// Parallel Viterbi over a precomputed emission table.
inline DecodeResult viterbi_from_emissions(const EmissionTable& b, const HmmModel& lx,
                                           const HmmModel& lv,
                                           Recursion mode = Recursion::kTwoStage) {
  const std::size_t k = lx.num_states();
  const std::size_t frames = b.frames();
  require(frames >= 1, "empty observation sequence");
  require(b.states() == k && lv.num_states() == k, "emission table does not match models",
          ErrorKind::kModelMismatch);

  std::vector<double> delta(k * k);
  for (std::size_t j = 0; j < k; ++j)
    for (std::size_t l = 0; l < k; ++l)
      delta[j * k + l] = lx.log_pi[j] + lv.log_pi[l] + b.at(0, j, l);

  std::vector<std::uint32_t> psi((frames - 1) * k * k);
  for (std::size_t r = 1; r < frames; ++r) {
    auto step = viterbi_step(delta, lx, lv, mode);
    const auto br = b.frame(r);
    for (std::size_t c = 0; c < k * k; ++c) delta[c] = step.score[c] + br[c];
    std::copy(step.from.begin(), step.from.end(), psi.begin() + std::ptrdiff_t((r - 1) * k * k));
  }

  std::size_t best = 0;
  for (std::size_t c = 1; c < k * k; ++c)
    if (delta[c] > delta[best]) best = c;

  DecodeResult res;
  res.logprob = delta[best];
  res.path_x.resize(frames);
  res.path_v.resize(frames);
  std::size_t cell = best;
  for (std::size_t r = frames; r-- > 0;) {
    res.path_x[r] = cell / k;
    res.path_v[r] = cell % k;
    if (r > 0) cell = psi[(r - 1) * k * k + cell];
  }
  return res;
}

inline DecodeResult parallel_viterbi(const LogSpectrogram& y_seq, const HmmModel& lx,
                                     const HmmModel& lv, std::span<const double> frame_thetas,
                                     const GainContext& ctx,
                                     Recursion mode = Recursion::kTwoStage) {
  detail::check_pair(y_seq, lx, lv);
  const auto table = emission_table(y_seq, prepare_states(lx), prepare_states(lv), frame_thetas, ctx);
  auto res = viterbi_from_emissions(table, lx, lv, mode);
  res.frame_thetas.assign(frame_thetas.begin(), frame_thetas.end());
  res.segment_thetas = {frame_thetas.front()};
  res.theta_hat = frame_thetas.front();
  return res;
}

inline DecodeResult parallel_viterbi(const LogSpectrogram& y_seq, const HmmModel& lx,
                                     const HmmModel& lv, double theta, const GainContext& ctx,
                                     Recursion mode = Recursion::kTwoStage) {
  const std::vector<double> thetas(y_seq.size(), theta);
  return parallel_viterbi(y_seq, lx, lv, thetas, ctx, mode);
}

/// log p(q_x, q_v, y | models, theta) for given paths.
inline double path_loglik(std::span<const std::size_t> path_x, std::span<const std::size_t> path_v,
                          const LogSpectrogram& y_seq, const HmmModel& lx, const HmmModel& lv,
                          std::span<const double> frame_thetas, const GainContext& ctx) {
  detail::check_pair(y_seq, lx, lv);
  const std::size_t k = lx.num_states();
  require(path_x.size() == y_seq.size() && path_v.size() == y_seq.size(),
          "path length does not match observation");
  require(frame_thetas.size() == y_seq.size(), "theta schedule length does not match sequence");
  for (std::size_t r = 0; r < y_seq.size(); ++r)
    require(path_x[r] < k && path_v[r] < k, "state index out of range");
  double ll = lx.log_pi[path_x[0]] + lv.log_pi[path_v[0]];
  for (std::size_t r = 1; r < y_seq.size(); ++r)
    ll += lx.log_a(path_x[r - 1], path_x[r]) + lv.log_a(path_v[r - 1], path_v[r]);
  const auto px = prepare_states(lx), pv = prepare_states(lv);
  for (std::size_t r = 0; r < y_seq.size(); ++r)
    ll += log_b_jk(y_seq[r], px[path_x[r]], pv[path_v[r]], gains_from_theta(frame_thetas[r], ctx));
  return ll;
}

inline double path_loglik(std::span<const std::size_t> path_x, std::span<const std::size_t> path_v,
                          const LogSpectrogram& y_seq, const HmmModel& lx, const HmmModel& lv,
                          double theta, const GainContext& ctx) {
  const std::vector<double> thetas(y_seq.size(), theta);
  return path_loglik(path_x, path_v, y_seq, lx, lv, thetas, ctx);
}

/// Exhaustive search over all K^(2R) path pairs. Test oracle; ties go to the
/// lexicographically smallest (path_x, path_v).
inline DecodeResult brute_force_decode(const LogSpectrogram& y_seq, const HmmModel& lx,
                                       const HmmModel& lv, double theta, const GainContext& ctx) {
  detail::check_pair(y_seq, lx, lv);
  const std::size_t k = lx.num_states();
  const std::size_t frames = y_seq.size();
  require(std::pow(double(k), 2.0 * double(frames)) <= 1e7, "instance too large for brute force");

  const GainPair gp = gains_from_theta(theta, ctx);
  std::vector<double> b(frames * k * k);
  for (std::size_t r = 0; r < frames; ++r)
    for (std::size_t j = 0; j < k; ++j)
      for (std::size_t l = 0; l < k; ++l)
        b[(r * k + j) * k + l] = log_b_jk(y_seq[r], lx.states[j], lv.states[l], gp);

  auto next = [k](std::vector<std::size_t>& p) {
    for (std::size_t r = p.size(); r-- > 0;) {
      if (++p[r] < k) return true;
      p[r] = 0;
    }
    return false;
  };
  auto chain_ll = [](const HmmModel& m, const std::vector<std::size_t>& p) {
    double s = m.log_pi[p[0]];
    for (std::size_t r = 1; r < p.size(); ++r) s += m.log_a(p[r - 1], p[r]);
    return s;
  };

  DecodeResult res;
  res.logprob = -std::numeric_limits<double>::infinity();
  bool found = false;
  std::vector<std::size_t> px(frames, 0);
  do {
    const double lx_ll = chain_ll(lx, px);
    std::vector<std::size_t> pv(frames, 0);
    do {
      double s = lx_ll + chain_ll(lv, pv);
      for (std::size_t r = 0; r < frames; ++r) s += b[(r * k + px[r]) * k + pv[r]];
      if (!found || s > res.logprob) {
        found = true;
        res.logprob = s;
        res.path_x = px;
        res.path_v = pv;
      }
    } while (next(pv));
  } while (next(px));
  res.theta_hat = theta;
  res.frame_thetas.assign(frames, theta);
  res.segment_thetas = {theta};
  return res;
}

struct ThetaSearchOptions {
  double tol = 0.1;  // dB
  std::size_t max_evals = 20;
};

struct ThetaSearchResult {
  double theta = 0.0;
  double value = 0.0;
  std::size_t evaluations = 0;
};

/// Maximizes a scalar objective on [lo, hi] by successive parabolic
/// interpolation seeded at the endpoints and midpoint. A parabola is fitted
/// through the best point and its evaluated neighbours; its vertex, clamped to
/// the interval, is evaluated next. Non-concave fits fall back to a
/// golden-section step into the wider neighbouring gap. Stops once the step
/// falls below `tol` with the best point bracketed to within `tol` on both
/// sides, or when the evaluation budget is spent.
inline ThetaSearchResult maximize_theta(const std::function<double(double)>& objective, double lo,
                                        double hi, const ThetaSearchOptions& opts = {}) {
  require(lo < hi, "theta interval is degenerate");
  constexpr double kGolden = 0.3819660112501051;  // 2 - golden ratio
  std::vector<std::pair<double, double>> pts;
  auto evaluate = [&](double t) {
    const double f = objective(t);
    if (!std::isfinite(f)) fail(ErrorKind::kNumeric, "theta objective is not finite");
    pts.emplace_back(t, f);
    std::sort(pts.begin(), pts.end());
  };
  auto best_index = [&] {
    std::size_t b = 0;
    for (std::size_t i = 1; i < pts.size(); ++i)
      if (pts[i].second > pts[b].second) b = i;
    return b;
  };
  auto seen = [&](double t) {
    for (const auto& p : pts)
      if (std::abs(p.first - t) <= 1e-12 * std::max(1.0, std::abs(t))) return true;
    return false;
  };

  evaluate(lo);
  evaluate(0.5 * (lo + hi));
  evaluate(hi);
  while (pts.size() < std::max<std::size_t>(opts.max_evals, 3)) {
    const std::size_t b = best_index();
    const std::size_t n = pts.size();
    const std::size_t mid = std::clamp<std::size_t>(b, 1, n - 2);
    const auto [x1, f1] = pts[mid - 1];
    const auto [x2, f2] = pts[mid];
    const auto [x3, f3] = pts[mid + 1];
    const double curvature = ((f3 - f2) / (x3 - x2) - (f2 - f1) / (x2 - x1)) / (x3 - x1);
    const double xb = pts[b].first;

    double candidate = std::numeric_limits<double>::quiet_NaN();
    if (curvature < 0.0) {
      const double numer = (x2 - x1) * (x2 - x1) * (f2 - f3) - (x2 - x3) * (x2 - x3) * (f2 - f1);
      const double denom = (x2 - x1) * (f2 - f3) - (x2 - x3) * (f2 - f1);
      const double vertex = x2 - 0.5 * numer / denom;
      if (std::isfinite(vertex)) candidate = std::clamp(vertex, lo, hi);
    }
    const bool parabolic = std::isfinite(candidate);
    if (parabolic && std::abs(candidate - xb) < opts.tol) {
      // A short step alone can come from a lopsided fit; also require the
      // best point to be bracketed within tol, probing the wider side.
      const double left = b > 0 ? xb - pts[b - 1].first : 0.0;
      const double right = b + 1 < n ? pts[b + 1].first - xb : 0.0;
      if (left <= opts.tol && right <= opts.tol) {
        if (!seen(candidate)) evaluate(candidate);
        break;
      }
      if (!seen(candidate)) {
        evaluate(candidate);
        continue;
      }
      candidate = right >= left ? xb + opts.tol : xb - opts.tol;
      if (seen(candidate)) break;
      evaluate(candidate);
      continue;
    }
    if (!parabolic || seen(candidate)) {
      const double left = b > 0 ? xb - pts[b - 1].first : 0.0;
      const double right = b + 1 < n ? pts[b + 1].first - xb : 0.0;
      candidate = right >= left ? xb + kGolden * right : xb - kGolden * left;
      if (std::abs(candidate - xb) < opts.tol) {
        if (!seen(candidate)) evaluate(candidate);
        break;
      }
    }
    evaluate(candidate);
  }
  const std::size_t b = best_index();
  return {pts[b].first, pts[b].second, pts.size()};
}

struct InferOptions {
  double theta0 = 0.0;
  double outer_tol = 0.25;  // dB
  std::size_t max_outer = 10;
  ThetaSearchOptions search;
  /// Frames per theta mega-frame; 0 keeps one theta for the whole sequence.
  std::size_t megaframe_frames = 200;
  /// When set, theta is not estimated.
  std::optional<double> fixed_theta;
};

namespace detail {

inline double weighted_theta(const std::vector<Segment>& segments, std::span<const double> thetas) {
  double s = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < segments.size(); ++i) {
    const std::size_t len = segments[i].end - segments[i].begin;
    s += thetas[i] * double(len);
    n += len;
  }
  return s / double(n);
}

/// One theta update per segment with the decoded labels held fixed. The
/// current theta is kept unless the search finds a strictly better value.
/// Returns the summed objective change.
inline double update_thetas(const std::vector<Segment>& segments, std::vector<double>& thetas,
                            const GainContext& ctx, const ThetaSearchOptions& search,
                            const std::function<double(const Segment&, double)>& objective) {
  double gain = 0.0;
  for (std::size_t s = 0; s < segments.size(); ++s) {
    auto f = [&](double t) { return objective(segments[s], t); };
    const double current = f(thetas[s]);
    const auto found = maximize_theta(f, ctx.theta_min, ctx.theta_max, search);
    if (found.value > current) {
      gain += found.value - current;
      thetas[s] = found.theta;
    }
  }
  return gain;
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace detail

/// Gain-adapted FHMM inference: alternate parallel Viterbi at the current
/// theta with maximization of L(theta | decoded paths) per mega-frame until
/// theta moves less than `outer_tol`.
inline DecodeResult gfhmm_infer(const LogSpectrogram& y_seq, const HmmModel& lx,
                                const HmmModel& lv, const GainContext& ctx,
                                const InferOptions& opts = {}) {
  detail::check_pair(y_seq, lx, lv);
  ctx.validate();
  const auto segments = megaframe_segments(y_seq.size(), opts.megaframe_frames);
  const auto px = prepare_states(lx), pv = prepare_states(lv);

  auto decode = [&](const std::vector<double>& seg_thetas) {
    const auto frame_thetas = expand_thetas(segments, seg_thetas, y_seq.size());
    auto res = viterbi_from_emissions(emission_table(y_seq, px, pv, frame_thetas, ctx), lx, lv);
    res.frame_thetas = frame_thetas;
    res.segment_thetas = seg_thetas;
    res.theta_hat = detail::weighted_theta(segments, seg_thetas);
    return res;
  };

  if (opts.fixed_theta) {
    auto res = decode(std::vector<double>(segments.size(), *opts.fixed_theta));
    res.objective_trace = {res.logprob};
    return res;
  }

  std::vector<double> thetas(segments.size(),
                             std::clamp(opts.theta0, ctx.theta_min, ctx.theta_max));
  std::vector<double> trace;
  DecodeResult res;
  std::vector<double> decoded_at;
  std::size_t it = 0;
  while (it < std::max<std::size_t>(opts.max_outer, 1)) {
    ++it;
    res = decode(thetas);
    decoded_at = thetas;
    trace.push_back(res.logprob);
    auto objective = [&](const Segment& seg, double t) {
      const GainPair gp = gains_from_theta(t, ctx);
      double s = 0.0;
      for (std::size_t r = seg.begin; r < seg.end; ++r)
        s += log_b_jk(y_seq[r], px[res.path_x[r]], pv[res.path_v[r]], gp);
      return s;
    };
    const double gain = detail::update_thetas(segments, thetas, ctx, opts.search, objective);
    trace.push_back(res.logprob + gain);
    if (detail::max_abs_diff(thetas, decoded_at) < opts.outer_tol) break;
  }
  if (thetas != decoded_at) {
    res = decode(thetas);
    trace.push_back(res.logprob);
  }
  res.iterations = it;
  res.objective_trace = std::move(trace);
  return res;
}

struct GvqResult {
  std::vector<std::size_t> index_x;
  std::vector<std::size_t> index_v;
  double q = 0.0;
  double theta_hat = 0.0;
  std::vector<double> frame_thetas;
  std::vector<double> segment_thetas;
  std::size_t iterations = 1;
  std::vector<double> objective_trace;
};

/// Gain-adapted VQ inference: the same alternation with per-frame codevector
/// search in place of Viterbi and Q(theta) in place of P(theta).
inline GvqResult gvq_infer(const LogSpectrogram& y_seq, const Codebook& cb_x, const Codebook& cb_v,
                           const GainContext& ctx, const InferOptions& opts = {}) {
  require(!y_seq.empty(), "empty observation sequence");
  ctx.validate();
  const auto segments = megaframe_segments(y_seq.size(), opts.megaframe_frames);

  auto decode = [&](const std::vector<double>& seg_thetas) {
    GvqResult res;
    res.frame_thetas = expand_thetas(segments, seg_thetas, y_seq.size());
    auto score = gvq_score(y_seq, cb_x, cb_v, res.frame_thetas, ctx);
    res.index_x = std::move(score.index_x);
    res.index_v = std::move(score.index_v);
    res.q = score.q;
    res.segment_thetas = seg_thetas;
    res.theta_hat = detail::weighted_theta(segments, seg_thetas);
    return res;
  };

  if (opts.fixed_theta) {
    auto res = decode(std::vector<double>(segments.size(), *opts.fixed_theta));
    res.objective_trace = {res.q};
    return res;
  }

  std::vector<double> thetas(segments.size(),
                             std::clamp(opts.theta0, ctx.theta_min, ctx.theta_max));
  std::vector<double> trace, decoded_at;
  GvqResult res;
  std::size_t it = 0;
  while (it < std::max<std::size_t>(opts.max_outer, 1)) {
    ++it;
    res = decode(thetas);
    decoded_at = thetas;
    trace.push_back(res.q);
    auto objective = [&](const Segment& seg, double t) {
      return gvq_objective(y_seq, res.index_x, res.index_v, cb_x, cb_v, t, ctx, seg.begin, seg.end);
    };
    const double gain = detail::update_thetas(segments, thetas, ctx, opts.search, objective);
    trace.push_back(res.q + gain);
    if (detail::max_abs_diff(thetas, decoded_at) < opts.outer_tol) break;
  }
  if (thetas != decoded_at) {
    res = decode(thetas);
    trace.push_back(res.q);
  }
  res.iterations = it;
  res.objective_trace = std::move(trace);
  return res;
}

}  // namespace gfhmm

#endif  // GFHMM_DECODE_HPP
