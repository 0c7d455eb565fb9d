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

// End-to-end separation: analysis, inference, binary masks, resynthesis.

#ifndef GFHMM_SEPARATE_HPP
#define GFHMM_SEPARATE_HPP

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "gfhmm/decode.hpp"
#include "gfhmm/error.hpp"
#include "gfhmm/gain.hpp"
#include "gfhmm/models.hpp"
#include "gfhmm/quantize.hpp"
#include "gfhmm/signal.hpp"

namespace gfhmm {

enum class Method {
  kGfhmm,  // gain-adapted factorial HMM
  kGvq,    // gain-adapted VQ
  kFhmm,   // factorial HMM with unit gains
  kVq,     // VQ with unit gains
};

inline std::string_view method_name(Method m) {
  switch (m) {
    case Method::kGfhmm: return "gfhmm";
    case Method::kGvq: return "gvq";
    case Method::kFhmm: return "fhmm";
    case Method::kVq: return "vq";
  }
  return "?";
}

inline Method parse_method(std::string_view s) {
  if (s == "gfhmm") return Method::kGfhmm;
  if (s == "gvq") return Method::kGvq;
  if (s == "fhmm") return Method::kFhmm;
  if (s == "vq") return Method::kVq;
  fail(ErrorKind::kInvalidArgument, "unknown method '" + std::string(s) + "'");
}

inline bool uses_hmm(Method m) { return m == Method::kGfhmm || m == Method::kFhmm; }

using MaskPair = std::pair<std::vector<BinaryMask>, std::vector<BinaryMask>>;

namespace detail {

/// H_x(d) = 1 iff the shifted target template is >= the shifted interference
/// template; H_v = 1 - H_x.
template <class TemplateX, class TemplateV>
MaskPair dominance_masks(std::size_t frames, std::size_t dim, std::span<const double> frame_thetas,
                         const GainContext& ctx, TemplateX&& tx, TemplateV&& tv) {
  require(frame_thetas.size() == frames, "theta schedule length does not match frames");
  MaskPair out{std::vector<BinaryMask>(frames, BinaryMask(dim)),
               std::vector<BinaryMask>(frames, BinaryMask(dim))};
  for (std::size_t r = 0; r < frames; ++r) {
    const GainPair gp = gains_from_theta(frame_thetas[r], ctx);
    const std::vector<double>& mx = tx(r);
    const std::vector<double>& mv = tv(r);
    for (std::size_t d = 0; d < dim; ++d) {
      const bool target = mx[d] + gp.log10_gx >= mv[d] + gp.log10_gv;
      out.first[r][d] = target ? 1 : 0;
      out.second[r][d] = target ? 0 : 1;
    }
  }
  return out;
}

}  // namespace detail

inline MaskPair build_hmm_masks(const DecodeResult& result, const HmmModel& lx, const HmmModel& lv,
                                const GainContext& ctx) {
  const std::size_t frames = result.path_x.size();
  require(result.path_v.size() == frames, "decoded paths differ in length");
  for (std::size_t r = 0; r < frames; ++r)
    require(result.path_x[r] < lx.num_states() && result.path_v[r] < lv.num_states(),
            "state index out of range");
  std::vector<double> thetas = result.frame_thetas;
  if (thetas.size() != frames) thetas.assign(frames, result.theta_hat);
  return detail::dominance_masks(
      frames, lx.dim(), thetas, ctx,
      [&](std::size_t r) -> const std::vector<double>& { return lx.states[result.path_x[r]].mean; },
      [&](std::size_t r) -> const std::vector<double>& { return lv.states[result.path_v[r]].mean; });
}

inline MaskPair build_vq_masks(std::span<const std::size_t> index_x,
                               std::span<const std::size_t> index_v, const Codebook& cb_x,
                               const Codebook& cb_v, const GainContext& ctx,
                               std::span<const double> frame_thetas) {
  const std::size_t frames = index_x.size();
  require(index_v.size() == frames, "index sequences differ in length");
  for (std::size_t r = 0; r < frames; ++r)
    require(index_x[r] < cb_x.size() && index_v[r] < cb_v.size(), "codevector index out of range");
  return detail::dominance_masks(
      frames, cb_x.dim(), frame_thetas, ctx,
      [&](std::size_t r) -> const std::vector<double>& { return cb_x.codevectors[index_x[r]]; },
      [&](std::size_t r) -> const std::vector<double>& { return cb_v.codevectors[index_v[r]]; });
}

inline MaskPair build_vq_masks(std::span<const std::size_t> index_x,
                               std::span<const std::size_t> index_v, const Codebook& cb_x,
                               const Codebook& cb_v, const GainContext& ctx, double theta_hat) {
  const std::vector<double> thetas(index_x.size(), theta_hat);
  return build_vq_masks(index_x, index_v, cb_x, cb_v, ctx, thetas);
}

/// The models available for one speaker. HMM methods need `hmm`, VQ methods
/// need `vq`.
struct SpeakerModels {
  std::optional<HmmModel> hmm;
  std::optional<Codebook> vq;
};

struct SeparateOptions {
  Method method = Method::kGfhmm;
  double theta0 = 0.0;
  std::optional<double> fixed_theta;
  /// Force g_y/G0 = sqrt(2) (both gains one at theta = 0).
  bool unit_gains = false;
  double g0 = 1.0;
  double theta_min = -15.0;
  double theta_max = 15.0;
  double outer_tol = 0.25;
  std::size_t max_outer = 10;
  ThetaSearchOptions search;
  double megaframe_seconds = 2.0;
};

struct SeparationDiagnostics {
  Method method = Method::kGfhmm;
  double gy = 0.0;
  double theta_hat = 0.0;
  std::vector<double> segment_thetas;
  std::size_t iterations = 0;
  double score = 0.0;  // P(theta) for HMM methods, Q(theta) for VQ methods
  std::vector<std::size_t> path_x;
  std::vector<std::size_t> path_v;
  std::vector<double> frame_thetas;
};

struct Separation {
  AudioSignal target;
  AudioSignal interference;
  SeparationDiagnostics diagnostics;
};

inline Separation separate(const AudioSignal& mixture, const SpeakerModels& model_x,
                           const SpeakerModels& model_v, const FramingConfig& cfg,
                           const SeparateOptions& opts) {
  cfg.validate();
  const Method method = opts.method;
  const bool hmm = uses_hmm(method);
  const bool baseline = method == Method::kFhmm || method == Method::kVq;
  if (hmm)
    require(model_x.hmm && model_v.hmm, std::string(method_name(method)) + " requires HMM models",
            ErrorKind::kModelMismatch);
  else
    require(model_x.vq && model_v.vq, std::string(method_name(method)) + " requires VQ models",
            ErrorKind::kModelMismatch);
  const std::size_t dim = hmm ? model_x.hmm->dim() : model_x.vq->dim();
  require(dim == cfg.bins(), "model dimension does not match framing", ErrorKind::kModelMismatch);

  const auto y_seq = analyze(mixture, cfg);
  GainContext ctx;
  ctx.theta_min = opts.theta_min;
  ctx.theta_max = opts.theta_max;
  ctx.g0 = opts.g0;
  ctx.gy = estimate_gy(mixture);
  if (baseline || opts.unit_gains) {
    ctx.gy = std::sqrt(2.0) * opts.g0;
  }

  InferOptions infer;
  infer.theta0 = opts.theta0;
  infer.outer_tol = opts.outer_tol;
  infer.max_outer = opts.max_outer;
  infer.search = opts.search;
  infer.megaframe_frames = std::size_t(std::lround(opts.megaframe_seconds * mixture.sample_rate /
                                                   double(cfg.hop)));
  infer.fixed_theta = baseline ? std::optional<double>(0.0) : opts.fixed_theta;

  SeparationDiagnostics diag;
  diag.method = method;
  diag.gy = ctx.gy;
  MaskPair masks;
  if (hmm) {
    const auto res = gfhmm_infer(y_seq, *model_x.hmm, *model_v.hmm, ctx, infer);
    masks = build_hmm_masks(res, *model_x.hmm, *model_v.hmm, ctx);
    diag.theta_hat = res.theta_hat;
    diag.segment_thetas = res.segment_thetas;
    diag.iterations = res.iterations;
    diag.score = res.logprob;
    diag.path_x = res.path_x;
    diag.path_v = res.path_v;
    diag.frame_thetas = res.frame_thetas;
  } else {
    const auto res = gvq_infer(y_seq, *model_x.vq, *model_v.vq, ctx, infer);
    masks = build_vq_masks(res.index_x, res.index_v, *model_x.vq, *model_v.vq, ctx,
                           res.frame_thetas);
    diag.theta_hat = res.theta_hat;
    diag.segment_thetas = res.segment_thetas;
    diag.iterations = res.iterations;
    diag.score = res.q;
    diag.path_x = res.index_x;
    diag.path_v = res.index_v;
    diag.frame_thetas = res.frame_thetas;
  }
  auto [xh, vh] = apply_masks_and_reconstruct(mixture, masks.first, masks.second, cfg);
  return {std::move(xh), std::move(vh), std::move(diag)};
}

}  // namespace gfhmm

#endif  // GFHMM_SEPARATE_HPP
