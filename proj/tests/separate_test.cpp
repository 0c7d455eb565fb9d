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

#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "gfhmm/eval.hpp"
#include "gfhmm/separate.hpp"
#include "test_util.hpp"

namespace gfhmm {
namespace {

using testing::random_hmm;

Codebook codebook_from(const HmmModel& m) {
  Codebook cb;
  for (const auto& s : m.states) {
    cb.codevectors.push_back(s.mean);
    cb.variances.push_back(s.var);
    cb.occupancy.push_back(1);
  }
  return cb;
}

TEST(HmmMasks, DominantTargetGivesAllOnes) {
  auto mx = random_hmm(2, 6, 1), mv = random_hmm(2, 6, 2);
  for (auto& s : mx.states)
    for (double& v : s.mean) v += 10.0;
  DecodeResult res;
  res.path_x = {0, 1, 1};
  res.path_v = {1, 0, 1};
  res.frame_thetas.assign(3, 0.0);
  const auto [hx, hv] = build_hmm_masks(res, mx, mv, GainContext{});
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t d = 0; d < 6; ++d) {
      EXPECT_EQ(hx[r][d], 1);
      EXPECT_EQ(hv[r][d], 0);
    }
}

TEST(HmmMasks, EqualShiftedMeansGoToTarget) {
  HmmModel m = random_hmm(1, 4, 3);
  DecodeResult res;
  res.path_x = {0};
  res.path_v = {0};
  res.frame_thetas = {0.0};
  const auto [hx, hv] = build_hmm_masks(res, m, m, GainContext{});
  for (auto b : hx[0]) EXPECT_EQ(b, 1);
}

TEST(HmmMasks, MatchesElementwiseRecomputation) {
  const auto mx = random_hmm(4, 9, 4), mv = random_hmm(4, 9, 5);
  GainContext ctx;
  ctx.gy = 0.7;
  std::mt19937_64 rng(6);
  DecodeResult res;
  for (int r = 0; r < 12; ++r) {
    res.path_x.push_back(rng() % 4);
    res.path_v.push_back(rng() % 4);
  }
  res.theta_hat = 3.0;
  res.frame_thetas.assign(12, 3.0);
  const auto [hx, hv] = build_hmm_masks(res, mx, mv, ctx);
  const double gx = std::log10(0.7) - 0.5 * std::log10(1 + std::pow(10.0, -0.3));
  const double gv = std::log10(0.7) - 0.5 * std::log10(1 + std::pow(10.0, 0.3));
  for (std::size_t r = 0; r < 12; ++r)
    for (std::size_t d = 0; d < 9; ++d) {
      const bool t = mx.states[res.path_x[r]].mean[d] + gx >= mv.states[res.path_v[r]].mean[d] + gv;
      EXPECT_EQ(hx[r][d], t ? 1 : 0);
      EXPECT_EQ(hx[r][d] + hv[r][d], 1);
    }
}

TEST(HmmMasks, OutOfRangeStateThrows) {
  const auto m = random_hmm(2, 3, 7);
  DecodeResult res;
  res.path_x = {0, 2};
  res.path_v = {0, 0};
  EXPECT_THROW(build_hmm_masks(res, m, m, GainContext{}), Error);
}

TEST(VqMasks, IdenticalCodebooksPositiveThetaFavourTarget) {
  const auto cb = codebook_from(random_hmm(3, 5, 8));
  const std::vector<std::size_t> idx{0, 1, 2, 1};
  const auto [hx, hv] = build_vq_masks(idx, idx, cb, cb, GainContext{}, 2.0);
  for (const auto& m : hx)
    for (auto b : m) EXPECT_EQ(b, 1);
  for (const auto& m : hv)
    for (auto b : m) EXPECT_EQ(b, 0);
}

TEST(VqMasks, RandomCaseMatchesRecomputation) {
  const auto cx = codebook_from(random_hmm(3, 7, 9)), cv = codebook_from(random_hmm(3, 7, 10));
  GainContext ctx;
  const std::vector<std::size_t> ix{0, 2, 1, 1}, iv{2, 2, 0, 1};
  const auto [hx, hv] = build_vq_masks(ix, iv, cx, cv, ctx, -4.0);
  const auto gp = gains_from_theta(-4.0, ctx);
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t d = 0; d < 7; ++d) {
      const bool t = cx.codevectors[ix[r]][d] + gp.log10_gx >= cv.codevectors[iv[r]][d] + gp.log10_gv;
      EXPECT_EQ(hx[r][d], t ? 1 : 0);
      EXPECT_EQ(hv[r][d], 1 - hx[r][d]);
    }
}

class Pipeline : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    const FramingConfig c;
    for (int s = 0; s < 2; ++s) {
      gen[s] = make_synthetic_speaker(s, 8, c, 1);
      std::vector<LogSpectrogram> utts;
      std::vector<LogSpectralFrame> all;
      for (int u = 0; u < 8; ++u) {
        utts.push_back(analyze(normalize_rms(sample_hmm_audio(gen[s], 16000, 8000, c, 100 * s + u)), c));
        all.insert(all.end(), utts.back().begin(), utts.back().end());
      }
      LbgOptions lo;
      lo.codebook_size = 8;
      models[s].vq = train_lbg(all, lo).codebook;
      models[s].hmm = baum_welch(utts, init_hmm_from_codebook(*models[s].vq)).model;
    }
  }
  void SetUp() override {
    sx = models[0];
    sv = models[1];
    x = held_out(0, 0);
    v = held_out(1, 0);
  }
  static AudioSignal held_out(int speaker, int k) {
    return normalize_rms(sample_hmm_audio(gen[speaker], 16000, 8000, FramingConfig{}, 9000 + 31 * speaker + k));
  }
  Separation run(const AudioSignal& y, Method m) {
    SeparateOptions o;
    o.method = m;
    return separate(y, sx, sv, cfg, o);
  }
  double mean_snr(double tir, Method m, double* theta_hat = nullptr) {
    double snr = 0.0;
    if (theta_hat) *theta_hat = 0.0;
    for (int k = 0; k < 3; ++k) {
      const auto mix = mix_at_tir(held_out(0, k), held_out(1, k), tir);
      const auto sep = run(mix.mixture, m);
      snr += snr_db(mix.target, sep.target) / 3.0;
      if (theta_hat) *theta_hat += sep.diagnostics.theta_hat / 3.0;
    }
    return snr;
  }
  static inline HmmModel gen[2];
  static inline SpeakerModels models[2];
  FramingConfig cfg;
  SpeakerModels sx, sv;
  AudioSignal x, v;
};

TEST_F(Pipeline, OutputsSumToUnityReconstruction) {
  const auto mix = mix_at_tir(x, v, 6.0);
  const auto sep = run(mix.mixture, Method::kGfhmm);
  std::vector<BinaryMask> ones(frame_count(mix.mixture.size(), cfg), BinaryMask(cfg.bins(), 1));
  const auto unity = reconstruct(mix.mixture, ones, cfg);
  for (std::size_t t = 0; t < unity.size(); ++t)
    EXPECT_NEAR(sep.target.samples[t] + sep.interference.samples[t], unity.samples[t], 1e-10);
}

TEST_F(Pipeline, Deterministic) {
  const auto mix = mix_at_tir(x, v, 3.0);
  const auto a = run(mix.mixture, Method::kGfhmm), b = run(mix.mixture, Method::kGfhmm);
  EXPECT_EQ(a.target.samples, b.target.samples);
  EXPECT_EQ(a.diagnostics.path_x, b.diagnostics.path_x);
  EXPECT_EQ(a.diagnostics.theta_hat, b.diagnostics.theta_hat);
}

TEST_F(Pipeline, VqBaselineEqualsGvqAtZeroWithUnitGains) {
  const auto mix = mix_at_tir(x, v, 9.0);
  const auto vq = run(mix.mixture, Method::kVq);
  SeparateOptions o;
  o.method = Method::kGvq;
  o.fixed_theta = 0.0;
  o.unit_gains = true;
  const auto gvq = separate(mix.mixture, sx, sv, cfg, o);
  EXPECT_EQ(vq.target.samples, gvq.target.samples);
  EXPECT_EQ(vq.interference.samples, gvq.interference.samples);
  EXPECT_EQ(vq.diagnostics.theta_hat, 0.0);
  EXPECT_NEAR(vq.diagnostics.gy, std::sqrt(2.0), 1e-15);
}

TEST_F(Pipeline, EqualPowerMixtureEstimatesNearZero) {
  double theta_hat = 0.0;
  EXPECT_GT(mean_snr(0.0, Method::kGfhmm, &theta_hat), 0.0);
  EXPECT_LT(std::abs(theta_hat), 3.0);
}

TEST_F(Pipeline, GainAdaptedBeatsFhmmAtFifteen) {
  double theta_hat = 0.0;
  EXPECT_GT(mean_snr(15.0, Method::kGfhmm, &theta_hat), mean_snr(15.0, Method::kFhmm));
  EXPECT_GT(theta_hat, 6.0);
}

TEST_F(Pipeline, Errors) {
  SpeakerModels only_vq;
  only_vq.vq = sx.vq;
  SeparateOptions o;
  try {
    separate(x, only_vq, sv, cfg, o);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kModelMismatch);
  }
  AudioSignal silent{std::vector<double>(4000, 0.0), 8000};
  EXPECT_THROW(separate(silent, sx, sv, cfg, o), Error);
  FramingConfig other = cfg;
  other.dft_size = 512;
  other.frame_len = 512;
  EXPECT_THROW(separate(x, sx, sv, other, o), Error);
}

}  // namespace
}  // namespace gfhmm
