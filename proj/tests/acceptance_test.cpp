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

// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>

#include <json.hpp>

#include "gfhmm/decode.hpp"
#include "gfhmm/eval.hpp"
#include "gfhmm/experiment.hpp"
#include "gfhmm/gain.hpp"
#include "gfhmm/mixmax.hpp"
#include "gfhmm/models.hpp"
#include "gfhmm/quantize.hpp"
#include "gfhmm/separate.hpp"
#include "gfhmm/signal.hpp"
#include "test_util.hpp"

#ifndef GFHMM_CLI_PATH
#error "GFHMM_CLI_PATH must name the CLI binary"
#endif

namespace fs = std::filesystem;
using namespace gfhmm;
using gfhmm::testing::random_hmm;
using gfhmm::testing::random_observation;
using gfhmm::testing::small_framing;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t) {
  return std::chrono::duration<double>(Clock::now() - t).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// ---- 1

Outcome viterbi_oracle() {
  const auto start = Clock::now();
  GainContext ctx;
  int instances = 0, path_mismatch = 0;
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const std::size_t k = 2 + seed % 2, r = (seed / 2) % 2 ? 5 : 3, dim = (seed / 4) % 2 ? 4 : 2;
    const auto mx = random_hmm(k, dim, 1000 + seed), mv = random_hmm(k, dim, 2000 + seed);
    const auto y = random_observation(r, dim, 3000 + seed);
    const double theta = -15.0 + 30.0 * double(seed) / 49.0;
    const auto pv = parallel_viterbi(y, mx, mv, theta, ctx);
    const auto bf = brute_force_decode(y, mx, mv, theta, ctx);
    const double rel = std::abs(pv.logprob - bf.logprob) / std::abs(bf.logprob);
    worst = std::max(worst, rel);
    if (pv.path_x != bf.path_x || pv.path_v != bf.path_v) {
      // Differing paths are acceptable only if they score the same (a tie).
      const double alt = path_loglik(pv.path_x, pv.path_v, y, mx, mv, theta, ctx);
      if (std::abs(alt - bf.logprob) > 1e-9 * std::abs(bf.logprob)) ++path_mismatch;
    }
    ++instances;
  }
  const double secs = seconds_since(start);
  return {worst <= 1e-9 && path_mismatch == 0 && secs < 5.0,
          fmt("%d instances, max rel logprob diff %.2e, %d path mismatches, %.2f s", instances,
              worst, path_mismatch, secs)};
}

// ---- 2

Outcome two_stage_recursion() {
  int checked = 0, differ = 0;
  for (std::size_t k = 1; k <= 8; ++k) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const auto mx = random_hmm(k, 3, 40000 + seed * 17 + k);
      const auto mv = random_hmm(k, 3, 50000 + seed * 19 + k);
      const auto y = random_observation(6, 3, 60000 + seed * 23 + k);
      const std::vector<double> thetas(6, double(seed % 7) - 3.0);
      const auto table = emission_table(y, prepare_states(mx), prepare_states(mv), thetas,
                                        GainContext{});
      const auto a = viterbi_from_emissions(table, mx, mv, Recursion::kTwoStage);
      const auto b = viterbi_from_emissions(table, mx, mv, Recursion::kNaive);
      std::mt19937_64 rng(seed);
      std::uniform_real_distribution<double> u(-80.0, 0.0);
      std::vector<double> delta(k * k);
      for (double& d : delta) d = u(rng);
      const auto sa = viterbi_step(delta, mx, mv, Recursion::kTwoStage);
      const auto sb = viterbi_step(delta, mx, mv, Recursion::kNaive);
      const bool same = a.logprob == b.logprob && a.path_x == b.path_x && a.path_v == b.path_v &&
                        sa.score == sb.score && sa.from == sb.from;
      differ += !same;
      ++checked;
    }
  }
  return {differ == 0, fmt("%d (K, seed) cases for K = 1..8, %d not bit-identical", checked, differ)};
}

// ---- 3

HmmModel train_toy(int speaker, const FramingConfig& cfg, std::size_t states) {
  const auto gen = make_synthetic_speaker(speaker, states, cfg, 7);
  std::vector<LogSpectrogram> utts;
  std::vector<LogSpectralFrame> all;
  for (int u = 0; u < 20; ++u) {
    utts.push_back(sample_hmm_sequence(gen, 100, 700 + 100 * speaker + u));
    all.insert(all.end(), utts.back().begin(), utts.back().end());
  }
  LbgOptions lo;
  lo.codebook_size = states;
  return baum_welch(utts, init_hmm_from_codebook(train_lbg(all, lo).codebook)).model;
}

Outcome theta_recovery() {
  const auto start = Clock::now();
  const auto cfg = small_framing();
  const auto mx = train_toy(0, cfg, 8), mv = train_toy(1, cfg, 8);
  GainContext ctx;
  int runs = 0, within = 0;
  double iters = 0.0;
  for (double theta : {0.0, 3.0, 6.0, 9.0, 12.0, 15.0}) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const auto y = gfhmm::testing::planted_mixture(mx, mv, 100, theta, ctx,
                                                     90000 + seed * 31 + std::uint64_t(theta));
      const auto res = gfhmm_infer(y, mx, mv, ctx);
      within += std::abs(res.theta_hat - theta) <= 1.0;
      iters += double(res.iterations);
      ++runs;
    }
  }
  const double secs = seconds_since(start);
  const double frac = double(within) / runs, mean_it = iters / runs;
  return {frac >= 0.9 && mean_it <= 5.0 && secs < 60.0,
          fmt("K=8 dim=33: %d/%d runs within 1 dB, mean outer iterations %.2f, %.1f s", within,
              runs, mean_it, secs)};
}

// ---- 4

Outcome gain_algebra() {
  double worst_energy = 0.0, worst_ratio = 0.0;
  int points = 0;
  for (double gy : {1.0, 0.25, 3.0}) {
    GainContext ctx;
    ctx.gy = gy;
    for (int i = 0; i <= 300; ++i) {
      const double theta = -15.0 + 0.1 * i;
      const auto gp = gains_from_theta(theta, ctx);
      const double gx = std::pow(10.0, gp.log10_gx), gv = std::pow(10.0, gp.log10_gv);
      const double target = (gy / ctx.g0) * (gy / ctx.g0);
      worst_energy = std::max(worst_energy, std::abs(gx * gx + gv * gv - target) / target);
      worst_ratio = std::max(worst_ratio, std::abs(10.0 * std::log10(gx * gx / (gv * gv)) - theta));
      ++points;
    }
  }
  return {worst_energy <= 1e-9 && worst_ratio <= 1e-9,
          fmt("%d points: energy identity err %.1e, TIR identity err %.1e dB", points, worst_energy,
              worst_ratio)};
}

// ---- 5

Outcome directional_claims() {
  const auto start = Clock::now();
  const FramingConfig cfg;
  constexpr std::size_t kStates = 16;
  std::vector<HmmModel> gens;
  std::vector<SpeakerModels> models(2);
  for (int s = 0; s < 2; ++s) {
    gens.push_back(make_synthetic_speaker(s, 8, cfg, 1));
    std::vector<LogSpectrogram> utts;
    std::vector<LogSpectralFrame> all;
    for (int u = 0; u < 20; ++u) {
      const auto a = normalize_rms(sample_hmm_audio(gens[s], 16000, 8000, cfg, 100 * s + u));
      utts.push_back(analyze(a, cfg));
      all.insert(all.end(), utts.back().begin(), utts.back().end());
    }
    LbgOptions lo;
    lo.codebook_size = kStates;
    const auto cb = train_lbg(all, lo).codebook;
    models[s].vq = cb;
    models[s].hmm = baum_welch(utts, init_hmm_from_codebook(cb)).model;
  }

  const std::vector<double> grid{0, 3, 6, 9, 12, 15};
  const std::vector<Method> methods{Method::kGfhmm, Method::kGvq, Method::kFhmm, Method::kVq};
  std::vector<std::vector<double>> mean(grid.size(), std::vector<double>(methods.size(), 0.0));
  std::vector<double> theta_hat(grid.size(), 0.0);
  constexpr int kMixtures = 10;
  for (std::size_t ti = 0; ti < grid.size(); ++ti) {
    for (int m = 0; m < kMixtures; ++m) {
      // Held-out seeds, disjoint from the training utterances.
      const auto x = sample_hmm_audio(gens[0], 16000, 8000, cfg, 50000 + 97 * m + ti);
      const auto v = sample_hmm_audio(gens[1], 16000, 8000, cfg, 60000 + 89 * m + ti);
      const auto [xn, vn] = normalize_equal_power(x, v);
      const auto mix = mix_at_tir(xn, vn, grid[ti]);
      for (std::size_t mi = 0; mi < methods.size(); ++mi) {
        SeparateOptions o;
        o.method = methods[mi];
        const auto sep = separate(mix.mixture, models[0], models[1], cfg, o);
        mean[ti][mi] += snr_db(mix.target, sep.target) / kMixtures;
        if (mi == 0) theta_hat[ti] += sep.diagnostics.theta_hat / kMixtures;
      }
    }
  }

  std::printf("    theta   gfhmm     gvq    fhmm      vq   theta_hat\n");
  for (std::size_t ti = 0; ti < grid.size(); ++ti)
    std::printf("    %5.0f  %6.2f  %6.2f  %6.2f  %6.2f  %6.2f\n", grid[ti], mean[ti][0], mean[ti][1],
                mean[ti][2], mean[ti][3], theta_hat[ti]);

  bool a_each = true;
  double margin = 0.0;
  for (std::size_t ti = 3; ti < 6; ++ti) {
    a_each = a_each && mean[ti][0] >= mean[ti][2];
    margin += (mean[ti][0] - mean[ti][2]) / 3.0;
  }
  const bool a = a_each && margin >= 3.0;
  bool b = true;
  double worst_b = std::numeric_limits<double>::infinity();
  for (std::size_t ti = 0; ti < grid.size(); ++ti) {
    b = b && mean[ti][0] >= mean[ti][1];
    worst_b = std::min(worst_b, mean[ti][0] - mean[ti][1]);
  }
  bool c = true;
  for (std::size_t ti = 1; ti < grid.size(); ++ti) c = c && mean[ti][0] >= mean[ti - 1][0];
  const double secs = seconds_since(start);
  return {a && b && c && secs < 600.0,
          fmt("(a) %s: mean GFHMM-FHMM margin at 9/12/15 dB %.2f dB; (b) %s: min GFHMM-GVQ %.2f dB; "
              "(c) %s; %.0f s",
              a ? "pass" : "FAIL", margin, b ? "pass" : "FAIL", worst_b, c ? "pass" : "FAIL", secs)};
}

// ---- 6

Outcome em_training() {
  const auto cfg = small_framing();
  int monotone_fail = 0, stop_fail = 0;
  std::size_t total_iters = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto gen = make_synthetic_speaker(int(seed % 4), 8, cfg, seed + 1);
    std::vector<LogSpectrogram> utts;
    std::vector<LogSpectralFrame> all;
    for (int u = 0; u < 10; ++u) {
      utts.push_back(sample_hmm_sequence(gen, 80, seed * 100 + u));
      all.insert(all.end(), utts.back().begin(), utts.back().end());
    }
    LbgOptions lo;
    lo.codebook_size = 8;
    const auto init = init_hmm_from_codebook(train_lbg(all, lo).codebook);
    const BaumWelchOptions opts;  // rel_tol 1e-5, 15 iterations
    const auto res = baum_welch(utts, init, opts);
    const auto& ll = res.log_likelihood;
    for (std::size_t i = 1; i < ll.size(); ++i) monotone_fail += ll[i] < ll[i - 1] - 1e-6;
    // Stopped exactly when the relative change first fell below tolerance,
    // or at the iteration cap.
    std::size_t expected = opts.max_iters;
    for (std::size_t i = 1; i < ll.size(); ++i)
      if (std::abs(ll[i] - ll[i - 1]) < opts.rel_tol * std::abs(ll[i])) {
        expected = i;
        break;
      }
    stop_fail += res.iterations != expected || ll.size() != res.iterations + 1 ||
                 res.converged != (expected < opts.max_iters ||
                                   std::abs(ll.back() - ll[ll.size() - 2]) <
                                       opts.rel_tol * std::abs(ll.back()));
    total_iters += res.iterations;
    BaumWelchOptions capped;
    capped.rel_tol = 0.0;
    capped.max_iters = 4;
    stop_fail += baum_welch(utts, init, capped).iterations != 4;
  }
  return {monotone_fail == 0 && stop_fail == 0,
          fmt("10 seeds: %d decreasing steps, %d termination mismatches, mean %.1f iterations",
              monotone_fail, stop_fail, double(total_iters) / 10.0)};
}

// ---- 7

Outcome lbg() {
  int increases = 0;
  double centroid_err = 0.0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto gen = make_synthetic_speaker(int(seed), 8, small_framing(), seed);
    const auto data = sample_hmm_sequence(gen, 1000, seed + 77);
    LbgOptions o;
    o.codebook_size = 16;
    const auto res = train_lbg(data, o);
    for (const auto& level : res.distortion)
      for (std::size_t i = 1; i < level.size(); ++i) increases += level[i] > level[i - 1];
    o.codebook_size = 1;
    const auto one = train_lbg(data, o).codebook;
    for (std::size_t d = 0; d < data.front().size(); ++d) {
      double mean = 0.0;
      for (const auto& f : data) mean += f[d];
      mean /= double(data.size());
      centroid_err = std::max(centroid_err, std::abs(one.codevectors[0][d] - mean));
    }
  }
  return {increases == 0 && centroid_err <= 1e-12,
          fmt("5 seeds, K=16: %d distortion increases; K=1 centroid err %.1e", increases,
              centroid_err)};
}

// ---- 8

Outcome reconstruction() {
  const FramingConfig cfg;
  double worst_snr = std::numeric_limits<double>::infinity(), worst_sum = 0.0;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, 1.0);
    AudioSignal s;
    for (int i = 0; i < 16000; ++i) s.samples.push_back(g(rng));
    const std::size_t r = frame_count(s.size(), cfg);
    std::vector<BinaryMask> ones(r, BinaryMask(cfg.bins(), 1)), mx(r, BinaryMask(cfg.bins())), mv = mx;
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t d = 0; d < cfg.bins(); ++d) {
        mx[i][d] = rng() & 1;
        mv[i][d] = 1 - mx[i][d];
      }
    const auto unity = reconstruct(s, ones, cfg);
    double num = 0, den = 0;
    for (std::size_t t = cfg.frame_len / 2; t + cfg.frame_len / 2 < s.size(); ++t) {
      num += s.samples[t] * s.samples[t];
      den += (s.samples[t] - unity.samples[t]) * (s.samples[t] - unity.samples[t]);
    }
    worst_snr = std::min(worst_snr, 10 * std::log10(num / den));
    const auto [xh, vh] = apply_masks_and_reconstruct(s, mx, mv, cfg);
    for (std::size_t t = 0; t < s.size(); ++t)
      worst_sum = std::max(worst_sum, std::abs(xh.samples[t] + vh.samples[t] - unity.samples[t]));
  }
  return {worst_snr >= 30.0 && worst_sum <= 1e-10,
          fmt("unity-mask interior SNR %.1f dB; complementary sum err %.1e", worst_snr, worst_sum)};
}

// ---- 9

Outcome theta_search() {
  std::vector<double> xs;
  const auto par = maximize_theta(
      [&](double t) {
        xs.push_back(t);
        return 4.0 - 0.5 * (t - 5.0) * (t - 5.0);
      },
      -15, 15);
  const bool one_fit = xs.size() >= 4 && std::abs(xs[3] - 5.0) <= 1e-9 && std::abs(par.theta - 5.0) <= 1e-9;
  const auto cfg = small_framing();
  GainContext ctx;
  int agree = 0;
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto mx = make_synthetic_speaker(0, 4, cfg, seed + 10);
    const auto mv = make_synthetic_speaker(1, 4, cfg, seed + 10);
    const double theta = -12.0 + 1.3 * double(seed);
    const auto y = gfhmm::testing::planted_mixture(mx, mv, 50, theta, ctx, seed + 500);
    const auto dec = parallel_viterbi(y, mx, mv, 0.0, ctx);
    auto obj = [&](double t) { return path_loglik(dec.path_x, dec.path_v, y, mx, mv, t, ctx); };
    double best_t = -15.0, best = -std::numeric_limits<double>::infinity();
    for (int i = 0; i <= 3000; ++i) {
      const double t = -15.0 + 0.01 * i;
      const double v = obj(t);
      if (v > best) best = v, best_t = t;
    }
    const double err = std::abs(maximize_theta(obj, -15, 15).theta - best_t);
    worst = std::max(worst, err);
    agree += err <= 0.1;
  }
  return {one_fit && agree == 20,
          fmt("first fit lands %.1e from the parabola vertex (%zu evaluations total); %d/20 planted objectives within "
              "0.1 dB of the 0.01 dB grid (worst %.3f)",
              xs.size() >= 4 ? std::abs(xs[3] - 5.0) : 1e9, par.evaluations, agree, worst)};
}

// ---- 10

int run(const std::string& cmd) {
  const int rc = std::system((cmd + " > /dev/null 2>&1").c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::size_t count_rows(const fs::path& csv) {
  std::ifstream in(csv);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) n += !line.empty();
  return n == 0 ? 0 : n - 1;
}

Outcome cli_smoke() {
  const auto start = Clock::now();
  const std::string cli = GFHMM_CLI_PATH;
  const fs::path dir = fs::temp_directory_path() / "gfhmm_acceptance_cli";
  fs::remove_all(dir);
  fs::create_directories(dir);
  auto p = [&](const std::string& name) { return (dir / name).string(); };
  std::vector<std::string> failures;
  auto step = [&](const std::string& what, const std::string& cmd) {
    const int rc = run(cmd);
    if (rc != 0) failures.push_back(what + " (exit " + std::to_string(rc) + ")");
  };

  for (int s = 0; s < 2; ++s) {
    fs::create_directories(dir / ("spk" + std::to_string(s)));
    for (int u = 0; u < 6; ++u)
      step("synth", cli + " synth --kind hmm_sample --states 8 --speaker " + std::to_string(s) +
                        " --seed " + std::to_string(u) + " --duration 1 --out " +
                        p("spk" + std::to_string(s) + "/u" + std::to_string(u) + ".wav"));
    for (const char* kind : {"vq", "hmm"})
      step(std::string("train ") + kind,
           cli + " train --kind " + kind + " --states 4 --max-iters 3 --speaker-dir " +
               p("spk" + std::to_string(s)) + " --out " + p("spk" + std::to_string(s) + "." + kind));
  }
  step("synth", cli + " synth --kind hmm_sample --speaker 0 --seed 100 --duration 1 --out " + p("x.wav"));
  step("synth", cli + " synth --kind hmm_sample --speaker 1 --seed 101 --duration 1 --out " + p("v.wav"));
  step("mix", cli + " mix --target " + p("x.wav") + " --interf " + p("v.wav") + " --tir 6 --out " + p("y.wav"));
  for (const char* m : {"gfhmm", "gvq", "fhmm", "vq"}) {
    const std::string ext = (std::string(m) == "gfhmm" || std::string(m) == "fhmm") ? "hmm" : "vq";
    step(std::string("separate ") + m,
         cli + " separate --mixture " + p("y.wav") + " --model-x " + p("spk0." + ext) + " --model-v " +
             p("spk1." + ext) + " --method " + m + " --out-x " + p(std::string(m) + "_x.wav") +
             " --out-v " + p(std::string(m) + "_v.wav"));
  }
  nlohmann::json manifest{
      {"theta_grid", {0, 6}},
      {"methods", {"gfhmm", "gvq", "fhmm", "vq"}},
      {"speakers",
       {{"a", {{"hmm", "spk0.hmm"}, {"vq", "spk0.vq"}}}, {"b", {{"hmm", "spk1.hmm"}, {"vq", "spk1.vq"}}}}},
      {"pairs",
       {{{"id", "p0"}, {"target_speaker", "a"}, {"interf_speaker", "b"}, {"target", {{"wav", "x.wav"}}},
         {"interf", {{"wav", "v.wav"}}}}}}};
  std::ofstream(p("manifest.json")) << manifest.dump(2);
  step("evaluate", cli + " evaluate --manifest " + p("manifest.json") + " --out " + p("results.csv"));
  step("report", cli + " report --in " + p("results.csv") + " --out " + p("curves.csv"));
  const std::size_t rows = count_rows(dir / "results.csv"), curves = count_rows(dir / "curves.csv");
  const bool usage = run(cli + " separate --bogus-flag") == 1;
  const double secs = seconds_since(start);
  std::string why;
  for (const auto& f : failures) why += " " + f + ";";
  return {failures.empty() && rows == 8 && curves == 8 && usage && secs < 120.0,
          fmt("%zu result rows (expect 8), %zu curve rows (expect 8), unknown flag exit 1: %s, "
              "%.1f s%s",
              rows, curves, usage ? "yes" : "no", secs, why.c_str())};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"Viterbi oracle equivalence", viterbi_oracle},
      {"two-stage recursion equals naive", two_stage_recursion},
      {"planted theta recovery", theta_recovery},
      {"gain algebra exactness", gain_algebra},
      {"directional separation claims", directional_claims},
      {"EM training", em_training},
      {"LBG", lbg},
      {"reconstruction fidelity", reconstruction},
      {"theta maximization", theta_search},
      {"CLI end-to-end", cli_smoke},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("criterion %2zu %s  %s: %s\n", i + 1, o.pass ? "PASS" : "FAIL",
                criteria[i].first.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", int(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
