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

// gfhmm: synth, mix, train, separate, evaluate and report from the shell.
//
// Exit codes: 0 ok, 1 usage, 2 I/O, 3 model mismatch, 4 numeric failure.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "gfhmm/error.hpp"
#include "gfhmm/eval.hpp"
#include "gfhmm/experiment.hpp"
#include "gfhmm/model_io.hpp"
#include "gfhmm/models.hpp"
#include "gfhmm/quantize.hpp"
#include "gfhmm/separate.hpp"
#include "gfhmm/signal.hpp"
#include "gfhmm/wav.hpp"

namespace fs = std::filesystem;
using namespace gfhmm;

namespace {

struct FramingFlags {
  int sample_rate = 8000;
  std::size_t frame_len = 256;
  std::size_t hop = 80;
  std::size_t dft_size = 256;

  void add(CLI::App* app) {
    app->add_option("--sample-rate", sample_rate, "Sample rate in Hz")->capture_default_str();
    app->add_option("--frame-len", frame_len, "Analysis frame length in samples")
        ->capture_default_str();
    app->add_option("--hop", hop, "Frame shift in samples")->capture_default_str();
    app->add_option("--dft-size", dft_size, "DFT size")->capture_default_str();
  }
  FramingConfig config() const {
    FramingConfig cfg;
    cfg.frame_len = frame_len;
    cfg.hop = hop;
    cfg.dft_size = dft_size;
    cfg.validate();
    return cfg;
  }
  ModelMetadata meta() const { return {sample_rate, config()}; }
};

int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::kInvalidArgument: return 1;
    case ErrorKind::kIo: return 2;
    case ErrorKind::kModelMismatch: return 3;
    case ErrorKind::kNumeric: return 4;
  }
  return 4;
}

std::string with_suffix(const std::string& path, const std::string& suffix) {
  fs::path p(path);
  return (p.parent_path() / (p.stem().string() + suffix + p.extension().string())).string();
}

// ---- synth

struct SynthArgs {
  std::string kind = "hmm_sample";
  int speaker = 0;
  std::uint64_t seed = 0;
  double duration = 2.0;
  std::string model;
  std::size_t states = 8;
  std::string save_generator;
  std::string out;
  FramingFlags framing;
};

void cmd_synth(const SynthArgs& a) {
  const FramingConfig cfg = a.framing.config();
  SynthSpec spec;
  spec.kind = parse_synth_kind(a.kind);
  spec.speaker = a.speaker;
  spec.seed = a.seed;
  spec.duration = a.duration;
  spec.sample_rate = a.framing.sample_rate;
  HmmModel gen;
  if (spec.kind == SynthKind::kHmmSample) {
    if (!a.model.empty())
      gen = std::get<HmmModel>(load_model_checked(a.model, ModelKind::kHmm, a.framing.meta()).model);
    else
      gen = make_synthetic_speaker(a.speaker, a.states, cfg);
    spec.model = &gen;
    if (!a.save_generator.empty()) save_model(a.save_generator, {a.framing.meta(), gen});
  }
  AudioSignal s = normalize_rms(synth_source(spec, cfg));
  // Unit RMS does not fit 16-bit PCM; keep the peak at 0.9.
  double peak = 0.0;
  for (double v : s.samples) peak = std::max(peak, std::abs(v));
  write_wav(a.out, scaled(s, 0.9 / peak));
}

// ---- mix

struct MixArgs {
  std::string target, interf, out, out_target, out_interf;
  double tir = 0.0;
  int sample_rate = 8000;
};

void cmd_mix(const MixArgs& a) {
  const AudioSignal x = read_wav(a.target, a.sample_rate);
  const AudioSignal v = read_wav(a.interf, a.sample_rate);
  const auto [xn, vn] = normalize_equal_power(x, v);
  const Mixture m = mix_at_tir(xn, vn, a.tir);
  double peak = 0.0;
  for (double s : m.mixture.samples) peak = std::max(peak, std::abs(s));
  require(peak > 0.0, "silent mixture", ErrorKind::kNumeric);
  // Mixture and components share one scale so they still sum to the mixture.
  const double c = 0.9 / peak;
  write_wav(a.out, scaled(m.mixture, c));
  write_wav(a.out_target.empty() ? with_suffix(a.out, ".target") : a.out_target,
            scaled(m.target, c));
  write_wav(a.out_interf.empty() ? with_suffix(a.out, ".interf") : a.out_interf,
            scaled(m.interference, c));
  std::printf("gx %.6f gv %.6f scale %.6f\n", m.gx, m.gv, c);
}

// ---- train

struct TrainArgs {
  std::string kind = "hmm";
  std::string speaker_dir;
  std::size_t states = 64;
  std::string out;
  std::size_t max_iters = 15;
  double tol = 1e-5;
  std::uint64_t seed = 0;
  FramingFlags framing;
};

void cmd_train(const TrainArgs& a) {
  require(a.kind == "vq" || a.kind == "hmm", "--kind must be vq or hmm");
  const FramingConfig cfg = a.framing.config();
  if (!fs::is_directory(a.speaker_dir)) fail(ErrorKind::kIo, "not a directory: " + a.speaker_dir);
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(a.speaker_dir))
    if (e.is_regular_file() && e.path().extension() == ".wav") files.push_back(e.path());
  require(!files.empty(), "no WAV files found in " + a.speaker_dir, ErrorKind::kIo);
  std::sort(files.begin(), files.end());

  // Every utterance is scaled to unit RMS, so G0 = 1 for the trained model.
  std::vector<LogSpectrogram> utts;
  std::vector<LogSpectralFrame> frames;
  for (const auto& f : files) {
    utts.push_back(analyze(normalize_rms(read_wav(f.string(), a.framing.sample_rate)), cfg));
    frames.insert(frames.end(), utts.back().begin(), utts.back().end());
  }
  std::printf("%zu files, %zu frames\n", files.size(), frames.size());

  LbgOptions lo;
  lo.codebook_size = a.states;
  const LbgResult lbg = train_lbg(frames, lo);
  std::printf("lbg distortion %.6f\n", lbg.distortion.back().back());
  if (a.kind == "vq") {
    save_model(a.out, {a.framing.meta(), lbg.codebook});
    return;
  }
  BaumWelchOptions bo;
  bo.max_iters = a.max_iters;
  bo.rel_tol = a.tol;
  const auto res = baum_welch(utts, init_hmm_from_codebook(lbg.codebook), bo,
                              [](std::size_t it, double ll) {
                                std::printf("iter %zu ll %.6f\n", it, ll);
                                std::fflush(stdout);
                              });
  std::printf("%s after %zu iterations\n", res.converged ? "converged" : "stopped",
              res.iterations);
  save_model(a.out, {a.framing.meta(), res.model});
}

// ---- separate

struct SeparateArgs {
  std::string mixture, model_x, model_v, out_x, out_v, diagnostics;
  std::string method = "gfhmm";
  double theta0 = 0.0;
  std::optional<double> fix_theta;
  bool unit_gains = false;
  double g0 = 1.0;
  std::size_t max_outer = 10;
  double outer_tol = 0.25;
  std::uint64_t seed = 0;
};

SpeakerModels load_speaker(const std::string& path, Method method) {
  const ModelFile f = load_model(path);
  SpeakerModels sm;
  if (uses_hmm(method)) {
    require(f.kind() == ModelKind::kHmm,
            path + ": " + std::string(method_name(method)) + " needs an HMM model, found VQ",
            ErrorKind::kModelMismatch);
    sm.hmm = std::get<HmmModel>(f.model);
  } else {
    require(f.kind() == ModelKind::kVq,
            path + ": " + std::string(method_name(method)) + " needs a VQ model, found HMM",
            ErrorKind::kModelMismatch);
    sm.vq = std::get<Codebook>(f.model);
  }
  return sm;
}

void cmd_separate(const SeparateArgs& a) {
  const Method method = parse_method(a.method);
  const ModelMetadata meta = load_model(a.model_x).meta;
  require(load_model(a.model_v).meta == meta,
          "target and interference models use different analysis settings",
          ErrorKind::kModelMismatch);
  const SpeakerModels mx = load_speaker(a.model_x, method);
  const SpeakerModels mv = load_speaker(a.model_v, method);
  const AudioSignal y = read_wav(a.mixture, meta.sample_rate);

  SeparateOptions opts;
  opts.method = method;
  opts.theta0 = a.theta0;
  opts.fixed_theta = a.fix_theta;
  opts.unit_gains = a.unit_gains;
  opts.g0 = a.g0;
  opts.max_outer = a.max_outer;
  opts.outer_tol = a.outer_tol;
  const Separation sep = separate(y, mx, mv, meta.framing, opts);
  write_wav(a.out_x, sep.target);
  write_wav(a.out_v, sep.interference);
  const auto& d = sep.diagnostics;
  std::printf("method %s theta_hat %.4f iterations %zu score %.6f\n",
              std::string(method_name(d.method)).c_str(), d.theta_hat, d.iterations, d.score);
  if (!a.diagnostics.empty()) {
    nlohmann::json j;
    j["method"] = method_name(d.method);
    j["gy"] = d.gy;
    j["theta_hat"] = d.theta_hat;
    j["segment_thetas"] = d.segment_thetas;
    j["iterations"] = d.iterations;
    j["score"] = d.score;
    j["path_x"] = d.path_x;
    j["path_v"] = d.path_v;
    std::ofstream out(a.diagnostics);
    if (!out) fail(ErrorKind::kIo, "cannot write " + a.diagnostics);
    out << j.dump(2) << '\n';
  }
}

// ---- evaluate / report

void cmd_evaluate(const std::string& manifest, const std::string& out_path, std::size_t jobs) {
  const Manifest m = load_manifest(manifest);
  const auto rows = run_experiment(m, jobs);
  std::ofstream out(out_path);
  if (!out) fail(ErrorKind::kIo, "cannot write " + out_path);
  write_results_csv(out, rows);
  std::size_t errors = 0;
  for (const auto& r : rows) errors += !r.error.empty();
  std::printf("%zu runs, %zu errors\n", rows.size(), errors);
}

void cmd_report(const std::string& in_path, const std::string& out_path) {
  std::ifstream in(in_path);
  if (!in) fail(ErrorKind::kIo, "cannot open " + in_path);
  const auto curves = aggregate(read_results_csv(in));
  std::ofstream out(out_path);
  if (!out) fail(ErrorKind::kIo, "cannot write " + out_path);
  write_curves_csv(out, curves);
  write_curves_csv(std::cout, curves);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gain-adapted factorial HMM speech separation"};
  app.require_subcommand(1);

  SynthArgs sy;
  auto* synth = app.add_subcommand("synth", "Write a synthetic source signal");
  synth->add_option("--kind", sy.kind, "hmm_sample, tonal or filtered_noise")
      ->check(CLI::IsMember({"hmm_sample", "tonal", "filtered_noise"}))
      ->capture_default_str();
  synth->add_option("--speaker", sy.speaker, "Speaker number")->capture_default_str();
  synth->add_option("--seed", sy.seed, "Random seed")->capture_default_str();
  synth->add_option("--duration", sy.duration, "Seconds")->capture_default_str();
  synth->add_option("--model", sy.model, "Generator HMM for hmm_sample");
  synth->add_option("--states", sy.states, "States of the built-in generator")
      ->capture_default_str();
  synth->add_option("--save-generator", sy.save_generator, "Write the generator model here");
  synth->add_option("--out", sy.out, "Output WAV")->required();
  sy.framing.add(synth);

  MixArgs mx;
  auto* mix = app.add_subcommand("mix", "Mix two sources at a target-to-interference ratio");
  mix->add_option("--target", mx.target, "Target WAV")->required();
  mix->add_option("--interf", mx.interf, "Interference WAV")->required();
  mix->add_option("--tir", mx.tir, "TIR in dB")->capture_default_str();
  mix->add_option("--out", mx.out, "Mixture WAV")->required();
  mix->add_option("--out-target", mx.out_target, "Scaled target (default OUT.target.wav)");
  mix->add_option("--out-interf", mx.out_interf, "Scaled interference (default OUT.interf.wav)");
  mix->add_option("--sample-rate", mx.sample_rate, "Expected sample rate")->capture_default_str();
  std::uint64_t unused_seed = 0;
  mix->add_option("--seed", unused_seed, "Accepted for uniformity; mixing is deterministic");

  TrainArgs tr;
  auto* train = app.add_subcommand("train", "Train a speaker VQ codebook or HMM");
  train->add_option("--kind", tr.kind, "vq or hmm")
      ->check(CLI::IsMember({"vq", "hmm"}))
      ->capture_default_str();
  train->add_option("--speaker-dir", tr.speaker_dir, "Directory of training WAVs")->required();
  train->add_option("--states", tr.states, "Codebook size / HMM states (power of two)")
      ->capture_default_str();
  train->add_option("--out", tr.out, "Model file")->required();
  train->add_option("--max-iters", tr.max_iters, "Baum-Welch iterations")->capture_default_str();
  train->add_option("--tol", tr.tol, "Relative log-likelihood tolerance")->capture_default_str();
  train->add_option("--seed", tr.seed, "Accepted for uniformity; training is deterministic");
  tr.framing.add(train);

  SeparateArgs se;
  auto* sep = app.add_subcommand("separate", "Separate a two-talker mixture");
  sep->add_option("--mixture", se.mixture, "Mixture WAV")->required();
  sep->add_option("--model-x", se.model_x, "Target speaker model")->required();
  sep->add_option("--model-v", se.model_v, "Interference speaker model")->required();
  sep->add_option("--method", se.method, "gfhmm, gvq, fhmm or vq")
      ->check(CLI::IsMember({"gfhmm", "gvq", "fhmm", "vq"}))
      ->capture_default_str();
  sep->add_option("--out-x", se.out_x, "Estimated target WAV")->required();
  sep->add_option("--out-v", se.out_v, "Estimated interference WAV")->required();
  sep->add_option("--theta0", se.theta0, "Initial TIR in dB")->capture_default_str();
  sep->add_option("--fix-theta", se.fix_theta, "Use this TIR and skip its estimation");
  sep->add_flag("--unit-gains", se.unit_gains, "Force both gains to one at theta 0");
  sep->add_option("--g0", se.g0, "Nominal training RMS")->capture_default_str();
  sep->add_option("--max-outer", se.max_outer, "Decode/TIR alternations")->capture_default_str();
  sep->add_option("--outer-tol", se.outer_tol, "TIR change to stop at, dB")->capture_default_str();
  sep->add_option("--diagnostics", se.diagnostics, "Write a JSON sidecar with paths and TIR");
  sep->add_option("--seed", se.seed, "Accepted for uniformity; separation is deterministic");

  std::string manifest, results;
  std::size_t jobs = 0;
  auto* eval = app.add_subcommand("evaluate", "Run a manifest of mixtures and write results CSV");
  eval->add_option("--manifest", manifest, "JSON manifest")->required();
  eval->add_option("--out", results, "Results CSV")->required();
  eval->add_option("--jobs", jobs, "Worker threads (0: manifest value)")->capture_default_str();

  std::string report_in, report_out;
  auto* report = app.add_subcommand("report", "Aggregate results into per-method curves");
  report->add_option("--in", report_in, "Results CSV")->required();
  report->add_option("--out", report_out, "Curves CSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (*synth) cmd_synth(sy);
    else if (*mix) cmd_mix(mx);
    else if (*train) cmd_train(tr);
    else if (*sep) cmd_separate(se);
    else if (*eval) cmd_evaluate(manifest, results, jobs);
    else if (*report) cmd_report(report_in, report_out);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return exit_code(e.kind());
  } catch (const fs::filesystem_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 4;
  }
  return 0;
}
