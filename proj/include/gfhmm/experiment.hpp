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

// Batch experiments: a JSON manifest of source pairs, a TIR grid and methods,
// run concurrently and written as one CSV row per run; plus aggregation of
// those rows into per-method curves.
//
// Manifest:
//   {
//     "sample_rate": 8000,
//     "framing": {"frame_len": 256, "hop": 80, "dft_size": 256},
//     "theta_grid": [0, 3, 6, 9, 12, 15],
//     "methods": ["gfhmm", "gvq", "fhmm", "vq"],
//     "jobs": 1,
//     "speakers": {"a": {"hmm": "a.hmm", "vq": "a.vq"}, ...},
//     "pairs": [
//       {"id": "p0", "target_speaker": "a", "interf_speaker": "b",
//        "target": {"wav": "a1.wav"},
//        "interf": {"synth": "hmm_sample", "model": "gen_b.hmm", "speaker": 1,
//                   "seed": 7, "duration": 2.0}}
//     ]
//   }
// Relative paths are resolved against the manifest's directory. Every key
// except "speakers" and "pairs" is optional.

#ifndef GFHMM_EXPERIMENT_HPP
#define GFHMM_EXPERIMENT_HPP

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <tuple>
#include <utility>
#include <vector>

#include <json.hpp>

#include "gfhmm/error.hpp"
#include "gfhmm/eval.hpp"
#include "gfhmm/model_io.hpp"
#include "gfhmm/separate.hpp"
#include "gfhmm/signal.hpp"
#include "gfhmm/wav.hpp"

namespace gfhmm {

struct SourceSpec {
  std::string wav;  // used when non-empty
  SynthSpec synth;
  std::string model_path;  // generator for hmm_sample
};

struct PairSpec {
  std::string id;
  std::string target_speaker;
  std::string interf_speaker;
  SourceSpec target;
  SourceSpec interf;
};

struct SpeakerPaths {
  std::string hmm;
  std::string vq;
};

struct Manifest {
  int sample_rate = 8000;
  FramingConfig framing;
  std::vector<double> theta_grid{0, 3, 6, 9, 12, 15};
  std::vector<Method> methods{Method::kGfhmm, Method::kGvq, Method::kFhmm, Method::kVq};
  std::size_t jobs = 1;
  std::map<std::string, SpeakerPaths> speakers;
  std::vector<PairSpec> pairs;
};

namespace detail {

inline std::string resolve(const std::filesystem::path& base, const std::string& p) {
  if (p.empty()) return p;
  const std::filesystem::path path(p);
  return path.is_absolute() ? p : (base / path).string();
}

inline SourceSpec parse_source(const nlohmann::json& j, const std::filesystem::path& base,
                               int sample_rate) {
  SourceSpec s;
  require(j.is_object(), "source entry must be an object");
  if (j.contains("wav")) {
    s.wav = resolve(base, j.at("wav").get<std::string>());
    return s;
  }
  require(j.contains("synth"), "source needs either \"wav\" or \"synth\"");
  s.synth.kind = parse_synth_kind(j.at("synth").get<std::string>());
  s.synth.speaker = j.value("speaker", 0);
  s.synth.seed = j.value("seed", std::uint64_t(0));
  s.synth.duration = j.value("duration", 2.0);
  s.synth.sample_rate = sample_rate;
  if (j.contains("model")) s.model_path = resolve(base, j.at("model").get<std::string>());
  require(s.synth.kind != SynthKind::kHmmSample || !s.model_path.empty(),
          "hmm_sample source requires \"model\"");
  return s;
}

}  // namespace detail

inline Manifest parse_manifest(const nlohmann::json& j, const std::filesystem::path& base = {}) {
  Manifest m;
  try {
    m.sample_rate = j.value("sample_rate", 8000);
    if (j.contains("framing")) {
      const auto& f = j.at("framing");
      m.framing.frame_len = f.value("frame_len", m.framing.frame_len);
      m.framing.hop = f.value("hop", m.framing.hop);
      m.framing.dft_size = f.value("dft_size", m.framing.dft_size);
    }
    m.framing.validate();
    if (j.contains("theta_grid")) m.theta_grid = j.at("theta_grid").get<std::vector<double>>();
    if (j.contains("methods")) {
      m.methods.clear();
      for (const auto& s : j.at("methods")) m.methods.push_back(parse_method(s.get<std::string>()));
    }
    m.jobs = j.value("jobs", std::size_t(1));
    for (const auto& [name, sp] : j.at("speakers").items()) {
      SpeakerPaths p;
      if (sp.contains("hmm")) p.hmm = detail::resolve(base, sp.at("hmm").get<std::string>());
      if (sp.contains("vq")) p.vq = detail::resolve(base, sp.at("vq").get<std::string>());
      m.speakers[name] = p;
    }
    for (const auto& pj : j.at("pairs")) {
      PairSpec p;
      p.id = pj.at("id").get<std::string>();
      p.target_speaker = pj.at("target_speaker").get<std::string>();
      p.interf_speaker = pj.at("interf_speaker").get<std::string>();
      require(m.speakers.count(p.target_speaker) && m.speakers.count(p.interf_speaker),
              "pair " + p.id + " names an unknown speaker");
      p.target = detail::parse_source(pj.at("target"), base, m.sample_rate);
      p.interf = detail::parse_source(pj.at("interf"), base, m.sample_rate);
      m.pairs.push_back(std::move(p));
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kInvalidArgument, std::string("bad manifest: ") + e.what());
  }
  require(!m.theta_grid.empty() && !m.methods.empty(), "manifest needs thetas and methods");
  return m;
}

inline Manifest load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kIo, "cannot open manifest " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kInvalidArgument, path + ": " + e.what());
  }
  return parse_manifest(j, std::filesystem::path(path).parent_path());
}

struct RunRow {
  std::string pair_id;
  std::string method;
  double theta_true = 0.0;
  double theta_hat = std::numeric_limits<double>::quiet_NaN();
  double iterations = std::numeric_limits<double>::quiet_NaN();
  double snr_target_db = std::numeric_limits<double>::quiet_NaN();
  double snr_interf_db = std::numeric_limits<double>::quiet_NaN();
  double logprob = std::numeric_limits<double>::quiet_NaN();
  double wall_ms = 0.0;
  std::string error;
};

struct CurvePoint {
  std::string method;
  double theta_true = 0.0;
  std::size_t runs = 0;
  std::size_t errors = 0;
  double mean_snr_target_db = std::numeric_limits<double>::quiet_NaN();
  double mean_snr_interf_db = std::numeric_limits<double>::quiet_NaN();
  double mean_theta_hat = std::numeric_limits<double>::quiet_NaN();
  double mean_iterations = std::numeric_limits<double>::quiet_NaN();
};

namespace detail {

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c == '\n' ? ' ' : c;
  }
  return out + "\"";
}

inline std::string csv_number(double v) {
  if (!std::isfinite(v)) return "";
  std::ostringstream os;
  os.precision(10);
  os << v;
  return os.str();
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

inline double parse_number(const std::string& s) {
  if (s.empty()) return std::numeric_limits<double>::quiet_NaN();
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) fail(ErrorKind::kInvalidArgument, "bad number '" + s + "' in CSV");
    return v;
  } catch (const std::logic_error&) {
    fail(ErrorKind::kInvalidArgument, "bad number '" + s + "' in CSV");
  }
}

}  // namespace detail

inline constexpr const char* kResultsHeader =
    "pair_id,method,theta_true,theta_hat,iterations,snr_target_db,snr_interf_db,logprob,wall_ms,"
    "error";

inline constexpr const char* kCurvesHeader =
    "method,theta_true,runs,errors,mean_snr_target_db,mean_snr_interf_db,mean_theta_hat,"
    "mean_iterations";

inline void write_results_csv(std::ostream& os, const std::vector<RunRow>& rows) {
  using detail::csv_number;
  os << kResultsHeader << '\n';
  for (const auto& r : rows)
    os << detail::csv_field(r.pair_id) << ',' << r.method << ',' << csv_number(r.theta_true) << ','
       << csv_number(r.theta_hat) << ',' << csv_number(r.iterations) << ','
       << csv_number(r.snr_target_db) << ',' << csv_number(r.snr_interf_db) << ','
       << csv_number(r.logprob) << ',' << csv_number(r.wall_ms) << ','
       << detail::csv_field(r.error) << '\n';
}

inline std::vector<RunRow> read_results_csv(std::istream& is) {
  std::string line;
  require(bool(std::getline(is, line)), "empty results file", ErrorKind::kIo);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  require(line == kResultsHeader, "unexpected results header", ErrorKind::kInvalidArgument);
  std::vector<RunRow> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto f = detail::split_csv_line(line);
    require(f.size() == 10, "results row has " + std::to_string(f.size()) + " fields, expected 10");
    RunRow r;
    r.pair_id = f[0];
    r.method = f[1];
    r.theta_true = detail::parse_number(f[2]);
    r.theta_hat = detail::parse_number(f[3]);
    r.iterations = detail::parse_number(f[4]);
    r.snr_target_db = detail::parse_number(f[5]);
    r.snr_interf_db = detail::parse_number(f[6]);
    r.logprob = detail::parse_number(f[7]);
    r.wall_ms = detail::parse_number(f[8]);
    r.error = f[9];
    rows.push_back(std::move(r));
  }
  return rows;
}

/// Means per (method, theta) over successful runs. Methods keep their first
/// appearance order, thetas ascend.
inline std::vector<CurvePoint> aggregate(const std::vector<RunRow>& rows) {
  std::vector<std::string> order;
  std::map<std::pair<std::string, double>, std::vector<const RunRow*>> groups;
  for (const auto& r : rows) {
    if (std::find(order.begin(), order.end(), r.method) == order.end()) order.push_back(r.method);
    groups[{r.method, r.theta_true}].push_back(&r);
  }
  std::vector<CurvePoint> out;
  for (const auto& method : order) {
    for (const auto& [key, members] : groups) {
      if (key.first != method) continue;
      CurvePoint c;
      c.method = method;
      c.theta_true = key.second;
      c.runs = members.size();
      double st = 0, si = 0, th = 0, it = 0;
      std::size_t ok = 0;
      for (const RunRow* r : members) {
        if (!r->error.empty()) {
          ++c.errors;
          continue;
        }
        st += r->snr_target_db;
        si += r->snr_interf_db;
        th += r->theta_hat;
        it += r->iterations;
        ++ok;
      }
      if (ok > 0) {
        c.mean_snr_target_db = st / double(ok);
        c.mean_snr_interf_db = si / double(ok);
        c.mean_theta_hat = th / double(ok);
        c.mean_iterations = it / double(ok);
      }
      out.push_back(c);
    }
  }
  return out;
}

inline void write_curves_csv(std::ostream& os, const std::vector<CurvePoint>& curves) {
  using detail::csv_number;
  os << kCurvesHeader << '\n';
  for (const auto& c : curves)
    os << c.method << ',' << csv_number(c.theta_true) << ',' << c.runs << ',' << c.errors << ','
       << csv_number(c.mean_snr_target_db) << ',' << csv_number(c.mean_snr_interf_db) << ','
       << csv_number(c.mean_theta_hat) << ',' << csv_number(c.mean_iterations) << '\n';
}

namespace detail {

inline AudioSignal load_source(const SourceSpec& s, const Manifest& m) {
  if (!s.wav.empty()) return read_wav(s.wav, m.sample_rate);
  if (s.synth.kind == SynthKind::kHmmSample) {
    const ModelFile gen = load_model_checked(s.model_path, ModelKind::kHmm,
                                             ModelMetadata{m.sample_rate, m.framing});
    SynthSpec spec = s.synth;
    spec.model = &std::get<HmmModel>(gen.model);
    return synth_source(spec, m.framing);
  }
  return synth_source(s.synth, m.framing);
}

}  // namespace detail

/// Runs every (pair, theta, method) combination. Rows come back ordered by
/// pair, then theta, then method, independent of the worker count. A failing
/// run becomes a row with the error column set.
inline std::vector<RunRow> run_experiment(const Manifest& m, std::size_t jobs = 0) {
  if (jobs == 0) jobs = std::max<std::size_t>(1, m.jobs);
  const ModelMetadata meta{m.sample_rate, m.framing};

  // Models are loaded once and shared read-only. A speaker whose model fails
  // to load turns its runs into error rows.
  std::map<std::string, SpeakerModels> models;
  std::map<std::string, std::string> model_errors;
  for (const auto& [name, paths] : m.speakers) {
    SpeakerModels sm;
    try {
      if (!paths.hmm.empty())
        sm.hmm = std::get<HmmModel>(load_model_checked(paths.hmm, ModelKind::kHmm, meta).model);
      if (!paths.vq.empty())
        sm.vq = std::get<Codebook>(load_model_checked(paths.vq, ModelKind::kVq, meta).model);
    } catch (const std::exception& e) {
      model_errors[name] = e.what();
    }
    models[name] = std::move(sm);
  }

  struct PairData {
    std::unique_ptr<std::pair<AudioSignal, AudioSignal>> sources;
    std::string error;
  };
  std::vector<PairData> pair_data(m.pairs.size());
  for (std::size_t p = 0; p < m.pairs.size(); ++p) {
    try {
      auto [x, v] = normalize_equal_power(detail::load_source(m.pairs[p].target, m),
                                          detail::load_source(m.pairs[p].interf, m));
      pair_data[p].sources = std::make_unique<std::pair<AudioSignal, AudioSignal>>(
          std::move(x), std::move(v));
    } catch (const std::exception& e) {
      pair_data[p].error = e.what();
    }
  }

  const std::size_t nt = m.theta_grid.size(), nm = m.methods.size();
  const std::size_t total = m.pairs.size() * nt * nm;
  std::vector<RunRow> rows(total);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t job = next++; job < total; job = next++) {
      const std::size_t p = job / (nt * nm);
      const double theta = m.theta_grid[(job / nm) % nt];
      const Method method = m.methods[job % nm];
      const PairSpec& pair = m.pairs[p];
      RunRow& row = rows[job];
      row.pair_id = pair.id;
      row.method = std::string(method_name(method));
      row.theta_true = theta;
      const auto start = std::chrono::steady_clock::now();
      try {
        if (!pair_data[p].error.empty()) fail(ErrorKind::kIo, pair_data[p].error);
        for (const auto* spk : {&pair.target_speaker, &pair.interf_speaker})
          if (model_errors.count(*spk)) fail(ErrorKind::kModelMismatch, model_errors.at(*spk));
        const auto& [x, v] = *pair_data[p].sources;
        const Mixture mix = mix_at_tir(x, v, theta);
        SeparateOptions opts;
        opts.method = method;
        const Separation sep = separate(mix.mixture, models.at(pair.target_speaker),
                                        models.at(pair.interf_speaker), m.framing, opts);
        row.theta_hat = sep.diagnostics.theta_hat;
        row.iterations = double(sep.diagnostics.iterations);
        row.logprob = sep.diagnostics.score;
        row.snr_target_db = snr_db(mix.target, sep.target);
        row.snr_interf_db = snr_db(mix.interference, sep.interference);
      } catch (const std::exception& e) {
        row.error = e.what();
      }
      row.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                              start)
                        .count();
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < std::min(jobs, total); ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  return rows;
}

}  // namespace gfhmm

#endif  // GFHMM_EXPERIMENT_HPP
