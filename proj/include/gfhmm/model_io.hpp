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

// Model file container shared by HMM and VQ speaker models.
//
// Layout (all integers and IEEE-754 doubles little-endian):
//
//   char[8]  magic "GFHMMODL"
//   u32      version (1)
//   u32      kind (1 = HMM, 2 = VQ)
//   u32      K, dim
//   u32      sample_rate, frame_len, hop, dft_size
//   f64      log_floor
//   HMM:  f64 log_pi[K]; f64 log_trans[K*K] (row-major); per state f64 mean[dim], f64 var[dim]
//   VQ:   per codevector f64 value[dim], f64 variance[dim], u64 occupancy

#ifndef GFHMM_MODEL_IO_HPP
#define GFHMM_MODEL_IO_HPP

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "gfhmm/error.hpp"
#include "gfhmm/models.hpp"
#include "gfhmm/quantize.hpp"
#include "gfhmm/signal.hpp"

namespace gfhmm {

enum class ModelKind : std::uint32_t { kHmm = 1, kVq = 2 };

inline std::string_view kind_name(ModelKind k) {
  return k == ModelKind::kHmm ? "HMM" : "VQ";
}

/// Analysis settings a model was trained under.
struct ModelMetadata {
  int sample_rate = 8000;
  FramingConfig framing;

  bool operator==(const ModelMetadata&) const = default;
};

struct ModelFile {
  ModelMetadata meta;
  std::variant<HmmModel, Codebook> model;

  ModelKind kind() const {
    return std::holds_alternative<HmmModel>(model) ? ModelKind::kHmm : ModelKind::kVq;
  }
};

namespace detail {

inline constexpr char kModelMagic[8] = {'G', 'F', 'H', 'M', 'M', 'O', 'D', 'L'};
inline constexpr std::uint32_t kModelVersion = 1;

class ByteWriter {
 public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) bytes_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void f64s(const std::vector<double>& v) {
    for (double x : v) f64(x);
  }
  void raw(const char* p, std::size_t n) { bytes_.insert(bytes_.end(), p, p + n); }
  const std::vector<char>& bytes() const { return bytes_; }

 private:
  std::vector<char> bytes_;
};

class ByteReader {
 public:
  ByteReader(std::vector<char> bytes, std::string path) : bytes_(std::move(bytes)), path_(std::move(path)) {}

  std::uint64_t uint(int width) {
    need(std::size_t(width));
    std::uint64_t v = 0;
    for (int i = 0; i < width; ++i)
      v |= std::uint64_t(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += std::size_t(width);
    return v;
  }
  std::uint32_t u32() { return static_cast<std::uint32_t>(uint(4)); }
  std::uint64_t u64() { return uint(8); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::vector<double> f64s(std::size_t n) {
    need(n * 8);
    std::vector<double> v(n);
    for (double& x : v) x = f64();
    return v;
  }
  void expect_magic() {
    need(8);
    if (std::memcmp(bytes_.data() + pos_, kModelMagic, 8) != 0)
      fail(ErrorKind::kIo, path_ + ": not a model file");
    pos_ += 8;
  }
  bool at_end() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) fail(ErrorKind::kIo, path_ + ": truncated model file");
  }
  std::vector<char> bytes_;
  std::string path_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline void save_model(const std::string& path, const ModelFile& file) {
  detail::ByteWriter w;
  w.raw(detail::kModelMagic, 8);
  w.u32(detail::kModelVersion);
  w.u32(static_cast<std::uint32_t>(file.kind()));
  const auto& fr = file.meta.framing;
  if (const auto* hmm = std::get_if<HmmModel>(&file.model)) {
    w.u32(std::uint32_t(hmm->num_states()));
    w.u32(std::uint32_t(hmm->dim()));
  } else {
    const auto& cb = std::get<Codebook>(file.model);
    w.u32(std::uint32_t(cb.size()));
    w.u32(std::uint32_t(cb.dim()));
  }
  w.u32(std::uint32_t(file.meta.sample_rate));
  w.u32(std::uint32_t(fr.frame_len));
  w.u32(std::uint32_t(fr.hop));
  w.u32(std::uint32_t(fr.dft_size));
  w.f64(fr.log_floor);
  if (const auto* hmm = std::get_if<HmmModel>(&file.model)) {
    w.f64s(hmm->log_pi);
    w.f64s(hmm->log_trans);
    for (const auto& s : hmm->states) {
      w.f64s(s.mean);
      w.f64s(s.var);
    }
  } else {
    const auto& cb = std::get<Codebook>(file.model);
    for (std::size_t i = 0; i < cb.size(); ++i) {
      w.f64s(cb.codevectors[i]);
      w.f64s(cb.variances[i]);
      w.u64(cb.occupancy[i]);
    }
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::kIo, "cannot write " + path);
  out.write(w.bytes().data(), std::streamsize(w.bytes().size()));
  if (!out) fail(ErrorKind::kIo, "write failed: " + path);
}

inline ModelFile load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kIo, "cannot open " + path);
  detail::ByteReader r(std::vector<char>((std::istreambuf_iterator<char>(in)),
                                         std::istreambuf_iterator<char>()),
                       path);
  r.expect_magic();
  if (r.u32() != detail::kModelVersion) fail(ErrorKind::kIo, path + ": unsupported model version");
  const std::uint32_t kind = r.u32();
  if (kind != 1 && kind != 2) fail(ErrorKind::kIo, path + ": unknown model kind");
  const std::size_t k = r.u32();
  const std::size_t dim = r.u32();
  if (k == 0 || dim == 0 || k > 65536 || dim > 65536)
    fail(ErrorKind::kIo, path + ": implausible model size");
  ModelFile file;
  file.meta.sample_rate = int(r.u32());
  file.meta.framing.frame_len = r.u32();
  file.meta.framing.hop = r.u32();
  file.meta.framing.dft_size = r.u32();
  file.meta.framing.log_floor = r.f64();
  if (kind == 1) {
    HmmModel m;
    m.log_pi = r.f64s(k);
    m.log_trans = r.f64s(k * k);
    m.states.resize(k);
    for (auto& s : m.states) {
      s.mean = r.f64s(dim);
      s.var = r.f64s(dim);
    }
    file.model = std::move(m);
  } else {
    Codebook cb;
    cb.codevectors.resize(k);
    cb.variances.resize(k);
    cb.occupancy.resize(k);
    for (std::size_t i = 0; i < k; ++i) {
      cb.codevectors[i] = r.f64s(dim);
      cb.variances[i] = r.f64s(dim);
      cb.occupancy[i] = r.u64();
    }
    file.model = std::move(cb);
  }
  if (!r.at_end()) fail(ErrorKind::kIo, path + ": trailing bytes in model file");
  return file;
}

/// Loads a model of the given kind, checking it against the expected analysis
/// settings when provided.
inline ModelFile load_model_checked(const std::string& path, ModelKind expected,
                                    const std::optional<ModelMetadata>& meta = std::nullopt) {
  ModelFile file = load_model(path);
  if (file.kind() != expected)
    fail(ErrorKind::kModelMismatch, path + ": expected a " + std::string(kind_name(expected)) +
                                        " model, found " + std::string(kind_name(file.kind())));
  if (meta) {
    const std::size_t dim = file.kind() == ModelKind::kHmm
                                ? std::get<HmmModel>(file.model).dim()
                                : std::get<Codebook>(file.model).dim();
    if (dim != meta->framing.bins())
      fail(ErrorKind::kModelMismatch, path + ": model dimension " + std::to_string(dim) +
                                          " does not match framing (" +
                                          std::to_string(meta->framing.bins()) + " bins)");
    if (!(file.meta == *meta))
      fail(ErrorKind::kModelMismatch, path + ": model was trained with different analysis settings");
  }
  return file;
}

}  // namespace gfhmm

#endif  // GFHMM_MODEL_IO_HPP
