// Copyright Contributors to the nerfin Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Binary checkpoint of a radiance field, optionally with the optimizer state
// needed to resume training.
//
// Layout (little endian):
//   "NERFINCK"  magic, 8 bytes
//   u32         format version (1)
//   u32         bytes per scalar (4 or 8)
//   config      i32 pos_levels, dir_levels, hidden_width, hidden_layers, skip_layer
//               f64 near, far; i32 n_coarse, n_fine; f64 background[3]; u64 seed
//   u64         tensor count, then per tensor: u64 rows, u64 cols, row-major data
//   u8          1 if a training section follows
//   training    u64 step; i64 adam step, adam skipped; first and second moments
//               (tensor lists as above); u64 length + bytes of the RNG state;
//               u64 history length + (u64 step, f64 loss) pairs

#include "nerfin/adam.hpp"
#include "nerfin/field.hpp"

#include <cstring>
#include <fstream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace nerfin {

inline constexpr std::uint32_t checkpoint_version = 1;

struct HistoryEntry {
  std::uint64_t step = 0;
  double loss = 0;
  bool operator==(const HistoryEntry&) const = default;
};

template <typename Scalar>
struct TrainingState {
  std::uint64_t step = 0;
  AdamState<Scalar> adam;
  std::string rng;
  std::vector<HistoryEntry> history;
};

template <typename Scalar>
struct Checkpoint {
  RadianceField<Scalar> field;
  std::optional<TrainingState<Scalar>> training;
};

namespace detail {

class Writer {
 public:
  explicit Writer(const std::string& path) : path_(path), out_(path, std::ios::binary) {
    if (!out_) throw IoError("cannot open for writing: " + path);
  }
  template <typename T>
  void pod(const T& v) {
    out_.write(reinterpret_cast<const char*>(&v), sizeof(T));
  }
  void bytes(const void* p, std::size_t n) { out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n)); }
  template <typename Scalar>
  void tensors(const std::vector<Tensor<Scalar>>& ts) {
    pod<std::uint64_t>(ts.size());
    for (const auto& t : ts) {
      pod<std::uint64_t>(static_cast<std::uint64_t>(t.rows()));
      pod<std::uint64_t>(static_cast<std::uint64_t>(t.cols()));
      bytes(t.data(), sizeof(Scalar) * static_cast<std::size_t>(t.size()));
    }
  }
  void finish() {
    out_.flush();
    if (!out_) throw IoError("write failed: " + path_);
  }

 private:
  std::string path_;
  std::ofstream out_;
};

class Reader {
 public:
  explicit Reader(const std::string& path) : path_(path), in_(path, std::ios::binary) {
    if (!in_) throw IoError("cannot open: " + path);
  }
  template <typename T>
  T pod() {
    T v;
    bytes(&v, sizeof(T));
    return v;
  }
  void bytes(void* p, std::size_t n) {
    in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (!in_) throw IoError("truncated checkpoint: " + path_);
  }
  template <typename Scalar>
  std::vector<Tensor<Scalar>> tensors() {
    const auto n = pod<std::uint64_t>();
    if (n > (1u << 20)) throw IoError("corrupt tensor count in " + path_);
    std::vector<Tensor<Scalar>> ts;
    for (std::uint64_t i = 0; i < n; ++i) {
      const auto r = pod<std::uint64_t>();
      const auto c = pod<std::uint64_t>();
      if (r > (1u << 28) || c > (1u << 28) || r * c > (1u << 28)) throw IoError("corrupt tensor shape in " + path_);
      Tensor<Scalar> t(static_cast<Index>(r), static_cast<Index>(c));
      bytes(t.data(), sizeof(Scalar) * static_cast<std::size_t>(t.size()));
      ts.push_back(std::move(t));
    }
    return ts;
  }
  const std::string& path() const { return path_; }

 private:
  std::string path_;
  std::ifstream in_;
};

}  // namespace detail

template <typename Scalar>
void save_checkpoint(const std::string& path, const RadianceField<Scalar>& field,
                     const TrainingState<Scalar>* training = nullptr) {
  detail::Writer w(path);
  w.bytes("NERFINCK", 8);
  w.pod<std::uint32_t>(checkpoint_version);
  w.pod<std::uint32_t>(sizeof(Scalar));
  const FieldConfig& c = field.config;
  for (int v : {c.pos_levels, c.dir_levels, c.hidden_width, c.hidden_layers, c.skip_layer}) w.pod<std::int32_t>(v);
  w.pod<double>(c.near);
  w.pod<double>(c.far);
  w.pod<std::int32_t>(c.n_coarse);
  w.pod<std::int32_t>(c.n_fine);
  for (int i = 0; i < 3; ++i) w.pod<double>(c.background[i]);
  w.pod<std::uint64_t>(c.seed);
  w.tensors(field.theta);
  w.pod<std::uint8_t>(training ? 1 : 0);
  if (training) {
    w.pod<std::uint64_t>(training->step);
    w.pod<std::int64_t>(training->adam.step);
    w.pod<std::int64_t>(training->adam.skipped);
    w.tensors(training->adam.first_moment);
    w.tensors(training->adam.second_moment);
    w.pod<std::uint64_t>(training->rng.size());
    w.bytes(training->rng.data(), training->rng.size());
    w.pod<std::uint64_t>(training->history.size());
    for (const auto& h : training->history) {
      w.pod<std::uint64_t>(h.step);
      w.pod<double>(h.loss);
    }
  }
  w.finish();
}

template <typename Scalar>
Checkpoint<Scalar> load_checkpoint(const std::string& path) {
  detail::Reader r(path);
  char magic[8];
  r.bytes(magic, 8);
  if (std::memcmp(magic, "NERFINCK", 8) != 0) throw IoError("not a checkpoint: " + path);
  const auto version = r.pod<std::uint32_t>();
  if (version != checkpoint_version) {
    throw IoError("unsupported checkpoint version " + std::to_string(version) + " in " + path);
  }
  const auto scalar = r.pod<std::uint32_t>();
  if (scalar != sizeof(Scalar)) {
    throw IoError("checkpoint " + path + " stores " + std::to_string(8 * scalar) + "-bit values, expected " +
                  std::to_string(8 * sizeof(Scalar)));
  }
  Checkpoint<Scalar> ck;
  FieldConfig& c = ck.field.config;
  c.pos_levels = r.pod<std::int32_t>();
  c.dir_levels = r.pod<std::int32_t>();
  c.hidden_width = r.pod<std::int32_t>();
  c.hidden_layers = r.pod<std::int32_t>();
  c.skip_layer = r.pod<std::int32_t>();
  c.near = r.pod<double>();
  c.far = r.pod<double>();
  c.n_coarse = r.pod<std::int32_t>();
  c.n_fine = r.pod<std::int32_t>();
  for (int i = 0; i < 3; ++i) c.background[i] = r.pod<double>();
  c.seed = r.pod<std::uint64_t>();
  c.validate();
  ck.field.theta = r.template tensors<Scalar>();
  const auto shapes = network_shapes(c);
  if (ck.field.theta.size() != 2 * shapes.size()) throw IoError("parameter count mismatch in " + path);
  for (std::size_t i = 0; i < ck.field.theta.size(); ++i) {
    if (shape_of(ck.field.theta[i]) != shapes[i % shapes.size()]) throw IoError("parameter shape mismatch in " + path);
  }
  if (r.pod<std::uint8_t>() == 1) {
    TrainingState<Scalar> t;
    t.step = r.pod<std::uint64_t>();
    t.adam.step = r.pod<std::int64_t>();
    t.adam.skipped = r.pod<std::int64_t>();
    t.adam.first_moment = r.template tensors<Scalar>();
    t.adam.second_moment = r.template tensors<Scalar>();
    const auto n = r.pod<std::uint64_t>();
    if (n > (1u << 20)) throw IoError("corrupt rng state in " + path);
    t.rng.resize(n);
    r.bytes(t.rng.data(), n);
    const auto h = r.pod<std::uint64_t>();
    if (h > (1u << 28)) throw IoError("corrupt history in " + path);
    t.history.resize(h);
    for (auto& e : t.history) {
      e.step = r.pod<std::uint64_t>();
      e.loss = r.pod<double>();
    }
    ck.training = std::move(t);
  }
  return ck;
}

}  // namespace nerfin
