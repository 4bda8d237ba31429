// Copyright Contributors to the nerfin Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>

namespace nerfin {

using Index = Eigen::Index;

/// Dense row-major matrix; the storage type of every tensor in the library.
template <typename Scalar>
using Tensor = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using Tensorf = Tensor<float>;
using Tensord = Tensor<double>;

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

using Shape = std::array<Index, 2>;

template <typename Derived>
Shape shape_of(const Eigen::DenseBase<Derived>& m) {
  return {m.rows(), m.cols()};
}

inline std::string shape_string(const Shape& s) {
  return "[" + std::to_string(s[0]) + "x" + std::to_string(s[1]) + "]";
}

struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// A file could not be read or written; the message names the path.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Seeded generator with portable real-valued draws (std distributions are
/// implementation-defined, which would break bit-exact reproducibility).
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) { return n == 0 ? 0 : engine_() % n; }

  std::uint64_t next() { return engine_(); }

  /// Full engine state as text, for resumable runs.
  std::string state() const {
    std::ostringstream os;
    os << engine_;
    return os.str();
  }

  void set_state(const std::string& s) {
    std::istringstream is(s);
    is >> engine_;
    if (!is) throw std::invalid_argument("Rng: malformed state");
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace nerfin
