// Copyright Contributors to the nerfin Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "nerfin/core.hpp"
#include "nerfin/log.hpp"

#include <cmath>
#include <span>
#include <vector>

namespace nerfin {

struct AdamConfig {
  double lr = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename Scalar>
struct AdamState {
  std::vector<Tensor<Scalar>> first_moment;
  std::vector<Tensor<Scalar>> second_moment;
  long step = 0;
  long skipped = 0;

  /// Zero moments shaped like `params`.
  static AdamState like(std::span<const Tensor<Scalar>> params) {
    AdamState s;
    for (const auto& p : params) {
      s.first_moment.push_back(Tensor<Scalar>::Zero(p.rows(), p.cols()));
      s.second_moment.push_back(Tensor<Scalar>::Zero(p.rows(), p.cols()));
    }
    return s;
  }
};

/// One bias-corrected Adam update in place. A step whose gradients contain a
/// non-finite value is skipped and logged; returns whether the update ran.
template <typename Scalar>
bool adam_step(std::span<Tensor<Scalar>> params, std::span<const Tensor<Scalar>> grads, AdamState<Scalar>& state,
               const AdamConfig& cfg) {
  if (params.size() != grads.size() || params.size() != state.first_moment.size() ||
      params.size() != state.second_moment.size()) {
    throw ShapeError("adam_step: parameter, gradient and moment counts differ");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (shape_of(params[i]) != shape_of(grads[i]) || shape_of(params[i]) != shape_of(state.first_moment[i])) {
      throw ShapeError("adam_step: tensor " + std::to_string(i) + " shapes " + shape_string(shape_of(params[i])) +
                       " and " + shape_string(shape_of(grads[i])) + " differ");
    }
  }
  for (const auto& g : grads) {
    if (!g.allFinite()) {
      ++state.skipped;
      log_warning("adam_step: non-finite gradient at step " + std::to_string(state.step + 1) + ", update skipped");
      return false;
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const auto b1 = static_cast<Scalar>(cfg.beta1);
  const auto b2 = static_cast<Scalar>(cfg.beta2);
  const auto step_size = static_cast<Scalar>(cfg.lr / (1.0 - std::pow(cfg.beta1, t)));
  const auto v_scale = static_cast<Scalar>(1.0 / std::sqrt(1.0 - std::pow(cfg.beta2, t)));
  const auto eps = static_cast<Scalar>(cfg.eps);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto m = state.first_moment[i].array();
    auto v = state.second_moment[i].array();
    const auto g = grads[i].array();
    m = b1 * m + (Scalar(1) - b1) * g;
    v = b2 * v + (Scalar(1) - b2) * g.square();
    params[i].array() -= step_size * m / (v.sqrt() * v_scale + eps);
  }
  return true;
}

}  // namespace nerfin
