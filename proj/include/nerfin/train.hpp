// Copyright Contributors to the nerfin Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Photometric training of a radiance field from posed images.

#include "nerfin/adam.hpp"
#include "nerfin/checkpoint.hpp"
#include "nerfin/config.hpp"
#include "nerfin/render.hpp"
#include "nerfin/scene.hpp"

#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace nerfin {

struct TrainConfig {
  int steps = 20000;
  int batch_rays = 1024;
  double lr = 5e-4;
  double lr_final = 5e-5;  ///< exponential decay from lr to lr_final over `steps`
  std::uint64_t seed = 0;
  int log_every = 100;
  int checkpoint_every = 1000;
  std::string checkpoint_path;  ///< empty disables periodic checkpoints

  void validate() const {
    if (steps <= 0) throw std::invalid_argument("train config: steps must be > 0");
    if (batch_rays <= 0) throw std::invalid_argument("train config: batch_rays must be > 0");
    if (!(lr > 0) || !(lr_final > 0)) throw std::invalid_argument("train config: learning rates must be > 0");
    if (log_every <= 0) throw std::invalid_argument("train config: log_every must be > 0");
  }

  double lr_at(long step) const { return lr * std::pow(lr_final / lr, static_cast<double>(step) / steps); }
};

/// Keys: steps, batch_rays, lr, lr_final, seed, log_every, checkpoint_every.
TrainConfig train_config_from(const KeyValues& kv, TrainConfig base = {});
KeyValues to_key_values(const TrainConfig& cfg);

/// Keys: pos_levels, dir_levels, hidden_width, hidden_layers, skip_layer,
/// n_coarse, n_fine, near, far, init_seed.
FieldConfig field_config_from(const KeyValues& kv, FieldConfig base = {});
KeyValues to_key_values(const FieldConfig& cfg);

enum class LossKind { mse, masked_mse };

struct TrainingDiverged : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// sum_r weight_r * ||pred_r - target_r||^2 over the rows of an R x 3 prediction.
template <typename Scalar>
Var<Scalar> weighted_squared_error(const Var<Scalar>& pred, const Tensor<Scalar>& target,
                                   const Tensor<Scalar>* weights = nullptr) {
  Tape<Scalar>& tape = pred.tape();
  Var<Scalar> diff = sub(pred, tape.constant(target));
  Var<Scalar> per_ray = sum(mul(diff, diff), Axis::cols);
  if (weights) per_ray = mul(per_ray, tape.constant(*weights));
  return sum(per_ray);
}

/// (1/R) sum_r ||C_coarse(r) - C(r)||^2 + ||C_fine(r) - C(r)||^2.
template <typename Scalar>
Var<Scalar> mse_loss(const BatchRender<Scalar>& render, const Tensor<Scalar>& targets) {
  const Scalar inv = Scalar(1) / static_cast<Scalar>(targets.rows());
  return affine(add(weighted_squared_error(render.coarse.color, targets),
                    weighted_squared_error(render.fine.color, targets)),
                inv);
}

/// mse_loss with each ray's terms multiplied by its mask value; still
/// normalised by the full batch size.
template <typename Scalar>
Var<Scalar> masked_mse_loss(const BatchRender<Scalar>& render, const Tensor<Scalar>& targets,
                            const Tensor<Scalar>& mask) {
  const Scalar inv = Scalar(1) / static_cast<Scalar>(targets.rows());
  return affine(add(weighted_squared_error(render.coarse.color, targets, &mask),
                    weighted_squared_error(render.fine.color, targets, &mask)),
                inv);
}

/// Rays, colors and mask values drawn uniformly with replacement from a set of views.
template <typename Scalar>
struct RaySample {
  RayBatch<Scalar> rays;
  Tensor<Scalar> colors;  ///< R x 3
  Tensor<Scalar> depths;  ///< R x 1, zero where the view has no depth
  Tensor<Scalar> mask;    ///< R x 1, one where the view has no mask
  std::vector<int> view;
  std::vector<int> pixel;
};

template <typename Scalar>
RaySample<Scalar> sample_rays(const PosedImageSet& set, const std::vector<int>& views, Index count, Rng& rng) {
  if (views.empty()) throw std::invalid_argument("sample_rays: empty view set");
  RaySample<Scalar> s;
  std::vector<Ray> rays;
  rays.reserve(static_cast<std::size_t>(count));
  s.colors.resize(count, 3);
  s.depths.resize(count, 1);
  s.mask.resize(count, 1);
  for (Index i = 0; i < count; ++i) {
    const int v = views[rng.below(views.size())];
    const PosedView& pv = set.views.at(static_cast<std::size_t>(v));
    const int npix = pv.pose.width * pv.pose.height;
    const int p = static_cast<int>(rng.below(static_cast<std::uint64_t>(npix)));
    const int x = p % pv.pose.width, y = p / pv.pose.width;
    rays.push_back(pv.pose.pixel_ray(x, y));
    s.colors.row(i) = pv.image.pixels.row(p).template cast<Scalar>().matrix();
    s.depths(i, 0) = pv.depth ? static_cast<Scalar>((*pv.depth)(y, x)) : Scalar(0);
    s.mask(i, 0) = pv.mask ? static_cast<Scalar>((*pv.mask)(y, x) ? 1 : 0) : Scalar(1);
    s.view.push_back(v);
    s.pixel.push_back(p);
  }
  s.rays = RayBatch<Scalar>::from(rays);
  return s;
}

inline std::vector<int> all_view_indices(const PosedImageSet& set) {
  std::vector<int> v(set.views.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<int>(i);
  return v;
}

template <typename Scalar>
struct TrainResult {
  std::vector<HistoryEntry> history;
  TrainingState<Scalar> state;
};

/// Minimises mse_loss (or masked_mse_loss with the views' masks) by Adam,
/// sampling batch_rays pixels per step uniformly across all views. Passing a
/// TrainingState resumes a run; results are bit-identical to an uninterrupted
/// run with the same config. `on_step(step, loss)` is called after every step.
template <typename Scalar>
TrainResult<Scalar> train(RadianceField<Scalar>& field, const PosedImageSet& data, const TrainConfig& cfg,
                          LossKind kind, std::optional<TrainingState<Scalar>> resume = std::nullopt,
                          const std::function<void(std::uint64_t, double)>& on_step = {}) {
  cfg.validate();
  if (data.views.empty()) throw std::invalid_argument("train: dataset has no views");
  TrainingState<Scalar> st;
  Rng rng(cfg.seed);
  if (resume) {
    st = std::move(*resume);
    rng.set_state(st.rng);
  } else {
    st.adam = AdamState<Scalar>::like(field.theta);
  }
  const std::vector<int> views = all_view_indices(data);
  double interval_sum = 0;
  int interval_count = 0;
  for (; st.step < static_cast<std::uint64_t>(cfg.steps);) {
    const auto batch = sample_rays<Scalar>(data, views, cfg.batch_rays, rng);
    Tape<Scalar> tape;
    const FieldVars<Scalar> vars = bind(tape, field);
    const BatchRender<Scalar> render = render_batch(tape, vars, field.config, batch.rays, true, rng);
    const Var<Scalar> loss =
        kind == LossKind::mse ? mse_loss(render, batch.colors) : masked_mse_loss(render, batch.colors, batch.mask);
    const double value = static_cast<double>(loss.value()(0, 0));
    if (!std::isfinite(value)) {
      std::string where;
      if (!cfg.checkpoint_path.empty()) {
        where = cfg.checkpoint_path + ".diverged";
        st.rng = rng.state();
        save_checkpoint(where, field, &st);
      }
      throw TrainingDiverged("train: non-finite loss at step " + std::to_string(st.step) +
                             (where.empty() ? "" : "; state saved to " + where));
    }
    tape.backward(loss);
    const auto grads = gradients(tape, vars);
    AdamConfig adam;
    adam.lr = cfg.lr_at(static_cast<long>(st.step));
    adam_step<Scalar>(field.theta, grads, st.adam, adam);
    ++st.step;
    interval_sum += value;
    ++interval_count;
    if (st.step % static_cast<std::uint64_t>(cfg.log_every) == 0 || st.step == static_cast<std::uint64_t>(cfg.steps)) {
      st.history.push_back({st.step, interval_sum / interval_count});
      interval_sum = 0;
      interval_count = 0;
    }
    if (on_step) on_step(st.step, value);
    if (!cfg.checkpoint_path.empty() && cfg.checkpoint_every > 0 &&
        st.step % static_cast<std::uint64_t>(cfg.checkpoint_every) == 0) {
      st.rng = rng.state();
      save_checkpoint(cfg.checkpoint_path, field, &st);
    }
  }
  st.rng = rng.state();
  TrainResult<Scalar> result;
  result.history = st.history;
  result.state = std::move(st);
  return result;
}

/// Writes `step,loss` rows with a header line.
void write_history_csv(const std::string& path, const std::vector<HistoryEntry>& history);

}  // namespace nerfin
