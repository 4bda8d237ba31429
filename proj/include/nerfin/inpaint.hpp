// Copyright Contributors to the nerfin Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Guided inpainting of a pre-trained radiance field: a color loss over whole
// images of the O^all views, a color loss outside the masks of the O^out
// views, and a depth loss over the sampled views O, minimised by Adam from
// the pre-trained parameters. Also the two baselines and the ablation grid.

#include "nerfin/guidance.hpp"
#include "nerfin/train.hpp"

#include <algorithm>
#include <array>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace nerfin {

enum class InpaintMode { ours, color_only, depth_only, baseline1, baseline2 };

std::string to_string(InpaintMode mode);
InpaintMode parse_inpaint_mode(const std::string& name);

/// View indices address guidance entries: 0..K-1 are trajectory views, K is the user entry.
struct InpaintJob {
  int user_view_index = 0;
  std::optional<std::vector<int>> all_views;    ///< O^all; unset selects {K}
  std::optional<std::vector<int>> out_views;    ///< O^out; unset selects {0..K-1}
  std::optional<std::vector<int>> depth_views;  ///< O; unset selects {0..K-1}
  double depth_weight = 1.0;     ///< lambda_d, applied to depth residuals divided by (far - near)
  bool masked_depth = false;     ///< multiply depth residuals by the view masks
  int steps = 5000;
  int batch_rays = 1024;
  int min_term_rays = 64;
  double lr = 1e-4;
  std::uint64_t seed = 0;
  int log_every = 50;
  InpaintMode mode = InpaintMode::ours;

  void validate() const;
};

/// Keys: user_view, mode, all_views, out_views, depth_views, depth_weight,
/// masked_depth, steps, batch_rays, min_term_rays, lr, seed, log_every.
InpaintJob inpaint_job_from(const KeyValues& kv, InpaintJob base = {});
KeyValues to_key_values(const InpaintJob& job);

/// The job's view sets after applying the mode and defaults for a guidance set with K sampled views.
struct ViewSets {
  std::vector<int> all;
  std::vector<int> out;
  std::vector<int> depth;
  double depth_weight = 0;
};

ViewSets resolve_view_sets(const InpaintJob& job, int sampled_views);

/// Rays per active loss term, proportional to the set sizes with a floor of min_term_rays.
std::array<int, 3> split_batch(const ViewSets& sets, int batch_rays, int min_term_rays);

enum class ViewCountSetting { user_only, three_views, all_views };

std::string to_string(ViewCountSetting s);

/// O^all = {user}, three random sampled views, or all sampled views; O^out is the complement
/// (the user entry when O^all is every sampled view, the remaining sampled views otherwise).
InpaintJob with_view_count(InpaintJob job, ViewCountSetting setting, int sampled_views, std::uint64_t draw_seed);

struct InpaintLosses {
  std::uint64_t step = 0;
  double total = 0;
  double color_all = 0;
  double color_out = 0;
  double depth = 0;
};

/// Writes `step,total,color_all,color_out,depth` rows with a header line.
void write_inpaint_history_csv(const std::string& path, const std::vector<InpaintLosses>& history);

/// Rows [begin, begin + count) of a batch render.
template <typename Scalar>
BatchRender<Scalar> slice_render(const BatchRender<Scalar>& r, Index begin, Index count) {
  const auto cut = [&](const Composite<Scalar>& c) {
    return Composite<Scalar>{slice(c.color, Axis::rows, begin, count), slice(c.depth, Axis::rows, begin, count),
                             slice(c.acc, Axis::rows, begin, count), slice(c.weights, Axis::rows, begin, count)};
  };
  return {cut(r.coarse), cut(r.fine), r.t_coarse.middleRows(begin, count), r.t_fine.middleRows(begin, count)};
}

/// Mean over rays of ||C_c - I^G||^2 + ||C_f - I^G||^2 on whole images.
template <typename Scalar>
Var<Scalar> color_loss_all(const BatchRender<Scalar>& render, const Tensor<Scalar>& targets) {
  return mse_loss(render, targets);
}

/// As color_loss_all with each ray weighted by its view mask (0 inside the mask).
template <typename Scalar>
Var<Scalar> color_loss_out(const BatchRender<Scalar>& render, const Tensor<Scalar>& targets,
                           const Tensor<Scalar>& mask) {
  return masked_mse_loss(render, targets, mask);
}

/// Mean over rays of ((D_f - D^G)^2 + (D_c - D^G)^2) / span^2, optionally masked.
template <typename Scalar>
Var<Scalar> depth_loss(const BatchRender<Scalar>& render, const Tensor<Scalar>& targets, double span,
                       const Tensor<Scalar>* mask = nullptr) {
  Tape<Scalar>& tape = render.fine.depth.tape();
  const Var<Scalar> target = tape.constant(targets);
  const Scalar inv_span = static_cast<Scalar>(1.0 / span);
  const auto term = [&](const Composite<Scalar>& c) {
    const Var<Scalar> d = affine(sub(c.depth, target), inv_span);
    Var<Scalar> sq = mul(d, d);
    if (mask) sq = mul(sq, tape.constant(*mask));
    return sum(sq);
  };
  return affine(add(term(render.fine), term(render.coarse)), Scalar(1) / static_cast<Scalar>(targets.rows()));
}

/// Step-wise guided optimisation; owns a copy of the field, warm-started from the given parameters.
template <typename Scalar>
class InpaintOptimizer {
 public:
  InpaintOptimizer(RadianceField<Scalar> field, const Guidance& guidance, InpaintJob job)
      : field_(std::move(field)), guidance_(guidance), job_(std::move(job)), rng_(job_.seed) {
    job_.validate();
    if (job_.mode == InpaintMode::baseline2) {
      throw std::invalid_argument("inpaint: baseline2 retrains from scratch; use baseline2()");
    }
    const int k = guidance_.sampled_count();
    if (k < 1) throw std::invalid_argument("inpaint: guidance set has no sampled views");
    if (job_.user_view_index != guidance_.user_view) {
      throw std::invalid_argument("inpaint: job user view " + std::to_string(job_.user_view_index) +
                                  " differs from the guidance user view " + std::to_string(guidance_.user_view));
    }
    sets_ = resolve_view_sets(job_, k);
    for (int v : sets_.depth) {
      if (!guidance_.set.views[static_cast<std::size_t>(v)].depth) {
        throw std::invalid_argument("inpaint: guidance view " + std::to_string(v) + " has no guiding depth");
      }
    }
    counts_ = split_batch(sets_, job_.batch_rays, job_.min_term_rays);
    adam_ = AdamState<Scalar>::like(field_.theta);
  }

  const RadianceField<Scalar>& field() const { return field_; }
  const InpaintJob& job() const { return job_; }
  const ViewSets& view_sets() const { return sets_; }
  std::uint64_t steps_done() const { return step_; }
  bool done() const { return step_ >= static_cast<std::uint64_t>(job_.steps); }
  const std::vector<InpaintLosses>& history() const { return history_; }

  /// One Adam step on a fresh ray batch; returns this step's loss components.
  InpaintLosses step() {
    const std::vector<int>* sets[3] = {&sets_.all, &sets_.out, &sets_.depth};
    std::array<RaySample<Scalar>, 3> batches;
    for (int t = 0; t < 3; ++t) {
      if (counts_[t] == 0) continue;
      batches[t] = sample_rays<Scalar>(guidance_.set, *sets[t], counts_[t], rng_);
    }
    Index total_rays = counts_[0] + counts_[1] + counts_[2];
    RayBatch<Scalar> all;
    all.origins.resize(total_rays, 3);
    all.directions.resize(total_rays, 3);
    Index offset = 0;
    std::array<Index, 3> begin{};
    for (int t = 0; t < 3; ++t) {
      begin[t] = offset;
      if (counts_[t] == 0) continue;
      all.origins.middleRows(offset, counts_[t]) = batches[t].rays.origins;
      all.directions.middleRows(offset, counts_[t]) = batches[t].rays.directions;
      offset += counts_[t];
    }
    Tape<Scalar> tape;
    const FieldVars<Scalar> vars = bind(tape, field_);
    const BatchRender<Scalar> render = render_batch(tape, vars, field_.config, all, true, rng_);
    InpaintLosses out;
    out.step = step_ + 1;
    std::vector<Var<Scalar>> terms;
    if (counts_[0]) {
      const Var<Scalar> l = color_loss_all(slice_render(render, begin[0], counts_[0]), batches[0].colors);
      out.color_all = double(l.value()(0, 0));
      terms.push_back(l);
    }
    if (counts_[1]) {
      const Var<Scalar> l =
          color_loss_out(slice_render(render, begin[1], counts_[1]), batches[1].colors, batches[1].mask);
      out.color_out = double(l.value()(0, 0));
      terms.push_back(l);
    }
    if (counts_[2]) {
      const double span = field_.config.far - field_.config.near;
      const Var<Scalar> l = depth_loss(slice_render(render, begin[2], counts_[2]), batches[2].depths, span,
                                       job_.masked_depth ? &batches[2].mask : nullptr);
      out.depth = double(l.value()(0, 0));
      terms.push_back(affine(l, static_cast<Scalar>(sets_.depth_weight)));
    }
    Var<Scalar> loss = terms[0];
    for (std::size_t i = 1; i < terms.size(); ++i) loss = add(loss, terms[i]);
    out.total = double(loss.value()(0, 0));
    if (!std::isfinite(out.total)) {
      throw TrainingDiverged("inpaint: non-finite loss at step " + std::to_string(out.step) + " (color_all " +
                             std::to_string(out.color_all) + ", color_out " + std::to_string(out.color_out) +
                             ", depth " + std::to_string(out.depth) + ")");
    }
    tape.backward(loss);
    const auto grads = gradients(tape, vars);
    AdamConfig adam;
    adam.lr = job_.lr;
    adam_step<Scalar>(field_.theta, grads, adam_, adam);
    ++step_;
    accumulate(out);
    return out;
  }

 private:
  void accumulate(const InpaintLosses& l) {
    sum_.total += l.total;
    sum_.color_all += l.color_all;
    sum_.color_out += l.color_out;
    sum_.depth += l.depth;
    ++interval_;
    if (step_ % static_cast<std::uint64_t>(job_.log_every) == 0 || done()) {
      const double n = interval_;
      history_.push_back({step_, sum_.total / n, sum_.color_all / n, sum_.color_out / n, sum_.depth / n});
      sum_ = {};
      interval_ = 0;
    }
  }

  RadianceField<Scalar> field_;
  Guidance guidance_;
  InpaintJob job_;
  Rng rng_;
  ViewSets sets_;
  std::array<int, 3> counts_{};
  AdamState<Scalar> adam_;
  std::uint64_t step_ = 0;
  std::vector<InpaintLosses> history_;
  InpaintLosses sum_;
  int interval_ = 0;
};

template <typename Scalar>
struct InpaintResult {
  RadianceField<Scalar> field;
  std::vector<InpaintLosses> history;
};

using InpaintCallback = std::function<void(const InpaintLosses&)>;

/// Runs a full job (modes ours, color_only, depth_only, baseline1) from the pre-trained field.
template <typename Scalar>
InpaintResult<Scalar> inpaint(const RadianceField<Scalar>& field, const Guidance& guidance, const InpaintJob& job,
                              const InpaintCallback& on_step = {}) {
  InpaintOptimizer<Scalar> opt(field, guidance, job);
  while (!opt.done()) {
    const InpaintLosses l = opt.step();
    if (on_step) on_step(l);
  }
  return {opt.field(), opt.history()};
}

/// Per-view color updating: every guidance entry supervised over the whole image, no depth term.
template <typename Scalar>
InpaintResult<Scalar> baseline1(const RadianceField<Scalar>& field, const Guidance& guidance, InpaintJob job,
                                const InpaintCallback& on_step = {}) {
  job.mode = InpaintMode::baseline1;
  return inpaint(field, guidance, job, on_step);
}

/// A freshly initialised field trained with masked mse on every guidance entry and its mask.
template <typename Scalar>
TrainResult<Scalar> baseline2(RadianceField<Scalar>& fresh, const Guidance& guidance, const TrainConfig& cfg,
                              const std::function<void(std::uint64_t, double)>& on_step = {}) {
  return train(fresh, guidance.set, cfg, LossKind::masked_mse, std::nullopt, on_step);
}

}  // namespace nerfin
