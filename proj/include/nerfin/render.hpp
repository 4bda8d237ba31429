// Copyright Contributors to the nerfin Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Differentiable volume rendering along ray batches.
//
// For samples t_1 < ... < t_N on a ray with deltas d_i = t_{i+1} - t_i (the
// last one runs to the far plane), the weights are
//   w_i = T_i (1 - exp(-sigma_i d_i)),  T_i = exp(-sum_{j<i} sigma_j d_j)
// and color = sum w_i c_i + (1 - sum w_i) background, depth = sum w_i t_i.

#include "nerfin/camera.hpp"
#include "nerfin/field.hpp"
#include "nerfin/grad.hpp"
#include "nerfin/image.hpp"

#include <algorithm>
#include <span>
#include <vector>

namespace nerfin {

template <typename Scalar>
struct RayBatch {
  Tensor<Scalar> origins;     ///< R x 3
  Tensor<Scalar> directions;  ///< R x 3, unit rows

  Index size() const { return origins.rows(); }

  static RayBatch from(std::span<const Ray> rays) {
    RayBatch b;
    b.origins.resize(static_cast<Index>(rays.size()), 3);
    b.directions.resize(static_cast<Index>(rays.size()), 3);
    for (std::size_t i = 0; i < rays.size(); ++i) {
      b.origins.row(static_cast<Index>(i)) = rays[i].origin.transpose().cast<Scalar>();
      b.directions.row(static_cast<Index>(i)) = rays[i].direction.transpose().cast<Scalar>();
    }
    return b;
  }
};

template <typename Scalar>
struct Composite {
  Var<Scalar> color;    ///< R x 3
  Var<Scalar> depth;    ///< R x 1, expected termination distance
  Var<Scalar> acc;      ///< R x 1, sum of weights
  Var<Scalar> weights;  ///< R x N
};

/// Interval lengths per sample; the last interval ends at `far`.
template <typename Scalar>
Tensor<Scalar> sample_deltas(const Tensor<Scalar>& t, double far) {
  const Index n = t.cols();
  Tensor<Scalar> d(t.rows(), n);
  if (n > 1) d.leftCols(n - 1) = t.rightCols(n - 1) - t.leftCols(n - 1);
  d.col(n - 1) = (Scalar(far) - t.col(n - 1).array()).max(Scalar(0)).matrix();
  return d;
}

/// Strictly upper-triangular ones: (x * U)_i = sum_{j<i} x_j.
template <typename Scalar>
Tensor<Scalar> exclusive_prefix_matrix(Index n) {
  Tensor<Scalar> u = Tensor<Scalar>::Zero(n, n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < i; ++j) u(j, i) = Scalar(1);
  }
  return u;
}

/// Alpha-composites per-sample density (R x N) and color ((R*N) x 3, ray-major).
template <typename Scalar>
Composite<Scalar> composite(const Var<Scalar>& sigma, const Var<Scalar>& rgb, const Tensor<Scalar>& t,
                            const Tensor<Scalar>& deltas, const Vec3& background) {
  Tape<Scalar>& tape = sigma.tape();
  const Index r = t.rows(), n = t.cols();
  if (sigma.shape() != Shape{r, n} || rgb.shape() != Shape{r * n, 3} || shape_of(deltas) != Shape{r, n}) {
    throw ShapeError("composite: sigma " + shape_string(sigma.shape()) + ", rgb " + shape_string(rgb.shape()) +
                     ", t " + shape_string(shape_of(t)));
  }
  Var<Scalar> tau = mul(sigma, tape.constant(deltas));
  Var<Scalar> alpha = affine(exp(neg(tau)), Scalar(-1), Scalar(1));
  Var<Scalar> optical = matmul(tau, tape.constant(exclusive_prefix_matrix<Scalar>(n)));
  Var<Scalar> transmittance = exp(neg(optical));
  Var<Scalar> w = mul(transmittance, alpha);

  std::vector<Var<Scalar>> channels;
  for (Index c = 0; c < 3; ++c) {
    Var<Scalar> ch = reshape(slice(rgb, Axis::cols, c, 1), r, n);
    channels.push_back(sum(mul(w, ch), Axis::cols));
  }
  Var<Scalar> color = concat(std::span<const Var<Scalar>>(channels), Axis::cols);
  Var<Scalar> acc = sum(w, Axis::cols);
  if (!background.isZero()) {
    Tensor<Scalar> bg = background.transpose().cast<Scalar>();
    color = add(color, matmul(affine(acc, Scalar(-1), Scalar(1)), tape.constant(bg)));
  }
  Var<Scalar> depth = sum(mul(w, tape.constant(t)), Axis::cols);
  return {color, depth, acc, w};
}

/// N samples per ray in [near, far]: bin midpoints, or uniformly jittered within bins.
template <typename Scalar>
Tensor<Scalar> coarse_samples(Index rays, Index n, double near, double far, bool stratified, Rng& rng) {
  Tensor<Scalar> t(rays, n);
  const double step = (far - near) / static_cast<double>(n);
  for (Index r = 0; r < rays; ++r) {
    for (Index i = 0; i < n; ++i) {
      const double u = stratified ? rng.uniform() : 0.5;
      t(r, i) = static_cast<Scalar>(near + (static_cast<double>(i) + u) * step);
    }
  }
  return t;
}

/// Inverse-CDF resampling of `count` depths per ray from piecewise-constant
/// densities given by the interior coarse weights over midpoint bins.
/// Deterministic mode uses evenly spaced quantiles.
template <typename Scalar>
Tensor<Scalar> importance_samples(const Tensor<Scalar>& t, const Tensor<Scalar>& weights, Index count,
                                  bool deterministic, Rng& rng) {
  const Index rays = t.rows(), n = t.cols();
  Tensor<Scalar> out(rays, count);
  if (count == 0) return out;
  std::vector<double> bins(static_cast<std::size_t>(std::max<Index>(n - 1, 2)));
  std::vector<double> cdf(bins.size());
  for (Index r = 0; r < rays; ++r) {
    Index nb;
    if (n >= 3) {
      nb = n - 1;
      for (Index i = 0; i < nb; ++i) bins[i] = 0.5 * (double(t(r, i)) + double(t(r, i + 1)));
      double total = 0;
      for (Index i = 1; i < n - 1; ++i) total += double(weights(r, i)) + 1e-5;
      cdf[0] = 0;
      for (Index i = 1; i < nb; ++i) cdf[i] = cdf[i - 1] + (double(weights(r, i)) + 1e-5) / total;
      cdf[nb - 1] = 1.0;
    } else {
      nb = 2;
      bins[0] = double(t(r, 0));
      bins[1] = double(t(r, n - 1));
      cdf[0] = 0;
      cdf[1] = 1;
    }
    for (Index k = 0; k < count; ++k) {
      const double u = deterministic ? (count == 1 ? 0.5 : double(k) / double(count - 1)) : rng.uniform();
      const auto it = std::upper_bound(cdf.begin(), cdf.begin() + nb, u);
      const Index idx = static_cast<Index>(it - cdf.begin());
      const Index below = std::max<Index>(0, idx - 1);
      const Index above = std::min<Index>(nb - 1, idx);
      double denom = cdf[above] - cdf[below];
      if (denom < 1e-5) denom = 1.0;
      const double frac = (u - cdf[below]) / denom;
      out(r, k) = static_cast<Scalar>(bins[below] + frac * (bins[above] - bins[below]));
    }
  }
  return out;
}

/// Row-wise sorted union of two sample sets.
template <typename Scalar>
Tensor<Scalar> merge_samples(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  Tensor<Scalar> out(a.rows(), a.cols() + b.cols());
  out.leftCols(a.cols()) = a;
  out.rightCols(b.cols()) = b;
  for (Index r = 0; r < out.rows(); ++r) std::sort(out.row(r).data(), out.row(r).data() + out.cols());
  return out;
}

/// Evaluates one network at samples `t` along the batch's rays and composites.
template <typename Scalar>
Composite<Scalar> render_samples(Tape<Scalar>& tape, const NetworkVars<Scalar>& net, const FieldConfig& cfg,
                                 const RayBatch<Scalar>& rays, const Tensor<Scalar>& t) {
  const Index r = rays.size(), n = t.cols();
  Tensor<Scalar> points(r * n, 3);
  Tensor<Scalar> dirs(r * n, 3);
  for (Index i = 0; i < r; ++i) {
    for (Index k = 0; k < n; ++k) {
      points.row(i * n + k) = rays.origins.row(i) + t(i, k) * rays.directions.row(i);
      dirs.row(i * n + k) = rays.directions.row(i);
    }
  }
  const Var<Scalar> enc_pos = tape.constant(encode_rows(points, cfg.pos_levels));
  const Var<Scalar> enc_dir = tape.constant(encode_rows(dirs, cfg.dir_levels));
  const PointOutput<Scalar> out = evaluate_network(net, cfg, enc_pos, enc_dir);
  return composite(reshape(out.sigma, r, n), out.rgb, t, sample_deltas(t, cfg.far), cfg.background);
}

template <typename Scalar>
struct BatchRender {
  Composite<Scalar> coarse;
  Composite<Scalar> fine;
  Tensor<Scalar> t_coarse;
  Tensor<Scalar> t_fine;
};

/// Hierarchical render: coarse pass, then the fine network on the coarse
/// samples merged with samples drawn from the (detached) coarse weights.
template <typename Scalar>
BatchRender<Scalar> render_batch(Tape<Scalar>& tape, const FieldVars<Scalar>& vars, const FieldConfig& cfg,
                                 const RayBatch<Scalar>& rays, bool stratified, Rng& rng) {
  BatchRender<Scalar> out;
  out.t_coarse = coarse_samples<Scalar>(rays.size(), cfg.n_coarse, cfg.near, cfg.far, stratified, rng);
  out.coarse = render_samples(tape, vars.coarse, cfg, rays, out.t_coarse);
  const Tensor<Scalar> extra = importance_samples(out.t_coarse, out.coarse.weights.value(), cfg.n_fine, !stratified, rng);
  out.t_fine = merge_samples(out.t_coarse, extra);
  out.fine = render_samples(tape, vars.fine, cfg, rays, out.t_fine);
  return out;
}

struct RayRender {
  Vec3 color_coarse = Vec3::Zero();
  Vec3 color_fine = Vec3::Zero();
  double depth_coarse = 0;
  double depth_fine = 0;
  std::vector<double> weights_coarse;
  std::vector<double> weights_fine;
};

/// Renders a single ray outside of any training tape.
template <typename Scalar>
RayRender render_ray(const RadianceField<Scalar>& field, const Ray& ray, bool stratified, std::uint64_t seed) {
  Tape<Scalar> tape(false);
  const FieldVars<Scalar> vars = bind(tape, field);
  Rng rng(seed);
  const Ray rays[1] = {ray};
  const auto out = render_batch(tape, vars, field.config, RayBatch<Scalar>::from(rays), stratified, rng);
  RayRender rr;
  rr.color_coarse = out.coarse.color.value().row(0).transpose().template cast<double>();
  rr.color_fine = out.fine.color.value().row(0).transpose().template cast<double>();
  rr.depth_coarse = double(out.coarse.depth.value()(0, 0));
  rr.depth_fine = double(out.fine.depth.value()(0, 0));
  const auto& wc = out.coarse.weights.value();
  const auto& wf = out.fine.weights.value();
  rr.weights_coarse.assign(wc.data(), wc.data() + wc.size());
  rr.weights_fine.assign(wf.data(), wf.data() + wf.size());
  return rr;
}

struct ViewRender {
  RgbImage image;
  DepthMap depth;
  DepthMap accumulation;
};

/// Deterministic (midpoint-sampled) render of every pixel of `pose`.
template <typename Scalar>
ViewRender render_view(const RadianceField<Scalar>& field, const CameraPose& pose, Level level, Index chunk = 512) {
  ViewRender v;
  v.image = RgbImage(pose.width, pose.height);
  v.depth = DepthMap::Zero(pose.height, pose.width);
  v.accumulation = DepthMap::Zero(pose.height, pose.width);
  const Index total = static_cast<Index>(pose.width) * pose.height;
  std::vector<Ray> rays;
  for (Index start = 0; start < total; start += chunk) {
    const Index count = std::min(chunk, total - start);
    rays.clear();
    for (Index p = start; p < start + count; ++p) {
      rays.push_back(pose.pixel_ray(static_cast<int>(p % pose.width), static_cast<int>(p / pose.width)));
    }
    Tape<Scalar> tape(false);
    const FieldVars<Scalar> vars = bind(tape, field);
    Rng rng(0);
    const auto out = render_batch(tape, vars, field.config, RayBatch<Scalar>::from(rays), false, rng);
    const Composite<Scalar>& c = level == Level::coarse ? out.coarse : out.fine;
    for (Index k = 0; k < count; ++k) {
      const Index p = start + k;
      v.image.pixels.row(p) = c.color.value().row(k).template cast<float>().array().max(0.f).min(1.f);
      v.depth.data()[p] = static_cast<float>(c.depth.value()(k, 0));
      v.accumulation.data()[p] = static_cast<float>(c.acc.value()(k, 0));
    }
  }
  return v;
}

}  // namespace nerfin
