// Copyright Contributors to the nerfin Project
// SPDX-License-Identifier: Apache-2.0

#include "doctest.h"
#include "oracles.hpp"

#include "nerfin/render.hpp"

#include <cmath>
#include <numbers>

using namespace nerfin;
using nerfin::testing::finite_difference;
using nerfin::testing::random_tensor;
using nerfin::testing::relative_error;
using nerfin::testing::render_gradient_error;
using nerfin::testing::sample_analytic;

namespace {

FieldConfig tiny_config(std::uint64_t seed = 1) {
  FieldConfig cfg;
  cfg.pos_levels = 3;
  cfg.dir_levels = 2;
  cfg.hidden_width = 8;
  cfg.hidden_layers = 3;
  cfg.skip_layer = 2;
  cfg.n_coarse = 8;
  cfg.n_fine = 8;
  cfg.seed = seed;
  return cfg;
}

Ray axis_ray() { return {Vec3(0, 0, 0), Vec3(0, 0, 1)}; }

}  // namespace

TEST_CASE("positional encoding examples") {
  Eigen::VectorXd zero(1);
  zero << 0.0;
  const Eigen::VectorXd e0 = positional_encode(zero, 2);
  CHECK(e0.size() == 4);
  CHECK(e0(0) == 0.0);
  CHECK(e0(1) == 1.0);
  CHECK(e0(2) == 0.0);
  CHECK(e0(3) == 1.0);

  Eigen::VectorXd half(1);
  half << 0.5;
  const Eigen::VectorXd e1 = positional_encode(half, 1);
  CHECK(e1(0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(std::abs(e1(1)) < 1e-15);

  Eigen::VectorXd q(1);
  q << 0.25;
  const Eigen::VectorXd e2 = positional_encode(q, 3);
  for (int k = 0; k < 3; ++k) {
    const double arg = std::pow(2.0, k) * std::numbers::pi * 0.25;
    CHECK(e2(2 * k) == doctest::Approx(std::sin(arg)).epsilon(1e-14));
    CHECK(e2(2 * k + 1) == doctest::Approx(std::cos(arg)).epsilon(1e-14));
  }

  Eigen::VectorXd p3(3);
  p3 << 0.1, -0.7, 1.3;
  CHECK(positional_encode(p3, 5).size() == 3 * 2 * 5);
  Tensord rows = p3.transpose();
  const Tensord batch = encode_rows(rows, 5);
  CHECK(relative_error(batch.row(0).transpose().eval(), positional_encode(p3, 5)) < 1e-15);
}

TEST_CASE("query_field: bounded, deterministic, density independent of direction") {
  const auto field = RadianceField<float>::init(FieldConfig{});
  Rng rng(4);
  for (int i = 0; i < 20; ++i) {
    const Vec3 x(rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2));
    const Vec3 d1 = Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)).normalized();
    const Vec3 d2 = Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)).normalized();
    const auto [c1, s1] = query_field(field, x, d1, Level::fine);
    const auto [c1b, s1b] = query_field(field, x, d1, Level::fine);
    const auto [c2, s2] = query_field(field, x, d2, Level::fine);
    CHECK(c1.allFinite());
    CHECK(s1 >= 0.0);
    CHECK(s1 < 10.0);
    CHECK((c1.array() >= 0).all());
    CHECK((c1.array() <= 1).all());
    CHECK(c1 == c1b);
    CHECK(s1 == s1b);
    CHECK(s1 == s2);
  }
}

TEST_CASE("composite: transparent medium renders nothing") {
  Tape<double> tape;
  const auto a = sample_analytic([](double) { return 0.0; }, [](double) { return Vec3(1, 0.5, 0.2); }, 2, 6, 32);
  const auto c = composite(tape.constant(a.sigma), tape.constant(a.rgb), a.t, a.deltas, Vec3::Zero());
  CHECK(c.color.value().isZero());
  CHECK(c.acc.value()(0, 0) == 0.0);
}

TEST_CASE("composite: opaque sample returns its color and depth") {
  Tape<double> tape;
  const double t_star = 3.5;
  const Vec3 c_star(0.2, 0.7, 0.4);
  const auto a = sample_analytic([&](double t) { return std::abs(t - t_star) < 1e-9 ? 1e9 : 0.0; },
                                 [&](double t) { return std::abs(t - t_star) < 1e-9 ? c_star : Vec3(1, 1, 1); }, 2, 6,
                                 16);
  const auto c = composite(tape.constant(a.sigma), tape.constant(a.rgb), a.t, a.deltas, Vec3::Zero());
  CHECK(relative_error(c.color.value().row(0).transpose().eval(), c_star) < 1e-12);
  CHECK(c.depth.value()(0, 0) == doctest::Approx(t_star).epsilon(1e-12));
}

TEST_CASE("composite: piecewise-constant medium matches the closed-form integral") {
  const auto err = nerfin::testing::piecewise_constant_error(256);
  CHECK(err.color < 1e-3);
  // depth quadrature uses left endpoints, so it converges at O(step)
  CHECK(err.depth < 2e-2);
  CHECK(nerfin::testing::piecewise_constant_error(1024).depth < err.depth);
}

TEST_CASE("composite invariants on random media") {
  Rng rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    const Index n = 24;
    Tensord t(1, n);
    double acc_t = 2.0;
    for (Index i = 0; i < n; ++i) {
      acc_t += rng.uniform(0.01, 0.3);
      t(0, i) = acc_t;
    }
    const double far = acc_t + 0.2;
    const Tensord sigma = random_tensor<double>(rng, 1, n, 0.0, 5.0);
    const Tensord rgb = random_tensor<double>(rng, n, 3, 0.0, 1.0);
    const Tensord deltas = sample_deltas(t, far);
    Tape<double> tape;
    const auto c = composite(tape.constant(sigma), tape.constant(rgb), t, deltas, Vec3::Zero());
    const Tensord w = c.weights.value();

    // telescoping transmittance
    double trans = 1.0;
    for (Index i = 0; i < n; ++i) {
      const double alpha = 1 - std::exp(-sigma(0, i) * deltas(0, i));
      CHECK(std::abs(w(0, i) - trans * alpha) < 1e-6);
      trans *= std::exp(-sigma(0, i) * deltas(0, i));
    }
    const double total = w.sum();
    CHECK(total >= 0.0);
    CHECK(total <= 1.0 + 1e-12);
    if (total > 1e-6) {
      const double d = c.depth.value()(0, 0) / total;
      CHECK(d >= t(0, 0) - 1e-9);
      CHECK(d <= far + 1e-9);
    }

    // raising one density never raises later transmittance
    const Index k = static_cast<Index>(rng.below(n - 1));
    Tensord sigma2 = sigma;
    sigma2(0, k) += rng.uniform(0.1, 3.0);
    Tape<double> tape2;
    const auto c2 = composite(tape2.constant(sigma2), tape2.constant(rgb), t, deltas, Vec3::Zero());
    // transmittance before sample j is 1 - sum_{i<j} w_i
    const Tensord& w2 = c2.weights.value();
    double before1 = 0, before2 = 0;
    for (Index j = 0; j < n; ++j) {
      if (j > k) CHECK(1.0 - before2 <= 1.0 - before1 + 1e-12);
      before1 += w(0, j);
      before2 += w2(0, j);
    }
  }
}

TEST_CASE("zero-density field renders black with zero weights") {
  auto field = RadianceField<float>::init(tiny_config());
  const std::size_t n = field.per_network();
  const std::size_t density_bias = 2 * static_cast<std::size_t>(field.config.hidden_layers) + 1;
  for (std::size_t net = 0; net < 2; ++net) {
    field.theta[net * n + density_bias - 1].setZero();
    field.theta[net * n + density_bias].setConstant(-200.f);
  }
  const RayRender r = render_ray(field, axis_ray(), false, 0);
  CHECK(r.color_fine.isZero());
  CHECK(r.color_coarse.isZero());
  double total = 0;
  for (double w : r.weights_fine) total += w;
  CHECK(total == 0.0);

  CameraPose pose = look_at(Vec3(0, 4, 0), Vec3::Zero(), Vec3::UnitZ(), 10, 6, 5);
  const ViewRender v = render_view(field, pose, Level::fine);
  CHECK((v.image.pixels == 0.f).all());
  CHECK((v.accumulation == 0.f).all());
}

TEST_CASE("render_view is pixelwise render_ray") {
  const auto field = RadianceField<float>::init(tiny_config(5));
  CameraPose pose = look_at(Vec3(0.3, 4, 0.5), Vec3::Zero(), Vec3::UnitZ(), 12, 9, 7);
  const ViewRender v = render_view(field, pose, Level::fine, 16);
  for (auto [x, y] : {std::pair{0, 0}, std::pair{4, 3}, std::pair{8, 6}, std::pair{2, 5}}) {
    const RayRender r = render_ray(field, pose.pixel_ray(x, y), false, 0);
    const Eigen::Vector3f c = r.color_fine.cast<float>().cwiseMax(0.f).cwiseMin(1.f);
    CHECK(v.image.at(x, y).matrix().transpose() == c);
    CHECK(v.depth(y, x) == static_cast<float>(r.depth_fine));
  }
}

TEST_CASE("stratified rendering depends only on the seed") {
  const auto field = RadianceField<float>::init(tiny_config(2));
  const Ray ray{Vec3(0, 4, 0), Vec3(0, -1, 0)};
  const RayRender a = render_ray(field, ray, true, 42);
  const RayRender b = render_ray(field, ray, true, 42);
  const RayRender c = render_ray(field, ray, true, 43);
  CHECK(a.color_fine == b.color_fine);
  CHECK(a.depth_fine == b.depth_fine);
  CHECK(a.depth_fine != c.depth_fine);
}

TEST_CASE("fine samples lie in [near, far] and are sorted") {
  const auto field = RadianceField<double>::init(tiny_config(3));
  Tape<double> tape(false);
  const auto vars = bind(tape, field);
  Rng rng(8);
  std::vector<Ray> rays{{Vec3(0, 4, 0), Vec3(0, -1, 0)}, {Vec3(0, 4, 1), Vec3(0, -1, -0.2).normalized()}};
  const auto out = render_batch(tape, vars, field.config, RayBatch<double>::from(rays), true, rng);
  CHECK(out.t_fine.cols() == field.config.n_coarse + field.config.n_fine);
  for (Index r = 0; r < out.t_fine.rows(); ++r) {
    for (Index i = 0; i < out.t_fine.cols(); ++i) {
      CHECK(out.t_fine(r, i) >= field.config.near);
      CHECK(out.t_fine(r, i) <= field.config.far);
      if (i > 0) CHECK(out.t_fine(r, i) >= out.t_fine(r, i - 1));
    }
  }
}


TEST_CASE("render gradients match finite differences on a width-8 field") {
  CHECK(render_gradient_error<double>(Level::coarse, 1e-6) < 1e-6);
  CHECK(render_gradient_error<double>(Level::fine, 1e-6) < 1e-6);
  CHECK(render_gradient_error<float>(Level::coarse, 1e-3) < 1e-2);
  CHECK(render_gradient_error<float>(Level::fine, 1e-6, true) < 1e-2);
  CHECK(render_gradient_error<float>(Level::coarse, 1e-6, true) < 1e-2);
}
