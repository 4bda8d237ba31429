// Copyright Contributors to the nerfin Project
// SPDX-License-Identifier: Apache-2.0

#include "doctest.h"

#include "nerfin/png.hpp"
#include "nerfin/scene.hpp"

#include <cmath>
#include <filesystem>

using namespace nerfin;
namespace fs = std::filesystem;

namespace {

SceneSpec lone_sphere() {
  SceneSpec s;
  s.name = "lone";
  s.primitives.push_back({"ball", Sphere{Vec3::Zero(), 1.0}, Vec3(0.5, 0.6, 0.7)});
  s.removable_id = "ball";
  return s;
}

double forward_error(const CameraPose& p, const Vec3& center) {
  const Vec3 want = (center - p.position).normalized();
  return std::acos(std::clamp(p.forward().dot(want), -1.0, 1.0));
}

}  // namespace

TEST_CASE("trajectory: single view, 24 views, look-at") {
  const Vec3 center(0.2, -0.1, 0.3);
  const auto one = make_trajectory(center, 3.0, 1, 0.25);
  REQUIRE(one.size() == 1);
  CHECK((one[0].position - center).norm() == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(forward_error(one[0], center) < 1e-6);

  const auto traj = make_trajectory(center, 3.0, 24, 0.25);
  REQUIRE(traj.size() == 24);
  for (const auto& p : traj) {
    CHECK(p.valid());
    CHECK(forward_error(p, center) < 1e-6);
    CHECK((p.position - center).norm() == doctest::Approx(3.0).epsilon(1e-12));
    // The scene faces +y: cameras sit on the +y side.
    CHECK(p.position.y() > center.y());
  }
  CHECK(traj[0].position != traj[1].position);
}

TEST_CASE("pose round trip: project(unproject(pixel, range)) within 1e-4 px") {
  Rng rng(3);
  for (const auto& p : make_trajectory(Vec3::Zero(), 4.0, 24, 0.25)) {
    for (int i = 0; i < 20; ++i) {
      const double px = rng.uniform(0, p.width), py = rng.uniform(0, p.height), r = rng.uniform(1, 9);
      const auto back = p.project(p.unproject(px, py, r));
      REQUIRE(back);
      CHECK(std::abs(back->x() - px) < 1e-4);
      CHECK(std::abs(back->y() - py) < 1e-4);
      CHECK(p.range_to(p.unproject(px, py, r)) == doctest::Approx(r).epsilon(1e-12));
    }
  }
}

TEST_CASE("raytrace: empty scene, centred sphere depth, analytic intersections") {
  const CameraPose pose = look_at(Vec3(0, 4, 0), Vec3::Zero(), Vec3::UnitZ(), 20, 15, 15);

  SceneSpec empty;
  empty.background = Vec3(0.1, 0.2, 0.3);
  const TracedView e = raytrace_view(empty, pose);
  CHECK((e.depth == empty.far).all());
  CHECK((e.primitive.array() == -1).all());
  for (Index p = 0; p < e.image.pixels.rows(); ++p) {
    CHECK(e.image.pixels(p, 0) == doctest::Approx(0.1));
    CHECK(e.image.pixels(p, 2) == doctest::Approx(0.3));
  }

  const TracedView s = raytrace_view(lone_sphere(), pose);
  CHECK(s.depth(7, 7) == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(s.primitive(7, 7) == 0);
  CHECK(s.primitive(0, 0) == -1);

  // Quadratic-root oracle on random rays.
  Rng rng(11);
  const Sphere sphere{Vec3(0.3, -0.2, 0.1), 1.3};
  int hits = 0;
  for (int i = 0; i < 100; ++i) {
    const Vec3 o(rng.uniform(-1, 1), 5 + rng.uniform(0, 1), rng.uniform(-1, 1));
    const Vec3 d = (Vec3(rng.uniform(-1, 1), 0, rng.uniform(-1, 1)) - o).normalized();
    const Vec3 oc = o - sphere.center;
    const double b = oc.dot(d), c = oc.squaredNorm() - sphere.radius * sphere.radius;
    const double disc = b * b - c;
    const auto hit = intersect(sphere, Ray{o, d});
    if (disc < 0) {
      CHECK(!hit);
      continue;
    }
    ++hits;
    REQUIRE(hit);
    CHECK(std::abs(hit->t - (-b - std::sqrt(disc))) < 1e-9);
    CHECK((hit->normal - (o + hit->t * d - sphere.center) / sphere.radius).norm() < 1e-9);
  }
  CHECK(hits > 20);
}

TEST_CASE("box and plane intersections") {
  const Box box{Vec3(0, 0, 0), Vec3(1, 2, 3)};
  const auto h = intersect(box, Ray{Vec3(0, 10, 0), Vec3(0, -1, 0)});
  REQUIRE(h);
  CHECK(h->t == doctest::Approx(8.0));
  CHECK(h->normal.isApprox(Vec3::UnitY()));
  CHECK(!intersect(box, Ray{Vec3(5, 10, 0), Vec3(0, -1, 0)}));

  const PlaneSurface plane{Vec3(0, 0, -1), Vec3::UnitZ()};
  const auto p = intersect(plane, Ray{Vec3(0, 0, 2), Vec3(0, 0.6, -0.8)});
  REQUIRE(p);
  CHECK(p->t == doctest::Approx(3.75));
  CHECK(!intersect(plane, Ray{Vec3(0, 0, 2), Vec3(0, 0, 1)}));
}

TEST_CASE("plane hits reproject across views within one pixel") {
  const SceneSpec scene = bundled_scene("desuku-like");
  const auto traj = make_trajectory(scene.trajectory);
  const TracedView a = raytrace_view(scene, traj[2]);
  const TracedView b = raytrace_view(scene, traj[9]);
  int checked = 0;
  for (int y = 0; y < a.depth.rows(); y += 2) {
    for (int x = 0; x < a.depth.cols(); x += 2) {
      if (a.primitive(y, x) != 1) continue;  // the desk plane
      const Vec3 world = traj[2].unproject(x + 0.5, y + 0.5, a.depth(y, x));
      const auto q = traj[9].project(world);
      if (!q || q->x() < 0 || q->y() < 0 || q->x() >= b.depth.cols() || q->y() >= b.depth.rows()) continue;
      const int bx = static_cast<int>(q->x()), by = static_cast<int>(q->y());
      if (b.primitive(by, bx) != 1) continue;
      // B's hit along the same ray lands on the same surface point.
      const Vec3 seen = traj[9].unproject(q->x(), q->y(), traj[9].range_to(world));
      CHECK((seen - world).norm() < 1e-9);
      const auto qb = traj[9].project(traj[9].unproject(bx + 0.5, by + 0.5, b.depth(by, bx)));
      CHECK((*qb - *q).norm() <= 1.0);
      ++checked;
    }
  }
  CHECK(checked > 50);
}

TEST_CASE("scene pairs: masks, identity outside the object, occlusion, determinism") {
  for (const auto& name : bundled_scene_names()) {
    INFO(name);
    const SceneSpec scene = bundled_scene(name);
    CHECK_NOTHROW(scene.validate());
    TrajectorySpec ts = scene.trajectory;
    ts.n_views = 6;
    const auto traj = make_trajectory(ts);
    const ScenePair pair = make_scene_pair(scene, traj);
    REQUIRE(pair.original.views.size() == 6);
    CHECK(pair.original.variant == "original");
    CHECK(pair.removed.variant == "removed");
    for (std::size_t k = 0; k < traj.size(); ++k) {
      const Mask& m = pair.true_masks[k];
      CHECK((m == 0).count() > 0);
      const auto& o = pair.original.views[k];
      const auto& r = pair.removed.views[k];
      for (int y = 0; y < m.rows(); ++y) {
        for (int x = 0; x < m.cols(); ++x) {
          if (!m(y, x)) continue;
          const Index p = y * m.cols() + x;
          CHECK(o.image.pixels.row(p).isApprox(r.image.pixels.row(p), 0.0));
          CHECK((*o.depth)(y, x) == (*r.depth)(y, x));
        }
      }
      CHECK(((*o.depth) > 0).all());
    }
    const ScenePair again = make_scene_pair(scene, traj);
    for (std::size_t k = 0; k < traj.size(); ++k) {
      CHECK(again.original.views[k].image == pair.original.views[k].image);
      CHECK((*again.removed.views[k].depth == *pair.removed.views[k].depth).all());
    }
  }

  // An object hidden behind a wall leaves an all-ones mask.
  SceneSpec hidden = lone_sphere();
  hidden.primitives.push_back({"wall", Box{Vec3(0, 2, 0), Vec3(3, 0.1, 3)}, Vec3(0.5, 0.5, 0.5)});
  const ScenePair pair = make_scene_pair(hidden, {look_at(Vec3(0, 5, 0), Vec3::Zero(), Vec3::UnitZ(), 20, 12, 12)});
  CHECK((pair.true_masks[0] == 1).all());
}

TEST_CASE("dataset round trip: exact depths, poses and masks") {
  SceneSpec scene = bundled_scene("terebi-like");
  TrajectorySpec ts = scene.trajectory;
  ts.n_views = 3;
  ts.width = 20;
  ts.height = 14;
  const ScenePair pair = make_scene_pair(scene, make_trajectory(ts));
  PosedImageSet set = pair.original;
  set.views[1].mask = pair.true_masks[1];
  const fs::path dir = fs::temp_directory_path() / "nerfin_test_dataset";
  fs::remove_all(dir);
  save_dataset(dir.string(), set);
  const PosedImageSet back = load_dataset(dir.string());
  CHECK(back.scene == set.scene);
  CHECK(back.variant == set.variant);
  CHECK(back.near == set.near);
  CHECK(back.far == set.far);
  REQUIRE(back.views.size() == 3);
  for (std::size_t k = 0; k < 3; ++k) {
    const auto& a = set.views[k];
    const auto& b = back.views[k];
    CHECK(a.pose.position == b.pose.position);
    CHECK(a.pose.rotation == b.pose.rotation);
    CHECK(a.pose.focal == b.pose.focal);
    CHECK(a.pose.width == b.pose.width);
    // Images are stored as 8-bit PNG.
    CHECK(decode_rgb_png(encode_rgb_png(a.image)) == b.image);
    REQUIRE(b.depth);
    CHECK((*a.depth == *b.depth).all());
    CHECK(a.mask.has_value() == b.mask.has_value());
  }
  CHECK((*back.views[1].mask == pair.true_masks[1]).all());
  // The 16-bit depth PNG agrees with the float depths to the documented scale.
  const DepthMap png = decode_depth_png(read_file((dir / "depth" / "000.png").string()), depth_png_scale);
  CHECK(((png - *set.views[0].depth).abs() <= 0.5 / depth_png_scale + 1e-9).all());
  fs::remove_all(dir);
}

TEST_CASE("png codecs") {
  RgbImage img(5, 3);
  for (Index i = 0; i < img.pixels.size(); ++i) img.pixels.data()[i] = static_cast<float>(i % 256) / 255.0f;
  CHECK(decode_rgb_png(encode_rgb_png(img)) == img);
  Mask m = Mask::Ones(4, 9);
  m(2, 7) = 0;
  m(0, 0) = 0;
  CHECK((decode_mask_png(encode_mask_png(m)) == m).all());
  CHECK_THROWS_AS(decode_png(Bytes{1, 2, 3}), std::invalid_argument);
}
