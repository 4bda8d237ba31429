// Copyright Contributors to the nerfin Project
// SPDX-License-Identifier: Apache-2.0

#include "doctest.h"
#include "oracles.hpp"

#include "nerfin/mask.hpp"
#include "nerfin/scene.hpp"

#include <cmath>

using namespace nerfin;
using nerfin::testing::plane_scene;
using nerfin::testing::rect_mask;

namespace {

bool subset_of_zero(const Mask& inner, const Mask& outer) { return ((inner == 0) && (outer != 0)).count() == 0; }

}  // namespace

TEST_CASE("mask_iou examples") {
  const Mask a = rect_mask(16, 16, 2, 2, 6, 6);
  CHECK(mask_iou(a, a) == 1.0);
  CHECK(mask_iou(a, rect_mask(16, 16, 10, 10, 14, 14)) == 0.0);
  CHECK(mask_iou(a, rect_mask(16, 16, 4, 2, 8, 6)) == doctest::Approx(1.0 / 3.0));
  CHECK(mask_iou(Mask::Ones(4, 4), Mask::Ones(4, 4)) == 1.0);
  CHECK_THROWS_AS(mask_iou(Mask::Ones(4, 4), Mask::Ones(4, 5)), ShapeError);
}

TEST_CASE("dilation grows a point into a Euclidean disk") {
  Mask m = Mask::Ones(11, 11);
  m(5, 5) = 0;
  const Mask d = dilate_mask(m, 3);
  CHECK(masked_count(d) == 29);
  CHECK(d(5, 8) == 0);
  CHECK(d(7, 7) == 0);
  CHECK(d(8, 7) == 1);
  CHECK((dilate_mask(m, 0) == m).all());
}

TEST_CASE("closing fills one-pixel gaps and keeps image-border regions") {
  Mask m = rect_mask(12, 12, 0, 2, 6, 8);
  m(5, 3) = 1;
  const Mask c = close_mask(m, 1);
  CHECK(c(5, 3) == 0);
  CHECK(c(4, 0) == 0);
  CHECK(masked_count(c) == masked_count(rect_mask(12, 12, 0, 2, 6, 8)));
}

TEST_CASE("identity transfer reproduces the closed and dilated input") {
  const SceneSpec s = plane_scene(Vec3(0, -1, 0), Vec3(0, 1, 0.3));
  const CameraPose pose = look_at(Vec3(0, 4, 1), Vec3(0, 0, 0), Vec3::UnitZ(), 60, 48, 40);
  const DepthMap depth = raytrace_view(s, pose).depth;
  const Mask user = rect_mask(48, 40, 12, 10, 30, 22);
  TransferOptions opt;
  const TransferResult r = transfer_mask(user, pose, depth, pose, depth, opt);
  CHECK_FALSE(r.degenerate);
  CHECK(r.mask.rows() == 40);
  CHECK(r.mask.cols() == 48);
  CHECK(((r.mask == 0) || (r.mask == 1)).all());
  const Mask expected = dilate_mask(close_mask(user, opt.closing_radius), opt.dilation);
  CHECK(subset_of_zero(expected, r.mask));
  CHECK(subset_of_zero(r.mask, dilate_mask(expected, 1)));
}

TEST_CASE("planar transfer matches the analytic homography within one pixel") {
  const auto r = nerfin::testing::planar_homography_oracle();
  REQUIRE(r.expected_pixels > 200);
  CHECK(r.off_boundary == 0);
  CHECK(r.iou > 0.85);
}

TEST_CASE("transfer and back stays inside the doubly dilated user mask") {
  const SceneSpec s = plane_scene(Vec3(0, -1, 0), Vec3(0, 1, 0.3));
  const CameraPose a = look_at(Vec3(0, 4, 1), Vec3(0, 0, 0), Vec3::UnitZ(), 64, 64, 64);
  const CameraPose b = look_at(Vec3(-1.2, 3.7, 0.6), Vec3(0, 0, 0), Vec3::UnitZ(), 64, 64, 64);
  const DepthMap da = raytrace_view(s, a).depth;
  const DepthMap db = raytrace_view(s, b).depth;
  const Mask user = rect_mask(64, 64, 22, 24, 38, 36);
  TransferOptions opt;
  const Mask there = transfer_mask(user, a, da, b, db, opt).mask;
  const Mask back = transfer_mask(there, b, db, a, da, opt).mask;
  CHECK(subset_of_zero(back, dilate_mask(user, 2 * opt.dilation + 2)));
  CHECK(subset_of_zero(user, back));
}

TEST_CASE("degenerate target pose yields an all-ones mask and a flag") {
  const SceneSpec s = plane_scene(Vec3(0, -1, 0), Vec3(0, 1, 0.3));
  const CameraPose a = look_at(Vec3(0, 4, 1), Vec3(0, 0, 0), Vec3::UnitZ(), 64, 32, 32);
  const CameraPose away = look_at(Vec3(0, 6, 1), Vec3(0, 10, 1), Vec3::UnitZ(), 64, 32, 32);
  const DepthMap da = raytrace_view(s, a).depth;
  const DepthMap dz = DepthMap::Constant(32, 32, 5.0f);
  const TransferResult r = transfer_mask(rect_mask(32, 32, 8, 8, 20, 20), a, da, away, dz);
  CHECK(r.degenerate);
  CHECK((r.mask == 1).all());
  const TransferResult empty = transfer_mask(Mask::Ones(32, 32), a, da, a, da);
  CHECK_FALSE(empty.degenerate);
  CHECK((empty.mask == 1).all());
}

TEST_CASE("transfer rejects mismatched shapes") {
  const CameraPose a = look_at(Vec3(0, 4, 1), Vec3(0, 0, 0), Vec3::UnitZ(), 64, 32, 32);
  const DepthMap d = DepthMap::Constant(32, 32, 4.0f);
  CHECK_THROWS_AS(transfer_mask(Mask::Ones(16, 16), a, d, a, d), ShapeError);
  CHECK_THROWS_AS(transfer_mask(Mask::Ones(32, 32), a, DepthMap::Constant(8, 8, 1.0f), a, d), ShapeError);
}

TEST_CASE("bundled scenes: transferred masks overlap the true masks") {
  for (const auto& name : bundled_scene_names()) {
    const double worst = nerfin::testing::bundled_scene_worst_iou(name);
    INFO(name << " worst IoU " << worst);
    CHECK(worst >= 0.7);
  }
}
