// Copyright Contributors to the nerfin Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Analytic ray-traced scenes: spheres, axis-aligned boxes and infinite planes
// under one directional light, Lambertian, no shadows.

#include "nerfin/camera.hpp"
#include "nerfin/image.hpp"

#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace nerfin {

struct Sphere {
  Vec3 center = Vec3::Zero();
  double radius = 1.0;
};

/// Axis-aligned box.
struct Box {
  Vec3 center = Vec3::Zero();
  Vec3 half_extent = Vec3::Ones();
};

/// Infinite plane through `point` facing `normal`.
struct PlaneSurface {
  Vec3 point = Vec3::Zero();
  Vec3 normal = Vec3::UnitZ();
};

using Geometry = std::variant<Sphere, Box, PlaneSurface>;

struct Primitive {
  std::string id;
  Geometry geometry;
  Vec3 albedo = Vec3::Constant(0.8);
  /// Amplitude of a sinusoidal albedo pattern (0 = flat color).
  double pattern = 0.0;
  /// Spatial period of that pattern in scene units.
  double pattern_period = 1.0;
};

/// Nearest positive ray parameter at which `ray` meets the geometry, and the outward normal there.
struct Hit {
  double t = 0;
  Vec3 normal = Vec3::UnitZ();
};

std::optional<Hit> intersect(const Geometry& g, const Ray& ray);

struct TrajectorySpec {
  Vec3 center = Vec3::Zero();
  double radius = 4.0;
  int n_views = 24;
  double axis_bias = 0.25;
  double azimuth_span = 0.35;
  double elevation_wobble = 0.1;
  double focal = 96.0;
  int width = 64;
  int height = 64;
};

struct SceneSpec {
  std::string name;
  std::vector<Primitive> primitives;
  std::string removable_id;
  Vec3 light_direction = Vec3(0.3, 0.8, 0.6).normalized();  ///< towards the light
  double ambient = 0.35;
  Vec3 background = Vec3::Zero();
  double near = 2.0;
  double far = 8.0;
  TrajectorySpec trajectory;

  /// Throws unless removable_id names exactly one primitive and near < far.
  void validate() const;
  SceneSpec without_removable() const;
};

/// Forward-facing arc of cameras around `center`, all looking at it. Camera k
/// sits at azimuth phi_k (spread over [-azimuth_span, azimuth_span] around +y)
/// and elevation axis_bias + elevation_wobble * sin(2 pi k / n).
std::vector<CameraPose> make_trajectory(const Vec3& center, double radius, int n_views, double axis_bias,
                                        double azimuth_span = 0.35, double elevation_wobble = 0.1,
                                        double focal = 96.0, int width = 64, int height = 64);
std::vector<CameraPose> make_trajectory(const TrajectorySpec& spec);

struct TracedView {
  RgbImage image;
  DepthMap depth;  ///< hit distance, or the far plane on a miss
  Plane<int> primitive;  ///< index of the primitive hit per pixel, -1 on a miss
};

TracedView raytrace_view(const SceneSpec& scene, const CameraPose& pose);

struct PosedView {
  CameraPose pose;
  RgbImage image;
  std::optional<DepthMap> depth;
  std::optional<Mask> mask;
};

struct PosedImageSet {
  std::string scene;
  std::string variant;  ///< "original", "removed", "guidance", ...
  double near = 2.0;
  double far = 8.0;
  std::vector<PosedView> views;

  std::vector<CameraPose> poses() const;
};

struct ScenePair {
  PosedImageSet original;
  PosedImageSet removed;
  std::vector<Mask> true_masks;  ///< 0 where the primary hit is the removable object
};

ScenePair make_scene_pair(const SceneSpec& scene, const std::vector<CameraPose>& trajectory);

/// Bundled scenes: "figyua-like", "desuku-like", "terebi-like".
std::vector<std::string> bundled_scene_names();
SceneSpec bundled_scene(const std::string& name);

/// Dataset layout version written to dataset.json.
inline constexpr int dataset_version = 1;
inline constexpr double depth_png_scale = 1000.0;

void save_dataset(const std::string& dir, const PosedImageSet& set);
PosedImageSet load_dataset(const std::string& dir);

}  // namespace nerfin
