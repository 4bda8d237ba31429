// Copyright Contributors to the nerfin Project
// SPDX-License-Identifier: Apache-2.0

#include "nerfin/scene.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace nerfin {

namespace {

constexpr double hit_epsilon = 1e-9;

std::optional<Hit> hit_sphere(const Sphere& s, const Ray& ray) {
  const Vec3 oc = ray.origin - s.center;
  const double b = ray.direction.dot(oc);
  const double c = oc.squaredNorm() - s.radius * s.radius;
  const double disc = b * b - c;
  if (disc < 0) return std::nullopt;
  // stable roots of t^2 + 2bt + c
  const double q = -(b + std::copysign(std::sqrt(disc), b));
  double t0 = q;
  double t1 = q != 0 ? c / q : 0.0;
  if (t0 > t1) std::swap(t0, t1);
  const double t = t0 > hit_epsilon ? t0 : t1;
  if (t <= hit_epsilon) return std::nullopt;
  return Hit{t, (ray.at(t) - s.center).normalized()};
}

std::optional<Hit> hit_box(const Box& box, const Ray& ray) {
  double t_enter = -std::numeric_limits<double>::infinity();
  double t_exit = std::numeric_limits<double>::infinity();
  int axis = -1;
  double sign = 1;
  for (int a = 0; a < 3; ++a) {
    const double lo = box.center[a] - box.half_extent[a];
    const double hi = box.center[a] + box.half_extent[a];
    const double d = ray.direction[a];
    if (std::abs(d) < 1e-15) {
      if (ray.origin[a] < lo || ray.origin[a] > hi) return std::nullopt;
      continue;
    }
    double t0 = (lo - ray.origin[a]) / d;
    double t1 = (hi - ray.origin[a]) / d;
    double s = -1;
    if (t0 > t1) {
      std::swap(t0, t1);
      s = 1;
    }
    if (t0 > t_enter) {
      t_enter = t0;
      axis = a;
      sign = s;
    }
    t_exit = std::min(t_exit, t1);
  }
  if (t_enter > t_exit || t_enter <= hit_epsilon || axis < 0) return std::nullopt;
  Vec3 n = Vec3::Zero();
  n[axis] = sign;
  return Hit{t_enter, n};
}

std::optional<Hit> hit_plane(const PlaneSurface& p, const Ray& ray) {
  const Vec3 n = p.normal.normalized();
  const double denom = ray.direction.dot(n);
  if (std::abs(denom) < 1e-12) return std::nullopt;
  const double t = (p.point - ray.origin).dot(n) / denom;
  if (t <= hit_epsilon) return std::nullopt;
  return Hit{t, n};
}

Vec3 shade(const SceneSpec& scene, const Primitive& prim, const Vec3& point, Vec3 normal, const Vec3& view) {
  if (normal.dot(view) > 0) normal = -normal;
  Vec3 albedo = prim.albedo;
  if (prim.pattern != 0) {
    const double k = 2.0 * std::numbers::pi / prim.pattern_period;
    const double f = 0.5 * (std::sin(k * point.x()) + std::sin(k * (point.y() + point.z())));
    albedo = (albedo * (1.0 + prim.pattern * f)).cwiseMax(0.0).cwiseMin(1.0);
  }
  const double lambert = std::max(0.0, normal.dot(scene.light_direction.normalized()));
  return (albedo * (scene.ambient + (1.0 - scene.ambient) * lambert)).cwiseMin(1.0);
}

}  // namespace

std::optional<Hit> intersect(const Geometry& g, const Ray& ray) {
  return std::visit(
      [&](const auto& shape) -> std::optional<Hit> {
        using T = std::decay_t<decltype(shape)>;
        if constexpr (std::is_same_v<T, Sphere>) return hit_sphere(shape, ray);
        if constexpr (std::is_same_v<T, Box>) return hit_box(shape, ray);
        if constexpr (std::is_same_v<T, PlaneSurface>) return hit_plane(shape, ray);
      },
      g);
}

void SceneSpec::validate() const {
  const auto n = std::count_if(primitives.begin(), primitives.end(),
                               [&](const Primitive& p) { return p.id == removable_id; });
  if (n != 1) throw std::invalid_argument("scene " + name + ": removable_id must name exactly one primitive");
  if (!(near < far)) throw std::invalid_argument("scene " + name + ": near must be < far");
}

SceneSpec SceneSpec::without_removable() const {
  SceneSpec s = *this;
  std::erase_if(s.primitives, [&](const Primitive& p) { return p.id == removable_id; });
  return s;
}

std::vector<CameraPose> make_trajectory(const Vec3& center, double radius, int n_views, double axis_bias,
                                        double azimuth_span, double elevation_wobble, double focal, int width,
                                        int height) {
  if (n_views < 1) throw std::invalid_argument("make_trajectory: n_views must be >= 1");
  if (!(radius > 0)) throw std::invalid_argument("make_trajectory: radius must be > 0");
  std::vector<CameraPose> poses;
  for (int k = 0; k < n_views; ++k) {
    const double phi = n_views == 1 ? 0.0 : -azimuth_span + 2.0 * azimuth_span * k / (n_views - 1);
    const double theta = axis_bias + elevation_wobble * std::sin(2.0 * std::numbers::pi * k / n_views);
    const Vec3 dir(std::sin(phi) * std::cos(theta), std::cos(phi) * std::cos(theta), std::sin(theta));
    poses.push_back(look_at(center + radius * dir, center, Vec3::UnitZ(), focal, width, height));
  }
  return poses;
}

std::vector<CameraPose> make_trajectory(const TrajectorySpec& s) {
  return make_trajectory(s.center, s.radius, s.n_views, s.axis_bias, s.azimuth_span, s.elevation_wobble, s.focal,
                         s.width, s.height);
}

TracedView raytrace_view(const SceneSpec& scene, const CameraPose& pose) {
  TracedView v;
  v.image = RgbImage(pose.width, pose.height);
  v.depth = DepthMap::Constant(pose.height, pose.width, static_cast<float>(scene.far));
  v.primitive = Plane<int>::Constant(pose.height, pose.width, -1);
  for (int y = 0; y < pose.height; ++y) {
    for (int x = 0; x < pose.width; ++x) {
      const Ray ray = pose.pixel_ray(x, y);
      double best = std::numeric_limits<double>::infinity();
      int best_id = -1;
      Vec3 normal = Vec3::Zero();
      for (std::size_t i = 0; i < scene.primitives.size(); ++i) {
        const auto h = intersect(scene.primitives[i].geometry, ray);
        if (h && h->t < best) {
          best = h->t;
          best_id = static_cast<int>(i);
          normal = h->normal;
        }
      }
      Vec3 color = scene.background;
      if (best_id >= 0) {
        color = shade(scene, scene.primitives[best_id], ray.at(best), normal, ray.direction);
        v.depth(y, x) = static_cast<float>(best);
      }
      v.primitive(y, x) = best_id;
      v.image.at(x, y) = color.transpose().cast<float>().array();
    }
  }
  return v;
}

std::vector<CameraPose> PosedImageSet::poses() const {
  std::vector<CameraPose> p;
  for (const auto& v : views) p.push_back(v.pose);
  return p;
}

ScenePair make_scene_pair(const SceneSpec& scene, const std::vector<CameraPose>& trajectory) {
  scene.validate();
  const SceneSpec removed = scene.without_removable();
  int removable = -1;
  for (std::size_t i = 0; i < scene.primitives.size(); ++i) {
    if (scene.primitives[i].id == scene.removable_id) removable = static_cast<int>(i);
  }
  ScenePair pair;
  pair.original = {scene.name, "original", scene.near, scene.far, {}};
  pair.removed = {scene.name, "removed", scene.near, scene.far, {}};
  for (const auto& pose : trajectory) {
    TracedView a = raytrace_view(scene, pose);
    TracedView b = raytrace_view(removed, pose);
    Mask m = (a.primitive == removable).select(Mask::Zero(pose.height, pose.width), Mask::Ones(pose.height, pose.width));
    pair.original.views.push_back({pose, std::move(a.image), std::move(a.depth), std::nullopt});
    pair.removed.views.push_back({pose, std::move(b.image), std::move(b.depth), std::nullopt});
    pair.true_masks.push_back(std::move(m));
  }
  return pair;
}

std::vector<std::string> bundled_scene_names() { return {"figyua-like", "desuku-like", "terebi-like"}; }

SceneSpec bundled_scene(const std::string& name) {
  SceneSpec s;
  s.name = name;
  s.trajectory.center = Vec3(0, 0, -0.2);
  s.trajectory.radius = 3.6;
  s.primitives.push_back({"wall", PlaneSurface{Vec3(0, -1.7, 0), Vec3::UnitY()}, Vec3(0.78, 0.72, 0.58), 0.3, 1.3});
  if (name == "figyua-like") {
    s.primitives.push_back({"floor", PlaneSurface{Vec3(0, 0, -1), Vec3::UnitZ()}, Vec3(0.42, 0.55, 0.68), 0.25, 0.9});
    s.primitives.push_back({"body", Sphere{Vec3(0, 0, -0.15), 0.85}, Vec3(0.88, 0.22, 0.16)});
    s.primitives.push_back({"left", Sphere{Vec3(-1.15, -0.95, -0.7), 0.3}, Vec3(0.25, 0.65, 0.3)});
    s.primitives.push_back({"right", Sphere{Vec3(1.15, -0.95, -0.7), 0.3}, Vec3(0.92, 0.8, 0.25)});
    s.removable_id = "body";
  } else if (name == "desuku-like") {
    s.primitives.push_back({"desk", PlaneSurface{Vec3(0, 0, -1), Vec3::UnitZ()}, Vec3(0.62, 0.45, 0.3), 0.3, 0.7});
    s.primitives.push_back({"box", Box{Vec3(0, 0, -0.3), Vec3(0.8, 0.6, 0.7)}, Vec3(0.2, 0.35, 0.85)});
    s.primitives.push_back({"ball", Sphere{Vec3(1.2, -0.8, -0.75), 0.25}, Vec3(0.9, 0.9, 0.9)});
    s.removable_id = "box";
  } else if (name == "terebi-like") {
    s.primitives.push_back({"floor", PlaneSurface{Vec3(0, 0, -1), Vec3::UnitZ()}, Vec3(0.5, 0.5, 0.45), 0.25, 0.8});
    s.primitives.push_back({"panel", Box{Vec3(0, -0.3, -0.35), Vec3(0.8, 0.06, 0.65)}, Vec3(0.12, 0.12, 0.14)});
    s.primitives.push_back({"block", Box{Vec3(-1.2, -0.9, -0.8), Vec3(0.2, 0.2, 0.2)}, Vec3(0.85, 0.55, 0.2)});
    s.removable_id = "panel";
  } else {
    throw std::invalid_argument("unknown scene: " + name);
  }
  return s;
}

}  // namespace nerfin
