// Copyright Contributors to the nerfin Project
// SPDX-License-Identifier: Apache-2.0

// Dataset directory layout (version 1):
//   dataset.json      metadata, see save_dataset
//   rgb/NNN.png       8-bit RGB
//   depth/NNN.f32     raw little-endian float32, row-major height x width
//   depth/NNN.png     16-bit gray, value = round(depth * 1000)
//   mask/NNN.png      1-bit gray, 0 = masked, 1 = keep

#include "nerfin/png.hpp"
#include "nerfin/scene.hpp"

#include "json.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

namespace nerfin {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string view_name(std::size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%03zu", i);
  return buf;
}

void write_raw_depth(const std::string& path, const DepthMap& d) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  out.write(reinterpret_cast<const char*>(d.data()), static_cast<std::streamsize>(sizeof(float) * d.size()));
  if (!out) throw IoError("write failed: " + path);
}

DepthMap read_raw_depth(const std::string& path, int width, int height) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path);
  DepthMap d(height, width);
  in.read(reinterpret_cast<char*>(d.data()), static_cast<std::streamsize>(sizeof(float) * d.size()));
  if (!in) throw IoError("truncated depth file: " + path);
  return d;
}

}  // namespace

void save_dataset(const std::string& dir, const PosedImageSet& set) {
  fs::create_directories(fs::path(dir) / "rgb");
  fs::create_directories(fs::path(dir) / "depth");
  fs::create_directories(fs::path(dir) / "mask");
  json meta;
  meta["format"] = "nerfin-dataset";
  meta["version"] = dataset_version;
  meta["scene"] = set.scene;
  meta["variant"] = set.variant;
  meta["near"] = set.near;
  meta["far"] = set.far;
  meta["depth_miss_value"] = "far";
  meta["depth_png_scale"] = depth_png_scale;
  meta["mask_convention"] = "0 = masked, 1 = keep";
  meta["camera_convention"] = "x right, y down, z forward; world_from_camera is a row-major 3x4 [R | position]";
  json views = json::array();
  for (std::size_t i = 0; i < set.views.size(); ++i) {
    const PosedView& v = set.views[i];
    const std::string name = view_name(i);
    json jv;
    jv["index"] = i;
    std::vector<double> m;
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) m.push_back(v.pose.rotation(r, c));
      m.push_back(v.pose.position[r]);
    }
    jv["world_from_camera"] = m;
    jv["focal"] = v.pose.focal;
    jv["cx"] = v.pose.cx;
    jv["cy"] = v.pose.cy;
    jv["width"] = v.pose.width;
    jv["height"] = v.pose.height;
    jv["image"] = "rgb/" + name + ".png";
    write_file((fs::path(dir) / "rgb" / (name + ".png")).string(), encode_rgb_png(v.image));
    if (v.depth) {
      jv["depth"] = "depth/" + name + ".f32";
      jv["depth_png"] = "depth/" + name + ".png";
      write_raw_depth((fs::path(dir) / "depth" / (name + ".f32")).string(), *v.depth);
      write_file((fs::path(dir) / "depth" / (name + ".png")).string(), encode_depth_png(*v.depth, depth_png_scale));
    }
    if (v.mask) {
      jv["mask"] = "mask/" + name + ".png";
      write_file((fs::path(dir) / "mask" / (name + ".png")).string(), encode_mask_png(*v.mask));
    }
    views.push_back(jv);
  }
  meta["views"] = views;
  std::ofstream out(fs::path(dir) / "dataset.json");
  if (!out) throw IoError("cannot open for writing: " + (fs::path(dir) / "dataset.json").string());
  out << meta.dump(2) << "\n";
}

PosedImageSet load_dataset(const std::string& dir) {
  const fs::path meta_path = fs::path(dir) / "dataset.json";
  std::ifstream in(meta_path);
  if (!in) throw IoError("cannot open: " + meta_path.string());
  json meta;
  try {
    in >> meta;
  } catch (const json::exception& e) {
    throw IoError("malformed " + meta_path.string() + ": " + e.what());
  }
  if (meta.value("version", 0) != dataset_version) {
    throw IoError("unsupported dataset version in " + meta_path.string());
  }
  PosedImageSet set;
  set.scene = meta.value("scene", "");
  set.variant = meta.value("variant", "");
  set.near = meta.at("near").get<double>();
  set.far = meta.at("far").get<double>();
  for (const auto& jv : meta.at("views")) {
    PosedView v;
    const auto m = jv.at("world_from_camera").get<std::vector<double>>();
    if (m.size() != 12) throw IoError("bad world_from_camera in " + meta_path.string());
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) v.pose.rotation(r, c) = m[4 * r + c];
      v.pose.position[r] = m[4 * r + 3];
    }
    v.pose.focal = jv.at("focal").get<double>();
    v.pose.cx = jv.at("cx").get<double>();
    v.pose.cy = jv.at("cy").get<double>();
    v.pose.width = jv.at("width").get<int>();
    v.pose.height = jv.at("height").get<int>();
    v.image = decode_rgb_png(read_file((fs::path(dir) / jv.at("image").get<std::string>()).string()));
    if (jv.contains("depth")) {
      v.depth = read_raw_depth((fs::path(dir) / jv.at("depth").get<std::string>()).string(), v.pose.width,
                               v.pose.height);
    }
    if (jv.contains("mask")) {
      v.mask = decode_mask_png(read_file((fs::path(dir) / jv.at("mask").get<std::string>()).string()));
    }
    set.views.push_back(std::move(v));
  }
  return set;
}

}  // namespace nerfin
