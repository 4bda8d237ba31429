// Copyright Contributors to the nerfin Project
// SPDX-License-Identifier: Apache-2.0

// Acceptance suite: one PASS/FAIL line per criterion. Exit status is the
// number of failed criteria. The end-to-end protocol and its frozen margins
// are read from acceptance.txt; trained scene fields are cached by protocol.

#include "oracles.hpp"

#include "nerfin/pipeline.hpp"
#include "nerfin/png.hpp"
#include "nerfin/runtime.hpp"

#include "CLI11.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <map>

using namespace nerfin;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

int failures = 0;

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

void report(const std::string& name, bool pass, const std::string& detail) {
  std::printf("%s %s: %s\n", pass ? "PASS" : "FAIL", name.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

void note(const std::string& line) {
  std::printf("  %s\n", line.c_str());
  std::fflush(stdout);
}

template <typename... Args>
std::string format(const char* fmt, Args... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, fmt, args...);
  return buf;
}

std::uint64_t fnv1a(const Bytes& data, std::uint64_t h = 1469598103934665603ull) {
  for (const auto b : data) h = (h ^ b) * 1099511628211ull;
  return h;
}

// ---- oracle criteria ---------------------------------------------------------

void gradient_criterion() {
  const auto t0 = Clock::now();
  double worst_primitive = 0;
  std::string worst_name;
  for (const auto& [name, entry] : testing::primitive_cases<float>()) {
    for (std::uint64_t seed : {21u, 22u, 23u}) {
      const auto [analytic, numeric] = testing::check_case<float>(entry.first, entry.second, seed, 1e-3);
      const double e = testing::relative_error(analytic, numeric);
      if (e > worst_primitive) {
        worst_primitive = e;
        worst_name = name;
      }
    }
  }
  const double render = std::max(testing::render_gradient_error<float>(Level::coarse, 1e-6, true),
                                 testing::render_gradient_error<float>(Level::fine, 1e-6, true));
  const double elapsed = seconds_since(t0);
  report("gradient", worst_primitive < 1e-3 && render < 1e-2 && elapsed < 120,
         format("primitives worst rel %.2e (%s, tol 1e-3), width-8 render rel %.2e (tol 1e-2), %.1fs (limit 120s)",
                worst_primitive, worst_name.c_str(), render, elapsed));
}

void rendering_criterion() {
  const auto err = testing::piecewise_constant_error(256);
  report("rendering", err.color < 1e-3,
         format("piecewise-constant medium at 256 samples: color L-inf %.2e (tol 1e-3), depth %.2e", err.color,
                err.depth));
}

void bilateral_criterion() {
  const auto t0 = Clock::now();
  const auto r = testing::bilateral_dense_oracle(100);
  const double elapsed = seconds_since(t0);
  report("bilateral", r.worst_linf < 1e-5 && elapsed < 60,
         format("100 random 16x16 problems: worst L-inf %.2e (tol 1e-5), worst relative residual %.1e, %.1fs",
                r.worst_linf, r.worst_relative_residual, elapsed));
}

void mask_criterion() {
  const auto h = testing::planar_homography_oracle();
  bool pass = h.expected_pixels > 0 && h.off_boundary == 0;
  std::string detail = format("homography: %d pixels off by more than 1 px, IoU %.3f", h.off_boundary, h.iou);
  for (const auto& name : bundled_scene_names()) {
    const double iou = testing::bundled_scene_worst_iou(name);
    pass = pass && iou >= 0.7;
    detail += format("; %s worst IoU %.3f", name.c_str(), iou);
  }
  report("mask-transfer", pass, detail + " (tol 0.7)");
}

// ---- end-to-end protocol -------------------------------------------------------

struct Protocol {
  KeyValues kv;
  std::string scene;
  std::string profile;
  TrainConfig train;
  InpaintJob job;
  std::uint64_t draw_seed = 1;
  double margin_psnr_db = 1;
  double margin_depth_rel = 0.2;
  double margin_consistency_rel = 0.2;
  double margin_floor_db = 5;

  static Protocol load(const std::string& path) {
    Protocol p;
    p.kv = KeyValues::load(path);
    p.kv.require_known({"scene", "profile", "train_steps", "train_batch_rays", "inpaint_steps", "inpaint_batch_rays",
                        "inpaint_lr", "user_view", "draw_seed", "margin_psnr_db", "margin_depth_rel",
                        "margin_consistency_rel", "margin_floor_db"});
    p.scene = p.kv.get("scene", std::string("figyua-like"));
    p.profile = p.kv.get("profile", std::string("desk"));
    p.train.steps = p.kv.get("train_steps", 20000);
    p.train.batch_rays = p.kv.get("train_batch_rays", 1024);
    p.train.log_every = 1000;
    p.job.steps = p.kv.get("inpaint_steps", 5000);
    p.job.batch_rays = p.kv.get("inpaint_batch_rays", 1024);
    p.job.lr = p.kv.get("inpaint_lr", 1e-4);
    p.job.user_view_index = p.kv.get("user_view", 0);
    p.job.log_every = 1000;
    p.draw_seed = static_cast<std::uint64_t>(p.kv.get("draw_seed", 1));
    p.margin_psnr_db = p.kv.get("margin_psnr_db", 1.0);
    p.margin_depth_rel = p.kv.get("margin_depth_rel", 0.2);
    p.margin_consistency_rel = p.kv.get("margin_consistency_rel", 0.2);
    p.margin_floor_db = p.kv.get("margin_floor_db", 5.0);
    return p;
  }

  // Cache key: everything that changes a trained scene field.
  std::string key() const {
    const std::string s = scene + '|' + profile + '|' + to_key_values(train).dump();
    return format("%016llx", static_cast<unsigned long long>(fnv1a(Bytes(s.begin(), s.end()))));
  }
};

RadianceField<float> cached_training(const fs::path& path, const FieldConfig& fc, const PosedImageSet& set,
                                     const TrainConfig& tc, LossKind kind) {
  if (fs::exists(path)) {
    note("reusing " + path.string());
    return load_checkpoint<float>(path.string()).field;
  }
  const auto t0 = Clock::now();
  auto field = RadianceField<float>::init(fc);
  train(field, set, tc, kind);
  save_checkpoint(path.string(), field);
  note(format("trained %s in %.0fs", path.filename().string().c_str(), seconds_since(t0)));
  return field;
}

std::string summary_line(const AblationEntry& e) {
  const auto& s = e.summary;
  return format("%-18s psnr %6.2f  masked psnr %6.2f  masked depth %.4f  outside mse %.6f  consistency %.4f",
                e.label.c_str(), s.psnr, s.psnr_masked, s.depth_mae_masked, s.mse_outside, s.consistency);
}

// Relative improvement of `ours` over `other` for a lower-is-better metric.
double relative_gain(double ours, double other) { return (other - ours) / other; }

void end_to_end(const Protocol& p, const fs::path& cache) {
  const auto t0 = Clock::now();
  fs::create_directories(cache);
  p.kv.save((cache / "protocol.txt").string());

  const SceneSpec scene = bundled_scene(p.scene);
  const auto traj = make_trajectory(scene.trajectory);
  const ScenePair pair = make_scene_pair(scene, traj);
  FieldConfig fc = field_profile(p.profile);
  fc.near = scene.near;
  fc.far = scene.far;
  note(format("scene %s, %zu views, %dx%d, cache %s", p.scene.c_str(), traj.size(), traj[0].width, traj[0].height,
              cache.string().c_str()));

  const auto original = cached_training(cache / "original.ck", fc, pair.original, p.train, LossKind::mse);
  const auto removed = cached_training(cache / "removed.ck", fc, pair.removed, p.train, LossKind::mse);
  const Guidance guidance = build_guidance(original, traj, p.job.user_view_index, pair.true_masks[p.job.user_view_index]);
  note(format("guidance built, %zu degenerate views", guidance.degenerate_views.size()));

  const int k = guidance.sampled_count();
  const auto on_job = [&](const std::string& label) { note("inpainting " + label); };
  std::vector<AblationEntry> entries =
      ablate(original, guidance, ablation_grid(p.job, k, p.draw_seed), removed, traj, pair.true_masks, on_job);

  const std::vector<ViewRender> reference = render_trajectory(removed, traj);
  const auto evaluate = [&](const std::string& label, InpaintJob job, const RadianceField<float>& field) {
    entries.push_back({label, job, evaluate_renders(render_trajectory(field, traj), reference, traj, pair.true_masks).summary});
  };

  on_job("baseline1");
  InpaintJob b1 = p.job;
  b1.mode = InpaintMode::baseline1;
  evaluate("baseline1", b1, baseline1(original, guidance, p.job).field);

  InpaintJob b2 = p.job;
  b2.mode = InpaintMode::baseline2;
  TrainConfig b2_train = p.train;
  b2_train.seed = p.job.seed;
  evaluate("baseline2", b2, cached_training(cache / "baseline2.ck", fc, guidance.set, b2_train, LossKind::masked_mse));

  InpaintJob floor_job = p.job;
  floor_job.steps = 0;
  evaluate("floor", floor_job, original);

  write_ablation_csv((cache / "results.csv").string(), entries);
  std::map<std::string, EvalSummary> by;
  for (const auto& e : entries) {
    note(summary_line(e));
    by[e.label] = e.summary;
  }
  const std::string all_label = ablation_label([&] {
    InpaintJob j = p.job;
    std::vector<int> all(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) all[static_cast<std::size_t>(i)] = i;
    j.all_views = all;
    return j;
  }(), k);
  const EvalSummary& ours = by.at("ours");
  const double minutes = seconds_since(t0) / 60;

  const double depth_gain = relative_gain(ours.depth_mae_masked, by.at("baseline1").depth_mae_masked);
  const double cons_gain = relative_gain(ours.consistency, by.at("baseline1").consistency);
  const double b2_gain = ours.psnr_masked - by.at("baseline2").psnr_masked;
  const double floor_gain = ours.psnr_masked - by.at("floor").psnr_masked;
  const bool b1_ok = depth_gain >= p.margin_depth_rel && cons_gain >= p.margin_consistency_rel;
  const bool b2_ok = b2_gain >= p.margin_psnr_db;
  const bool floor_ok = floor_gain >= p.margin_floor_db;
  note(format("ours vs baseline1: masked depth %+.1f%% (need %.0f%%), consistency %+.1f%% (need %.0f%%) -> %s",
              100 * depth_gain, 100 * p.margin_depth_rel, 100 * cons_gain, 100 * p.margin_consistency_rel,
              b1_ok ? "holds" : "violated"));
  note(format("ours vs baseline2: masked psnr %+.2f dB (need %.1f) -> %s", b2_gain, p.margin_psnr_db,
              b2_ok ? "holds" : "violated"));
  note(format("ours vs floor: masked psnr %+.2f dB (need %.1f) -> %s", floor_gain, p.margin_floor_db,
              floor_ok ? "holds" : "violated"));
  report("end-to-end", b1_ok && b2_ok && floor_ok,
         format("orderings baseline1 %s, baseline2 %s, floor %s; %.1f min on this machine", b1_ok ? "ok" : "violated",
                b2_ok ? "ok" : "violated", floor_ok ? "ok" : "violated", minutes));

  const EvalSummary& color_only = by.at("color_only");
  const EvalSummary& depth_only = by.at("depth_only");
  const bool depth_order = ours.depth_mae_masked < color_only.depth_mae_masked &&
                           depth_only.depth_mae_masked < color_only.depth_mae_masked;
  const bool color_order = ours.mse_outside < depth_only.mse_outside && color_only.mse_outside < depth_only.mse_outside;
  report("depth-ablation", depth_order && color_order,
         format("masked depth ours %.4f, depth_only %.4f < color_only %.4f %s; outside mse ours %.6f, color_only "
                "%.6f < depth_only %.6f %s",
                ours.depth_mae_masked, depth_only.depth_mae_masked, color_only.depth_mae_masked,
                depth_order ? "holds" : "violated", ours.mse_outside, color_only.mse_outside, depth_only.mse_outside,
                color_order ? "holds" : "violated"));

  const EvalSummary& all_views = by.at(all_label);
  report("view-count", ours.consistency <= all_views.consistency,
         format("consistency with the user view only %.4f <= with every sampled view %.4f", ours.consistency,
                all_views.consistency));
}

// ---- determinism ----------------------------------------------------------------

// Every pipeline stage at reduced size, written below `dir`.
void reduced_pipeline(const fs::path& dir) {
  fs::remove_all(dir);
  SceneSpec scene = bundled_scene("figyua-like");
  TrajectorySpec ts = scene.trajectory;
  ts.n_views = 5;
  ts.width = 32;
  ts.height = 32;
  ts.focal *= 0.5;
  const auto traj = make_trajectory(ts);
  const ScenePair pair = make_scene_pair(scene, traj);
  save_dataset((dir / "original").string(), pair.original);
  save_dataset((dir / "removed").string(), pair.removed);
  save_mask_dir((dir / "true_masks").string(), pair.true_masks);

  FieldConfig fc = field_profile("desk");
  fc.hidden_width = 16;
  fc.near = scene.near;
  fc.far = scene.far;
  TrainConfig tc;
  tc.steps = 120;
  tc.batch_rays = 64;
  tc.log_every = 20;
  auto original = RadianceField<float>::init(fc);
  const auto history = train(original, load_dataset((dir / "original").string()), tc, LossKind::mse);
  save_checkpoint((dir / "original.ck").string(), original);
  write_file((dir / "train_history.csv").string(), [&] {
    std::string s;
    for (const auto& h : history.history) s += format("%d,%.17g\n", static_cast<int>(h.step), h.loss);
    return Bytes(s.begin(), s.end());
  }());
  auto removed = RadianceField<float>::init(fc);
  train(removed, pair.removed, tc, LossKind::mse);
  save_checkpoint((dir / "removed.ck").string(), removed);

  const ViewRender r = render_view(original, traj[1], Level::fine);
  write_file((dir / "render.png").string(), encode_rgb_png(r.image));

  for (const auto mode : {InpaintMode::ours, InpaintMode::color_only, InpaintMode::depth_only, InpaintMode::baseline1,
                          InpaintMode::baseline2}) {
    InpaintJob job;
    job.mode = mode;
    job.steps = 20;
    job.batch_rays = 64;
    job.min_term_rays = 16;
    job.log_every = 5;
    job.seed = 3;
    const std::string jd = (dir / ("job_" + to_string(mode))).string();
    run_job(original, traj, pair.true_masks[0], job, jd);
    evaluate_job_dir(jd, removed, &pair.true_masks);
  }
}

std::map<std::string, std::uint64_t> hash_tree(const fs::path& root) {
  std::map<std::string, std::uint64_t> out;
  for (const auto& entry : fs::recursive_directory_iterator(root)) {
    if (entry.is_regular_file()) out[fs::relative(entry.path(), root).string()] = fnv1a(read_file(entry.path().string()));
  }
  return out;
}

void determinism_criterion(const fs::path& scratch) {
  const auto t0 = Clock::now();
  reduced_pipeline(scratch / "run_a");
  reduced_pipeline(scratch / "run_b");
  const auto a = hash_tree(scratch / "run_a");
  const auto b = hash_tree(scratch / "run_b");
  std::vector<std::string> differing;
  for (const auto& [name, h] : a) {
    const auto it = b.find(name);
    if (it == b.end() || it->second != h) differing.push_back(name);
  }
  for (const auto& [name, h] : b) {
    if (!a.count(name)) differing.push_back(name);
  }
  std::string detail = format("%zu artifacts hashed across two runs, %zu differ, %.0fs", a.size(), differing.size(),
                              seconds_since(t0));
  for (std::size_t i = 0; i < std::min<std::size_t>(differing.size(), 5); ++i) detail += "; " + differing[i];
  report("determinism", !a.empty() && differing.empty(), detail);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"nerfin acceptance suite"};
  std::string protocol_path = NERFIN_ACCEPTANCE_PROTOCOL;
  std::string cache = (fs::temp_directory_path() / "nerfin_acceptance").string();
  bool skip_end_to_end = false;
  app.add_option("--protocol", protocol_path, "End-to-end protocol and margins")->check(CLI::ExistingFile);
  app.add_option("--cache", cache, "Directory for trained fields and results");
  app.add_flag("--skip-end-to-end", skip_end_to_end, "Report the three long criteria as skipped failures");
  CLI11_PARSE(app, argc, argv);
  tune_allocator();
  set_log_sink([](LogLevel level, const std::string& message) {
    if (level != LogLevel::info) std::fprintf(stderr, "%s\n", message.c_str());
  });

  const Protocol protocol = Protocol::load(protocol_path);
  gradient_criterion();
  rendering_criterion();
  bilateral_criterion();
  mask_criterion();
  if (skip_end_to_end) {
    for (const char* name : {"end-to-end", "depth-ablation", "view-count"}) report(name, false, "skipped");
  } else {
    try {
      end_to_end(protocol, fs::path(cache) / protocol.key());
    } catch (const std::exception& e) {
      for (const char* name : {"end-to-end", "depth-ablation", "view-count"}) report(name, false, e.what());
    }
  }
  try {
    determinism_criterion(fs::path(cache) / "determinism");
  } catch (const std::exception& e) {
    report("determinism", false, e.what());
  }
  std::printf("%d criteria failed\n", failures);
  return failures;
}
