// Copyright Contributors to the nerfin Project
// SPDX-License-Identifier: Apache-2.0

// Command-line entry points for the whole pipeline. Exit status: 0 on
// success, 1 on runtime failures (missing files name the path), 2 on usage
// errors.

#include "nerfin/pipeline.hpp"
#include "nerfin/png.hpp"
#include "nerfin/runtime.hpp"
#include "nerfin/service.hpp"

#include "CLI11.hpp"

#include <algorithm>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <iostream>

using namespace nerfin;
namespace fs = std::filesystem;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void require_path(const std::string& path) {
  if (!fs::exists(path)) throw IoError("no such file or directory: " + path);
}

std::string in_dir(const std::string& dir, const std::string& name) { return (fs::path(dir) / name).string(); }

std::string numbered(const std::string& stem, std::size_t i, const std::string& ext) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s%03zu%s", stem.c_str(), i, ext.c_str());
  return buf;
}

RadianceField<float> load_field(const std::string& checkpoint) {
  require_path(checkpoint);
  return load_checkpoint<float>(checkpoint).field;
}

std::vector<CameraPose> poses_for(const std::string& checkpoint, const std::string& data) {
  const std::string dir = data.empty() ? dataset_of(checkpoint) : data;
  require_path(dir);
  return load_trajectory(dir);
}

const CameraPose& pose_at(const std::vector<CameraPose>& traj, int view) {
  if (view < 0 || view >= static_cast<int>(traj.size())) {
    throw UsageError("view " + std::to_string(view) + " outside [0, " + std::to_string(traj.size()) + ")");
  }
  return traj[static_cast<std::size_t>(view)];
}

void print_summary(const EvalReport& r, const std::string& title) { std::cout << format_summary(r, title); }

// Options shared by inpaint and ablate.
struct JobOptions {
  std::string config;
  std::string mode;
  int steps = 0;
  int batch_rays = 0;
  double lr = 0;
  double depth_weight = -1;
  bool masked_depth = false;
  long long seed = -1;

  void add(CLI::App* c) {
    c->add_option("--config", config, "Job key-value file (user_view, mode, all_views, out_views, depth_views, ...)");
    c->add_option("--mode", mode, "ours, color_only, depth_only, baseline1 or baseline2");
    c->add_option("--steps", steps, "Optimisation steps");
    c->add_option("--batch-rays", batch_rays, "Rays per step");
    c->add_option("--lr", lr, "Adam learning rate");
    c->add_option("--depth-weight", depth_weight, "Depth loss weight");
    c->add_flag("--masked-depth", masked_depth, "Apply the view masks to the depth loss");
    c->add_option("--seed", seed, "Random seed");
  }

  InpaintJob build(int view) const {
    InpaintJob job;
    if (!config.empty()) {
      require_path(config);
      job = inpaint_job_from(KeyValues::load(config));
    }
    job.user_view_index = view;
    if (!mode.empty()) job.mode = parse_inpaint_mode(mode);
    if (steps > 0) job.steps = steps;
    if (batch_rays > 0) job.batch_rays = batch_rays;
    if (lr > 0) job.lr = lr;
    if (depth_weight >= 0) job.depth_weight = depth_weight;
    if (masked_depth) job.masked_depth = true;
    if (seed >= 0) job.seed = static_cast<std::uint64_t>(seed);
    job.validate();
    return job;
  }
};

Service* active_service = nullptr;

extern "C" void on_signal(int) {
  if (active_service) active_service->stop();
}

}  // namespace

int main(int argc, char** argv) {
  tune_allocator();
  CLI::App app{"nerfin: object removal in radiance fields guided by inpainted images and depths"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Expand all help");

  // gen-scene
  std::string scene_name, out;
  int views = 0, width = 0, height = 0;
  auto* gen = app.add_subcommand("gen-scene", "Ray-trace a bundled scene into original/removed datasets and true masks");
  gen->add_option("--name", scene_name, "figyua-like, desuku-like or terebi-like")->required();
  gen->add_option("--out", out, "Output directory")->required();
  gen->add_option("--views", views, "Trajectory views (default 24)");
  gen->add_option("--width", width, "Image width (default 64)");
  gen->add_option("--height", height, "Image height (default 64)");

  // train
  std::string data, checkpoint, config, profile = "desk", loss = "mse";
  int steps = 0, batch_rays = 0;
  long long seed = -1;
  bool resume = false;
  auto* tr = app.add_subcommand("train", "Train a radiance field on a dataset");
  tr->add_option("--data", data, "Dataset directory")->required();
  tr->add_option("--out", checkpoint, "Checkpoint to write")->required();
  tr->add_option("--config", config, "Key-value file with train and field keys");
  tr->add_option("--profile", profile, "Field preset: desk or full");
  tr->add_option("--steps", steps, "Training steps");
  tr->add_option("--batch-rays", batch_rays, "Rays per step");
  tr->add_option("--seed", seed, "Ray sampling seed");
  tr->add_option("--loss", loss, "mse or masked_mse (uses the dataset masks)");
  tr->add_flag("--resume", resume, "Continue from the checkpoint's training state");

  // render
  int view = -1, target = -1;
  std::string level = "fine";
  auto* rd = app.add_subcommand("render", "Render trajectory views of a checkpoint");
  rd->add_option("--checkpoint", checkpoint, "Checkpoint")->required();
  rd->add_option("--data", data, "Dataset with the poses (default: recorded with the checkpoint)");
  rd->add_option("--view", view, "Single view (default: all)");
  rd->add_option("--level", level, "fine or coarse");
  rd->add_option("--out", out, "Output directory")->required();

  // transfer-mask
  std::string mask;
  auto* tm = app.add_subcommand("transfer-mask", "Transfer a user mask to another view");
  tm->add_option("--checkpoint", checkpoint, "Checkpoint")->required();
  tm->add_option("--data", data, "Dataset with the poses");
  tm->add_option("--mask", mask, "User mask PNG (0 = remove)")->required();
  tm->add_option("--view", view, "User view")->required();
  tm->add_option("--target", target, "Target view")->required();
  tm->add_option("--out", out, "Output mask PNG")->required();

  // build-guidance
  auto* bg = app.add_subcommand("build-guidance", "Transfer masks and complete colors and depths for every view");
  bg->add_option("--checkpoint", checkpoint, "Checkpoint")->required();
  bg->add_option("--data", data, "Dataset with the poses");
  bg->add_option("--mask", mask, "User mask PNG (0 = remove)")->required();
  bg->add_option("--view", view, "User view")->required();
  bg->add_option("--out", out, "Output directory")->required();

  // inpaint
  JobOptions job_opts;
  auto* ip = app.add_subcommand("inpaint", "Remove the masked object by guided optimisation");
  ip->add_option("--checkpoint", checkpoint, "Pre-trained checkpoint")->required();
  ip->add_option("--data", data, "Dataset with the poses");
  ip->add_option("--mask", mask, "User mask PNG (0 = remove)")->required();
  ip->add_option("--view", view, "User view")->required();
  ip->add_option("--out", out, "Job directory")->required();
  job_opts.add(ip);

  // ablate
  std::string gt, masks_dir;
  long long draw_seed = 1;
  auto* ab = app.add_subcommand("ablate", "Depth-loss and view-count ablations");
  ab->add_option("--checkpoint", checkpoint, "Pre-trained checkpoint")->required();
  ab->add_option("--data", data, "Dataset with the poses");
  ab->add_option("--mask", mask, "User mask PNG (0 = remove)")->required();
  ab->add_option("--view", view, "User view")->required();
  ab->add_option("--gt", gt, "Reference checkpoint trained on the removed set")->required();
  ab->add_option("--masks", masks_dir, "Evaluation masks directory (default: transferred masks)");
  ab->add_option("--draw-seed", draw_seed, "Seed for the three-views draw");
  ab->add_option("--out", out, "Output directory")->required();
  job_opts.add(ab);

  // evaluate
  std::string job_dir, raw;
  auto* ev = app.add_subcommand("evaluate", "Compare a finished job against a reference field");
  ev->add_option("--job", job_dir, "Job directory")->required();
  ev->add_option("--gt", gt, "Reference checkpoint trained on the removed set")->required();
  ev->add_option("--masks", masks_dir, "Evaluation masks directory (default: transferred masks)");
  ev->add_option("--raw", raw, "Ground-truth image dataset for the secondary columns");

  // serve
  std::string data_dir, host = "127.0.0.1";
  int port = 8080, preview_every = 500;
  auto* sv = app.add_subcommand("serve", "HTTP service over one checkpoint");
  sv->add_option("--checkpoint", checkpoint, "Pre-trained checkpoint")->required();
  sv->add_option("--data-dir", data_dir, "Job directory root")->required();
  sv->add_option("--dataset", data, "Dataset with the poses");
  sv->add_option("--gt", gt, "Reference checkpoint shown in /compare");
  sv->add_option("--host", host, "Listen address");
  sv->add_option("--port", port, "Listen port (0 picks one)");
  sv->add_option("--preview-every", preview_every, "Steps between preview renders");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*gen) {
      const auto names = bundled_scene_names();
      if (std::find(names.begin(), names.end(), scene_name) == names.end()) {
        throw UsageError("unknown scene '" + scene_name + "' (figyua-like, desuku-like or terebi-like)");
      }
      SceneSpec scene = bundled_scene(scene_name);
      if (views > 0) scene.trajectory.n_views = views;
      if (width > 0) {
        scene.trajectory.focal *= static_cast<double>(width) / scene.trajectory.width;
        scene.trajectory.width = width;
      }
      if (height > 0) scene.trajectory.height = height;
      const ScenePair pair = make_scene_pair(scene, make_trajectory(scene.trajectory));
      save_dataset(in_dir(out, "original"), pair.original);
      save_dataset(in_dir(out, "removed"), pair.removed);
      save_mask_dir(in_dir(out, "true_masks"), pair.true_masks);
      std::cout << "wrote " << pair.original.views.size() << " views of " << scene_name << " to " << out << "\n";
    } else if (*tr) {
      require_path(data);
      const PosedImageSet set = load_dataset(data);
      FieldConfig fc = field_profile(profile);
      fc.near = set.near;
      fc.far = set.far;
      TrainConfig tc;
      if (profile == "desk") tc.batch_rays = 128;
      if (!config.empty()) {
        require_path(config);
        const KeyValues kv = KeyValues::load(config);
        fc = field_config_from(kv, fc);
        tc = train_config_from(kv, tc);
      }
      if (steps > 0) tc.steps = steps;
      if (batch_rays > 0) tc.batch_rays = batch_rays;
      if (seed >= 0) tc.seed = static_cast<std::uint64_t>(seed);
      tc.checkpoint_path = checkpoint;
      const LossKind kind = loss == "mse" ? LossKind::mse
                            : loss == "masked_mse"
                                ? LossKind::masked_mse
                                : throw UsageError("--loss must be mse or masked_mse, got " + loss);
      std::optional<TrainingState<float>> state;
      RadianceField<float> field;
      if (resume) {
        require_path(checkpoint);
        Checkpoint<float> ck = load_checkpoint<float>(checkpoint);
        field = std::move(ck.field);
        state = std::move(ck.training);
      } else {
        field = RadianceField<float>::init(fc);
      }
      const auto result = train(field, set, tc, kind, std::move(state), [&](std::uint64_t step, double l) {
        if (step % static_cast<std::uint64_t>(tc.log_every) == 0) {
          std::fprintf(stderr, "step %llu loss %.6f\n", static_cast<unsigned long long>(step), l);
        }
      });
      save_checkpoint(checkpoint, field, &result.state);
      write_checkpoint_sidecar(checkpoint, data);
      write_history_csv(checkpoint + ".history.csv", result.history);
      std::cout << "wrote " << checkpoint << "\n";
    } else if (*rd) {
      const RadianceField<float> field = load_field(checkpoint);
      const auto traj = poses_for(checkpoint, data);
      if (level != "fine" && level != "coarse") throw UsageError("--level must be fine or coarse");
      fs::create_directories(out);
      for (std::size_t i = 0; i < traj.size(); ++i) {
        if (view >= 0 && static_cast<int>(i) != view) continue;
        const ViewRender r = render_view(field, traj[i], level == "fine" ? Level::fine : Level::coarse);
        write_file(in_dir(out, numbered("rgb_", i, ".png")), encode_rgb_png(r.image));
        write_file(in_dir(out, numbered("depth_", i, ".png")), encode_depth_png(r.depth, depth_png_scale));
      }
      if (view >= static_cast<int>(traj.size())) pose_at(traj, view);
    } else if (*tm) {
      const RadianceField<float> field = load_field(checkpoint);
      const auto traj = poses_for(checkpoint, data);
      const CameraPose& a = pose_at(traj, view);
      const CameraPose& b = pose_at(traj, target);
      const Mask user = load_user_mask(mask, a.width, a.height);
      const TransferResult t = transfer_mask(user, a, render_view(field, a, Level::fine).depth, b,
                                             render_view(field, b, Level::fine).depth);
      write_file(out, encode_mask_png(t.mask));
      if (t.degenerate) std::cerr << "warning: no masked point lands in front of view " << target << "\n";
    } else if (*bg) {
      const RadianceField<float> field = load_field(checkpoint);
      const auto traj = poses_for(checkpoint, data);
      const CameraPose& a = pose_at(traj, view);
      save_guidance(out, build_guidance(field, traj, view, load_user_mask(mask, a.width, a.height)));
    } else if (*ip) {
      const RadianceField<float> field = load_field(checkpoint);
      const std::string dataset = data.empty() ? dataset_of(checkpoint) : data;
      const auto traj = poses_for(checkpoint, dataset);
      const CameraPose& a = pose_at(traj, view);
      const Mask user = load_user_mask(mask, a.width, a.height);
      const InpaintJob job = job_opts.build(view);
      fs::create_directories(out);
      fs::copy_file(mask, in_dir(out, "mask.png"), fs::copy_options::overwrite_existing);
      JobProgress progress;
      progress.on_history = [](const std::vector<InpaintLosses>& h) {
        const InpaintLosses& l = h.back();
        std::fprintf(stderr, "step %llu loss %.6f (all %.6f out %.6f depth %.6f)\n",
                     static_cast<unsigned long long>(l.step), l.total, l.color_all, l.color_out, l.depth);
      };
      run_job(field, traj, user, job, out, {}, progress);
      write_checkpoint_sidecar(in_dir(out, "inpainted.ck"), dataset);
      std::cout << "wrote " << in_dir(out, "inpainted.ck") << "\n";
    } else if (*ab) {
      const RadianceField<float> field = load_field(checkpoint);
      const RadianceField<float> reference = load_field(gt);
      const auto traj = poses_for(checkpoint, data);
      const CameraPose& a = pose_at(traj, view);
      const Mask user = load_user_mask(mask, a.width, a.height);
      const InpaintJob base = job_opts.build(view);
      const Guidance g = build_guidance(field, traj, view, user);
      std::vector<Mask> masks;
      if (!masks_dir.empty()) {
        masks = load_mask_dir(masks_dir);
      } else {
        for (int i = 0; i < g.sampled_count(); ++i) masks.push_back(*g.set.views[static_cast<std::size_t>(i)].mask);
      }
      const auto entries = ablate(field, g, ablation_grid(base, g.sampled_count(), static_cast<std::uint64_t>(draw_seed)),
                                  reference, traj, masks, [](const std::string& label) {
                                    std::fprintf(stderr, "running %s\n", label.c_str());
                                  });
      fs::create_directories(out);
      write_ablation_csv(in_dir(out, "ablation.csv"), entries);
      for (const auto& e : entries) {
        std::printf("%-18s masked psnr %7.3f  masked depth %.4f  outside mse %.6f  consistency %.4f\n", e.label.c_str(),
                    e.summary.psnr_masked, e.summary.depth_mae_masked, e.summary.mse_outside, e.summary.consistency);
      }
    } else if (*ev) {
      require_path(job_dir);
      const RadianceField<float> reference = load_field(gt);
      std::optional<std::vector<Mask>> masks;
      if (!masks_dir.empty()) masks = load_mask_dir(masks_dir);
      std::optional<PosedImageSet> raw_set;
      if (!raw.empty()) {
        require_path(raw);
        raw_set = load_dataset(raw);
      }
      const EvalReport r =
          evaluate_job_dir(job_dir, reference, masks ? &*masks : nullptr, raw_set ? &*raw_set : nullptr);
      print_summary(r, "job " + job_dir);
    } else if (*sv) {
      require_path(checkpoint);
      ServiceConfig cfg;
      cfg.checkpoint = checkpoint;
      cfg.dataset = data;
      cfg.data_dir = data_dir;
      cfg.reference_checkpoint = gt;
      cfg.preview_every = preview_every;
      if (!gt.empty()) require_path(gt);
      Service service(cfg);
      const int bound = service.bind(host, port);
      std::cout << "listening on http://" << host << ":" << bound << std::endl;
      active_service = &service;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      service.run();
      active_service = nullptr;
    }
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
