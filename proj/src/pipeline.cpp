// Copyright Contributors to the nerfin Project
// SPDX-License-Identifier: Apache-2.0

#include "nerfin/pipeline.hpp"

#include "nerfin/png.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

namespace nerfin {

namespace fs = std::filesystem;

namespace {

std::string in_dir(const std::string& dir, const std::string& name) { return (fs::path(dir) / name).string(); }

std::string view_file(std::size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%03zu.png", i);
  return buf;
}

void require_file(const std::string& path) {
  if (!fs::exists(path)) throw IoError("no such file: " + path);
}

}  // namespace

FieldConfig field_profile(const std::string& name) {
  FieldConfig c;
  if (name == "full") return c;
  if (name != "desk") throw std::invalid_argument("unknown field profile '" + name + "' (expected desk or full)");
  c.hidden_width = 32;
  c.hidden_layers = 3;
  c.skip_layer = 2;
  c.n_coarse = 16;
  c.n_fine = 16;
  return c;
}

std::string sidecar_path(const std::string& checkpoint) { return checkpoint + ".meta"; }

void write_checkpoint_sidecar(const std::string& checkpoint, const std::string& dataset_dir) {
  KeyValues kv;
  kv.set("dataset", fs::absolute(dataset_dir).lexically_normal().string());
  kv.save(sidecar_path(checkpoint));
}

std::string dataset_of(const std::string& checkpoint) {
  const std::string meta = sidecar_path(checkpoint);
  if (!fs::exists(meta)) throw IoError("no dataset recorded for " + checkpoint + " (missing " + meta + ")");
  const std::string dir = KeyValues::load(meta).get("dataset", std::string());
  if (dir.empty()) throw IoError("no dataset key in " + meta);
  return dir;
}

std::vector<CameraPose> load_trajectory(const std::string& dataset_dir) {
  require_file(in_dir(dataset_dir, "dataset.json"));
  return load_dataset(dataset_dir).poses();
}

Mask load_user_mask(const std::string& path, int width, int height) {
  require_file(path);
  Mask m = decode_mask_png(read_file(path));
  if (m.cols() != width || m.rows() != height) {
    throw ShapeError("mask " + path + " is " + std::to_string(m.cols()) + "x" + std::to_string(m.rows()) +
                     ", renders are " + std::to_string(width) + "x" + std::to_string(height));
  }
  return m;
}

TrainConfig baseline2_config(const InpaintJob& job) {
  TrainConfig c;
  c.steps = job.steps;
  c.batch_rays = job.batch_rays;
  c.seed = job.seed;
  c.log_every = job.log_every;
  return c;
}

RadianceField<float> run_job(const RadianceField<float>& field, const std::vector<CameraPose>& trajectory,
                             const Mask& user_mask, const InpaintJob& job, const std::string& dir,
                             const GuidanceOptions& guidance_options, const JobProgress& progress) {
  job.validate();
  fs::create_directories(dir);
  to_key_values(job).save(in_dir(dir, "job.txt"));
  if (!fs::exists(in_dir(dir, "mask.png"))) write_file(in_dir(dir, "mask.png"), encode_mask_png(user_mask));

  const Guidance guidance = build_guidance(field, trajectory, job.user_view_index, user_mask, guidance_options);
  save_guidance(in_dir(dir, "guidance"), guidance);
  const CameraPose& user_pose = trajectory.at(static_cast<std::size_t>(job.user_view_index));

  const auto write_preview = [&](const RadianceField<float>& f) {
    const std::string path = in_dir(dir, "preview.png");
    write_file(path + ".tmp", encode_rgb_png(render_view(f, user_pose, Level::fine).image));
    fs::rename(path + ".tmp", path);
  };
  const auto write_history = [&](const std::vector<InpaintLosses>& h) {
    write_inpaint_history_csv(in_dir(dir, "history.csv"), h);
    if (progress.on_history) progress.on_history(h);
  };

  RadianceField<float> result;
  std::vector<InpaintLosses> history;
  if (job.mode == InpaintMode::baseline2) {
    FieldConfig fc = field.config;
    fc.seed = job.seed;
    result = RadianceField<float>::init(fc);
    const TrainConfig tc = baseline2_config(job);
    const auto r = train(result, guidance.set, tc, LossKind::masked_mse, std::optional<TrainingState<float>>{},
                         [&](std::uint64_t step, double loss) {
                           if (progress.on_step) progress.on_step(step, static_cast<std::uint64_t>(tc.steps));
                           if (step % static_cast<std::uint64_t>(tc.log_every) == 0) {
                             history.push_back(InpaintLosses{step, loss, 0, loss, 0});
                             write_history(history);
                           }
                         });
    history.clear();
    for (const auto& h : r.history) {
      history.push_back(InpaintLosses{static_cast<std::uint64_t>(h.step), h.loss, 0, h.loss, 0});
    }
  } else {
    InpaintOptimizer<float> opt(field, guidance, job);
    std::size_t logged = 0;
    while (!opt.done()) {
      opt.step();
      if (progress.on_step) progress.on_step(opt.steps_done(), static_cast<std::uint64_t>(job.steps));
      if (progress.preview_every > 0 && opt.steps_done() % static_cast<std::uint64_t>(progress.preview_every) == 0 &&
          !opt.done()) {
        write_preview(opt.field());
      }
      if (opt.history().size() != logged) {
        logged = opt.history().size();
        write_history(opt.history());
      }
    }
    result = opt.field();
    history = opt.history();
  }
  write_history(history);
  write_preview(result);
  const std::string ck = in_dir(dir, "inpainted.ck");
  save_checkpoint(ck + ".tmp", result);
  fs::rename(ck + ".tmp", ck);
  return result;
}

JobFiles load_job_dir(const std::string& dir) {
  require_file(in_dir(dir, "job.txt"));
  require_file(in_dir(dir, "inpainted.ck"));
  JobFiles f;
  f.job = inpaint_job_from(KeyValues::load(in_dir(dir, "job.txt")));
  f.guidance = load_guidance(in_dir(dir, "guidance"));
  f.field = load_checkpoint<float>(in_dir(dir, "inpainted.ck")).field;
  return f;
}

EvalReport evaluate_job_dir(const std::string& dir, const RadianceField<float>& reference,
                            const std::vector<Mask>* masks, const PosedImageSet* raw) {
  const JobFiles f = load_job_dir(dir);
  const int k = f.guidance.sampled_count();
  std::vector<CameraPose> trajectory;
  std::vector<Mask> transferred;
  for (int i = 0; i < k; ++i) {
    const PosedView& v = f.guidance.set.views[static_cast<std::size_t>(i)];
    trajectory.push_back(v.pose);
    transferred.push_back(v.mask ? *v.mask : Mask::Ones(v.pose.height, v.pose.width));
  }
  const EvalReport report = evaluate_job(f.field, reference, trajectory, masks ? *masks : transferred, raw);
  write_report_csv(in_dir(dir, "report.csv"), report);
  std::ofstream summary(in_dir(dir, "summary.txt"));
  if (!summary) throw IoError("cannot open for writing: " + in_dir(dir, "summary.txt"));
  fs::path name = fs::path(dir).lexically_normal();
  if (name.filename().empty()) name = name.parent_path();
  summary << format_summary(report, "job " + name.filename().string() + " (" +
                                        to_string(f.job.mode) + ", user view " +
                                        std::to_string(f.job.user_view_index) + ")");
  return report;
}

void save_mask_dir(const std::string& dir, const std::vector<Mask>& masks) {
  fs::create_directories(dir);
  for (std::size_t i = 0; i < masks.size(); ++i) write_file(in_dir(dir, view_file(i)), encode_mask_png(masks[i]));
}

std::vector<Mask> load_mask_dir(const std::string& dir) {
  if (!fs::is_directory(dir)) throw IoError("no such directory: " + dir);
  std::vector<Mask> out;
  for (std::size_t i = 0;; ++i) {
    const std::string path = in_dir(dir, view_file(i));
    if (!fs::exists(path)) break;
    out.push_back(decode_mask_png(read_file(path)));
  }
  if (out.empty()) throw IoError("no masks (000.png, 001.png, ...) in " + dir);
  return out;
}

}  // namespace nerfin
