// Copyright Contributors to the nerfin Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

// On-disk pipeline steps shared by the command line and the HTTP service:
// checkpoints with their dataset, inpainting job directories and reports.
//
// Job directory layout:
//   job.txt        InpaintJob key-values
//   mask.png       user mask (0 = remove)
//   guidance/      guidance set (dataset layout + guidance.json)
//   history.csv    loss history, see write_inpaint_history_csv
//   preview.png    latest render of the user view
//   inpainted.ck   resulting field
//   report.csv, summary.txt   written by evaluate_job_dir

#include "nerfin/evaluate.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace nerfin {

/// Named field presets: "full" (the library defaults) or "desk" (a small
/// network that trains the bundled scenes in minutes on one core).
FieldConfig field_profile(const std::string& name);

/// Sidecar next to a checkpoint naming the dataset whose poses it was trained on.
std::string sidecar_path(const std::string& checkpoint);
void write_checkpoint_sidecar(const std::string& checkpoint, const std::string& dataset_dir);
/// The dataset directory recorded for a checkpoint; throws IoError when there is none.
std::string dataset_of(const std::string& checkpoint);

/// Poses of every view in a dataset, in order.
std::vector<CameraPose> load_trajectory(const std::string& dataset_dir);

/// Reads a mask PNG and checks it against the render size.
Mask load_user_mask(const std::string& path, int width, int height);

struct JobProgress {
  std::function<void(std::uint64_t step, std::uint64_t total)> on_step;
  std::function<void(const std::vector<InpaintLosses>& history)> on_history;
  int preview_every = 0;  ///< steps between preview.png renders; 0 renders only the result
};

/// Fresh-field training config for baseline2 derived from a job.
TrainConfig baseline2_config(const InpaintJob& job);

/// Builds the guidance set, runs the job from `field` and writes the job
/// directory. mask.png is written only when the directory has none, so an
/// uploaded file is kept byte for byte. Returns the resulting field.
RadianceField<float> run_job(const RadianceField<float>& field, const std::vector<CameraPose>& trajectory,
                             const Mask& user_mask, const InpaintJob& job, const std::string& dir,
                             const GuidanceOptions& guidance_options = {}, const JobProgress& progress = {});

struct JobFiles {
  InpaintJob job;
  Guidance guidance;
  RadianceField<float> field;
};

JobFiles load_job_dir(const std::string& dir);

/// Evaluates a finished job directory against a reference field. Without
/// explicit masks the transferred masks of the trajectory views are used.
EvalReport evaluate_job_dir(const std::string& dir, const RadianceField<float>& reference,
                            const std::vector<Mask>* masks = nullptr, const PosedImageSet* raw = nullptr);

/// Masks as NNN.png files in a directory, in view order.
void save_mask_dir(const std::string& dir, const std::vector<Mask>& masks);
std::vector<Mask> load_mask_dir(const std::string& dir);

}  // namespace nerfin
