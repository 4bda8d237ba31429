// Copyright Contributors to the nerfin Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Comparison of inpainted fields against a reference field: PSNR over
// regions, masked depth error, and cross-view color consistency.

#include "nerfin/inpaint.hpp"

#include <optional>
#include <string>
#include <vector>

namespace nerfin {

/// Reported in place of +inf for identical images.
constexpr double kPsnrCap = 99.0;

/// Which pixels of a mask (0 = masked) a metric covers.
enum class Region { all, inside, outside };

bool in_region(const Mask* mask, Region region, int x, int y);

/// Mean squared error per channel over the region; throws on an empty region.
double region_mse(const RgbImage& a, const RgbImage& b, const Mask* mask = nullptr, Region region = Region::all);

/// 10 log10(1 / mse) for images in [0, 1], capped at kPsnrCap.
double psnr_from_mse(double mse);
double psnr(const RgbImage& a, const RgbImage& b, const Mask* mask = nullptr, Region region = Region::all);

/// Mean absolute depth difference over the region.
double region_depth_mae(const DepthMap& a, const DepthMap& b, const Mask* mask = nullptr, Region region = Region::all);

struct ConsistencyOptions {
  double rel_tolerance = 0.03;  ///< depth agreement for mutual visibility, relative to range
  double abs_tolerance = 0.05;
};

struct ConsistencyResult {
  double value = -1.0;  ///< mean absolute color difference; -1 when nothing is mutually visible
  Index pixels = 0;
  bool valid = false;
};

/// Reprojects the masked pixels of view a into view b with a's rendered depth
/// and averages the absolute color difference to the nearest pixel of b over
/// points that b sees at the same depth.
ConsistencyResult view_consistency(const ViewRender& a, const CameraPose& pose_a, const ViewRender& b,
                                   const CameraPose& pose_b, const Mask& region_a,
                                   const ConsistencyOptions& options = {});

template <typename Scalar>
ConsistencyResult view_consistency(const RadianceField<Scalar>& field, const CameraPose& pose_a,
                                   const CameraPose& pose_b, const Mask& region_a,
                                   const ConsistencyOptions& options = {}) {
  return view_consistency(render_view(field, pose_a, Level::fine), pose_a, render_view(field, pose_b, Level::fine),
                          pose_b, region_a, options);
}

struct ViewMetrics {
  int view = 0;
  Index masked_pixels = 0;
  double psnr = 0;             ///< full image vs the reference render
  double psnr_masked = 0;      ///< inside the mask; NaN for an empty mask
  double depth_mae_masked = 0; ///< inside the mask, scene units; NaN for an empty mask
  double mse_outside = 0;      ///< outside the mask
  ConsistencyResult consistency;  ///< masked pixels of this view against the next view
  std::optional<double> raw_psnr;         ///< vs ground-truth images, when given
  std::optional<double> raw_psnr_masked;
};

struct EvalSummary {
  double psnr = 0;              ///< from the MSE pooled over all pixels of all views
  double psnr_masked = 0;       ///< from the MSE pooled over masked pixels
  double depth_mae_masked = 0;  ///< mean over all masked pixels
  double mse_outside = 0;       ///< pooled over unmasked pixels
  double consistency = -1;      ///< pixel-weighted mean over valid adjacent pairs; -1 if none
  std::optional<double> raw_psnr;
  std::optional<double> raw_psnr_masked;
};

struct EvalReport {
  std::vector<ViewMetrics> views;
  EvalSummary summary;
};

/// Metrics from precomputed renders. `masks` give the evaluated region per
/// view (0 = region); consistency pairs view k with view k + 1.
EvalReport evaluate_renders(const std::vector<ViewRender>& inpainted, const std::vector<ViewRender>& reference,
                            const std::vector<CameraPose>& trajectory, const std::vector<Mask>& masks,
                            const PosedImageSet* raw = nullptr, const ConsistencyOptions& options = {});

template <typename Scalar>
std::vector<ViewRender> render_trajectory(const RadianceField<Scalar>& field, const std::vector<CameraPose>& trajectory) {
  std::vector<ViewRender> out;
  out.reserve(trajectory.size());
  for (const auto& pose : trajectory) out.push_back(render_view(field, pose, Level::fine));
  return out;
}

/// Renders both fields over the trajectory and compares them.
template <typename Scalar>
EvalReport evaluate_job(const RadianceField<Scalar>& inpainted, const RadianceField<Scalar>& reference,
                        const std::vector<CameraPose>& trajectory, const std::vector<Mask>& masks,
                        const PosedImageSet* raw = nullptr, const ConsistencyOptions& options = {}) {
  return evaluate_renders(render_trajectory(inpainted, trajectory), render_trajectory(reference, trajectory),
                          trajectory, masks, raw, options);
}

/// Columns: view, masked_pixels, psnr, psnr_masked, depth_mae_masked,
/// mse_outside, consistency, consistency_pixels, raw_psnr, raw_psnr_masked.
/// The last row, view "all", holds the summary.
void write_report_csv(const std::string& path, const EvalReport& report);
std::string format_summary(const EvalReport& report, const std::string& title);

struct AblationEntry {
  std::string label;
  InpaintJob job;
  EvalSummary summary;
};

/// The depth-loss grid (ours, color_only, depth_only) and the view-count grid
/// (user_only, three_views, all_views) on one field and guidance set.
std::vector<InpaintJob> ablation_grid(const InpaintJob& base, int sampled_views, std::uint64_t draw_seed);
std::string ablation_label(const InpaintJob& job, int sampled_views);

template <typename Scalar>
std::vector<AblationEntry> ablate(const RadianceField<Scalar>& field, const Guidance& guidance,
                                  const std::vector<InpaintJob>& jobs, const RadianceField<Scalar>& reference,
                                  const std::vector<CameraPose>& trajectory, const std::vector<Mask>& masks,
                                  const std::function<void(const std::string&)>& on_job = {}) {
  const std::vector<ViewRender> ref = render_trajectory(reference, trajectory);
  std::vector<AblationEntry> out;
  for (const auto& job : jobs) {
    const std::string label = ablation_label(job, guidance.sampled_count());
    if (on_job) on_job(label);
    const InpaintResult<Scalar> r = inpaint(field, guidance, job);
    out.push_back({label, job, evaluate_renders(render_trajectory(r.field, trajectory), ref, trajectory, masks).summary});
  }
  return out;
}

/// Columns: label, mode, all_views, psnr, psnr_masked, depth_mae_masked, mse_outside, consistency.
void write_ablation_csv(const std::string& path, const std::vector<AblationEntry>& entries);

}  // namespace nerfin
