// Copyright Contributors to the nerfin Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Guiding images and depths for inpainting: a classical diffusion inpainter
// for color and an edge-aware bilateral-space solver for depth.

#include "nerfin/log.hpp"
#include "nerfin/mask.hpp"
#include "nerfin/render.hpp"
#include "nerfin/scene.hpp"

#include <Eigen/Sparse>

#include <stdexcept>
#include <string>
#include <vector>

namespace nerfin {

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

/// Single-channel image, height x width.
using Channel = Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Fills unknown (mask 0) pixels from a pyramid of weighted averages of the known ones.
Channel pull_push(const Channel& values, const Mask& known);

struct InpaintOptions {
  double relaxation = 1.8;   ///< successive over-relaxation factor
  double tolerance = 1e-7;   ///< stop when no pixel moves more than this in a sweep
  int max_sweeps = 20000;
};

/// Pull-push initialisation followed by harmonic diffusion over the masked
/// pixels. Unmasked pixels are returned bit-exactly; output stays in [0, 1].
RgbImage inpaint_image(const RgbImage& image, const Mask& mask, const InpaintOptions& options = {});

struct BilateralOptions {
  int luma_bins = 8;
  int chroma_bins = 8;
  int spatial_bin = 4;        ///< pixels per spatial grid cell
  double lambda = 4.0;        ///< smoothness weight
  double ridge = 1e-4;        ///< weak pull of every vertex towards the prefilled target
  int bistochastic_iterations = 20;
  int max_iterations = 500;
  double tolerance = 1e-10;   ///< relative residual of the normal equations

  void validate() const;
};

/// Sparse bilateral grid over a guide image: vertices are occupied cells of
/// (y, x, luma, u, v) space. Pixels splat bilinearly in space and to the
/// nearest range bin; the blur is [1 2 1] along each of the five axes.
class BilateralGrid {
 public:
  BilateralGrid(const RgbImage& guide, const BilateralOptions& options);

  Index vertices() const { return splat_.rows(); }
  Index pixels() const { return splat_.cols(); }
  /// vertices x pixels; every column sums to one.
  const SparseMatrix& splat() const { return splat_; }
  /// vertices x vertices, symmetric.
  const SparseMatrix& blur() const { return blur_; }
  /// Per-vertex splat mass S 1.
  const Eigen::VectorXd& mass() const { return mass_; }
  /// Bistochastising scale n with n * (B n) ~= mass.
  const Eigen::VectorXd& normalizer() const { return normalizer_; }

  /// lambda (diag(m) - diag(n) B diag(n)) + diag(S c) + ridge I.
  SparseMatrix system_matrix(const Eigen::VectorXd& confidence, double lambda, double ridge) const;
  /// S (c * t) + ridge * (S prior) / m.
  Eigen::VectorXd system_rhs(const Eigen::VectorXd& target, const Eigen::VectorXd& confidence,
                             const Eigen::VectorXd& prior, double ridge) const;
  Eigen::VectorXd slice(const Eigen::VectorXd& vertex_values) const { return splat_.transpose() * vertex_values; }

 private:
  SparseMatrix splat_;
  SparseMatrix blur_;
  Eigen::VectorXd mass_;
  Eigen::VectorXd normalizer_;
};

struct SolveReport {
  int iterations = 0;
  double residual = 0;  ///< final residual norm
  double rhs_norm = 0;
  bool converged = false;
};

struct BilateralSolution {
  Eigen::VectorXd pixels;    ///< scanline order
  Eigen::VectorXd vertices;
  SolveReport report;
};

/// Minimises sum c (x - t)^2 + lambda * bilateral smoothness in grid space by
/// Jacobi-preconditioned conjugate gradients.
BilateralSolution bilateral_solve(const BilateralGrid& grid, const Eigen::VectorXd& target,
                                  const Eigen::VectorXd& confidence, const Eigen::VectorXd& prior,
                                  const BilateralOptions& options);

/// Edge-aware depth completion: confidence 1 outside the mask and 0 inside,
/// solved in the guide's bilateral space. Unmasked pixels keep their input depth.
DepthMap complete_depth(const DepthMap& depth, const Mask& mask, const RgbImage& guide,
                        const BilateralOptions& options = {}, SolveReport* report = nullptr);

struct GuidanceOptions {
  TransferOptions transfer;
  InpaintOptions inpaint;
  BilateralOptions bilateral;
};

/// Guiding views for one job. Entries 0..K-1 follow the trajectory; entry K
/// is the user view, guided with the user's own (dilated) mask.
struct Guidance {
  PosedImageSet set;
  int user_view = 0;
  std::vector<int> degenerate_views;  ///< trajectory views whose mask transfer found no geometry

  int sampled_count() const { return static_cast<int>(set.views.size()) - 1; }
  int user_entry() const { return sampled_count(); }
};

/// Guiding image and depth for one view given its render and mask.
PosedView guide_view(const CameraPose& pose, const RgbImage& image, const DepthMap& depth, const Mask& mask,
                     const GuidanceOptions& options);

/// Renders every trajectory view, transfers the user mask, and completes color then depth per view.
template <typename Scalar>
Guidance build_guidance(const RadianceField<Scalar>& field, const std::vector<CameraPose>& trajectory,
                        int user_view_index, const Mask& user_mask, const GuidanceOptions& options = {}) {
  if (user_view_index < 0 || user_view_index >= static_cast<int>(trajectory.size())) {
    throw std::out_of_range("build_guidance: user view " + std::to_string(user_view_index) + " outside trajectory of " +
                            std::to_string(trajectory.size()));
  }
  const CameraPose& user_pose = trajectory[static_cast<std::size_t>(user_view_index)];
  if (user_mask.rows() != user_pose.height || user_mask.cols() != user_pose.width) {
    throw ShapeError("build_guidance: user mask is " + shape_string(shape_of(user_mask)) + ", renders are " +
                     std::to_string(user_pose.height) + "x" + std::to_string(user_pose.width));
  }
  std::vector<ViewRender> renders;
  for (const auto& pose : trajectory) renders.push_back(render_view(field, pose, Level::fine));
  const ViewRender& user = renders[static_cast<std::size_t>(user_view_index)];
  Guidance g;
  g.user_view = user_view_index;
  g.set.variant = "guidance";
  g.set.near = field.config.near;
  g.set.far = field.config.far;
  for (std::size_t s = 0; s <= trajectory.size(); ++s) {
    const bool is_user = s == trajectory.size();
    const std::size_t src = is_user ? static_cast<std::size_t>(user_view_index) : s;
    try {
      Mask m;
      if (is_user) {
        m = dilate_mask(user_mask, options.transfer.dilation);
      } else {
        const TransferResult t =
            transfer_mask(user_mask, user_pose, user.depth, trajectory[s], renders[s].depth, options.transfer);
        if (t.degenerate) {
          log_warning("build_guidance: view " + std::to_string(s) + ": no masked point lands in front of the camera");
          g.degenerate_views.push_back(static_cast<int>(s));
        }
        m = t.mask;
      }
      g.set.views.push_back(guide_view(trajectory[src], renders[src].image, renders[src].depth, m, options));
    } catch (const std::exception& e) {
      throw std::runtime_error("build_guidance: view " + std::to_string(src) + (is_user ? " (user entry)" : "") +
                               ": " + e.what());
    }
  }
  return g;
}

/// Writes the guidance set in the dataset layout plus guidance.json naming the user view.
void save_guidance(const std::string& dir, const Guidance& guidance);
Guidance load_guidance(const std::string& dir);

}  // namespace nerfin
