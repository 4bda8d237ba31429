// Copyright Contributors to the nerfin Project
// SPDX-License-Identifier: Apache-2.0

#include "nerfin/guidance.hpp"

#include "json.hpp"

#include <Eigen/IterativeLinearSolvers>

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <unordered_map>

namespace nerfin {

namespace {

constexpr int grid_axes = 5;

// Cell key: y and x cell (16 bits each), then luma, u, v bins (8 bits each).
std::uint64_t pack_key(const std::array<int, grid_axes>& c) {
  return (std::uint64_t(c[0]) << 40) | (std::uint64_t(c[1]) << 24) | (std::uint64_t(c[2]) << 16) |
         (std::uint64_t(c[3]) << 8) | std::uint64_t(c[4]);
}

std::array<int, grid_axes> unpack_key(std::uint64_t k) {
  return {int((k >> 40) & 0xffff), int((k >> 24) & 0xffff), int((k >> 16) & 0xff), int((k >> 8) & 0xff),
          int(k & 0xff)};
}

int bin(double v, int bins) { return static_cast<int>(std::lround(std::clamp(v, 0.0, 1.0) * (bins - 1))); }

void check_mask(const Mask& mask, int width, int height, const char* who) {
  if (mask.rows() != height || mask.cols() != width) {
    throw ShapeError(std::string(who) + ": mask is " + shape_string(shape_of(mask)) + ", image is " +
                     std::to_string(height) + "x" + std::to_string(width));
  }
}

}  // namespace

Channel pull_push(const Channel& values, const Mask& known) {
  if (values.rows() != known.rows() || values.cols() != known.cols()) {
    throw ShapeError("pull_push: values " + shape_string(shape_of(values)) + ", mask " + shape_string(shape_of(known)));
  }
  std::vector<Channel> v{values * known.cast<double>()};
  std::vector<Channel> w{known.cast<double>()};
  while (v.back().rows() > 1 || v.back().cols() > 1) {
    const Channel& fv = v.back();
    const Channel& fw = w.back();
    const Index h = (fv.rows() + 1) / 2, wd = (fv.cols() + 1) / 2;
    Channel cv = Channel::Zero(h, wd), cw = Channel::Zero(h, wd);
    for (Index y = 0; y < fv.rows(); ++y) {
      for (Index x = 0; x < fv.cols(); ++x) {
        cv(y / 2, x / 2) += fw(y, x) * fv(y, x);
        cw(y / 2, x / 2) += fw(y, x);
      }
    }
    for (Index i = 0; i < cv.size(); ++i) {
      cv.data()[i] = cw.data()[i] > 0 ? cv.data()[i] / cw.data()[i] : 0.0;
      cw.data()[i] = std::min(1.0, cw.data()[i]);
    }
    v.push_back(std::move(cv));
    w.push_back(std::move(cw));
  }
  for (std::size_t l = v.size() - 1; l-- > 0;) {
    Channel& fv = v[l];
    const Channel& fw = w[l];
    const Channel& cv = v[l + 1];
    for (Index y = 0; y < fv.rows(); ++y) {
      for (Index x = 0; x < fv.cols(); ++x) {
        fv(y, x) = fw(y, x) * fv(y, x) + (1.0 - fw(y, x)) * cv(y / 2, x / 2);
      }
    }
  }
  Channel out = values;
  for (Index i = 0; i < out.size(); ++i) {
    if (known.data()[i] == 0) out.data()[i] = v[0].data()[i];
  }
  return out;
}

RgbImage inpaint_image(const RgbImage& image, const Mask& mask, const InpaintOptions& options) {
  check_mask(mask, image.width, image.height, "inpaint_image");
  if (masked_count(mask) == mask.size()) throw std::invalid_argument("inpaint_image: mask covers the whole image");
  RgbImage out = image;
  if (masked_count(mask) == 0) return out;
  const int w = image.width, h = image.height;
  std::vector<Index> unknown;
  for (Index p = 0; p < mask.size(); ++p) {
    if (mask.data()[p] == 0) unknown.push_back(p);
  }
  for (int c = 0; c < 3; ++c) {
    Channel ch(h, w);
    for (Index p = 0; p < ch.size(); ++p) ch.data()[p] = image.pixels(p, c);
    ch = pull_push(ch, mask);
    for (int sweep = 0; sweep < options.max_sweeps; ++sweep) {
      double moved = 0;
      for (Index p : unknown) {
        const Index x = p % w, y = p / w;
        double s = 0;
        int n = 0;
        if (x > 0) s += ch(y, x - 1), ++n;
        if (x + 1 < w) s += ch(y, x + 1), ++n;
        if (y > 0) s += ch(y - 1, x), ++n;
        if (y + 1 < h) s += ch(y + 1, x), ++n;
        const double delta = options.relaxation * (s / n - ch(y, x));
        ch(y, x) += delta;
        moved = std::max(moved, std::abs(delta));
      }
      if (moved < options.tolerance) break;
    }
    for (Index p : unknown) out.pixels(p, c) = static_cast<float>(std::clamp(ch.data()[p], 0.0, 1.0));
  }
  return out;
}

void BilateralOptions::validate() const {
  if (luma_bins < 2 || chroma_bins < 2 || luma_bins > 256 || chroma_bins > 256) {
    throw std::invalid_argument("bilateral: bin counts must lie in [2, 256]");
  }
  if (spatial_bin < 1) throw std::invalid_argument("bilateral: spatial_bin must be >= 1");
  if (!(lambda >= 0) || !(ridge > 0)) throw std::invalid_argument("bilateral: need lambda >= 0 and ridge > 0");
  if (max_iterations < 1 || !(tolerance > 0)) throw std::invalid_argument("bilateral: bad solver limits");
}

BilateralGrid::BilateralGrid(const RgbImage& guide, const BilateralOptions& options) {
  options.validate();
  const int w = guide.width, h = guide.height;
  std::unordered_map<std::uint64_t, Index> index;
  std::vector<std::uint64_t> keys;
  std::vector<Eigen::Triplet<double>> splat;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const Index p = guide.index(x, y);
      const double r = guide.pixels(p, 0), g = guide.pixels(p, 1), b = guide.pixels(p, 2);
      const double luma = 0.299 * r + 0.587 * g + 0.114 * b;
      const double u = 0.5 - 0.168736 * r - 0.331264 * g + 0.5 * b;
      const double v = 0.5 + 0.5 * r - 0.418688 * g - 0.081312 * b;
      const int lb = bin(luma, options.luma_bins), ub = bin(u, options.chroma_bins), vb = bin(v, options.chroma_bins);
      const double gy = double(y) / options.spatial_bin, gx = double(x) / options.spatial_bin;
      const int y0 = static_cast<int>(gy), x0 = static_cast<int>(gx);
      const double fy = gy - y0, fx = gx - x0;
      for (int dy = 0; dy < 2; ++dy) {
        for (int dx = 0; dx < 2; ++dx) {
          const double wt = (dy ? fy : 1 - fy) * (dx ? fx : 1 - fx);
          if (wt == 0) continue;
          const std::uint64_t key = pack_key({y0 + dy, x0 + dx, lb, ub, vb});
          auto [it, fresh] = index.try_emplace(key, static_cast<Index>(keys.size()));
          if (fresh) keys.push_back(key);
          splat.emplace_back(it->second, p, wt);
        }
      }
    }
  }
  const Index nv = static_cast<Index>(keys.size());
  splat_.resize(nv, static_cast<Index>(w) * h);
  splat_.setFromTriplets(splat.begin(), splat.end());

  std::vector<Eigen::Triplet<double>> blur;
  for (Index i = 0; i < nv; ++i) {
    blur.emplace_back(i, i, 2.0 * grid_axes);
    const auto c = unpack_key(keys[static_cast<std::size_t>(i)]);
    for (int a = 0; a < grid_axes; ++a) {
      for (int s : {-1, 1}) {
        auto n = c;
        n[a] += s;
        if (n[a] < 0) continue;
        const auto it = index.find(pack_key(n));
        if (it != index.end()) blur.emplace_back(i, it->second, 1.0);
      }
    }
  }
  blur_.resize(nv, nv);
  blur_.setFromTriplets(blur.begin(), blur.end());

  mass_ = splat_ * Eigen::VectorXd::Ones(splat_.cols());
  normalizer_ = Eigen::VectorXd::Ones(nv);
  for (int it = 0; it < options.bistochastic_iterations; ++it) {
    const Eigen::VectorXd bn = blur_ * normalizer_;
    normalizer_ = (normalizer_.array() * mass_.array() / bn.array()).sqrt().matrix();
  }
}

SparseMatrix BilateralGrid::system_matrix(const Eigen::VectorXd& confidence, double lambda, double ridge) const {
  const Eigen::VectorXd sc = splat_ * confidence;
  SparseMatrix a = normalizer_.asDiagonal() * blur_ * normalizer_.asDiagonal();
  a *= -lambda;
  Eigen::VectorXd diag = lambda * mass_ + sc;
  diag.array() += ridge;
  for (Index i = 0; i < a.rows(); ++i) a.coeffRef(i, i) += diag[i];
  a.makeCompressed();
  return a;
}

Eigen::VectorXd BilateralGrid::system_rhs(const Eigen::VectorXd& target, const Eigen::VectorXd& confidence,
                                          const Eigen::VectorXd& prior, double ridge) const {
  const Eigen::VectorXd prior_vertex = ((splat_ * prior).array() / mass_.array()).matrix();
  return splat_ * confidence.cwiseProduct(target) + ridge * prior_vertex;
}

BilateralSolution bilateral_solve(const BilateralGrid& grid, const Eigen::VectorXd& target,
                                  const Eigen::VectorXd& confidence, const Eigen::VectorXd& prior,
                                  const BilateralOptions& options) {
  options.validate();
  const Index n = grid.pixels();
  if (target.size() != n || confidence.size() != n || prior.size() != n) {
    throw ShapeError("bilateral_solve: expected " + std::to_string(n) + " pixels per input");
  }
  const SparseMatrix a = grid.system_matrix(confidence, options.lambda, options.ridge);
  const Eigen::VectorXd b = grid.system_rhs(target, confidence, prior, options.ridge);
  Eigen::ConjugateGradient<SparseMatrix, Eigen::Lower | Eigen::Upper, Eigen::DiagonalPreconditioner<double>> cg;
  cg.setMaxIterations(options.max_iterations);
  cg.setTolerance(options.tolerance);
  cg.compute(a);
  const Eigen::VectorXd guess = ((grid.splat() * prior).array() / grid.mass().array()).matrix();
  BilateralSolution sol;
  sol.vertices = cg.solveWithGuess(b, guess);
  sol.pixels = grid.slice(sol.vertices);
  sol.report.iterations = static_cast<int>(cg.iterations());
  sol.report.rhs_norm = b.norm();
  sol.report.residual = (a * sol.vertices - b).norm();
  sol.report.converged = cg.info() == Eigen::Success;
  if (!sol.report.converged) {
    log_warning("bilateral_solve: no convergence after " + std::to_string(sol.report.iterations) +
                " iterations, relative residual " + std::to_string(sol.report.residual / sol.report.rhs_norm));
  }
  return sol;
}

DepthMap complete_depth(const DepthMap& depth, const Mask& mask, const RgbImage& guide,
                        const BilateralOptions& options, SolveReport* report) {
  check_mask(mask, guide.width, guide.height, "complete_depth");
  if (depth.rows() != guide.height || depth.cols() != guide.width) {
    throw ShapeError("complete_depth: depth " + shape_string(shape_of(depth)) + " vs guide " +
                     std::to_string(guide.height) + "x" + std::to_string(guide.width));
  }
  if (masked_count(mask) == mask.size()) throw std::invalid_argument("complete_depth: mask covers the whole image");
  if (masked_count(mask) == 0) {
    if (report) *report = SolveReport{0, 0, 0, true};
    return depth;
  }
  const Channel d = depth.cast<double>();
  const Channel prefill = pull_push(d, mask);
  const Eigen::VectorXd target = Eigen::Map<const Eigen::VectorXd>(d.data(), d.size());
  const Eigen::VectorXd confidence = Eigen::Map<const Eigen::Array<std::uint8_t, Eigen::Dynamic, 1>>(mask.data(), mask.size()).cast<double>().matrix();
  const Eigen::VectorXd prior = Eigen::Map<const Eigen::VectorXd>(prefill.data(), prefill.size());
  const BilateralGrid grid(guide, options);
  const BilateralSolution sol = bilateral_solve(grid, target, confidence, prior, options);
  if (report) *report = sol.report;
  DepthMap out = depth;
  for (Index p = 0; p < out.size(); ++p) {
    if (mask.data()[p] == 0) out.data()[p] = static_cast<float>(sol.pixels[p]);
  }
  return out;
}

PosedView guide_view(const CameraPose& pose, const RgbImage& image, const DepthMap& depth, const Mask& mask,
                     const GuidanceOptions& options) {
  PosedView v;
  v.pose = pose;
  v.image = inpaint_image(image, mask, options.inpaint);
  v.depth = complete_depth(depth, mask, v.image, options.bilateral);
  v.mask = mask;
  return v;
}

void save_guidance(const std::string& dir, const Guidance& guidance) {
  save_dataset(dir, guidance.set);
  nlohmann::json meta;
  meta["version"] = 1;
  meta["user_view_index"] = guidance.user_view;
  meta["sampled_views"] = guidance.sampled_count();
  meta["user_entry"] = guidance.user_entry();
  meta["degenerate_views"] = guidance.degenerate_views;
  const auto path = std::filesystem::path(dir) / "guidance.json";
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << meta.dump(2) << "\n";
}

Guidance load_guidance(const std::string& dir) {
  const auto path = std::filesystem::path(dir) / "guidance.json";
  std::ifstream in(path);
  if (!in) throw IoError("cannot open: " + path.string());
  nlohmann::json meta;
  try {
    in >> meta;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed " + path.string() + ": " + e.what());
  }
  Guidance g;
  g.set = load_dataset(dir);
  g.user_view = meta.at("user_view_index").get<int>();
  g.degenerate_views = meta.value("degenerate_views", std::vector<int>{});
  if (g.set.views.size() < 2 || meta.at("user_entry").get<int>() != g.user_entry()) {
    throw IoError("guidance set in " + dir + " does not match guidance.json");
  }
  return g;
}

}  // namespace nerfin
