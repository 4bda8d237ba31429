// Copyright Contributors to the nerfin Project
// SPDX-License-Identifier: Apache-2.0

#include "nerfin/evaluate.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

namespace nerfin {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void check_mask(const Mask* mask, int width, int height, const char* what) {
  if (mask && (mask->cols() != width || mask->rows() != height)) {
    throw ShapeError(std::string(what) + ": mask is " + shape_string(shape_of(*mask)) + ", images are " +
                     std::to_string(height) + "x" + std::to_string(width));
  }
}

struct Sum {
  double value = 0;
  Index count = 0;
  void add(double v, Index n = 1) {
    value += v;
    count += n;
  }
};

Sum squared_error(const RgbImage& a, const RgbImage& b, const Mask* mask, Region region) {
  Sum s;
  for (int y = 0; y < a.height; ++y) {
    for (int x = 0; x < a.width; ++x) {
      if (!in_region(mask, region, x, y)) continue;
      const auto d = (a.at(x, y).cast<double>() - b.at(x, y).cast<double>());
      s.add(d.square().sum(), 3);
    }
  }
  return s;
}

Sum depth_error(const DepthMap& a, const DepthMap& b, const Mask* mask, Region region) {
  Sum s;
  for (int y = 0; y < a.rows(); ++y) {
    for (int x = 0; x < a.cols(); ++x) {
      if (in_region(mask, region, x, y)) s.add(std::abs(double(a(y, x)) - double(b(y, x))));
    }
  }
  return s;
}

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::string fmt(const std::optional<double>& v) { return v ? fmt(*v) : ""; }

}  // namespace

bool in_region(const Mask* mask, Region region, int x, int y) {
  if (!mask || region == Region::all) return true;
  const bool masked = (*mask)(y, x) == 0;
  return region == Region::inside ? masked : !masked;
}

double region_mse(const RgbImage& a, const RgbImage& b, const Mask* mask, Region region) {
  if (a.width != b.width || a.height != b.height) {
    throw ShapeError("region_mse: images are " + std::to_string(a.height) + "x" + std::to_string(a.width) + " and " +
                     std::to_string(b.height) + "x" + std::to_string(b.width));
  }
  check_mask(mask, a.width, a.height, "region_mse");
  const Sum s = squared_error(a, b, mask, region);
  if (s.count == 0) throw std::invalid_argument("region_mse: empty region");
  return s.value / static_cast<double>(s.count);
}

double psnr_from_mse(double mse) {
  if (!(mse > 0)) return kPsnrCap;
  return std::min(kPsnrCap, -10.0 * std::log10(mse));
}

double psnr(const RgbImage& a, const RgbImage& b, const Mask* mask, Region region) {
  return psnr_from_mse(region_mse(a, b, mask, region));
}

double region_depth_mae(const DepthMap& a, const DepthMap& b, const Mask* mask, Region region) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError("region_depth_mae: depths are " + shape_string(shape_of(a)) + " and " + shape_string(shape_of(b)));
  }
  check_mask(mask, static_cast<int>(a.cols()), static_cast<int>(a.rows()), "region_depth_mae");
  const Sum s = depth_error(a, b, mask, region);
  if (s.count == 0) throw std::invalid_argument("region_depth_mae: empty region");
  return s.value / static_cast<double>(s.count);
}

ConsistencyResult view_consistency(const ViewRender& a, const CameraPose& pose_a, const ViewRender& b,
                                   const CameraPose& pose_b, const Mask& region_a, const ConsistencyOptions& opt) {
  check_mask(&region_a, pose_a.width, pose_a.height, "view_consistency");
  if (a.image.width != pose_a.width || a.image.height != pose_a.height || b.image.width != pose_b.width ||
      b.image.height != pose_b.height) {
    throw ShapeError("view_consistency: renders do not match their poses");
  }
  ConsistencyResult r;
  double total = 0;
  for (int y = 0; y < pose_a.height; ++y) {
    for (int x = 0; x < pose_a.width; ++x) {
      if (region_a(y, x) != 0) continue;
      const Vec3 p = pose_a.unproject(x + 0.5, y + 0.5, a.depth(y, x));
      const auto q = pose_b.project(p);
      if (!q) continue;
      const int u = static_cast<int>(std::floor(q->x())), v = static_cast<int>(std::floor(q->y()));
      if (u < 0 || v < 0 || u >= pose_b.width || v >= pose_b.height) continue;
      const double range = pose_b.range_to(p);
      if (std::abs(range - b.depth(v, u)) > opt.rel_tolerance * range + opt.abs_tolerance) continue;
      total += (a.image.at(x, y).cast<double>() - b.image.at(u, v).cast<double>()).abs().mean();
      ++r.pixels;
    }
  }
  if (r.pixels > 0) {
    r.valid = true;
    r.value = total / static_cast<double>(r.pixels);
  }
  return r;
}

EvalReport evaluate_renders(const std::vector<ViewRender>& inpainted, const std::vector<ViewRender>& reference,
                            const std::vector<CameraPose>& trajectory, const std::vector<Mask>& masks,
                            const PosedImageSet* raw, const ConsistencyOptions& options) {
  const std::size_t n = trajectory.size();
  if (inpainted.size() != n || reference.size() != n || masks.size() != n || (raw && raw->views.size() != n)) {
    throw std::invalid_argument("evaluate: " + std::to_string(n) + " poses but " + std::to_string(inpainted.size()) +
                                " renders, " + std::to_string(reference.size()) + " references and " +
                                std::to_string(masks.size()) + " masks");
  }
  EvalReport rep;
  Sum all, inside, outside, depth, cons;
  std::optional<Sum> raw_all, raw_inside;
  if (raw) raw_all.emplace(), raw_inside.emplace();
  for (std::size_t k = 0; k < n; ++k) {
    const RgbImage& img = inpainted[k].image;
    const RgbImage& ref = reference[k].image;
    const Mask& m = masks[k];
    check_mask(&m, img.width, img.height, "evaluate");
    ViewMetrics v;
    v.view = static_cast<int>(k);
    v.masked_pixels = masked_count(m);
    const Sum sa = squared_error(img, ref, &m, Region::all);
    const Sum si = squared_error(img, ref, &m, Region::inside);
    const Sum so = squared_error(img, ref, &m, Region::outside);
    const Sum sd = depth_error(inpainted[k].depth, reference[k].depth, &m, Region::inside);
    all.add(sa.value, sa.count);
    inside.add(si.value, si.count);
    outside.add(so.value, so.count);
    depth.add(sd.value, sd.count);
    v.psnr = psnr_from_mse(sa.value / static_cast<double>(sa.count));
    v.psnr_masked = si.count ? psnr_from_mse(si.value / static_cast<double>(si.count)) : kNaN;
    v.depth_mae_masked = sd.count ? sd.value / static_cast<double>(sd.count) : kNaN;
    v.mse_outside = so.count ? so.value / static_cast<double>(so.count) : kNaN;
    if (k + 1 < n && v.masked_pixels > 0) {
      v.consistency = view_consistency(inpainted[k], trajectory[k], inpainted[k + 1], trajectory[k + 1], m, options);
      if (v.consistency.valid) cons.add(v.consistency.value * static_cast<double>(v.consistency.pixels), v.consistency.pixels);
    }
    if (raw) {
      const RgbImage& gt = raw->views[k].image;
      const Sum ra = squared_error(img, gt, &m, Region::all);
      const Sum ri = squared_error(img, gt, &m, Region::inside);
      raw_all->add(ra.value, ra.count);
      raw_inside->add(ri.value, ri.count);
      v.raw_psnr = psnr_from_mse(ra.value / static_cast<double>(ra.count));
      v.raw_psnr_masked = ri.count ? psnr_from_mse(ri.value / static_cast<double>(ri.count)) : kNaN;
    }
    rep.views.push_back(v);
  }
  const auto mean = [](const Sum& s) { return s.count ? s.value / static_cast<double>(s.count) : kNaN; };
  EvalSummary& s = rep.summary;
  s.psnr = psnr_from_mse(mean(all));
  s.psnr_masked = inside.count ? psnr_from_mse(mean(inside)) : kNaN;
  s.depth_mae_masked = mean(depth);
  s.mse_outside = mean(outside);
  s.consistency = cons.count ? mean(cons) : -1.0;
  if (raw) {
    s.raw_psnr = psnr_from_mse(mean(*raw_all));
    s.raw_psnr_masked = raw_inside->count ? psnr_from_mse(mean(*raw_inside)) : kNaN;
  }
  return rep;
}

void write_report_csv(const std::string& path, const EvalReport& report) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << "view,masked_pixels,psnr,psnr_masked,depth_mae_masked,mse_outside,consistency,consistency_pixels,raw_psnr,"
         "raw_psnr_masked\n";
  for (const auto& v : report.views) {
    out << v.view << ',' << v.masked_pixels << ',' << fmt(v.psnr) << ',' << fmt(v.psnr_masked) << ','
        << fmt(v.depth_mae_masked) << ',' << fmt(v.mse_outside) << ',' << fmt(v.consistency.value) << ','
        << v.consistency.pixels << ',' << fmt(v.raw_psnr) << ',' << fmt(v.raw_psnr_masked) << '\n';
  }
  const EvalSummary& s = report.summary;
  Index masked = 0, pairs = 0;
  for (const auto& v : report.views) {
    masked += v.masked_pixels;
    pairs += v.consistency.pixels;
  }
  out << "all," << masked << ',' << fmt(s.psnr) << ',' << fmt(s.psnr_masked) << ',' << fmt(s.depth_mae_masked) << ','
      << fmt(s.mse_outside) << ',' << fmt(s.consistency) << ',' << pairs << ',' << fmt(s.raw_psnr) << ','
      << fmt(s.raw_psnr_masked) << '\n';
}

std::string format_summary(const EvalReport& report, const std::string& title) {
  const EvalSummary& s = report.summary;
  std::ostringstream os;
  os << title << "\n";
  os << "  views                     " << report.views.size() << "\n";
  os << "  psnr (dB)                 " << fmt(s.psnr) << "\n";
  os << "  masked psnr (dB)          " << fmt(s.psnr_masked) << "\n";
  os << "  masked depth error        " << fmt(s.depth_mae_masked) << "\n";
  os << "  outside-mask mse          " << fmt(s.mse_outside) << "\n";
  os << "  view consistency          " << fmt(s.consistency) << "\n";
  if (s.raw_psnr) {
    os << "  psnr vs images (dB)       " << fmt(s.raw_psnr) << "\n";
    os << "  masked psnr vs images (dB) " << fmt(s.raw_psnr_masked) << "\n";
  }
  return os.str();
}

std::vector<InpaintJob> ablation_grid(const InpaintJob& base, int k, std::uint64_t draw_seed) {
  std::vector<InpaintJob> jobs;
  InpaintJob ours = with_view_count(base, ViewCountSetting::user_only, k, draw_seed);
  ours.mode = InpaintMode::ours;
  for (InpaintMode m : {InpaintMode::ours, InpaintMode::color_only, InpaintMode::depth_only}) {
    InpaintJob j = ours;
    j.mode = m;
    jobs.push_back(j);
  }
  for (ViewCountSetting s : {ViewCountSetting::three_views, ViewCountSetting::all_views}) {
    jobs.push_back(with_view_count(ours, s, k, draw_seed));
  }
  return jobs;
}

std::string ablation_label(const InpaintJob& job, int k) {
  const std::string mode = to_string(job.mode);
  if (!job.all_views || *job.all_views == std::vector<int>{k}) return mode;
  if (static_cast<int>(job.all_views->size()) == k) return mode + "/all_views";
  if (job.all_views->size() == 3) return mode + "/three_views";
  return mode + "/all=" + format_index_list(*job.all_views);
}

void write_ablation_csv(const std::string& path, const std::vector<AblationEntry>& entries) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << "label,mode,all_views,psnr,psnr_masked,depth_mae_masked,mse_outside,consistency\n";
  for (const auto& e : entries) {
    const std::string all = e.job.all_views ? format_index_list(*e.job.all_views) : "";
    out << e.label << ',' << to_string(e.job.mode) << ",\"" << all << "\"," << fmt(e.summary.psnr) << ','
        << fmt(e.summary.psnr_masked) << ',' << fmt(e.summary.depth_mae_masked) << ',' << fmt(e.summary.mse_outside)
        << ',' << fmt(e.summary.consistency) << '\n';
  }
}

}  // namespace nerfin
