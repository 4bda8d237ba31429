// Copyright Contributors to the nerfin Project
// SPDX-License-Identifier: Apache-2.0

#include "nerfin/inpaint.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

namespace nerfin {

std::string to_string(InpaintMode mode) {
  switch (mode) {
    case InpaintMode::ours: return "ours";
    case InpaintMode::color_only: return "color_only";
    case InpaintMode::depth_only: return "depth_only";
    case InpaintMode::baseline1: return "baseline1";
    case InpaintMode::baseline2: return "baseline2";
  }
  return "ours";
}

InpaintMode parse_inpaint_mode(const std::string& name) {
  for (InpaintMode m : {InpaintMode::ours, InpaintMode::color_only, InpaintMode::depth_only, InpaintMode::baseline1,
                        InpaintMode::baseline2}) {
    if (to_string(m) == name) return m;
  }
  throw std::invalid_argument("unknown inpaint mode '" + name +
                              "' (expected ours, color_only, depth_only, baseline1 or baseline2)");
}

void InpaintJob::validate() const {
  if (user_view_index < 0) throw std::invalid_argument("inpaint job: user_view must be >= 0");
  if (steps <= 0) throw std::invalid_argument("inpaint job: steps must be > 0");
  if (batch_rays <= 0) throw std::invalid_argument("inpaint job: batch_rays must be > 0");
  if (min_term_rays <= 0) throw std::invalid_argument("inpaint job: min_term_rays must be > 0");
  if (!(lr > 0)) throw std::invalid_argument("inpaint job: lr must be > 0");
  if (!(depth_weight >= 0) || !std::isfinite(depth_weight)) {
    throw std::invalid_argument("inpaint job: depth_weight must be finite and >= 0");
  }
  if (log_every <= 0) throw std::invalid_argument("inpaint job: log_every must be > 0");
}

InpaintJob inpaint_job_from(const KeyValues& kv, InpaintJob base) {
  InpaintJob j = std::move(base);
  j.user_view_index = kv.get("user_view", j.user_view_index);
  j.mode = parse_inpaint_mode(kv.get("mode", to_string(j.mode)));
  if (kv.has("all_views")) j.all_views = kv.get_list("all_views", {});
  if (kv.has("out_views")) j.out_views = kv.get_list("out_views", {});
  if (kv.has("depth_views")) j.depth_views = kv.get_list("depth_views", {});
  j.depth_weight = kv.get("depth_weight", j.depth_weight);
  j.masked_depth = kv.get("masked_depth", j.masked_depth);
  j.steps = kv.get("steps", j.steps);
  j.batch_rays = kv.get("batch_rays", j.batch_rays);
  j.min_term_rays = kv.get("min_term_rays", j.min_term_rays);
  j.lr = kv.get("lr", j.lr);
  j.seed = static_cast<std::uint64_t>(kv.get("seed", static_cast<long long>(j.seed)));
  j.log_every = kv.get("log_every", j.log_every);
  j.validate();
  return j;
}

KeyValues to_key_values(const InpaintJob& j) {
  KeyValues kv;
  kv.set("user_view", static_cast<long long>(j.user_view_index));
  kv.set("mode", to_string(j.mode));
  if (j.all_views) kv.set("all_views", format_index_list(*j.all_views));
  if (j.out_views) kv.set("out_views", format_index_list(*j.out_views));
  if (j.depth_views) kv.set("depth_views", format_index_list(*j.depth_views));
  kv.set("depth_weight", j.depth_weight);
  kv.set("masked_depth", std::string(j.masked_depth ? "true" : "false"));
  kv.set("steps", static_cast<long long>(j.steps));
  kv.set("batch_rays", static_cast<long long>(j.batch_rays));
  kv.set("min_term_rays", static_cast<long long>(j.min_term_rays));
  kv.set("lr", j.lr);
  kv.set("seed", static_cast<long long>(j.seed));
  kv.set("log_every", static_cast<long long>(j.log_every));
  return kv;
}

namespace {

std::vector<int> range_of(int begin, int end) {
  std::vector<int> v(static_cast<std::size_t>(std::max(0, end - begin)));
  std::iota(v.begin(), v.end(), begin);
  return v;
}

void check_indices(const std::vector<int>& v, int k, const char* name) {
  for (int i : v) {
    if (i < 0 || i > k) {
      throw std::out_of_range(std::string("inpaint job: ") + name + " index " + std::to_string(i) +
                              " outside guidance entries 0.." + std::to_string(k));
    }
  }
}

}  // namespace

ViewSets resolve_view_sets(const InpaintJob& job, int k) {
  if (k < 1) throw std::invalid_argument("resolve_view_sets: need at least one sampled view");
  ViewSets s;
  s.all = job.all_views.value_or(std::vector<int>{k});
  s.out = job.out_views.value_or(range_of(0, k));
  s.depth = job.depth_views.value_or(range_of(0, k));
  s.depth_weight = job.depth_weight;
  switch (job.mode) {
    case InpaintMode::ours: break;
    case InpaintMode::color_only:
      s.depth.clear();
      s.depth_weight = 0;
      break;
    case InpaintMode::depth_only:
      s.all.clear();
      s.out.clear();
      break;
    case InpaintMode::baseline1:
      s.all = range_of(0, k + 1);
      s.out.clear();
      s.depth.clear();
      s.depth_weight = 0;
      break;
    case InpaintMode::baseline2:
      throw std::invalid_argument("resolve_view_sets: baseline2 has no inpainting view sets");
  }
  if (s.depth_weight == 0) s.depth.clear();
  check_indices(s.all, k, "all_views");
  check_indices(s.out, k, "out_views");
  check_indices(s.depth, k, "depth_views");
  for (int a : s.all) {
    if (std::find(s.out.begin(), s.out.end(), a) != s.out.end()) {
      throw std::invalid_argument("inpaint job: view " + std::to_string(a) + " is in both all_views and out_views");
    }
  }
  if (s.all.empty() && s.out.empty() && s.depth.empty()) {
    throw std::invalid_argument("inpaint job: no active loss term");
  }
  return s;
}

std::array<int, 3> split_batch(const ViewSets& sets, int batch_rays, int min_term_rays) {
  const std::array<std::size_t, 3> sizes = {sets.all.size(), sets.out.size(), sets.depth.size()};
  const double total = static_cast<double>(sizes[0] + sizes[1] + sizes[2]);
  std::array<int, 3> counts{};
  for (int t = 0; t < 3; ++t) {
    if (sizes[t] == 0) continue;
    const int share = static_cast<int>(std::lround(batch_rays * static_cast<double>(sizes[t]) / total));
    counts[t] = std::max(min_term_rays, share);
  }
  return counts;
}

std::string to_string(ViewCountSetting s) {
  switch (s) {
    case ViewCountSetting::user_only: return "user_only";
    case ViewCountSetting::three_views: return "three_views";
    case ViewCountSetting::all_views: return "all_views";
  }
  return "user_only";
}

InpaintJob with_view_count(InpaintJob job, ViewCountSetting setting, int k, std::uint64_t draw_seed) {
  if (k < 1) throw std::invalid_argument("with_view_count: need at least one sampled view");
  switch (setting) {
    case ViewCountSetting::user_only:
      job.all_views = std::vector<int>{k};
      job.out_views = range_of(0, k);
      break;
    case ViewCountSetting::three_views: {
      if (k < 3) throw std::invalid_argument("with_view_count: three_views needs at least 3 sampled views");
      std::vector<int> pool = range_of(0, k);
      Rng rng(draw_seed);
      for (int i = 0; i < 3; ++i) {
        const std::size_t j = static_cast<std::size_t>(i) + rng.below(pool.size() - static_cast<std::size_t>(i));
        std::swap(pool[static_cast<std::size_t>(i)], pool[j]);
      }
      std::vector<int> all(pool.begin(), pool.begin() + 3), out(pool.begin() + 3, pool.end());
      std::sort(all.begin(), all.end());
      std::sort(out.begin(), out.end());
      job.all_views = all;
      job.out_views = out;
      break;
    }
    case ViewCountSetting::all_views:
      job.all_views = range_of(0, k);
      job.out_views = std::vector<int>{k};
      break;
  }
  return job;
}

void write_inpaint_history_csv(const std::string& path, const std::vector<InpaintLosses>& history) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << "step,total,color_all,color_out,depth\n";
  char buf[160];
  for (const auto& h : history) {
    std::snprintf(buf, sizeof buf, "%.9g,%.9g,%.9g,%.9g", h.total, h.color_all, h.color_out, h.depth);
    out << h.step << "," << buf << "\n";
  }
}

}  // namespace nerfin
