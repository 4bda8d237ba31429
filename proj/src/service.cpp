// Copyright Contributors to the nerfin Project
// SPDX-License-Identifier: Apache-2.0

#include "nerfin/service.hpp"

#include "nerfin/png.hpp"

#include "httplib.h"
#include "json.hpp"

#include <charconv>
#include <chrono>
#include <condition_variable>
#include <deque>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <thread>

namespace nerfin {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(JobState s) {
  switch (s) {
    case JobState::queued: return "queued";
    case JobState::running: return "running";
    case JobState::done: return "done";
    case JobState::failed: return "failed";
  }
  return "queued";
}

JobState parse_job_state(const std::string& s) {
  for (JobState v : {JobState::queued, JobState::running, JobState::done, JobState::failed}) {
    if (to_string(v) == s) return v;
  }
  throw std::invalid_argument("unknown job state: " + s);
}

namespace {

struct Stopped : std::runtime_error {
  Stopped() : std::runtime_error("service stopped before the job finished") {}
};

json to_json(const JobStatus& s) {
  json j{{"id", s.id}, {"state", to_string(s.state)}, {"step", s.step}, {"total", s.total},
         {"view", s.view}, {"mode", s.mode}};
  if (!s.error.empty()) j["error"] = s.error;
  return j;
}

JobStatus status_from_json(const json& j) {
  JobStatus s;
  s.id = j.at("id").get<std::string>();
  s.state = parse_job_state(j.at("state").get<std::string>());
  s.step = j.value("step", std::uint64_t{0});
  s.total = j.value("total", std::uint64_t{0});
  s.view = j.value("view", 0);
  s.mode = j.value("mode", std::string());
  s.error = j.value("error", std::string());
  return s;
}

void write_text_atomic(const fs::path& path, const std::string& text) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + tmp.string());
    out << text;
  }
  fs::rename(tmp, path);
}

json history_json(const std::vector<InpaintLosses>& h) {
  json a = json::array();
  for (const auto& l : h) {
    a.push_back({{"step", l.step}, {"total", l.total}, {"color_all", l.color_all}, {"color_out", l.color_out},
                 {"depth", l.depth}});
  }
  return a;
}

std::string as_string(const Bytes& b) { return std::string(b.begin(), b.end()); }
Bytes as_bytes(const std::string& s) { return Bytes(s.begin(), s.end()); }

RgbImage side_by_side(const std::vector<const RgbImage*>& images) {
  int width = 0, height = 0;
  for (const auto* im : images) {
    width += im->width;
    height = std::max(height, im->height);
  }
  RgbImage out(width, height);
  int x0 = 0;
  for (const auto* im : images) {
    for (int y = 0; y < im->height; ++y) {
      for (int x = 0; x < im->width; ++x) out.at(x0 + x, y) = im->at(x, y);
    }
    x0 += im->width;
  }
  return out;
}

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& message, json extra = json::object()) {
  extra["error"] = message;
  send_json(res, status, extra);
}

void send_png(httplib::Response& res, const Bytes& png) { res.set_content(as_string(png), "image/png"); }

}  // namespace

struct Service::Impl {
  ServiceConfig cfg;
  RadianceField<float> field;
  std::optional<RadianceField<float>> reference;
  std::vector<CameraPose> trajectory;
  httplib::Server server;

  mutable std::mutex mu;
  mutable std::condition_variable cv;
  std::map<std::string, JobStatus> jobs;
  std::map<std::string, std::vector<InpaintLosses>> histories;
  std::deque<std::string> queue;
  bool stopping = false;
  int next_id = 1;
  std::thread worker;

  std::mutex render_mu;
  std::map<std::pair<int, int>, ViewRender> original_renders;
  std::map<std::string, RadianceField<float>> job_fields;
  std::map<std::pair<std::string, int>, ViewRender> job_renders;
  std::optional<std::map<int, ViewRender>> reference_renders;

  explicit Impl(ServiceConfig c) : cfg(std::move(c)) {
    if (cfg.data_dir.empty()) throw std::invalid_argument("service: data directory is required");
    field = load_checkpoint<float>(cfg.checkpoint).field;
    const std::string dataset = cfg.dataset.empty() ? dataset_of(cfg.checkpoint) : cfg.dataset;
    trajectory = load_trajectory(dataset);
    if (trajectory.empty()) throw std::invalid_argument("service: dataset " + dataset + " has no views");
    if (!cfg.reference_checkpoint.empty()) reference = load_checkpoint<float>(cfg.reference_checkpoint).field;
    fs::create_directories(cfg.data_dir);
    recover();
    routes();
    worker = std::thread([this] { work(); });
  }

  ~Impl() {
    {
      std::lock_guard<std::mutex> lock(mu);
      stopping = true;
    }
    cv.notify_all();
    server.stop();
    if (worker.joinable()) worker.join();
  }

  fs::path job_dir(const std::string& id) const { return fs::path(cfg.data_dir) / id; }

  // Caller holds mu.
  void persist(const JobStatus& s) const { write_text_atomic(job_dir(s.id) / "status.json", to_json(s).dump(2)); }

  void recover() {
    std::vector<std::string> requeue;
    for (const auto& entry : fs::directory_iterator(cfg.data_dir)) {
      const fs::path status = entry.path() / "status.json";
      if (!entry.is_directory() || !fs::exists(status)) continue;
      std::ifstream in(status);
      JobStatus s = status_from_json(json::parse(in));
      if (s.state == JobState::running) {
        s.state = JobState::failed;
        s.error = "interrupted by a service restart";
        persist(s);
      } else if (s.state == JobState::queued) {
        requeue.push_back(s.id);
      }
      if (s.id.size() > 1 && s.id[0] == 'j') next_id = std::max(next_id, std::atoi(s.id.c_str() + 1) + 1);
      jobs[s.id] = s;
    }
    std::sort(requeue.begin(), requeue.end());
    for (const auto& id : requeue) queue.push_back(id);
  }

  std::string submit(const Bytes& mask_png, const InpaintJob& job) {
    std::lock_guard<std::mutex> lock(mu);
    char buf[16];
    std::snprintf(buf, sizeof buf, "j%04d", next_id++);
    const std::string id = buf;
    fs::create_directories(job_dir(id));
    write_file((job_dir(id) / "mask.png").string(), mask_png);
    to_key_values(job).save((job_dir(id) / "job.txt").string());
    JobStatus s;
    s.id = id;
    s.view = job.user_view_index;
    s.total = static_cast<std::uint64_t>(job.steps);
    s.mode = to_string(job.mode);
    jobs[id] = s;
    persist(s);
    queue.push_back(id);
    cv.notify_all();
    return id;
  }

  void work() {
    for (;;) {
      std::string id;
      {
        std::unique_lock<std::mutex> lock(mu);
        cv.wait(lock, [&] { return stopping || !queue.empty(); });
        if (stopping) return;
        id = queue.front();
        queue.pop_front();
        jobs[id].state = JobState::running;
        persist(jobs[id]);
      }
      cv.notify_all();
      std::string error;
      try {
        const fs::path dir = job_dir(id);
        const InpaintJob job = inpaint_job_from(KeyValues::load((dir / "job.txt").string()));
        const CameraPose& pose = trajectory.at(static_cast<std::size_t>(job.user_view_index));
        const Mask mask = load_user_mask((dir / "mask.png").string(), pose.width, pose.height);
        JobProgress progress;
        progress.preview_every = cfg.preview_every;
        progress.on_step = [&](std::uint64_t step, std::uint64_t total) {
          std::lock_guard<std::mutex> lock(mu);
          if (stopping) throw Stopped();
          jobs[id].step = step;
          jobs[id].total = total;
        };
        progress.on_history = [&](const std::vector<InpaintLosses>& h) {
          std::lock_guard<std::mutex> lock(mu);
          histories[id] = h;
          persist(jobs[id]);
        };
        run_job(field, trajectory, mask, job, dir.string(), cfg.guidance, progress);
      } catch (const std::exception& e) {
        error = e.what();
        log_warning("job " + id + " failed: " + error);
      }
      {
        std::lock_guard<std::mutex> lock(mu);
        JobStatus& s = jobs[id];
        s.state = error.empty() ? JobState::done : JobState::failed;
        s.error = error;
        if (error.empty()) s.step = s.total;
        persist(s);
      }
      cv.notify_all();
    }
  }

  std::optional<int> view_param(const httplib::Request& req) const {
    if (!req.has_param("view")) return std::nullopt;
    const std::string v = req.get_param_value("view");
    int i = 0;
    const auto r = std::from_chars(v.data(), v.data() + v.size(), i);
    if (r.ec != std::errc() || r.ptr != v.data() + v.size()) return std::nullopt;
    if (i < 0 || i >= static_cast<int>(trajectory.size())) return std::nullopt;
    return i;
  }

  const ViewRender& original(int view, Level level) {
    std::lock_guard<std::mutex> lock(render_mu);
    const auto key = std::make_pair(view, static_cast<int>(level));
    auto it = original_renders.find(key);
    if (it == original_renders.end()) {
      it = original_renders.emplace(key, render_view(field, trajectory[static_cast<std::size_t>(view)], level)).first;
    }
    return it->second;
  }

  const ViewRender& reference_render(int view) {
    std::lock_guard<std::mutex> lock(render_mu);
    if (!reference_renders) reference_renders.emplace();
    auto it = reference_renders->find(view);
    if (it == reference_renders->end()) {
      it = reference_renders->emplace(view, render_view(*reference, trajectory[static_cast<std::size_t>(view)], Level::fine))
               .first;
    }
    return it->second;
  }

  const ViewRender& job_render(const std::string& id, int view) {
    std::lock_guard<std::mutex> lock(render_mu);
    const auto key = std::make_pair(id, view);
    auto it = job_renders.find(key);
    if (it != job_renders.end()) return it->second;
    auto f = job_fields.find(id);
    if (f == job_fields.end()) {
      f = job_fields.emplace(id, load_checkpoint<float>((job_dir(id) / "inpainted.ck").string()).field).first;
    }
    return job_renders.emplace(key, render_view(f->second, trajectory[static_cast<std::size_t>(view)], Level::fine))
        .first->second;
  }

  std::optional<JobStatus> find(const std::string& id) const {
    std::lock_guard<std::mutex> lock(mu);
    const auto it = jobs.find(id);
    if (it == jobs.end()) return std::nullopt;
    return it->second;
  }

  std::vector<InpaintLosses> history_of(const std::string& id) const {
    {
      std::lock_guard<std::mutex> lock(mu);
      const auto it = histories.find(id);
      if (it != histories.end()) return it->second;
    }
    std::vector<InpaintLosses> h;
    std::ifstream in(job_dir(id) / "history.csv");
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
      InpaintLosses l;
      unsigned long long step = 0;
      if (std::sscanf(line.c_str(), "%llu,%lf,%lf,%lf,%lf", &step, &l.total, &l.color_all, &l.color_out, &l.depth) ==
          5) {
        l.step = step;
        h.push_back(l);
      }
    }
    return h;
  }

  // Looks up the job named in the path and the view in the query; answers the error itself.
  std::optional<std::pair<JobStatus, int>> job_and_view(const httplib::Request& req, httplib::Response& res) {
    const auto s = find(req.path_params.at("id"));
    if (!s) {
      send_error(res, 404, "unknown job " + req.path_params.at("id"));
      return std::nullopt;
    }
    const auto view = view_param(req);
    if (!view) {
      send_error(res, 404, "view must be an index in [0, " + std::to_string(trajectory.size()) + ")");
      return std::nullopt;
    }
    if (s->state != JobState::done) {
      send_error(res, 409, "job " + s->id + " is " + to_string(s->state), {{"state", to_string(s->state)}});
      return std::nullopt;
    }
    return std::make_pair(*s, *view);
  }

  void routes() {
    server.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
      try {
        std::rethrow_exception(ep);
      } catch (const std::exception& e) {
        send_error(res, 500, e.what());
      }
    });

    server.Get("/views", [this](const httplib::Request&, httplib::Response& res) {
      json views = json::array();
      for (std::size_t i = 0; i < trajectory.size(); ++i) {
        const CameraPose& p = trajectory[i];
        std::vector<double> r;
        for (int row = 0; row < 3; ++row) {
          for (int col = 0; col < 3; ++col) r.push_back(p.rotation(row, col));
        }
        const std::string png = as_string(encode_rgb_png(original(static_cast<int>(i), Level::fine).image));
        views.push_back({{"index", i},
                         {"position", {p.position.x(), p.position.y(), p.position.z()}},
                         {"rotation", r},
                         {"focal", p.focal},
                         {"cx", p.cx},
                         {"cy", p.cy},
                         {"width", p.width},
                         {"height", p.height},
                         {"thumbnail", "data:image/png;base64," + httplib::detail::base64_encode(png)}});
      }
      send_json(res, 200,
                {{"count", trajectory.size()},
                 {"width", trajectory[0].width},
                 {"height", trajectory[0].height},
                 {"rotation_layout", "row-major world_from_camera"},
                 {"views", views}});
    });

    server.Get("/render", [this](const httplib::Request& req, httplib::Response& res) {
      const auto view = view_param(req);
      if (!view) return send_error(res, 404, "view must be an index in [0, " + std::to_string(trajectory.size()) + ")");
      const std::string level = req.has_param("level") ? req.get_param_value("level") : "fine";
      if (level != "fine" && level != "coarse") return send_error(res, 400, "level must be fine or coarse");
      const std::string kind = req.has_param("kind") ? req.get_param_value("kind") : "rgb";
      if (kind != "rgb" && kind != "depth") return send_error(res, 400, "kind must be rgb or depth");
      const ViewRender& r = original(*view, level == "fine" ? Level::fine : Level::coarse);
      send_png(res, kind == "rgb" ? encode_rgb_png(r.image) : encode_depth_png(r.depth, depth_png_scale));
    });

    server.Post("/jobs", [this](const httplib::Request& req, httplib::Response& res) {
      if (!req.is_multipart_form_data() || !req.has_file("mask") || !req.has_file("view")) {
        return send_error(res, 400, "expected multipart/form-data with fields mask (PNG) and view, optional config");
      }
      const std::string v = req.get_file_value("view").content;
      int view = -1;
      const auto r = std::from_chars(v.data(), v.data() + v.size(), view);
      if (r.ec != std::errc() || r.ptr != v.data() + v.size() || view < 0 ||
          view >= static_cast<int>(trajectory.size())) {
        return send_error(res, 404, "view must be an index in [0, " + std::to_string(trajectory.size()) + ")");
      }
      const CameraPose& pose = trajectory[static_cast<std::size_t>(view)];
      const json expected{{"expected", {{"width", pose.width}, {"height", pose.height}}}};
      const Bytes png = as_bytes(req.get_file_value("mask").content);
      Mask mask;
      try {
        mask = decode_mask_png(png);
      } catch (const std::exception& e) {
        return send_error(res, 422, std::string("mask is not a readable PNG: ") + e.what(), expected);
      }
      if (mask.cols() != pose.width || mask.rows() != pose.height) {
        return send_error(res, 422,
                          "mask is " + std::to_string(mask.cols()) + "x" + std::to_string(mask.rows()) +
                              ", expected " + std::to_string(pose.width) + "x" + std::to_string(pose.height),
                          expected);
      }
      InpaintJob job;
      try {
        const KeyValues kv =
            req.has_file("config") ? KeyValues::parse(req.get_file_value("config").content) : KeyValues();
        job = inpaint_job_from(kv);
        job.user_view_index = view;
        if (job.mode != InpaintMode::baseline2) resolve_view_sets(job, static_cast<int>(trajectory.size()));
      } catch (const std::exception& e) {
        return send_error(res, 400, std::string("bad job config: ") + e.what());
      }
      const std::string id = submit(png, job);
      send_json(res, 202, {{"id", id}, {"state", "queued"}, {"status", "/jobs/" + id}});
    });

    server.Get("/jobs", [this](const httplib::Request&, httplib::Response& res) {
      json all = json::array();
      std::lock_guard<std::mutex> lock(mu);
      for (const auto& [id, s] : jobs) all.push_back(to_json(s));
      send_json(res, 200, {{"jobs", all}});
    });

    server.Get("/jobs/:id", [this](const httplib::Request& req, httplib::Response& res) {
      const auto s = find(req.path_params.at("id"));
      if (!s) return send_error(res, 404, "unknown job " + req.path_params.at("id"));
      json body = to_json(*s);
      body["history"] = history_json(history_of(s->id));
      if (fs::exists(job_dir(s->id) / "preview.png")) body["preview"] = "/jobs/" + s->id + "/preview";
      if (s->state == JobState::done) body["result"] = "/jobs/" + s->id + "/result?view=" + std::to_string(s->view);
      send_json(res, 200, body);
    });

    server.Get("/jobs/:id/preview", [this](const httplib::Request& req, httplib::Response& res) {
      const auto s = find(req.path_params.at("id"));
      if (!s) return send_error(res, 404, "unknown job " + req.path_params.at("id"));
      const fs::path p = job_dir(s->id) / "preview.png";
      if (!fs::exists(p)) return send_error(res, 404, "no preview yet for job " + s->id);
      send_png(res, read_file(p.string()));
    });

    server.Get("/jobs/:id/result", [this](const httplib::Request& req, httplib::Response& res) {
      const auto jv = job_and_view(req, res);
      if (!jv) return;
      send_png(res, encode_rgb_png(job_render(jv->first.id, jv->second).image));
    });

    server.Get("/jobs/:id/compare", [this](const httplib::Request& req, httplib::Response& res) {
      const auto jv = job_and_view(req, res);
      if (!jv) return;
      const RgbImage& before = original(jv->second, Level::fine).image;
      const RgbImage& after = job_render(jv->first.id, jv->second).image;
      std::vector<const RgbImage*> panels = {&before, &after};
      if (reference) panels.push_back(&reference_render(jv->second).image);
      res.set_header("X-Panels", reference ? "original,inpainted,reference" : "original,inpainted");
      send_png(res, encode_rgb_png(side_by_side(panels)));
    });
  }
};

Service::Service(ServiceConfig config) : impl_(std::make_unique<Impl>(std::move(config))) {}

Service::~Service() = default;

int Service::bind(const std::string& host, int port) {
  if (port == 0) {
    const int p = impl_->server.bind_to_any_port(host);
    if (p < 0) throw IoError("cannot bind " + host);
    return p;
  }
  if (!impl_->server.bind_to_port(host, port)) throw IoError("cannot bind " + host + ":" + std::to_string(port));
  return port;
}

void Service::run() { impl_->server.listen_after_bind(); }

void Service::stop() { impl_->server.stop(); }

std::optional<JobStatus> Service::status(const std::string& id) const { return impl_->find(id); }

bool Service::wait(const std::string& id, double timeout_seconds) const {
  std::unique_lock<std::mutex> lock(impl_->mu);
  return impl_->cv.wait_for(lock, std::chrono::duration<double>(timeout_seconds), [&] {
    const auto it = impl_->jobs.find(id);
    return it != impl_->jobs.end() && (it->second.state == JobState::done || it->second.state == JobState::failed);
  });
}

}  // namespace nerfin
