// Copyright Contributors to the nerfin Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

// HTTP service over one trained checkpoint: trajectory renders, inpainting
// jobs run one at a time by a background worker, and their results. All job
// state lives in per-job directories under the data directory.
//
// Routes (JSON unless noted):
//   GET  /views                        poses and base64 PNG thumbnails
//   GET  /render?view=i&level=fine&kind=rgb|depth   PNG (depth: 16-bit, millimetres)
//   POST /jobs                         multipart: mask (PNG file), view, config (key-values)
//   GET  /jobs                         every job status
//   GET  /jobs/{id}                    status, loss history, preview link
//   GET  /jobs/{id}/preview            PNG of the latest user-view preview
//   GET  /jobs/{id}/result?view=i      PNG render of the inpainted field
//   GET  /jobs/{id}/compare?view=i     PNG: original | inpainted | reference (when configured)

#include "nerfin/pipeline.hpp"

#include <memory>
#include <optional>
#include <string>

namespace nerfin {

struct ServiceConfig {
  std::string checkpoint;
  std::string dataset;             ///< poses; empty uses the checkpoint's sidecar
  std::string data_dir;            ///< one subdirectory per job
  std::string reference_checkpoint;  ///< optional field shown in /compare
  GuidanceOptions guidance;
  int preview_every = 500;
};

enum class JobState { queued, running, done, failed };

std::string to_string(JobState s);
JobState parse_job_state(const std::string& s);

struct JobStatus {
  std::string id;
  JobState state = JobState::queued;
  std::uint64_t step = 0;
  std::uint64_t total = 0;
  int view = 0;
  std::string mode;
  std::string error;
};

class Service {
 public:
  /// Loads the checkpoint and poses and picks up job directories left by a
  /// previous run: finished jobs are served, queued ones are run again, and
  /// jobs interrupted while running are marked failed.
  explicit Service(ServiceConfig config);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  /// Binds the listening socket; port 0 picks a free port, which is returned.
  int bind(const std::string& host, int port);
  /// Serves requests until stop(); call bind() first.
  void run();
  void stop();

  std::optional<JobStatus> status(const std::string& id) const;
  /// Blocks until the job is done or failed, or the timeout passes.
  bool wait(const std::string& id, double timeout_seconds) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace nerfin
