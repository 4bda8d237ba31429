// Copyright Contributors to the nerfin Project
// SPDX-License-Identifier: Apache-2.0

#include "nerfin/train.hpp"

#include <cstdio>
#include <fstream>

namespace nerfin {

TrainConfig train_config_from(const KeyValues& kv, TrainConfig c) {
  c.steps = kv.get("steps", c.steps);
  c.batch_rays = kv.get("batch_rays", c.batch_rays);
  c.lr = kv.get("lr", c.lr);
  c.lr_final = kv.get("lr_final", c.lr_final);
  c.seed = static_cast<std::uint64_t>(kv.get("seed", static_cast<long long>(c.seed)));
  c.log_every = kv.get("log_every", c.log_every);
  c.checkpoint_every = kv.get("checkpoint_every", c.checkpoint_every);
  c.validate();
  return c;
}

KeyValues to_key_values(const TrainConfig& c) {
  KeyValues kv;
  kv.set("steps", static_cast<long long>(c.steps));
  kv.set("batch_rays", static_cast<long long>(c.batch_rays));
  kv.set("lr", c.lr);
  kv.set("lr_final", c.lr_final);
  kv.set("seed", static_cast<long long>(c.seed));
  kv.set("log_every", static_cast<long long>(c.log_every));
  kv.set("checkpoint_every", static_cast<long long>(c.checkpoint_every));
  return kv;
}

FieldConfig field_config_from(const KeyValues& kv, FieldConfig c) {
  c.pos_levels = kv.get("pos_levels", c.pos_levels);
  c.dir_levels = kv.get("dir_levels", c.dir_levels);
  c.hidden_width = kv.get("hidden_width", c.hidden_width);
  c.hidden_layers = kv.get("hidden_layers", c.hidden_layers);
  c.skip_layer = kv.get("skip_layer", c.skip_layer);
  c.n_coarse = kv.get("n_coarse", c.n_coarse);
  c.n_fine = kv.get("n_fine", c.n_fine);
  c.near = kv.get("near", c.near);
  c.far = kv.get("far", c.far);
  c.seed = static_cast<std::uint64_t>(kv.get("init_seed", static_cast<long long>(c.seed)));
  c.validate();
  return c;
}

KeyValues to_key_values(const FieldConfig& c) {
  KeyValues kv;
  kv.set("pos_levels", static_cast<long long>(c.pos_levels));
  kv.set("dir_levels", static_cast<long long>(c.dir_levels));
  kv.set("hidden_width", static_cast<long long>(c.hidden_width));
  kv.set("hidden_layers", static_cast<long long>(c.hidden_layers));
  kv.set("skip_layer", static_cast<long long>(c.skip_layer));
  kv.set("n_coarse", static_cast<long long>(c.n_coarse));
  kv.set("n_fine", static_cast<long long>(c.n_fine));
  kv.set("near", c.near);
  kv.set("far", c.far);
  kv.set("init_seed", static_cast<long long>(c.seed));
  return kv;
}

void write_history_csv(const std::string& path, const std::vector<HistoryEntry>& history) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << "step,loss\n";
  char buf[64];
  for (const auto& h : history) {
    std::snprintf(buf, sizeof buf, "%.9g", h.loss);
    out << h.step << "," << buf << "\n";
  }
}

}  // namespace nerfin
