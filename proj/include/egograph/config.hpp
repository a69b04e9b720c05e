#pragma once

#include <string>

#include <json.hpp>

#include "egograph/scenes.hpp"
#include "egograph/training.hpp"

namespace egograph {

/// Everything a run needs, with desk-scale defaults. Loadable from a JSON
/// file; missing keys fall back to defaults, unknown keys are rejected.
struct RunConfig {
  SceneSpec scene;  // per-clip labels/seeds are assigned by make_dataset
  int n_train = 700;
  int n_eval = 300;
  int batch_size = 8;
  int iterations_stage1 = 2000;
  int iterations_stage2 = 2000;
  double lr_stage1 = 0.001;
  double lr_stage2 = 0.0002;
  std::string fusion = "max";
  double mu_thing = 3.0;
  double mu_stuff = 0.8;
  int top_k = 20;
  int roi_grid = 7;
  std::string precision = "f32";
  std::uint64_t seed = 0;
};

Precision precision_from_string(const std::string& s);

RunConfig run_config_from_json(const nlohmann::json& j);
nlohmann::json run_config_to_json(const RunConfig& cfg);

/// Empty path -> defaults.
RunConfig load_run_config(const std::string& path);

/// Echo the defaults-merged config into dir/config.json.
void write_effective_config(const RunConfig& cfg, const std::string& dir);

ModelShape model_shape_from(const RunConfig& cfg);
TrainConfig train_config_from(const RunConfig& cfg, int stage);

}  // namespace egograph
