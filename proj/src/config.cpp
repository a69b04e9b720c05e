#include "egograph/config.hpp"

#include <filesystem>
#include <fstream>
#include <stdexcept>

namespace egograph {

using nlohmann::json;

namespace {

template <typename T>
void take(json& obj, const char* key, T& out) {
  if (!obj.contains(key)) return;
  out = obj.at(key).get<T>();
  obj.erase(key);
}

void reject_leftovers(const json& obj, const char* section) {
  if (obj.empty()) return;
  throw std::invalid_argument(std::string("config: unknown key \"") +
                           obj.begin().key() + "\" in " + section);
}

}  // namespace

Precision precision_from_string(const std::string& s) {
  if (s == "f32") return Precision::f32;
  if (s == "f64") return Precision::f64;
  throw std::invalid_argument("config: precision must be f32 or f64, got " + s);
}

RunConfig run_config_from_json(const json& j) {
  if (!j.is_object()) throw std::invalid_argument("config: root must be an object");
  RunConfig cfg;
  json root = j;

  if (root.contains("scene")) {
    json s = root.at("scene");
    root.erase("scene");
    take(s, "frames", cfg.scene.frames);
    take(s, "image_width", cfg.scene.image_width);
    take(s, "image_height", cfg.scene.image_height);
    take(s, "feat_width", cfg.scene.feat_width);
    take(s, "feat_height", cfg.scene.feat_height);
    take(s, "channels", cfg.scene.channels);
    take(s, "n_things", cfg.scene.n_things);
    take(s, "n_stuff", cfg.scene.n_stuff);
    reject_leftovers(s, "scene");
  }
  if (root.contains("dataset")) {
    json d = root.at("dataset");
    root.erase("dataset");
    take(d, "n_train", cfg.n_train);
    take(d, "n_eval", cfg.n_eval);
    reject_leftovers(d, "dataset");
  }
  if (root.contains("train")) {
    json t = root.at("train");
    root.erase("train");
    take(t, "batch_size", cfg.batch_size);
    take(t, "iterations_stage1", cfg.iterations_stage1);
    take(t, "iterations_stage2", cfg.iterations_stage2);
    take(t, "lr_stage1", cfg.lr_stage1);
    take(t, "lr_stage2", cfg.lr_stage2);
    take(t, "fusion", cfg.fusion);
    take(t, "mu_thing", cfg.mu_thing);
    take(t, "mu_stuff", cfg.mu_stuff);
    take(t, "top_k", cfg.top_k);
    take(t, "roi_grid", cfg.roi_grid);
    take(t, "precision", cfg.precision);
    reject_leftovers(t, "train");
  }
  take(root, "seed", cfg.seed);
  reject_leftovers(root, "the top level");

  fusion_mode_from_string(cfg.fusion);  // validate early
  precision_from_string(cfg.precision);
  if (cfg.n_train < 0 || cfg.n_eval < 0)
    throw std::invalid_argument("config: dataset sizes must be non-negative");
  if (cfg.lr_stage1 <= 0.0 || cfg.lr_stage2 <= 0.0)
    throw std::invalid_argument("config: learning rates must be positive");
  if (cfg.top_k < 1) throw std::invalid_argument("config: top_k must be >= 1");
  if (cfg.roi_grid < 1) throw std::invalid_argument("config: roi_grid must be >= 1");
  return cfg;
}

json run_config_to_json(const RunConfig& cfg) {
  return json{
      {"scene",
       {{"frames", cfg.scene.frames},
        {"image_width", cfg.scene.image_width},
        {"image_height", cfg.scene.image_height},
        {"feat_width", cfg.scene.feat_width},
        {"feat_height", cfg.scene.feat_height},
        {"channels", cfg.scene.channels},
        {"n_things", cfg.scene.n_things},
        {"n_stuff", cfg.scene.n_stuff}}},
      {"dataset", {{"n_train", cfg.n_train}, {"n_eval", cfg.n_eval}}},
      {"train",
       {{"batch_size", cfg.batch_size},
        {"iterations_stage1", cfg.iterations_stage1},
        {"iterations_stage2", cfg.iterations_stage2},
        {"lr_stage1", cfg.lr_stage1},
        {"lr_stage2", cfg.lr_stage2},
        {"fusion", cfg.fusion},
        {"mu_thing", cfg.mu_thing},
        {"mu_stuff", cfg.mu_stuff},
        {"top_k", cfg.top_k},
        {"roi_grid", cfg.roi_grid},
        {"precision", cfg.precision}}},
      {"seed", cfg.seed}};
}

RunConfig load_run_config(const std::string& path) {
  if (path.empty()) return RunConfig{};
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open config file: " + path);
  json j;
  try {
    f >> j;
  } catch (const json::exception& e) {
    throw std::runtime_error("config: parse error in " + path + ": " + e.what());
  }
  return run_config_from_json(j);
}

void write_effective_config(const RunConfig& cfg, const std::string& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream f(std::filesystem::path(dir) / "config.json");
  if (!f) throw std::runtime_error("cannot write config echo into " + dir);
  f << run_config_to_json(cfg).dump(2) << "\n";
}

ModelShape model_shape_from(const RunConfig& cfg) {
  ModelShape shape;
  shape.dim = static_cast<std::size_t>(cfg.scene.channels);
  shape.frames = static_cast<std::size_t>(cfg.scene.frames);
  shape.n_goal = goal_class_names().size();
  shape.n_cause = cause_class_names().size();
  return shape;
}

TrainConfig train_config_from(const RunConfig& cfg, int stage) {
  TrainConfig tc;
  tc.stage = stage;
  tc.lr = stage == 1 ? cfg.lr_stage1 : cfg.lr_stage2;
  tc.batch_size = cfg.batch_size;
  tc.iterations = stage == 1 ? cfg.iterations_stage1 : cfg.iterations_stage2;
  tc.seed = cfg.seed;
  tc.fusion = fusion_mode_from_string(cfg.fusion);
  tc.mu_thing = cfg.mu_thing;
  tc.mu_stuff = cfg.mu_stuff;
  tc.precision = precision_from_string(cfg.precision);
  return tc;
}

}  // namespace egograph
