#include <doctest.h>

#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "egograph/config.hpp"

using namespace egograph;
using nlohmann::json;
namespace fs = std::filesystem;

TEST_CASE("defaults survive a json round-trip") {
  const RunConfig cfg;
  const RunConfig back = run_config_from_json(run_config_to_json(cfg));
  CHECK(back.n_train == cfg.n_train);
  CHECK(back.n_eval == cfg.n_eval);
  CHECK(back.batch_size == cfg.batch_size);
  CHECK(back.iterations_stage1 == cfg.iterations_stage1);
  CHECK(back.lr_stage2 == cfg.lr_stage2);
  CHECK(back.fusion == cfg.fusion);
  CHECK(back.mu_thing == cfg.mu_thing);
  CHECK(back.precision == cfg.precision);
  CHECK(back.seed == cfg.seed);
  CHECK(back.scene.frames == cfg.scene.frames);
  CHECK(back.scene.channels == cfg.scene.channels);
}

TEST_CASE("partial configs override only what they mention") {
  const json j{{"train", {{"batch_size", 16}, {"fusion", "mlp"}}},
               {"seed", 42}};
  const RunConfig cfg = run_config_from_json(j);
  CHECK(cfg.batch_size == 16);
  CHECK(cfg.fusion == "mlp");
  CHECK(cfg.seed == 42);
  CHECK(cfg.iterations_stage1 == RunConfig{}.iterations_stage1);
  CHECK(cfg.scene.frames == RunConfig{}.scene.frames);
}

TEST_CASE("unknown keys are rejected in every section") {
  try {
    run_config_from_json(json{{"stray", 1}});
    FAIL("expected a rejection");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("unknown key \"stray\"") !=
          std::string::npos);
  }
  CHECK_THROWS_AS(run_config_from_json(json{{"train", {{"momentum", 0.9}}}}),
                  std::invalid_argument);
  CHECK_THROWS_AS(run_config_from_json(json{{"scene", {{"fps", 30}}}}),
                  std::invalid_argument);
  CHECK_THROWS_AS(run_config_from_json(json{{"dataset", {{"shuffle", true}}}}),
                  std::invalid_argument);
}

TEST_CASE("invalid enum and range values are rejected") {
  CHECK_THROWS_AS(run_config_from_json(json{{"train", {{"fusion", "median"}}}}),
                  std::invalid_argument);
  CHECK_THROWS_AS(
      run_config_from_json(json{{"train", {{"precision", "f16"}}}}),
      std::invalid_argument);
  CHECK_THROWS_AS(run_config_from_json(json{{"train", {{"lr_stage1", 0.0}}}}),
                  std::invalid_argument);
  CHECK_THROWS_AS(run_config_from_json(json{{"dataset", {{"n_train", -1}}}}),
                  std::invalid_argument);
}

TEST_CASE("load_run_config returns defaults for an empty path") {
  const RunConfig cfg = load_run_config("");
  CHECK(cfg.n_train == RunConfig{}.n_train);
  CHECK_THROWS(load_run_config("/no/such/file.json"));
}

TEST_CASE("the effective config echo parses back to the same values") {
  const fs::path dir = fs::temp_directory_path() / "egocfg_test";
  fs::remove_all(dir);
  RunConfig cfg;
  cfg.seed = 11;
  cfg.batch_size = 4;
  write_effective_config(cfg, dir.string());
  std::ifstream f(dir / "config.json");
  REQUIRE(f.good());
  json j;
  f >> j;
  const RunConfig back = run_config_from_json(j);
  CHECK(back.seed == 11);
  CHECK(back.batch_size == 4);
  fs::remove_all(dir);
}

TEST_CASE("model_shape_from mirrors the scene and class tables") {
  RunConfig cfg;
  cfg.scene.channels = 24;
  cfg.scene.frames = 8;
  const ModelShape shape = model_shape_from(cfg);
  CHECK(shape.dim == 24);
  CHECK(shape.frames == 8);
  CHECK(shape.n_goal == 5);
  CHECK(shape.n_cause == 3);
}

TEST_CASE("train_config_from selects the stage's rate and iterations") {
  RunConfig cfg;
  cfg.lr_stage1 = 0.5;
  cfg.lr_stage2 = 0.25;
  cfg.iterations_stage1 = 7;
  cfg.iterations_stage2 = 9;
  const TrainConfig s1 = train_config_from(cfg, 1);
  const TrainConfig s2 = train_config_from(cfg, 2);
  CHECK(s1.stage == 1);
  CHECK(s1.lr == 0.5);
  CHECK(s1.iterations == 7);
  CHECK(s2.stage == 2);
  CHECK(s2.lr == 0.25);
  CHECK(s2.iterations == 9);
}
