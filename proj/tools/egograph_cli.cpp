#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "egograph/checkpoint.hpp"
#include "egograph/config.hpp"
#include "egograph/scenes.hpp"
#include "egograph/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace egograph;

namespace {

std::vector<PreparedClip> load_prepared(const std::string& dir,
                                        const RunConfig& cfg) {
  const auto paths = list_clips(dir);
  if (paths.empty())
    throw std::runtime_error("no .egcl clips found in " + dir);
  std::vector<PreparedClip> out;
  out.reserve(paths.size());
  for (const auto& p : paths)
    out.push_back(prepare_clip(load_clip(p), cfg.top_k, cfg.roi_grid));
  return out;
}

/// train/ or eval/ subdirectory when the caller points at a dataset root.
std::string resolve_split_dir(const std::string& data, const char* split) {
  const fs::path sub = fs::path(data) / split;
  return fs::is_directory(sub) ? sub.string() : data;
}

void write_metrics_csv(const std::string& path,
                       const std::vector<MetricRow>& rows) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write metrics file: " + path);
  f << "iteration,loss,goal_loss,cause_loss\n";
  char line[160];
  for (const MetricRow& r : rows) {
    std::snprintf(line, sizeof line, "%d,%.10g,%.10g,%.10g\n", r.iteration,
                  r.loss, r.goal_loss, r.cause_loss);
    f << line;
  }
}

json head_to_json(const HeadReport& head) {
  json classes = json::array();
  for (const ClassAp& c : head.classes) {
    json row{{"class_id", c.class_id},
             {"name", c.name},
             {"positives", c.positives}};
    if (c.ap)
      row["ap"] = *c.ap;
    else
      row["ap"] = nullptr;
    classes.push_back(std::move(row));
  }
  return json{{"head", head.head},
              {"map", head.map},
              {"classes_counted", head.counted},
              {"classes", std::move(classes)}};
}

void write_report(const EvalReport& report, const std::string& dir) {
  fs::create_directories(dir);
  json j{{"frames", report.frames},
         {"mean_map", report.mean_map},
         {"goal", head_to_json(report.goal)},
         {"cause", head_to_json(report.cause)}};
  std::ofstream jf(fs::path(dir) / "report.json");
  jf << j.dump(2) << "\n";

  std::ofstream cf(fs::path(dir) / "report.csv");
  cf << "head,class_id,class_name,ap,positives\n";
  char line[200];
  for (const HeadReport* head : {&report.goal, &report.cause}) {
    for (const ClassAp& c : head->classes) {
      if (c.ap)
        std::snprintf(line, sizeof line, "%s,%d,%s,%.10g,%zu\n",
                      head->head.c_str(), c.class_id, c.name.c_str(), *c.ap,
                      c.positives);
      else
        std::snprintf(line, sizeof line, "%s,%d,%s,skipped,%zu\n",
                      head->head.c_str(), c.class_id, c.name.c_str(),
                      c.positives);
      cf << line;
    }
  }
}

void print_report(const EvalReport& report) {
  std::printf("frames evaluated: %zu\n", report.frames);
  for (const HeadReport* head : {&report.goal, &report.cause}) {
    std::printf("%s mAP %.4f over %d classes\n", head->head.c_str(), head->map,
                head->counted);
    for (const ClassAp& c : head->classes) {
      if (c.ap)
        std::printf("  %-28s AP %.4f (%zu positive frames)\n", c.name.c_str(),
                    *c.ap, c.positives);
      else
        std::printf("  %-28s skipped (no positives)\n", c.name.c_str());
    }
  }
  std::printf("mean mAP %.4f\n", report.mean_map);
}

int cmd_gen(const RunConfig& cfg, const std::string& out) {
  const DatasetReport report =
      make_dataset(out, cfg.n_train, cfg.n_eval, cfg.seed, cfg.scene);
  write_effective_config(cfg, out);
  std::printf("wrote %d train / %d eval clips to %s\n", report.n_train,
              report.n_eval, out.c_str());
  return 0;
}

int cmd_train(const RunConfig& cfg, int stage, const std::string& data,
              const std::string& ckpt_in, const std::string& ckpt_out,
              std::string out_dir) {
  const Precision prec = precision_from_string(cfg.precision);
  const ModelShape shape = model_shape_from(cfg);

  ModelParams params;
  if (stage == 1) {
    params = make_model_params(shape, cfg.seed, prec);
  } else {
    if (ckpt_in.empty())
      throw std::runtime_error("train: stage 2 needs --ckpt-in (stage-1 checkpoint)");
    CheckpointData ckpt = load_checkpoint(ckpt_in, prec);
    if (ckpt.config.value("stage", 0) != 1)
      throw std::runtime_error("train: --ckpt-in is not a stage-1 checkpoint");
    if (ckpt.params.shape.dim != shape.dim ||
        ckpt.params.shape.frames != shape.frames ||
        ckpt.params.shape.n_goal != shape.n_goal ||
        ckpt.params.shape.n_cause != shape.n_cause)
      throw std::runtime_error("train: checkpoint/config model shape mismatch");
    params = ckpt.params;
  }

  const std::vector<PreparedClip> clips =
      load_prepared(resolve_split_dir(data, "train"), cfg);
  std::printf("stage %d: %zu clips, %d iterations, lr %g\n", stage,
              clips.size(), stage == 1 ? cfg.iterations_stage1
                                       : cfg.iterations_stage2,
              stage == 1 ? cfg.lr_stage1 : cfg.lr_stage2);

  TrainResult result = train(train_config_from(cfg, stage), clips, params);

  if (!result.metrics.empty())
    std::printf("final loss %.4f (goal %.4f, cause %.4f)\n",
                result.metrics.back().loss, result.metrics.back().goal_loss,
                result.metrics.back().cause_loss);

  json snapshot = run_config_to_json(cfg);
  snapshot["stage"] = stage;
  if (const fs::path parent = fs::path(ckpt_out).parent_path(); !parent.empty())
    fs::create_directories(parent);
  save_checkpoint(ckpt_out, result.params, &result.optimizer, snapshot,
                  result.optimizer.steps());

  if (out_dir.empty()) {
    const fs::path parent = fs::path(ckpt_out).parent_path();
    out_dir = parent.empty() ? std::string(".") : parent.string();
  }
  fs::create_directories(out_dir);
  write_metrics_csv(
      (fs::path(out_dir) / ("metrics_stage" + std::to_string(stage) + ".csv"))
          .string(),
      result.metrics);
  write_effective_config(cfg, out_dir);
  std::printf("checkpoint written to %s\n", ckpt_out.c_str());
  return 0;
}

int cmd_eval(const std::string& ckpt_path, const std::string& data,
             const std::string& out) {
  CheckpointData ckpt = load_checkpoint(ckpt_path);
  json cfg_json = ckpt.config;
  const int stage = cfg_json.value("stage", 1);
  cfg_json.erase("stage");
  const RunConfig cfg = run_config_from_json(cfg_json);
  const Precision prec = precision_from_string(cfg.precision);

  CheckpointData reloaded = load_checkpoint(ckpt_path, prec);
  const std::vector<PreparedClip> clips =
      load_prepared(resolve_split_dir(data, "eval"), cfg);

  ForwardOptions opts;
  opts.use_graphs = stage == 2;
  opts.fusion = fusion_mode_from_string(cfg.fusion);
  opts.mu_thing = cfg.mu_thing;
  opts.mu_stuff = cfg.mu_stuff;

  const EvalReport report = evaluate(reloaded.params, clips, opts, prec);
  write_report(report, out);
  write_effective_config(cfg, out);
  print_report(report);
  return 0;
}

int cmd_export_affinity(const std::string& ckpt_path,
                        const std::string& clip_path, const std::string& out) {
  CheckpointData ckpt = load_checkpoint(ckpt_path);
  json cfg_json = ckpt.config;
  cfg_json.erase("stage");
  const RunConfig cfg = run_config_from_json(cfg_json);
  const Precision prec = precision_from_string(cfg.precision);
  ckpt = load_checkpoint(ckpt_path, prec);

  const SceneClip clip = load_clip(clip_path);
  const PreparedClip prepared = prepare_clip(clip, cfg.top_k, cfg.roi_grid);

  ForwardOptions opts;
  opts.use_graphs = true;
  opts.fusion = fusion_mode_from_string(cfg.fusion);
  opts.mu_thing = cfg.mu_thing;
  opts.mu_stuff = cfg.mu_stuff;
  opts.capture_affinities = true;

  Tape tape(prec);
  const ClipForward fwd = forward_clip(tape, ckpt.params, prepared, opts);

  fs::create_directories(out);
  auto write_matrix = [&](const AffinityMatrix& g, const char* variant) {
    char name[64];
    std::snprintf(name, sizeof name, "%s_affinity_f%02d.csv", variant, g.frame);
    std::ofstream f(fs::path(out) / name);
    char cell[40];
    for (std::size_t i = 0; i < g.g.rows(); ++i) {
      for (std::size_t j = 0; j < g.g.cols(); ++j) {
        std::snprintf(cell, sizeof cell, "%.17g", g.g.at(i, j));
        f << (j ? "," : "") << cell;
      }
      f << "\n";
    }
  };
  for (const AffinityMatrix& g : fwd.thing_affinities) write_matrix(g, "thing");
  for (const AffinityMatrix& g : fwd.stuff_affinities) write_matrix(g, "stuff");

  json nodes;
  nodes["frames"] = clip.spec.frames;
  nodes["mu_thing"] = cfg.mu_thing;
  nodes["mu_stuff"] = cfg.mu_stuff;
  nodes["goal_label"] = clip.goal_label;
  nodes["cause_label"] = clip.cause_label;
  nodes["causal_thing"] = clip.causal_thing;
  nodes["thing_modifiers"] = clip.thing_modifiers;
  nodes["class_names"] = {{"thing", thing_class_names()},
                          {"stuff", stuff_class_names()},
                          {"goal", goal_class_names()},
                          {"cause", cause_class_names()}};
  auto nodes_json = [](const std::vector<NodeSet>& sets) {
    json frames = json::array();
    for (const NodeSet& s : sets) {
      json f{{"classes", s.classes}, {"locations", json::array()}};
      for (const Point3& p : s.locations)
        f["locations"].push_back({p.x, p.y, p.z});
      frames.push_back(std::move(f));
    }
    return frames;
  };
  nodes["thing_nodes"] = nodes_json(prepared.thing_nodes);
  nodes["stuff_nodes"] = nodes_json(prepared.stuff_nodes);
  std::ofstream nf(fs::path(out) / "nodes.json");
  nf << nodes.dump(2) << "\n";

  std::printf("wrote %zu thing + %zu stuff affinity matrices to %s\n",
              fwd.thing_affinities.size(), fwd.stuff_affinities.size(),
              out.c_str());
  return 0;
}

int cmd_gradcheck(std::uint64_t seed) {
  const std::vector<GradCheckRow> rows = run_gradcheck(seed);
  std::printf("%-24s %-14s %s\n", "group", "max_rel_err", "status");
  for (const GradCheckRow& r : rows)
    std::printf("%-24s %-14.3e %s\n", r.group.c_str(), r.max_rel_err,
                r.pass ? "pass" : "FAIL");
  if (!gradcheck_passed(rows)) {
    std::fprintf(stderr, "gradcheck failed\n");
    return 3;
  }
  std::printf("all %zu parameter groups pass\n", rows.size());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ego-centric interaction graphs: synthetic data, two-stage "
               "training, evaluation and affinity export"};
  app.require_subcommand(1);

  std::string config_path, data, out, ckpt_in, ckpt_out;
  int stage = 1;
  std::uint64_t seed = 0;

  auto* gen = app.add_subcommand("gen", "generate a labeled synthetic dataset");
  gen->add_option("--config", config_path, "JSON config file");
  gen->add_option("--out", out, "dataset output directory")->required();
  auto* gen_seed = gen->add_option("--seed", seed, "override the config seed");

  auto* train_cmd = app.add_subcommand("train", "train one stage");
  train_cmd->add_option("--config", config_path, "JSON config file");
  train_cmd->add_option("--stage", stage, "training stage")
      ->check(CLI::Range(1, 2))
      ->required();
  train_cmd->add_option("--data", data, "dataset directory")->required();
  train_cmd->add_option("--ckpt-in", ckpt_in, "stage-1 checkpoint (stage 2)");
  train_cmd->add_option("--ckpt-out", ckpt_out, "checkpoint output path")
      ->required();
  train_cmd->add_option("--out", out, "metrics/config output directory");
  auto* train_seed = train_cmd->add_option("--seed", seed, "override the config seed");

  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  eval_cmd->add_option("--ckpt-in", ckpt_in, "checkpoint to evaluate")->required();
  eval_cmd->add_option("--data", data, "dataset directory")->required();
  eval_cmd->add_option("--out", out, "report output directory")->required();

  auto* export_cmd = app.add_subcommand(
      "export-affinity", "dump per-frame affinity matrices for one clip");
  export_cmd->add_option("--ckpt-in", ckpt_in, "checkpoint")->required();
  export_cmd->add_option("--data", data, "clip file (.egcl)")->required();
  export_cmd->add_option("--out", out, "output directory")->required();

  auto* gc_cmd = app.add_subcommand(
      "gradcheck", "finite-difference check of every parameter group");
  gc_cmd->add_option("--config", config_path, "JSON config file");
  auto* gc_seed = gc_cmd->add_option("--seed", seed, "override the config seed");

  try {
    app.parse(argc, argv);

    RunConfig cfg = load_run_config(config_path);
    if (gen_seed->count() || train_seed->count() || gc_seed->count())
      cfg.seed = seed;

    if (gen->parsed()) return cmd_gen(cfg, out);
    if (train_cmd->parsed())
      return cmd_train(cfg, stage, data, ckpt_in, ckpt_out, out);
    if (eval_cmd->parsed()) return cmd_eval(ckpt_in, data, out);
    if (export_cmd->parsed()) return cmd_export_affinity(ckpt_in, data, out);
    if (gc_cmd->parsed()) return cmd_gradcheck(cfg.seed);
    return 1;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
