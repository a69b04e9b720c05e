// Acceptance suite: one self-contained binary that exercises the full
// pipeline and prints a pass/fail verdict per criterion. Exit code 0 only
// when every criterion passes.

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "egograph/checkpoint.hpp"
#include "egograph/config.hpp"
#include "egograph/scenes.hpp"
#include "egograph/training.hpp"

using namespace egograph;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

void verdict(int criterion, bool pass, const std::string& detail) {
  std::printf("criterion %d: %s -- %s\n", criterion, pass ? "PASS" : "FAIL",
              detail.c_str());
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

std::string fmt(const char* pattern, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, pattern, a, b, c);
  return buf;
}

// ---------------------------------------------------------------------------
// 1. finite-difference gradients for every parameter group

void criterion_gradients() {
  const auto t0 = std::chrono::steady_clock::now();
  const std::vector<GradCheckRow> rows = run_gradcheck(0);
  const double elapsed = seconds_since(t0);
  double worst = 0.0;
  bool live = !rows.empty();
  for (const GradCheckRow& r : rows) {
    worst = std::max(worst, r.max_rel_err);
    live = live && r.max_rel_err > 0.0;
  }
  const bool pass =
      gradcheck_passed(rows) && live && rows.size() == 23 && elapsed < 120.0;
  verdict(1, pass,
          fmt("23 groups, worst rel err %.2e, %.1f s", worst, elapsed));
}

// ---------------------------------------------------------------------------
// 2. affinity invariants over 1000 random frames, f32 (training precision)

NodeSet random_frame_nodes(Rng& rng, std::size_t n, std::size_t d,
                           Precision prec) {
  std::vector<double> feat(n * d);
  for (double& v : feat) v = rng.normal();
  NodeSet nodes;
  nodes.features = Tensor::from_data({n, d}, std::move(feat), false, prec);
  nodes.locations.resize(n);
  for (Point3& p : nodes.locations)
    p = {rng.uniform(-3.0, 3.0), rng.uniform(-3.0, 3.0), rng.uniform(0.5, 6.0)};
  nodes.classes.assign(n, 0);
  nodes.classes.back() = kEgoClassId;
  return nodes;
}

void criterion_affinity_invariants() {
  Rng master(2024);
  GraphParams params_f32, params2_f32;
  {
    Rng r1(77), r2(78);
    params_f32 = make_graph_params(16, 2, r1, Precision::f32);
    params2_f32 = make_graph_params(16, 1, r2, Precision::f32);
  }
  double worst_row_sum = 0.0;
  bool entries_ok = true, identity_ok = true, isolation_ok = true;

  for (int frame = 0; frame < 1000; ++frame) {
    Rng rng = master.fork(frame);
    const std::size_t n = 3 + rng.below(6);
    NodeSet nodes = random_frame_nodes(rng, n, 16, Precision::f32);

    Tape tape(Precision::f32);
    const AffinityMatrix thing =
        ego_thing_affinity(tape, nodes, 3.0, params_f32);
    for (std::size_t i = 0; i < n; ++i) {
      double sum = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        const double g = thing.g.at(i, j);
        entries_ok = entries_ok && g >= 0.0 && g <= 1.0;
        sum += g;
      }
      worst_row_sum = std::max(worst_row_sum, std::fabs(sum - 1.0));
    }

    std::vector<double> dists(n - 1);
    for (double& v : dists) v = rng.uniform(0.1, 2.0);
    const AffinityMatrix stuff =
        ego_stuff_affinity(tape, nodes, dists, 0.8, params2_f32);
    for (std::size_t i = 0; i + 1 < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        identity_ok = identity_ok && stuff.g.at(i, j) == (i == j ? 1.0 : 0.0);

    // prepend a node far outside every gate; the ego output must not move
    if (frame % 4 == 0) {
      NodeSet bigger;
      std::vector<double> feat((n + 1) * 16);
      for (std::size_t k = 0; k < 16; ++k) feat[k] = rng.normal();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < 16; ++k)
          feat[(i + 1) * 16 + k] = nodes.features.at(i, k);
      bigger.features =
          Tensor::from_data({n + 1, 16}, std::move(feat), false, Precision::f32);
      bigger.locations.assign(1, Point3{1e6, 1e6, 1e6});
      bigger.locations.insert(bigger.locations.end(), nodes.locations.begin(),
                              nodes.locations.end());
      bigger.classes.assign(n + 1, 0);
      bigger.classes.back() = kEgoClassId;

      Tape ta(Precision::f32), tb(Precision::f32);
      const Tensor with_far = ego_thing_forward(ta, bigger, 3.0, params_f32);
      const Tensor without = ego_thing_forward(tb, nodes, 3.0, params_f32);
      for (std::size_t k = 0; k < 16; ++k)
        isolation_ok = isolation_ok && with_far.at(0, k) == without.at(0, k);
    }
  }
  const bool pass = worst_row_sum <= 1e-6 && entries_ok && identity_ok &&
                    isolation_ok;
  verdict(2, pass,
          fmt("1000 frames, worst thing row-sum err %.2e, stuff identity ok "
              "%.0f, isolation bit-exact %.0f",
              worst_row_sum, identity_ok ? 1.0 : 0.0, isolation_ok ? 1.0 : 0.0));
}

// ---------------------------------------------------------------------------
// 3. brute-force oracle equivalence on 100 random instances each

double mask_align_worst(Rng& rng) {
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    FeatureMap fm;
    fm.frames = 1;
    fm.width = 5 + static_cast<int>(rng.below(8));
    fm.height = 5 + static_cast<int>(rng.below(8));
    fm.channels = 4 + static_cast<int>(rng.below(8));
    fm.source_width = fm.width * 4;
    fm.source_height = fm.height * 4;
    fm.values.resize(fm.numel());
    for (float& v : fm.values) v = static_cast<float>(rng.normal());

    DownsampledMask m;
    m.width = fm.width;
    m.height = fm.height;
    m.values.assign(static_cast<std::size_t>(fm.width) * fm.height, 0);
    int set = 0;
    for (auto& v : m.values)
      if (rng.uniform() < 0.35) {
        v = 1;
        ++set;
      }
    if (!set) m.values[rng.below(m.values.size())] = 1, set = 1;

    const Tensor got = mask_align(fm, 0, m);
    for (int d = 0; d < fm.channels; ++d) {
      double acc = 0.0;
      for (int y = 0; y < fm.height; ++y)
        for (int x = 0; x < fm.width; ++x)
          if (m.at(x, y)) acc += fm.at(0, x, y, d);
      worst = std::max(worst, std::fabs(got.at(0, d) - acc / set));
    }
  }
  return worst;
}

double affinity_worst(Rng& rng) {
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 3 + rng.below(5);
    const std::size_t d = 4 + rng.below(8);
    NodeSet nodes = random_frame_nodes(rng, n, d, Precision::f64);
    Rng prng = rng.fork(trial);
    GraphParams params = make_graph_params(d, 1, prng);
    Tape tape;
    const AffinityMatrix got = ego_thing_affinity(tape, nodes, 2.5, params);

    auto project = [&](const Tensor& w, std::size_t i) {
      std::vector<double> out(d, 0.0);
      for (std::size_t r = 0; r < d; ++r)
        for (std::size_t c = 0; c < d; ++c)
          out[r] += w.at(r, c) * nodes.features.at(i, c);
      return out;
    };
    for (std::size_t i = 0; i < n; ++i) {
      const auto wi = project(params.w, i);
      std::vector<double> numer(n, 0.0);
      double denom = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        if (spatial_gate(nodes.locations[i], nodes.locations[j], 2.5) == 0)
          continue;
        const auto wj = project(params.w_prime, j);
        double dot = 0.0;
        for (std::size_t k = 0; k < d; ++k) dot += wi[k] * wj[k];
        numer[j] = std::exp(dot / std::sqrt(static_cast<double>(d)));
        denom += numer[j];
      }
      for (std::size_t j = 0; j < n; ++j)
        worst = std::max(worst, std::fabs(got.g.at(i, j) - numer[j] / denom));
    }
  }
  return worst;
}

double ap_worst(Rng& rng) {
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 4 + rng.below(60);
    std::vector<double> scores(n);
    std::vector<bool> pos(n);
    bool any = false;
    for (std::size_t i = 0; i < n; ++i) {
      scores[i] = rng.uniform();
      pos[i] = rng.uniform() < 0.35;
      any = any || pos[i];
    }
    if (!any) pos[n / 2] = true;

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return scores[a] > scores[b];
    });
    double hits = 0.0, total = 0.0;
    std::size_t n_pos = 0;
    for (std::size_t k = 0; k < n; ++k) {
      if (!pos[order[k]]) continue;
      ++hits;
      ++n_pos;
      total += hits / static_cast<double>(k + 1);
    }
    const double want = total / n_pos;
    const auto got = average_precision(scores, pos);
    worst = std::max(worst, std::fabs(got.value() - want));
  }
  return worst;
}

void criterion_oracles() {
  Rng rng(3003);
  const double w1 = mask_align_worst(rng);
  const double w2 = affinity_worst(rng);
  const double w3 = ap_worst(rng);
  const bool pass = w1 <= 1e-9 && w2 <= 1e-9 && w3 <= 1e-9;
  verdict(3, pass,
          fmt("mask_align %.2e, ego_thing_affinity %.2e, average_precision "
              "%.2e",
              w1, w2, w3));
}

// ---------------------------------------------------------------------------
// 4-7. full pipeline on a 1000-clip dataset, shared across criteria

struct PipelineArtifacts {
  std::vector<PreparedClip> train_clips;
  std::vector<PreparedClip> eval_clips;
  ModelParams stage1;
  ModelParams stage2;
  double map_stage1 = 0.0;
  double map_stage2 = 0.0;
  RunConfig cfg;
};

std::vector<PreparedClip> load_split(const fs::path& dir, const RunConfig& cfg) {
  std::vector<PreparedClip> out;
  for (const std::string& p : list_clips(dir.string()))
    out.push_back(prepare_clip(load_clip(p), cfg.top_k, cfg.roi_grid));
  return out;
}

ForwardOptions graph_options(const RunConfig& cfg, bool use_graphs,
                             FusionMode fusion) {
  ForwardOptions opts;
  opts.use_graphs = use_graphs;
  opts.fusion = fusion;
  opts.mu_thing = cfg.mu_thing;
  opts.mu_stuff = cfg.mu_stuff;
  return opts;
}

PipelineArtifacts criterion_graph_benefit() {
  const auto t0 = std::chrono::steady_clock::now();
  PipelineArtifacts art;
  art.cfg = RunConfig{};

  const fs::path data = fs::temp_directory_path() / "egograph_acceptance_data";
  fs::remove_all(data);
  make_dataset(data.string(), art.cfg.n_train, art.cfg.n_eval, art.cfg.seed,
               art.cfg.scene);
  art.train_clips = load_split(data / "train", art.cfg);
  art.eval_clips = load_split(data / "eval", art.cfg);
  fs::remove_all(data);

  const Precision prec = precision_from_string(art.cfg.precision);
  ModelParams init = make_model_params(model_shape_from(art.cfg), art.cfg.seed,
                                       prec);
  TrainResult s1 =
      train(train_config_from(art.cfg, 1), art.train_clips, init);
  art.stage1 = s1.params;
  art.map_stage1 =
      evaluate(art.stage1, art.eval_clips,
               graph_options(art.cfg, false, FusionMode::max), prec)
          .mean_map;

  TrainResult s2 =
      train(train_config_from(art.cfg, 2), art.train_clips, art.stage1);
  art.stage2 = s2.params;
  art.map_stage2 =
      evaluate(art.stage2, art.eval_clips,
               graph_options(art.cfg, true, FusionMode::max), prec)
          .mean_map;

  const double elapsed = seconds_since(t0);
  const double delta = art.map_stage2 - art.map_stage1;
  const bool pass = delta >= 0.10 && elapsed < 900.0;
  verdict(4, pass,
          fmt("1000 clips: stage-1 mAP %.4f, stage-2 mAP %.4f, runtime %.0f s",
              art.map_stage1, art.map_stage2, elapsed));
  return art;
}

// ---------------------------------------------------------------------------
// 5. the learned ego row concentrates on the planted causal thing

void criterion_attention(const PipelineArtifacts& art) {
  const Precision prec = precision_from_string(art.cfg.precision);
  long long in_range = 0, hits = 0;
  for (const PreparedClip& clip : art.eval_clips) {
    if (clip.cause_label == 0 || clip.causal_node < 0) continue;
    Tape tape(prec);
    ForwardOptions opts = graph_options(art.cfg, true, FusionMode::max);
    opts.capture_affinities = true;
    const ClipForward fwd = forward_clip(tape, art.stage2, clip, opts);

    for (std::size_t t = 0; t < fwd.thing_affinities.size(); ++t) {
      const NodeSet& nodes = clip.thing_nodes[t];
      const std::size_t ego = nodes.size() - 1;
      const std::size_t causal = static_cast<std::size_t>(clip.causal_node);
      if (distance(nodes.locations[causal], nodes.locations[ego]) >
          art.cfg.mu_thing)
        continue;
      ++in_range;
      const Tensor& g = fwd.thing_affinities[t].g;
      std::size_t best = 0;
      double best_w = -1.0;
      for (std::size_t j = 0; j < ego; ++j)
        if (g.at(ego, j) > best_w) {
          best_w = g.at(ego, j);
          best = j;
        }
      if (best == causal) ++hits;
    }
  }
  const double rate =
      in_range ? static_cast<double>(hits) / static_cast<double>(in_range) : 0.0;
  verdict(5, in_range > 0 && rate >= 0.70,
          fmt("causal thing wins the ego row in %.1f%% of %.0f in-range frames",
              100.0 * rate, static_cast<double>(in_range)));
}

// ---------------------------------------------------------------------------
// 6. temporal fusion ablation: max vs average vs mlp

void criterion_fusion(const PipelineArtifacts& art) {
  const Precision prec = precision_from_string(art.cfg.precision);
  auto retrain = [&](FusionMode mode) {
    TrainConfig cfg = train_config_from(art.cfg, 2);
    cfg.fusion = mode;
    const TrainResult r = train(cfg, art.train_clips, art.stage1);
    return evaluate(r.params, art.eval_clips,
                    graph_options(art.cfg, true, mode), prec)
        .mean_map;
  };
  const double map_max = art.map_stage2;  // criterion 4 trained with max
  const double map_avg = retrain(FusionMode::average);
  const double map_mlp = retrain(FusionMode::mlp);
  verdict(6, map_max >= map_avg,
          fmt("mAP max %.4f / average %.4f / mlp %.4f", map_max, map_avg,
              map_mlp));
}

// ---------------------------------------------------------------------------
// 7. warm start: graphs-on evaluation of stage-1 weights changes nothing

void criterion_warm_start(const PipelineArtifacts& art) {
  const Precision prec = precision_from_string(art.cfg.precision);
  const double with_graphs =
      evaluate(art.stage1, art.eval_clips,
               graph_options(art.cfg, true, FusionMode::max), prec)
          .mean_map;
  const double diff = std::fabs(with_graphs - art.map_stage1);
  verdict(7, diff <= 1e-6,
          fmt("stage-2 initial mAP %.6f vs stage-1 final %.6f (|diff| %.1e)",
              with_graphs, art.map_stage1, diff));
}

// ---------------------------------------------------------------------------
// 8. byte-identical pipeline reruns through the CLI

std::string read_bytes(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(f)), {});
}

void criterion_determinism() {
  const fs::path root = fs::temp_directory_path() / "egograph_acceptance_det";
  fs::remove_all(root);
  fs::create_directories(root);

  const fs::path cfg_path = root / "config.json";
  {
    std::ofstream f(cfg_path);
    f << R"({
  "dataset": {"n_train": 45, "n_eval": 15},
  "train": {"batch_size": 4, "iterations_stage1": 60, "iterations_stage2": 60},
  "scene": {"frames": 6, "channels": 8, "n_things": 3}
})";
  }

  auto run_pipeline = [&](const fs::path& dir) {
    fs::create_directories(dir);
    const std::string base = std::string(EGOGRAPH_CLI_PATH) + " ";
    const std::string cfg = " --config " + cfg_path.string();
    const std::string quiet = " > /dev/null 2>&1";
    auto sh = [&](const std::string& cmd) {
      const int status = std::system((base + cmd + quiet).c_str());
      return WEXITSTATUS(status) == 0;
    };
    bool ok = sh("gen" + cfg + " --out " + (dir / "data").string() + " --seed 0");
    ok = ok && sh("train" + cfg + " --stage 1 --data " + (dir / "data").string() +
                  " --ckpt-out " + (dir / "s1.ckpt").string() + " --seed 0");
    ok = ok && sh("train" + cfg + " --stage 2 --data " + (dir / "data").string() +
                  " --ckpt-in " + (dir / "s1.ckpt").string() + " --ckpt-out " +
                  (dir / "s2.ckpt").string() + " --seed 0");
    ok = ok && sh("eval --ckpt-in " + (dir / "s2.ckpt").string() + " --data " +
                  (dir / "data").string() + " --out " + (dir / "eval").string());
    return ok;
  };

  const bool ran =
      run_pipeline(root / "run_a") && run_pipeline(root / "run_b");
  bool identical = ran;
  for (const char* rel :
       {"s1.ckpt", "s2.ckpt", "eval/report.json", "eval/report.csv"})
    identical = identical && read_bytes(root / "run_a" / rel) ==
                                 read_bytes(root / "run_b" / rel);
  verdict(8, ran && identical,
          ran ? (identical ? std::string("checkpoints and reports byte-identical "
                                         "across reruns")
                           : std::string("outputs differ between reruns"))
              : std::string("pipeline run failed"));
  fs::remove_all(root);
}

}  // namespace

int main() {
  std::printf("acceptance suite\n");
  criterion_gradients();
  criterion_affinity_invariants();
  criterion_oracles();
  const PipelineArtifacts art = criterion_graph_benefit();
  criterion_attention(art);
  criterion_fusion(art);
  criterion_warm_start(art);
  criterion_determinism();
  if (g_failures == 0) {
    std::printf("all 8 criteria pass\n");
    return 0;
  }
  std::printf("%d criterion(s) failed\n", g_failures);
  return 1;
}
