#include "egograph/model.hpp"

#include <cmath>
#include <stdexcept>

namespace egograph {

namespace {

Tensor glorot(std::size_t rows, std::size_t cols, Rng& rng, Precision prec) {
  const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::vector<double> vals(rows * cols);
  for (double& v : vals) v = rng.uniform(-bound, bound);
  return Tensor::from_data({rows, cols}, std::move(vals), true, prec);
}

/// Head weight with the block multiplying the graph ego feature (first `dim`
/// rows) zeroed; only the global block starts nonzero.
Tensor head_weight(std::size_t dim, std::size_t n_class, Rng& rng, Precision prec) {
  const double bound = std::sqrt(6.0 / static_cast<double>(2 * dim + n_class));
  std::vector<double> vals(2 * dim * n_class, 0.0);
  for (std::size_t r = dim; r < 2 * dim; ++r)
    for (std::size_t c = 0; c < n_class; ++c)
      vals[r * n_class + c] = rng.uniform(-bound, bound);
  return Tensor::from_data({2 * dim, n_class}, std::move(vals), true, prec);
}

}  // namespace

FusionMode fusion_mode_from_string(const std::string& s) {
  if (s == "max") return FusionMode::max;
  if (s == "average" || s == "avg") return FusionMode::average;
  if (s == "mlp") return FusionMode::mlp;
  throw std::invalid_argument("unknown fusion mode: " + s);
}

std::string to_string(FusionMode mode) {
  switch (mode) {
    case FusionMode::max: return "max";
    case FusionMode::average: return "average";
    case FusionMode::mlp: return "mlp";
  }
  return "max";
}

Tensor fuse_graphs(Tape& tape, const Tensor& thing_ego, const Tensor& stuff_ego) {
  return tape.add(thing_ego, stuff_ego);
}

Tensor temporal_fuse(Tape& tape, const std::vector<Tensor>& frames,
                     FusionMode mode, const MlpParams* mlp) {
  if (frames.empty()) throw ShapeError("temporal_fuse: empty sequence");
  switch (mode) {
    case FusionMode::max:
      return tape.reduce_max_over_axis(tape.concat_rows(frames), 0);
    case FusionMode::average:
      return tape.reduce_mean_over_axis(tape.concat_rows(frames), 0);
    case FusionMode::mlp: {
      if (!mlp) throw ShapeError("temporal_fuse: mlp mode needs weights");
      Tensor flat = tape.concat_lastdim(frames);
      Tensor hidden = tape.relu(tape.linear(flat, mlp->w1, mlp->b1));
      return tape.linear(hidden, mlp->w2, mlp->b2);
    }
  }
  throw ShapeError("temporal_fuse: bad mode");
}

Tensor classify(Tape& tape, const Tensor& ego_feat, const Tensor& global_feat,
                const HeadParams& head) {
  Tensor joint = tape.concat_lastdim(ego_feat, global_feat);
  return tape.linear(joint, head.weight, head.bias);
}

std::vector<std::pair<std::string, Tensor>> ModelParams::named() const {
  std::vector<std::pair<std::string, Tensor>> out;
  auto add_graph = [&out](const std::string& prefix, const GraphParams& g) {
    out.emplace_back(prefix + ".rel.w", g.w);
    out.emplace_back(prefix + ".rel.w_prime", g.w_prime);
    for (std::size_t l = 0; l < g.layers.size(); ++l) {
      const std::string base = prefix + ".gcn" + std::to_string(l + 1);
      out.emplace_back(base + ".weight", g.layers[l].weight);
      out.emplace_back(base + ".ln_gain", g.layers[l].ln_gain);
      out.emplace_back(base + ".ln_bias", g.layers[l].ln_bias);
    }
  };
  add_graph("thing", thing);
  add_graph("stuff", stuff);
  out.emplace_back("global.weight", global_weight);
  out.emplace_back("global.bias", global_bias);
  out.emplace_back("temporal.w1", temporal.w1);
  out.emplace_back("temporal.b1", temporal.b1);
  out.emplace_back("temporal.w2", temporal.w2);
  out.emplace_back("temporal.b2", temporal.b2);
  out.emplace_back("head.goal.weight", goal.weight);
  out.emplace_back("head.goal.bias", goal.bias);
  out.emplace_back("head.cause.weight", cause.weight);
  out.emplace_back("head.cause.bias", cause.bias);
  return out;
}

Tensor ModelParams::find(const std::string& name) const {
  for (auto& [n, t] : named())
    if (n == name) return t;
  throw std::invalid_argument("unknown parameter: " + name);
}

ModelParams ModelParams::clone() const {
  auto clone_graph = [](const GraphParams& g) {
    GraphParams out;
    out.w = g.w.clone();
    out.w_prime = g.w_prime.clone();
    out.layers.reserve(g.layers.size());
    for (const GcnLayerParams& l : g.layers)
      out.layers.push_back(
          {l.weight.clone(), l.ln_gain.clone(), l.ln_bias.clone()});
    return out;
  };
  ModelParams out;
  out.shape = shape;
  out.thing = clone_graph(thing);
  out.stuff = clone_graph(stuff);
  out.global_weight = global_weight.clone();
  out.global_bias = global_bias.clone();
  out.temporal = {temporal.w1.clone(), temporal.b1.clone(), temporal.w2.clone(),
                  temporal.b2.clone()};
  out.goal = {goal.weight.clone(), goal.bias.clone()};
  out.cause = {cause.weight.clone(), cause.bias.clone()};
  return out;
}

ModelParams make_model_params(const ModelShape& shape, std::uint64_t seed,
                              Precision prec) {
  Rng root(seed);
  ModelParams p;
  p.shape = shape;
  const std::size_t d = shape.dim;
  {
    Rng r = root.fork(1);
    p.thing = make_graph_params(d, 2, r, prec);
  }
  {
    Rng r = root.fork(2);
    p.stuff = make_graph_params(d, 1, r, prec);
  }
  {
    Rng r = root.fork(3);
    p.global_weight = glorot(d, d, r, prec);
    p.global_bias = Tensor::zeros({d}, true, prec);
  }
  {
    Rng r = root.fork(4);
    const std::size_t h = 2 * d;
    p.temporal.w1 = glorot(shape.frames * d, h, r, prec);
    p.temporal.b1 = Tensor::zeros({h}, true, prec);
    p.temporal.w2 = glorot(h, d, r, prec);
    p.temporal.b2 = Tensor::zeros({d}, true, prec);
  }
  {
    Rng r = root.fork(5);
    p.goal.weight = head_weight(d, shape.n_goal, r, prec);
    p.goal.bias = Tensor::zeros({shape.n_goal}, true, prec);
    p.cause.weight = head_weight(d, shape.n_cause, r, prec);
    p.cause.bias = Tensor::zeros({shape.n_cause}, true, prec);
  }
  return p;
}

ClipForward forward_clip(Tape& tape, const ModelParams& params,
                         const PreparedClip& clip, const ForwardOptions& opts) {
  const std::size_t d = params.shape.dim;
  ClipForward out;

  Tensor ego_feat;
  if (opts.use_graphs) {
    if (clip.thing_nodes.size() != clip.stuff_nodes.size() ||
        clip.stuff_nodes.size() != clip.stuff_dists.size() ||
        clip.thing_nodes.empty())
      throw ShapeError("forward_clip: inconsistent per-frame inputs");
    std::vector<Tensor> fused;
    fused.reserve(clip.thing_nodes.size());
    for (std::size_t t = 0; t < clip.thing_nodes.size(); ++t) {
      AffinityMatrix thing_g;
      AffinityMatrix stuff_g;
      Tensor thing_ego =
          ego_thing_forward(tape, clip.thing_nodes[t], opts.mu_thing,
                            params.thing,
                            opts.capture_affinities ? &thing_g : nullptr,
                            static_cast<int>(t));
      Tensor stuff_ego =
          ego_stuff_forward(tape, clip.stuff_nodes[t], clip.stuff_dists[t],
                            opts.mu_stuff, params.stuff,
                            opts.capture_affinities ? &stuff_g : nullptr,
                            static_cast<int>(t));
      fused.push_back(fuse_graphs(tape, thing_ego, stuff_ego));
      if (opts.capture_affinities) {
        out.thing_affinities.push_back(std::move(thing_g));
        out.stuff_affinities.push_back(std::move(stuff_g));
      }
    }
    ego_feat = temporal_fuse(tape, fused, opts.fusion, &params.temporal);
  } else {
    ego_feat = Tensor::zeros({1, d}, false, tape.precision());
  }

  Tensor global_feat =
      tape.linear(clip.global_raw, params.global_weight, params.global_bias);
  out.goal_logits = classify(tape, ego_feat, global_feat, params.goal);
  out.cause_logits = classify(tape, ego_feat, global_feat, params.cause);
  return out;
}

Tensor clip_loss(Tape& tape, const ClipForward& out, const PreparedClip& clip) {
  Tensor goal = tape.cross_entropy(out.goal_logits,
                                   static_cast<std::size_t>(clip.goal_label));
  Tensor cause = tape.cross_entropy(out.cause_logits,
                                    static_cast<std::size_t>(clip.cause_label));
  return tape.add(goal, cause);
}

}  // namespace egograph
