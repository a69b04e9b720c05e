#pragma once

#include <string>
#include <vector>

#include "egograph/graphs.hpp"
#include "egograph/rng.hpp"
#include "egograph/tensor.hpp"

namespace egograph {

enum class FusionMode { max, average, mlp };

FusionMode fusion_mode_from_string(const std::string& s);
std::string to_string(FusionMode mode);

/// Two-layer MLP over the concatenated frame sequence (hidden size 2D).
struct MlpParams {
  Tensor w1;  // (T*D) x H
  Tensor b1;  // H
  Tensor w2;  // H x D
  Tensor b2;  // D
};

struct HeadParams {
  Tensor weight;  // 2D x n_class
  Tensor bias;    // n_class
};

/// Element-wise sum of the two graphs' ego features.
Tensor fuse_graphs(Tape& tape, const Tensor& thing_ego, const Tensor& stuff_ego);

/// Pool per-frame ego features over time. `mlp` params are required only for
/// FusionMode::mlp and must match T*D.
Tensor temporal_fuse(Tape& tape, const std::vector<Tensor>& frames,
                     FusionMode mode, const MlpParams* mlp = nullptr);

/// concat(ego, global) -> linear -> logits.
Tensor classify(Tape& tape, const Tensor& ego_feat, const Tensor& global_feat,
                const HeadParams& head);

struct ModelShape {
  std::size_t dim = 32;
  std::size_t frames = 10;
  std::size_t n_goal = 5;
  std::size_t n_cause = 3;
};

/// Every learnable tensor in the network. The classifier rows that multiply
/// the graph ego feature start at zero so a no-graph model and a with-graph
/// model produce identical logits until stage 2 moves them.
struct ModelParams {
  ModelShape shape;
  GraphParams thing;  // two GCN layers
  GraphParams stuff;  // one GCN layer
  Tensor global_weight;  // D x D
  Tensor global_bias;    // D
  MlpParams temporal;
  HeadParams goal;
  HeadParams cause;

  std::vector<std::pair<std::string, Tensor>> named() const;
  Tensor find(const std::string& name) const;
  /// Deep copy. Tensors share storage on assignment, so anything that keeps
  /// a pristine set of weights (warm starts, ablations) must clone first.
  ModelParams clone() const;
};

ModelParams make_model_params(const ModelShape& shape, std::uint64_t seed,
                              Precision prec = Precision::f64);

/// One clip reduced to what the network consumes: per-frame graph nodes and
/// the raw (pre-projection) global feature.
struct PreparedClip {
  std::vector<NodeSet> thing_nodes;               // one per frame
  std::vector<NodeSet> stuff_nodes;               // one per frame
  std::vector<std::vector<double>> stuff_dists;   // per frame, per stuff node
  Tensor global_raw;                              // 1 x D, spatial+temporal mean
  int goal_label = 0;
  int cause_label = 0;
  int causal_node = -1;  // thing-node index of the planted interactor, if any
};

struct ForwardOptions {
  bool use_graphs = true;
  FusionMode fusion = FusionMode::max;
  double mu_thing = 3.0;
  double mu_stuff = 0.8;
  bool capture_affinities = false;
};

struct ClipForward {
  Tensor goal_logits;   // 1 x n_goal
  Tensor cause_logits;  // 1 x n_cause
  std::vector<AffinityMatrix> thing_affinities;  // per frame when captured
  std::vector<AffinityMatrix> stuff_affinities;
};

ClipForward forward_clip(Tape& tape, const ModelParams& params,
                         const PreparedClip& clip, const ForwardOptions& opts);

/// Sum of per-head cross-entropies for one clip.
Tensor clip_loss(Tape& tape, const ClipForward& out, const PreparedClip& clip);

}  // namespace egograph
