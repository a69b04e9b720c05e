#pragma once

#include <vector>

#include "egograph/geometry.hpp"
#include "egograph/rng.hpp"
#include "egograph/tensor.hpp"

namespace egograph {

/// Node class tag reserved for the ego node.
constexpr int kEgoClassId = -1;

/// Per-frame graph nodes: object features (ego at the last row), their 3D
/// locations and class tags.
struct NodeSet {
  Tensor features;               // n x D
  std::vector<Point3> locations; // per node
  std::vector<int> classes;      // thing/stuff class ids, kEgoClassId last

  std::size_t size() const { return locations.size(); }
};

/// Row-normalized interaction weights for one frame.
struct AffinityMatrix {
  enum class Variant { thing, stuff };
  Tensor g;  // n x n, rows sum to 1 (thing) / ego row sums to 1 (stuff)
  Variant variant = Variant::thing;
  int frame = 0;
};

struct GcnLayerParams {
  Tensor weight;   // D x D
  Tensor ln_gain;  // D
  Tensor ln_bias;  // D
};

/// Learnable state of one graph variant: the appearance relation
/// projections and the stacked GCN layers.
struct GraphParams {
  Tensor w;        // D x D
  Tensor w_prime;  // D x D
  std::vector<GcnLayerParams> layers;
};

/// Glorot-style uniform init, layer-norm gain 1 / bias 0.
GraphParams make_graph_params(std::size_t dim, std::size_t n_layers, Rng& rng,
                              Precision prec = Precision::f64);

/// Scaled bilinear appearance relation: f_a(i,j) = (w x_i)^T (w' x_j) / sqrt(D).
Tensor appearance_relation(Tape& tape, const Tensor& features, const Tensor& w,
                           const Tensor& w_prime);

/// Hard 0/1 gate matrix from pairwise 3D distances; the diagonal is always
/// open (self distance 0).
Tensor pairwise_gate_mask(const std::vector<Point3>& locations, double mu);

/// Second-order ego-thing affinity: every row is a masked softmax of the
/// appearance relation, gated by pairwise 3D distance.
AffinityMatrix ego_thing_affinity(Tape& tape, const NodeSet& nodes, double mu,
                                  const GraphParams& params, int frame = 0);

/// First-order ego-stuff affinity: only the ego row aggregates (gated by
/// each stuff object's minimum distance); every other row is the exact
/// identity row.
AffinityMatrix ego_stuff_affinity(Tape& tape, const NodeSet& nodes,
                                  const std::vector<double>& stuff_dists,
                                  double mu, const GraphParams& params,
                                  int frame = 0);

/// One graph convolution: relu(layer_norm(G Z W + Z)).
Tensor gcn_layer(Tape& tape, const AffinityMatrix& g, const Tensor& z,
                 const GcnLayerParams& params);

/// Stacked ego-thing reasoning; the affinity is built once from the input
/// features and shared by all layers. Returns the ego row.
Tensor ego_thing_forward(Tape& tape, const NodeSet& nodes, double mu,
                         const GraphParams& params,
                         AffinityMatrix* out_affinity = nullptr, int frame = 0);

/// Single-layer ego-stuff reasoning; returns the ego row.
Tensor ego_stuff_forward(Tape& tape, const NodeSet& nodes,
                         const std::vector<double>& stuff_dists, double mu,
                         const GraphParams& params,
                         AffinityMatrix* out_affinity = nullptr, int frame = 0);

}  // namespace egograph
