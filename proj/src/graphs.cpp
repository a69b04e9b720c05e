#include "egograph/graphs.hpp"

#include <cmath>
#include <string>

namespace egograph {

namespace {

void check_nodes(const NodeSet& nodes, const char* where) {
  const std::size_t n = nodes.size();
  if (n == 0) throw ShapeError(std::string(where) + ": empty node set");
  if (!nodes.features.is_matrix() || nodes.features.rows() != n)
    throw ShapeError(std::string(where) + ": features must be " +
                     std::to_string(n) + " x D, got " +
                     shape_str(nodes.features.shape()));
  if (nodes.classes.size() != n)
    throw ShapeError(std::string(where) + ": class tags/location count mismatch");
  if (nodes.classes.back() != kEgoClassId)
    throw ShapeError(std::string(where) + ": ego node must sit at the last index");
  for (std::size_t i = 0; i + 1 < n; ++i)
    if (nodes.classes[i] == kEgoClassId)
      throw ShapeError(std::string(where) + ": duplicate ego node at index " +
                       std::to_string(i));
}

Tensor glorot(std::size_t rows, std::size_t cols, Rng& rng, Precision prec) {
  const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::vector<double> vals(rows * cols);
  for (double& v : vals) v = rng.uniform(-bound, bound);
  return Tensor::from_data({rows, cols}, std::move(vals), true, prec);
}

}  // namespace

GraphParams make_graph_params(std::size_t dim, std::size_t n_layers, Rng& rng,
                              Precision prec) {
  GraphParams p;
  p.w = glorot(dim, dim, rng, prec);
  p.w_prime = glorot(dim, dim, rng, prec);
  p.layers.reserve(n_layers);
  for (std::size_t l = 0; l < n_layers; ++l) {
    GcnLayerParams layer;
    layer.weight = glorot(dim, dim, rng, prec);
    layer.ln_gain = Tensor::full({dim}, 1.0, true, prec);
    layer.ln_bias = Tensor::zeros({dim}, true, prec);
    p.layers.push_back(std::move(layer));
  }
  return p;
}

Tensor appearance_relation(Tape& tape, const Tensor& features, const Tensor& w,
                           const Tensor& w_prime) {
  if (!features.is_matrix() || !w.is_matrix() || !w_prime.is_matrix())
    throw ShapeError("appearance_relation: matrix inputs required");
  const std::size_t d = features.cols();
  if (w.rows() != d || w.cols() != d || w_prime.rows() != d || w_prime.cols() != d)
    throw ShapeError("appearance_relation: projection shape mismatch, D=" +
                     std::to_string(d));
  // Row i of `left` is (w x_i)^T, row j of `right` is (w' x_j)^T.
  Tensor left = tape.matmul(features, tape.transpose(w));
  Tensor right = tape.matmul(features, tape.transpose(w_prime));
  Tensor raw = tape.matmul(left, tape.transpose(right));
  return tape.scale(raw, 1.0 / std::sqrt(static_cast<double>(d)));
}

Tensor pairwise_gate_mask(const std::vector<Point3>& locations, double mu) {
  const std::size_t n = locations.size();
  std::vector<double> vals(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      vals[i * n + j] = spatial_gate(locations[i], locations[j], mu) ? 1.0 : 0.0;
  return Tensor::from_data({n, n}, std::move(vals));
}

AffinityMatrix ego_thing_affinity(Tape& tape, const NodeSet& nodes, double mu,
                                  const GraphParams& params, int frame) {
  check_nodes(nodes, "ego_thing_affinity");
  Tensor rel = appearance_relation(tape, nodes.features, params.w, params.w_prime);
  Tensor mask = pairwise_gate_mask(nodes.locations, mu);
  AffinityMatrix out;
  out.g = tape.softmax_row(rel, mask);
  out.variant = AffinityMatrix::Variant::thing;
  out.frame = frame;
  return out;
}

AffinityMatrix ego_stuff_affinity(Tape& tape, const NodeSet& nodes,
                                  const std::vector<double>& stuff_dists,
                                  double mu, const GraphParams& params,
                                  int frame) {
  check_nodes(nodes, "ego_stuff_affinity");
  const std::size_t n = nodes.size();
  if (stuff_dists.size() != n - 1)
    throw ShapeError("ego_stuff_affinity: expected " + std::to_string(n - 1) +
                     " stuff distances, got " + std::to_string(stuff_dists.size()));
  // Non-ego rows keep only their diagonal: a single-survivor softmax is
  // exactly 1 and contributes no gradient, so those rows stay identity.
  std::vector<double> vals(n * n, 0.0);
  const std::size_t ego = n - 1;
  for (std::size_t i = 0; i < ego; ++i) vals[i * n + i] = 1.0;
  for (std::size_t j = 0; j < ego; ++j)
    vals[ego * n + j] = stuff_dists[j] <= mu ? 1.0 : 0.0;
  vals[ego * n + ego] = 1.0;
  Tensor mask = Tensor::from_data({n, n}, std::move(vals));

  Tensor rel = appearance_relation(tape, nodes.features, params.w, params.w_prime);
  AffinityMatrix out;
  out.g = tape.softmax_row(rel, mask);
  out.variant = AffinityMatrix::Variant::stuff;
  out.frame = frame;
  return out;
}

Tensor gcn_layer(Tape& tape, const AffinityMatrix& g, const Tensor& z,
                 const GcnLayerParams& params) {
  Tensor mixed = tape.matmul(g.g, z);
  Tensor projected = tape.matmul(mixed, params.weight);
  Tensor residual = tape.add(projected, z);
  Tensor normed = tape.layer_norm(residual, params.ln_gain, params.ln_bias);
  return tape.relu(normed);
}

Tensor ego_thing_forward(Tape& tape, const NodeSet& nodes, double mu,
                         const GraphParams& params, AffinityMatrix* out_affinity,
                         int frame) {
  if (params.layers.empty())
    throw ShapeError("ego_thing_forward: no GCN layers");
  AffinityMatrix g = ego_thing_affinity(tape, nodes, mu, params, frame);
  Tensor z = nodes.features;
  for (const GcnLayerParams& layer : params.layers)
    z = gcn_layer(tape, g, z, layer);
  if (out_affinity) *out_affinity = g;
  return tape.row(z, nodes.size() - 1);
}

Tensor ego_stuff_forward(Tape& tape, const NodeSet& nodes,
                         const std::vector<double>& stuff_dists, double mu,
                         const GraphParams& params, AffinityMatrix* out_affinity,
                         int frame) {
  if (params.layers.empty())
    throw ShapeError("ego_stuff_forward: no GCN layers");
  AffinityMatrix g = ego_stuff_affinity(tape, nodes, stuff_dists, mu, params, frame);
  Tensor z = nodes.features;
  for (const GcnLayerParams& layer : params.layers)
    z = gcn_layer(tape, g, z, layer);
  if (out_affinity) *out_affinity = g;
  return tape.row(z, nodes.size() - 1);
}

}  // namespace egograph
