#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>
#include <stdexcept>

#include "egograph/graphs.hpp"
#include "egograph/scenes.hpp"
#include "egograph/training.hpp"

namespace py = pybind11;
using namespace egograph;

namespace {

Tensor matrix_from_rows(const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) throw std::invalid_argument("empty feature list");
  const std::size_t d = rows.front().size();
  std::vector<double> flat;
  flat.reserve(rows.size() * d);
  for (const auto& r : rows) {
    if (r.size() != d) throw std::invalid_argument("ragged feature rows");
    flat.insert(flat.end(), r.begin(), r.end());
  }
  return Tensor::from_data({rows.size(), d}, std::move(flat));
}

std::vector<std::vector<double>> matrix_to_rows(const Tensor& t) {
  std::vector<std::vector<double>> out(t.rows());
  for (std::size_t i = 0; i < t.rows(); ++i) {
    out[i].resize(t.cols());
    for (std::size_t j = 0; j < t.cols(); ++j) out[i][j] = t.at(i, j);
  }
  return out;
}

NodeSet nodes_from(const std::vector<std::vector<double>>& features,
                   const std::vector<std::array<double, 3>>& locations) {
  if (locations.size() != features.size())
    throw std::invalid_argument("feature/location count mismatch");
  NodeSet nodes;
  nodes.features = matrix_from_rows(features);
  for (const auto& p : locations)
    nodes.locations.push_back(Point3{p[0], p[1], p[2]});
  nodes.classes.assign(features.size(), 0);
  nodes.classes.back() = kEgoClassId;
  return nodes;
}

}  // namespace

PYBIND11_MODULE(_egograph, m) {
  m.doc() = "ego-centric interaction graph core operations";
  m.attr("__version__") = "1.0.0";

  m.def(
      "average_precision",
      [](const std::vector<double>& scores, const std::vector<int>& positives)
          -> std::optional<double> {
        std::vector<bool> pos(positives.size());
        for (std::size_t i = 0; i < positives.size(); ++i)
          pos[i] = positives[i] != 0;
        return average_precision(scores, pos);
      },
      py::arg("scores"), py::arg("positives"),
      "Non-interpolated average precision; None when there are no positives.");

  m.def(
      "mask_align",
      [](const std::vector<double>& values, int width, int height,
         int channels, const std::vector<int>& mask) {
        FeatureMap fm;
        fm.frames = 1;
        fm.width = width;
        fm.height = height;
        fm.channels = channels;
        fm.source_width = width;
        fm.source_height = height;
        fm.values.assign(values.begin(), values.end());
        if (!fm.valid())
          throw std::invalid_argument("feature size does not match dims");
        DownsampledMask dm;
        dm.width = width;
        dm.height = height;
        dm.values.assign(mask.begin(), mask.end());
        const Tensor t = mask_align(fm, 0, dm);
        std::vector<double> out(t.cols());
        for (std::size_t j = 0; j < t.cols(); ++j) out[j] = t.at(0, j);
        return out;
      },
      py::arg("values"), py::arg("width"), py::arg("height"),
      py::arg("channels"), py::arg("mask"),
      "Masked average pooling over a flat [y][x][d] feature grid.");

  m.def(
      "ego_thing_affinity",
      [](const std::vector<std::vector<double>>& features,
         const std::vector<std::array<double, 3>>& locations, double mu,
         std::uint64_t seed) {
        const NodeSet nodes = nodes_from(features, locations);
        Rng rng(seed);
        const GraphParams params =
            make_graph_params(nodes.features.cols(), 2, rng, Precision::f64);
        Tape tape(Precision::f64);
        return matrix_to_rows(
            ego_thing_affinity(tape, nodes, mu, params).g);
      },
      py::arg("features"), py::arg("locations"), py::arg("mu") = 3.0,
      py::arg("seed") = 0,
      "Distance-gated affinity over thing nodes (ego last), with relation "
      "weights drawn from the seed.");

  m.def(
      "ego_stuff_affinity",
      [](const std::vector<std::vector<double>>& features,
         const std::vector<double>& stuff_distances, double mu,
         std::uint64_t seed) {
        NodeSet nodes;
        nodes.features = matrix_from_rows(features);
        nodes.locations.assign(features.size(), Point3{});
        nodes.classes.assign(features.size(), 0);
        nodes.classes.back() = kEgoClassId;
        Rng rng(seed);
        const GraphParams params =
            make_graph_params(nodes.features.cols(), 1, rng, Precision::f64);
        Tape tape(Precision::f64);
        return matrix_to_rows(
            ego_stuff_affinity(tape, nodes, stuff_distances, mu, params).g);
      },
      py::arg("features"), py::arg("stuff_distances"), py::arg("mu") = 0.8,
      py::arg("seed") = 0,
      "Stuff-graph affinity: gated ego row, identity elsewhere.");

  m.def(
      "unproject",
      [](double u, double v, const std::vector<double>& depth, int width,
         int height, double fx, double fy, double cx, double cy) {
        DepthMap dm;
        dm.width = width;
        dm.height = height;
        dm.values.assign(depth.begin(), depth.end());
        CameraIntrinsics intr{fx, fy, cx, cy};
        const Point3 p = unproject(u, v, dm, intr);
        return std::array<double, 3>{p.x, p.y, p.z};
      },
      py::arg("u"), py::arg("v"), py::arg("depth"), py::arg("width"),
      py::arg("height"), py::arg("fx"), py::arg("fy"), py::arg("cx"),
      py::arg("cy"), "Pixel plus depth to a 3D camera-frame point.");

  m.def(
      "make_dataset",
      [](const std::string& out_dir, int n_train, int n_eval,
         std::uint64_t seed) {
        const DatasetReport r =
            make_dataset(out_dir, n_train, n_eval, seed, SceneSpec{});
        py::dict d;
        d["n_train"] = r.n_train;
        d["n_eval"] = r.n_eval;
        return d;
      },
      py::arg("out_dir"), py::arg("n_train"), py::arg("n_eval"),
      py::arg("seed") = 0, "Generate a labeled synthetic clip dataset.");

  m.def("list_clips", &list_clips, py::arg("dir"),
        "Sorted clip file paths under a directory.");

  m.def(
      "clip_labels",
      [](const std::string& path) {
        const SceneClip clip = load_clip(path);
        py::dict d;
        d["goal"] = clip.goal_label;
        d["cause"] = clip.cause_label;
        d["causal_thing"] = clip.causal_thing;
        d["frames"] = clip.spec.frames;
        return d;
      },
      py::arg("path"), "Labels stored in one clip file.");

  m.def(
      "run_gradcheck",
      [](std::uint64_t seed) {
        py::list rows;
        for (const GradCheckRow& r : run_gradcheck(seed)) {
          py::dict d;
          d["group"] = r.group;
          d["max_rel_err"] = r.max_rel_err;
          d["pass"] = r.pass;
          rows.append(std::move(d));
        }
        return rows;
      },
      py::arg("seed") = 0,
      "Finite-difference check of every parameter group.");
}
