#include "egograph/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace egograph {

using nlohmann::json;

namespace {

constexpr char kMagic[4] = {'E', 'G', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

void write_raw(std::ofstream& f, const void* p, std::size_t n) {
  f.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

void read_raw(std::ifstream& f, void* p, std::size_t n) {
  f.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (!f) throw std::runtime_error("checkpoint file truncated");
}

void write_f32(std::ofstream& f, const std::vector<double>& v) {
  std::vector<float> buf(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) buf[i] = static_cast<float>(v[i]);
  write_raw(f, buf.data(), buf.size() * sizeof(float));
}

std::vector<double> read_f32(std::ifstream& f, std::size_t n) {
  std::vector<float> buf(n);
  read_raw(f, buf.data(), n * sizeof(float));
  return std::vector<double>(buf.begin(), buf.end());
}

}  // namespace

void save_checkpoint(const std::string& path, const ModelParams& params,
                     const Adam* optimizer, const json& config,
                     long long iteration) {
  const auto named = params.named();

  json manifest;
  manifest["version"] = kVersion;
  manifest["iteration"] = iteration;
  manifest["config"] = config;
  manifest["model_shape"] = {{"dim", params.shape.dim},
                             {"frames", params.shape.frames},
                             {"n_goal", params.shape.n_goal},
                             {"n_cause", params.shape.n_cause}};
  manifest["has_moments"] = optimizer != nullptr;
  json tensors = json::array();
  std::size_t offset = 0;
  for (const auto& [name, t] : named) {
    tensors.push_back(
        {{"name", name}, {"shape", t.shape()}, {"offset", offset}, {"size", t.numel()}});
    offset += t.numel();
  }
  manifest["tensors"] = std::move(tensors);
  const std::string manifest_str = manifest.dump();

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write checkpoint: " + path);
  write_raw(f, kMagic, 4);
  const std::uint32_t version = kVersion;
  write_raw(f, &version, 4);
  const std::uint64_t mlen = manifest_str.size();
  write_raw(f, &mlen, 8);
  write_raw(f, manifest_str.data(), manifest_str.size());

  for (const auto& [name, t] : named) write_f32(f, t.data());
  if (optimizer) {
    if (optimizer->size() != named.size())
      throw std::invalid_argument("save_checkpoint: optimizer/parameter list mismatch");
    for (std::size_t i = 0; i < optimizer->size(); ++i) {
      const AdamState& s = optimizer->state(i);
      std::vector<double> m = s.m, v = s.v;
      if (m.empty()) m.assign(named[i].second.numel(), 0.0);
      if (v.empty()) v.assign(named[i].second.numel(), 0.0);
      write_f32(f, m);
      write_f32(f, v);
    }
  }
  if (!f) throw std::runtime_error("checkpoint write failed: " + path);
}

CheckpointData load_checkpoint(const std::string& path, Precision prec) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open checkpoint: " + path);
  char magic[4];
  read_raw(f, magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("not a checkpoint file: " + path);
  std::uint32_t version = 0;
  read_raw(f, &version, 4);
  if (version != kVersion)
    throw std::runtime_error("unsupported checkpoint version " +
                             std::to_string(version));
  std::uint64_t mlen = 0;
  read_raw(f, &mlen, 8);
  std::string manifest_str(mlen, '\0');
  read_raw(f, manifest_str.data(), mlen);
  const json manifest = json::parse(manifest_str);

  CheckpointData out;
  out.iteration = manifest.at("iteration").get<long long>();
  out.config = manifest.at("config");

  ModelShape shape;
  const json& ms = manifest.at("model_shape");
  shape.dim = ms.at("dim").get<std::size_t>();
  shape.frames = ms.at("frames").get<std::size_t>();
  shape.n_goal = ms.at("n_goal").get<std::size_t>();
  shape.n_cause = ms.at("n_cause").get<std::size_t>();
  out.params = make_model_params(shape, 0, prec);

  const auto named = out.params.named();
  const json& tensors = manifest.at("tensors");
  if (tensors.size() != named.size())
    throw std::runtime_error("checkpoint tensor list mismatch: " + path);
  for (std::size_t i = 0; i < named.size(); ++i) {
    const json& entry = tensors[i];
    if (entry.at("name").get<std::string>() != named[i].first)
      throw std::runtime_error("checkpoint tensor order mismatch at " +
                               named[i].first);
    const Shape shp = entry.at("shape").get<Shape>();
    Tensor t = named[i].second;
    if (shp != t.shape())
      throw std::runtime_error("checkpoint shape mismatch at " + named[i].first +
                               ": " + shape_str(shp) + " vs " +
                               shape_str(t.shape()));
    const std::vector<double> vals = read_f32(f, t.numel());
    for (std::size_t k = 0; k < vals.size(); ++k) t.set(k, vals[k]);
  }

  if (manifest.at("has_moments").get<bool>()) {
    for (const auto& [name, t] : named) {
      AdamState s;
      s.m = read_f32(f, t.numel());
      s.v = read_f32(f, t.numel());
      out.moments.emplace_back(name, std::move(s));
    }
  }
  return out;
}

void restore_optimizer(Adam& optimizer, const CheckpointData& ckpt) {
  if (ckpt.moments.empty())
    throw std::runtime_error("restore_optimizer: checkpoint has no moments");
  if (optimizer.size() != ckpt.moments.size())
    throw std::runtime_error("restore_optimizer: parameter count mismatch");
  for (std::size_t i = 0; i < optimizer.size(); ++i) {
    if (optimizer.name(i) != ckpt.moments[i].first)
      throw std::runtime_error("restore_optimizer: name mismatch at " +
                               optimizer.name(i));
    optimizer.state(i) = ckpt.moments[i].second;
  }
  optimizer.set_steps(ckpt.iteration);
}

}  // namespace egograph
