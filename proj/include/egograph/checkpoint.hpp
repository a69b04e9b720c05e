#pragma once

#include <string>

#include <json.hpp>

#include "egograph/model.hpp"
#include "egograph/training.hpp"

namespace egograph {

/// On-disk model state: named f32 tensors plus optimizer moments, a config
/// snapshot and the iteration count. save(load(save(x))) is byte-identical.
struct CheckpointData {
  ModelParams params;
  std::vector<std::pair<std::string, AdamState>> moments;  // by tensor name
  nlohmann::json config;
  long long iteration = 0;
};

void save_checkpoint(const std::string& path, const ModelParams& params,
                     const Adam* optimizer, const nlohmann::json& config,
                     long long iteration);

CheckpointData load_checkpoint(const std::string& path,
                               Precision prec = Precision::f32);

/// Copies saved moments and the step count into a freshly built optimizer.
void restore_optimizer(Adam& optimizer, const CheckpointData& ckpt);

}  // namespace egograph
