#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "egograph/model.hpp"

namespace egograph {

struct AdamConfig {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
};

/// One bias-corrected Adam update (step count t starts at 1). An empty state
/// is zero-initialized to the parameter's size.
void adam_step(Tensor& param, const std::vector<double>& grad, AdamState& state,
               const AdamConfig& cfg, long long t);

/// Adam over a named parameter list. Parameters whose gradient was never
/// populated in the current iteration are treated as having zero gradient.
class Adam {
 public:
  Adam() = default;
  Adam(const AdamConfig& cfg,
       std::vector<std::pair<std::string, Tensor>> params);

  void step();
  long long steps() const { return t_; }
  void set_steps(long long t) { t_ = t; }

  std::size_t size() const { return params_.size(); }
  const std::string& name(std::size_t i) const { return params_[i].first; }
  const AdamState& state(std::size_t i) const { return states_[i]; }
  AdamState& state(std::size_t i) { return states_[i]; }

 private:
  AdamConfig cfg_;
  long long t_ = 0;
  std::vector<std::pair<std::string, Tensor>> params_;
  std::vector<AdamState> states_;
};

struct TrainConfig {
  int stage = 1;
  double lr = 0.001;
  int batch_size = 8;
  int iterations = 2000;
  std::uint64_t seed = 0;
  FusionMode fusion = FusionMode::max;
  double mu_thing = 3.0;
  double mu_stuff = 0.8;
  Precision precision = Precision::f32;
};

struct MetricRow {
  int iteration = 0;
  double loss = 0.0;
  double goal_loss = 0.0;
  double cause_loss = 0.0;
};

struct TrainResult {
  ModelParams params;
  Adam optimizer;
  std::vector<MetricRow> metrics;
};

/// Mini-batch training over prepared clips. Stage 1 runs the no-graph path
/// (graph ego feature held at zero); stage 2 trains everything. Sampling and
/// gradient accumulation order are fixed by the seed, so loss trajectories
/// are reproducible. The given params are cloned, never mutated. Throws
/// NumericError when the loss goes non-finite.
TrainResult train(const TrainConfig& cfg, const std::vector<PreparedClip>& clips,
                  const ModelParams& params);

/// Non-interpolated AP: sort by score descending (stable), average
/// precision@k over the positive ranks. Empty-positive input returns nullopt
/// (class skipped upstream).
std::optional<double> average_precision(const std::vector<double>& scores,
                                        const std::vector<bool>& positives);

struct ClassAp {
  int class_id = 0;
  std::string name;
  std::optional<double> ap;  // nullopt: no positives, skipped
  std::size_t positives = 0;
};

struct HeadReport {
  std::string head;
  std::vector<ClassAp> classes;
  double map = 0.0;  // mean AP over the non-background classes with positives
  int counted = 0;
};

struct EvalReport {
  HeadReport goal;
  HeadReport cause;
  std::size_t frames = 0;
  double mean_map = 0.0;  // mean of the two heads
};

/// Runs the model over every clip; each clip's softmax distribution is
/// replicated across its frames (labels are clip-uniform) and scored with
/// per-class one-vs-rest AP.
EvalReport evaluate(const ModelParams& params,
                    const std::vector<PreparedClip>& clips,
                    const ForwardOptions& opts,
                    Precision prec = Precision::f32);

struct GradCheckRow {
  std::string group;
  double max_rel_err = 0.0;
  bool pass = false;
};

/// Central finite-difference check of every parameter group against the
/// tape gradients, at f64 on a small generated scene batch. Relative error
/// is |fd - grad| / (|fd| + |grad| + 1e-8), threshold 1e-3.
std::vector<GradCheckRow> run_gradcheck(std::uint64_t seed);

bool gradcheck_passed(const std::vector<GradCheckRow>& rows);

}  // namespace egograph
