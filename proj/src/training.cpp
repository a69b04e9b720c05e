#include "egograph/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "egograph/rng.hpp"
#include "egograph/scenes.hpp"

namespace egograph {

void adam_step(Tensor& param, const std::vector<double>& grad, AdamState& state,
               const AdamConfig& cfg, long long t) {
  const std::size_t n = param.numel();
  if (grad.size() != n)
    throw ShapeError("adam_step: gradient size " + std::to_string(grad.size()) +
                     " vs parameter " + std::to_string(n));
  if (state.m.empty()) state.m.assign(n, 0.0);
  if (state.v.empty()) state.v.assign(n, 0.0);
  if (state.m.size() != n || state.v.size() != n)
    throw ShapeError("adam_step: moment size mismatch");
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < n; ++i) {
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * grad[i];
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
    const double mhat = state.m[i] / bc1;
    const double vhat = state.v[i] / bc2;
    param.set(i, param.at(i) - cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps));
  }
}

Adam::Adam(const AdamConfig& cfg,
           std::vector<std::pair<std::string, Tensor>> params)
    : cfg_(cfg), params_(std::move(params)) {
  states_.resize(params_.size());
}

void Adam::step() {
  ++t_;
  std::vector<double> zeros;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& p = params_[i].second;
    if (p.grad_allocated()) {
      adam_step(p, p.grad(), states_[i], cfg_, t_);
    } else {
      zeros.assign(p.numel(), 0.0);
      adam_step(p, zeros, states_[i], cfg_, t_);
    }
  }
}

TrainResult train(const TrainConfig& cfg, const std::vector<PreparedClip>& clips,
                  const ModelParams& params) {
  if (clips.empty()) throw std::invalid_argument("train: dataset is empty");
  if (cfg.lr <= 0.0) throw std::invalid_argument("train: lr must be positive");
  if (cfg.batch_size < 1 || cfg.iterations < 0)
    throw std::invalid_argument("train: bad batch size or iteration count");
  if (cfg.stage != 1 && cfg.stage != 2)
    throw std::invalid_argument("train: stage must be 1 or 2");

  ForwardOptions opts;
  opts.use_graphs = cfg.stage == 2;
  opts.fusion = cfg.fusion;
  opts.mu_thing = cfg.mu_thing;
  opts.mu_stuff = cfg.mu_stuff;

  TrainResult result;
  result.params = params.clone();
  AdamConfig acfg;
  acfg.lr = cfg.lr;
  result.optimizer = Adam(acfg, result.params.named());
  result.metrics.reserve(cfg.iterations);

  Rng batch_rng = Rng(cfg.seed).fork(0xBA7C);
  for (int iter = 0; iter < cfg.iterations; ++iter) {
    Tape tape(cfg.precision);
    Tensor total;
    double goal_sum = 0.0, cause_sum = 0.0;
    for (int b = 0; b < cfg.batch_size; ++b) {
      const std::size_t idx = batch_rng.below(clips.size());
      const PreparedClip& clip = clips[idx];
      ClipForward fwd = forward_clip(tape, result.params, clip, opts);
      Tensor goal = tape.cross_entropy(fwd.goal_logits,
                                       static_cast<std::size_t>(clip.goal_label));
      Tensor cause = tape.cross_entropy(
          fwd.cause_logits, static_cast<std::size_t>(clip.cause_label));
      goal_sum += goal.item();
      cause_sum += cause.item();
      Tensor item = tape.add(goal, cause);
      total = total.defined() ? tape.add(total, item) : item;
    }
    total = tape.scale(total, 1.0 / cfg.batch_size);
    if (!std::isfinite(total.item()))
      throw NumericError("train: non-finite loss at iteration " +
                         std::to_string(iter));
    tape.backward(total);
    result.optimizer.step();
    result.metrics.push_back({iter, total.item(), goal_sum / cfg.batch_size,
                              cause_sum / cfg.batch_size});
  }
  return result;
}

std::optional<double> average_precision(const std::vector<double>& scores,
                                        const std::vector<bool>& positives) {
  if (scores.size() != positives.size())
    throw std::invalid_argument("average_precision: size mismatch");
  if (scores.empty())
    throw std::invalid_argument("average_precision: empty input");
  const std::size_t total_pos =
      static_cast<std::size_t>(std::count(positives.begin(), positives.end(), true));
  if (total_pos == 0) return std::nullopt;

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) {
                     return scores[a] > scores[b];
                   });
  double sum = 0.0;
  std::size_t hits = 0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    if (positives[order[k]]) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(k + 1);
    }
  }
  return sum / static_cast<double>(total_pos);
}

namespace {

std::vector<double> softmax_vector(const Tensor& logits) {
  std::vector<double> p(logits.numel());
  double m = logits.at(0);
  for (std::size_t i = 1; i < p.size(); ++i) m = std::max(m, logits.at(i));
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] = std::exp(logits.at(i) - m);
    s += p[i];
  }
  for (double& x : p) x /= s;
  return p;
}

HeadReport score_head(const std::string& head_name,
                      const std::vector<std::string>& class_names,
                      const std::vector<std::vector<double>>& clip_probs,
                      const std::vector<int>& clip_labels,
                      const std::vector<std::size_t>& clip_frames) {
  HeadReport report;
  report.head = head_name;
  const std::size_t n_class = class_names.size();
  for (std::size_t c = 0; c < n_class; ++c) {
    std::vector<double> scores;
    std::vector<bool> pos;
    for (std::size_t i = 0; i < clip_probs.size(); ++i) {
      for (std::size_t f = 0; f < clip_frames[i]; ++f) {
        scores.push_back(clip_probs[i][c]);
        pos.push_back(clip_labels[i] == static_cast<int>(c));
      }
    }
    ClassAp row;
    row.class_id = static_cast<int>(c);
    row.name = class_names[c];
    row.positives = static_cast<std::size_t>(std::count(pos.begin(), pos.end(), true));
    row.ap = average_precision(scores, pos);
    report.classes.push_back(std::move(row));
  }
  // Background (class 0) is excluded from the head's mAP; classes without
  // positives are skipped.
  double sum = 0.0;
  int counted = 0;
  for (std::size_t c = 1; c < report.classes.size(); ++c) {
    if (!report.classes[c].ap) continue;
    sum += *report.classes[c].ap;
    ++counted;
  }
  report.counted = counted;
  report.map = counted ? sum / counted : 0.0;
  return report;
}

}  // namespace

EvalReport evaluate(const ModelParams& params,
                    const std::vector<PreparedClip>& clips,
                    const ForwardOptions& opts, Precision prec) {
  std::vector<std::vector<double>> goal_probs, cause_probs;
  std::vector<int> goal_labels, cause_labels;
  std::vector<std::size_t> frames;
  std::size_t total_frames = 0;
  for (const PreparedClip& clip : clips) {
    Tape tape(prec);
    ClipForward fwd = forward_clip(tape, params, clip, opts);
    goal_probs.push_back(softmax_vector(fwd.goal_logits));
    cause_probs.push_back(softmax_vector(fwd.cause_logits));
    goal_labels.push_back(clip.goal_label);
    cause_labels.push_back(clip.cause_label);
    const std::size_t t = clip.thing_nodes.empty() ? 1 : clip.thing_nodes.size();
    frames.push_back(t);
    total_frames += t;
  }
  EvalReport report;
  report.goal = score_head("goal", goal_class_names(), goal_probs, goal_labels,
                           frames);
  report.cause = score_head("cause", cause_class_names(), cause_probs,
                            cause_labels, frames);
  report.frames = total_frames;
  report.mean_map = 0.5 * (report.goal.map + report.cause.map);
  return report;
}

namespace {

double loss_for_gradcheck(const ModelParams& params,
                          const std::vector<PreparedClip>& clips,
                          const ForwardOptions& opts, Tensor* out_loss,
                          Tape* out_tape) {
  Tape local;
  Tape& tape = out_tape ? *out_tape : local;
  Tensor total;
  for (const PreparedClip& clip : clips) {
    ClipForward fwd = forward_clip(tape, params, clip, opts);
    Tensor l = clip_loss(tape, fwd, clip);
    total = total.defined() ? tape.add(total, l) : l;
  }
  total = tape.scale(total, 1.0 / clips.size());
  if (out_loss) *out_loss = total;
  return total.item();
}

}  // namespace

std::vector<GradCheckRow> run_gradcheck(std::uint64_t seed) {
  SceneSpec spec;
  spec.frames = 6;
  spec.channels = 16;
  spec.n_things = 4;
  spec.dataset_seed = seed;

  std::vector<PreparedClip> clips;
  {
    SceneSpec a = spec;
    a.goal_label = 2;
    a.cause_label = 1;
    a.causal_thing = 0;
    a.seed = Rng(seed).fork(1).next_u64();
    clips.push_back(prepare_clip(generate_clip(a)));
    SceneSpec b = spec;
    b.goal_label = 4;
    b.cause_label = 2;
    b.causal_thing = 2;
    b.seed = Rng(seed).fork(2).next_u64();
    clips.push_back(prepare_clip(generate_clip(b)));
  }

  ModelShape shape;
  shape.dim = spec.channels;
  shape.frames = spec.frames;
  ModelParams params = make_model_params(shape, seed, Precision::f64);

  // The head rows that read the graph feature start at zero, which would
  // silence every upstream gradient and make half the check vacuous.
  // Randomize them so each group sees a live signal.
  Rng head_rng = Rng(seed).fork(9);
  for (Tensor* w : {&params.goal.weight, &params.cause.weight})
    for (std::size_t i = 0; i < static_cast<std::size_t>(shape.dim) * w->cols(); ++i)
      w->set(i, head_rng.uniform(-0.3, 0.3));

  ForwardOptions opts;
  opts.use_graphs = true;
  opts.fusion = FusionMode::mlp;  // puts the temporal MLP on the tape too

  Tape tape;
  Tensor loss;
  loss_for_gradcheck(params, clips, opts, &loss, &tape);
  tape.backward(loss);

  std::vector<GradCheckRow> rows;
  const double h = 1e-5;
  for (auto& [name, tensor] : params.named()) {
    GradCheckRow row;
    row.group = name;
    std::vector<double> analytic = tensor.grad_allocated()
                                       ? tensor.grad()
                                       : std::vector<double>(tensor.numel(), 0.0);
    const std::size_t n = tensor.numel();
    const std::size_t stride = std::max<std::size_t>(1, n / 8);
    for (std::size_t i = 0; i < n; i += stride) {
      const double old = tensor.at(i);
      tensor.values()[i] = old + h;
      const double lp = loss_for_gradcheck(params, clips, opts, nullptr, nullptr);
      tensor.values()[i] = old - h;
      const double lm = loss_for_gradcheck(params, clips, opts, nullptr, nullptr);
      tensor.values()[i] = old;
      const double fd = (lp - lm) / (2.0 * h);
      const double rel =
          std::fabs(fd - analytic[i]) / (std::fabs(fd) + std::fabs(analytic[i]) + 1e-8);
      row.max_rel_err = std::max(row.max_rel_err, rel);
    }
    row.pass = row.max_rel_err < 1e-3;
    rows.push_back(std::move(row));
  }
  return rows;
}

bool gradcheck_passed(const std::vector<GradCheckRow>& rows) {
  return !rows.empty() &&
         std::all_of(rows.begin(), rows.end(),
                     [](const GradCheckRow& r) { return r.pass; });
}

}  // namespace egograph
