#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "egograph/features.hpp"
#include "egograph/geometry.hpp"
#include "egograph/model.hpp"

namespace egograph {

// Thing classes: 0=car, 1=person, 2=bicycle.
const std::vector<std::string>& thing_class_names();
// Stuff classes: 0=road (always near, never label-bearing), then one class
// per goal: 1=lane_marking, 2=service_lane, 3=crosswalk, 4=lane_separator.
const std::vector<std::string>& stuff_class_names();
// Goal classes: 0=background, then one per label-bearing stuff class (same id).
const std::vector<std::string>& goal_class_names();
// Cause classes: 0=background, 1=stop_for_crossing_vehicle,
// 2=deviate_for_parked_vehicle.
const std::vector<std::string>& cause_class_names();

constexpr int kModifierNeutral = 0;
constexpr int kModifierCrossing = 1;
constexpr int kModifierParked = 2;

struct SceneSpec {
  int frames = 10;
  int image_width = 64;
  int image_height = 64;
  int feat_width = 16;
  int feat_height = 16;
  int channels = 32;
  int n_things = 5;
  int n_stuff = 5;
  int goal_label = 0;
  int cause_label = 0;
  int causal_thing = 0;       // which thing carries the cause interaction
  bool causal_in_range = true;  // false keeps it out of range -> background
  std::uint64_t seed = 0;         // per-clip randomness
  std::uint64_t dataset_seed = 0; // class signature vectors, shared per dataset
};

/// One generated clip: feature map, detections, masks, depth, intrinsics and
/// the emitted labels (clip-uniform over frames).
struct SceneClip {
  SceneSpec spec;
  FeatureMap features;
  std::vector<std::vector<BoundingBox>> boxes;  // [frame][thing]
  std::vector<int> thing_modifiers;             // per thing
  std::vector<StuffMask> masks;                 // static across frames
  std::vector<DepthMap> depth;                  // per frame
  CameraIntrinsics intrinsics;
  int goal_label = 0;
  int cause_label = 0;
  int causal_thing = 0;
};

/// Deterministic for a fixed spec. The label is decidable only through the
/// planted 3D relation: object appearance and painted areas are identical
/// across labels, only distances to ego differ. Throws std::invalid_argument
/// on specs the layout cannot host.
SceneClip generate_clip(const SceneSpec& spec);

struct LabelCheck {
  int goal = 0;
  int cause = 0;
};

/// Re-derives the labels from raw clip data (boxes, masks, depth,
/// intrinsics) alone; generate_clip self-checks against this.
LabelCheck check_labels(const SceneClip& clip, double mu_thing = 3.0,
                        double mu_stuff = 0.8);

void save_clip(const SceneClip& clip, const std::string& path);
SceneClip load_clip(const std::string& path);

struct DatasetReport {
  std::vector<int> train_goal_counts;   // clips per goal class
  std::vector<int> train_cause_counts;
  std::vector<int> eval_goal_counts;
  std::vector<int> eval_cause_counts;
  int n_train = 0;
  int n_eval = 0;
  int frames_per_clip = 0;
};

/// Writes train/ and eval/ clip files under out_dir plus balance.json.
/// Labels cycle round-robin over the goal x cause grid; split seeds are
/// disjoint.
DatasetReport make_dataset(const std::string& out_dir, int n_train, int n_eval,
                           std::uint64_t seed, const SceneSpec& base);

/// Paths of all clip files in a dataset directory, sorted by name.
std::vector<std::string> list_clips(const std::string& dir);

/// Reduce a clip to graph inputs: per-frame node sets (top-K boxes + ego,
/// stuff masks + ego), stuff min-distances, and the clip-mean global feature.
PreparedClip prepare_clip(const SceneClip& clip, int top_k = 20,
                          int roi_grid = 7);

}  // namespace egograph
