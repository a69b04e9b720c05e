#include "egograph/scenes.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace egograph {

namespace fs = std::filesystem;
using nlohmann::json;

const std::vector<std::string>& thing_class_names() {
  static const std::vector<std::string> names = {"car", "person", "bicycle"};
  return names;
}

const std::vector<std::string>& stuff_class_names() {
  static const std::vector<std::string> names = {
      "road", "lane_marking", "service_lane", "crosswalk", "lane_separator"};
  return names;
}

const std::vector<std::string>& goal_class_names() {
  static const std::vector<std::string> names = {
      "background", "lane_change", "lane_branch", "crosswalk_passing", "merge"};
  return names;
}

const std::vector<std::string>& cause_class_names() {
  static const std::vector<std::string> names = {
      "background", "stop_for_crossing_vehicle", "deviate_for_parked_vehicle"};
  return names;
}

namespace {

constexpr double kNearDepth = 0.6;
constexpr double kFarDepth = 8.0;

// Distance bands around the gates (mu_thing 3.0, mu_stuff 0.8), with margin
// so float32 depth storage cannot flip a gate decision.
constexpr double kThingNearLo = 1.2, kThingNearHi = 2.6;
constexpr double kThingFarLo = 3.6, kThingFarHi = 6.5;
constexpr double kStuffNearLo = 0.45, kStuffNearHi = 0.7;
constexpr double kStuffFarLo = 1.4, kStuffFarHi = 2.8;

double ground_depth(int v, int height) {
  return kNearDepth + (kFarDepth - kNearDepth) *
                          static_cast<double>(height - 1 - v) / (height - 1);
}

/// Fixed scene layout in feature-cell units (one cell = ratio x ratio image
/// pixels): a thing zone on top, four one-cell-high stuff strips below it, a
/// buffer row, and the road block at the bottom.
struct Layout {
  int ratio;             // image pixels per feature cell
  int strip_rows[4];     // feature row of each label-bearing stuff strip
  int road_row0;         // first feature row of the road block
  std::vector<std::pair<int, int>> thing_cells;  // base (cx, cy) per slot
};

Layout plan_layout(const SceneSpec& spec) {
  if (spec.image_width % spec.feat_width != 0 ||
      spec.image_height % spec.feat_height != 0 ||
      spec.image_width / spec.feat_width != spec.image_height / spec.feat_height)
    throw std::invalid_argument("generate_clip: image dims must be an integer "
                                "multiple of feature dims");
  Layout lay;
  lay.ratio = spec.image_width / spec.feat_width;
  if (lay.ratio < 3)
    throw std::invalid_argument("generate_clip: image/feature ratio must be >= 3");
  if (spec.feat_height < 12 || spec.feat_width < 4)
    throw std::invalid_argument("generate_clip: feature map too small");
  if (spec.frames < 6)
    throw std::invalid_argument("generate_clip: need at least 6 frames");
  if (spec.n_stuff != static_cast<int>(stuff_class_names().size()))
    throw std::invalid_argument("generate_clip: n_stuff must be 5");
  if (spec.channels < 4)
    throw std::invalid_argument("generate_clip: need at least 4 channels");

  lay.road_row0 = spec.feat_height - 4;
  const int strip0 = spec.feat_height - 9;
  for (int s = 0; s < 4; ++s) lay.strip_rows[s] = strip0 + s;

  // Thing slots: 2x2-cell boxes with one spare cell of jitter, spaced three
  // cells apart so jittered boxes never touch.
  const int zone_rows = strip0 - 1;  // feature rows 0..zone_rows-1
  for (int cy = 1; cy + 3 <= zone_rows; cy += 3)
    for (int cx = 1; cx + 3 <= spec.feat_width; cx += 3)
      lay.thing_cells.emplace_back(cx, cy);
  if (spec.n_things < 3 ||
      spec.n_things > static_cast<int>(lay.thing_cells.size()))
    throw std::invalid_argument(
        "generate_clip: n_things must be in [3, " +
        std::to_string(lay.thing_cells.size()) + "] for this layout");
  if (spec.goal_label < 0 ||
      spec.goal_label >= static_cast<int>(goal_class_names().size()))
    throw std::invalid_argument("generate_clip: bad goal label");
  if (spec.cause_label < 0 ||
      spec.cause_label >= static_cast<int>(cause_class_names().size()))
    throw std::invalid_argument("generate_clip: bad cause label");
  if (spec.causal_thing < 0 || spec.causal_thing >= spec.n_things)
    throw std::invalid_argument("generate_clip: bad causal thing index");
  return lay;
}

std::vector<double> unit_signature(Rng rng, int channels) {
  std::vector<double> v(channels);
  double norm = 0.0;
  for (double& x : v) {
    x = rng.normal();
    norm += x * x;
  }
  norm = std::sqrt(norm);
  if (norm < 1e-12) {
    v.assign(channels, 0.0);
    v[0] = 1.0;
    return v;
  }
  for (double& x : v) x /= norm;
  return v;
}

struct SignatureTable {
  std::vector<std::vector<double>> thing;     // per thing class
  std::vector<std::vector<double>> stuff;     // per stuff class
  std::vector<std::vector<double>> modifier;  // neutral unused, crossing, parked
};

SignatureTable make_signatures(std::uint64_t dataset_seed, int channels) {
  Rng root(dataset_seed);
  SignatureTable t;
  for (std::size_t k = 0; k < thing_class_names().size(); ++k)
    t.thing.push_back(unit_signature(root.fork(7000 + k), channels));
  for (std::size_t k = 0; k < stuff_class_names().size(); ++k)
    t.stuff.push_back(unit_signature(root.fork(7100 + k), channels));
  t.modifier.resize(3);
  t.modifier[kModifierCrossing] = unit_signature(root.fork(7200), channels);
  t.modifier[kModifierParked] = unit_signature(root.fork(7201), channels);
  return t;
}

/// Depth at the box center pixel that puts the unprojected point at exactly
/// `dist` from the ego point.
double solve_thing_depth(int u, int v, const CameraIntrinsics& intr,
                         const Point3& ego, double dist) {
  const double rx = (u - intr.cx) / intr.fx;
  const double ry = (v - intr.cy) / intr.fy;
  const double a = rx * rx + ry * ry + 1.0;
  const double re = rx * ego.x + ry * ego.y + ego.z;
  const double c = ego.x * ego.x + ego.y * ego.y + ego.z * ego.z - dist * dist;
  const double disc = re * re - a * c;
  if (disc < 0.0)
    throw std::logic_error("solve_thing_depth: target distance unreachable");
  const double delta = (re + std::sqrt(disc)) / a;
  if (delta <= 0.01 || delta > 100.0)
    throw std::logic_error("solve_thing_depth: depth out of range");
  return delta;
}

void paint_depth_rect(DepthMap& depth, int x0, int y0, int x1, int y1,
                      double value) {
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x)
      depth.values[static_cast<std::size_t>(y) * depth.width + x] =
          static_cast<float>(value);
}

/// Strip depth that puts the strip's minimum mask-pixel distance at exactly
/// `target`. Bisection against the real distance routine on the live depth
/// map; leaves the solved depth painted.
void solve_strip_depth(DepthMap& depth, int x0, int y0, int x1, int y1,
                       const DownsampledMask& ds, const CameraIntrinsics& intr,
                       const Point3& ego, double target) {
  auto dist_at = [&](double delta) {
    paint_depth_rect(depth, x0, y0, x1, y1, delta);
    return stuff_min_distance(ds, depth, intr, ego);
  };
  double lo = 0.72, hi = 60.0;
  if (dist_at(lo) >= target)
    throw std::logic_error("solve_strip_depth: target below reachable range");
  if (dist_at(hi) <= target)
    throw std::logic_error("solve_strip_depth: target above reachable range");
  for (int it = 0; it < 64; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (dist_at(mid) < target)
      lo = mid;
    else
      hi = mid;
  }
  dist_at(0.5 * (lo + hi));
}

/// Frames [t0, t1] (inclusive) that keep the first and last frame out of
/// range.
std::pair<int, int> pick_window(Rng& rng, int frames) {
  const int t0 = 2 + static_cast<int>(rng.below(frames - 5));  // 2..T-4
  const int max_len = frames - 2 - t0;
  const int len = 2 + static_cast<int>(rng.below(std::min(3, max_len - 1)));
  return {t0, t0 + len - 1};
}

void add_signature(FeatureMap& fm, int t, int cx0, int cy0, int cx1, int cy1,
                   const std::vector<double>& sig, double scale) {
  for (int y = cy0; y < cy1; ++y)
    for (int x = cx0; x < cx1; ++x)
      for (int d = 0; d < fm.channels; ++d)
        fm.values[fm.index(t, x, y, d)] +=
            static_cast<float>(scale * sig[static_cast<std::size_t>(d)]);
}

}  // namespace

SceneClip generate_clip(const SceneSpec& spec) {
  const Layout lay = plan_layout(spec);
  const SignatureTable sigs = make_signatures(spec.dataset_seed, spec.channels);
  Rng clip_rng(spec.seed);

  SceneClip clip;
  clip.spec = spec;
  clip.intrinsics = {static_cast<double>(spec.image_width),
                     static_cast<double>(spec.image_width),
                     spec.image_width / 2.0, spec.image_height / 2.0};
  clip.causal_thing = spec.causal_thing;
  clip.goal_label = spec.goal_label;
  clip.cause_label =
      (spec.cause_label != 0 && spec.causal_in_range) ? spec.cause_label : 0;

  const int T = spec.frames;
  const int W = spec.image_width, H = spec.image_height;
  const int FW = spec.feat_width, FH = spec.feat_height;
  const int R = lay.ratio;

  // Modifier tags: the causal thing carries the tag its cause label needs;
  // the complementary tag goes to a fixed other thing so every clip contains
  // both tagged appearances.
  clip.thing_modifiers.assign(spec.n_things, kModifierNeutral);
  int idx_cross = 0, idx_park = 1;
  if (spec.cause_label == 1) {
    idx_cross = spec.causal_thing;
    idx_park = (idx_cross + 1) % spec.n_things;
  } else if (spec.cause_label == 2) {
    idx_park = spec.causal_thing;
    idx_cross = (idx_park + 1) % spec.n_things;
  }
  clip.thing_modifiers[idx_cross] = kModifierCrossing;
  clip.thing_modifiers[idx_park] = kModifierParked;

  std::vector<int> thing_classes(spec.n_things);
  for (int i = 0; i < spec.n_things; ++i)
    thing_classes[i] = i % static_cast<int>(thing_class_names().size());

  // Stuff masks: road block plus four one-cell-high strips covering
  // ratio-1 of their ratio image rows (enough for 50% block coverage).
  for (int s = 0; s < spec.n_stuff; ++s) {
    StuffMask m;
    m.width = W;
    m.height = H;
    m.class_id = s;
    m.values.assign(static_cast<std::size_t>(W) * H, 0);
    if (s == 0) {
      for (int y = lay.road_row0 * R; y < H; ++y)
        for (int x = 0; x < W; ++x) m.values[static_cast<std::size_t>(y) * W + x] = 1;
    } else {
      const int y0 = lay.strip_rows[s - 1] * R;
      for (int y = y0; y < y0 + R - 1; ++y)
        for (int x = 0; x < W; ++x) m.values[static_cast<std::size_t>(y) * W + x] = 1;
    }
    clip.masks.push_back(std::move(m));
  }
  std::vector<DownsampledMask> ds;
  ds.reserve(clip.masks.size());
  for (const StuffMask& m : clip.masks) ds.push_back(downsample_mask(m, FW, FH));

  // Interaction windows. A neutral competitor comes near in half of all
  // clips, independent of the labels, so "something is close" alone never
  // identifies the cause class.
  Rng win_rng = clip_rng.fork(1);
  const auto goal_window = pick_window(win_rng, T);
  const auto cause_window = pick_window(win_rng, T);
  const bool want_cause = spec.cause_label != 0 && spec.causal_in_range;
  const bool competitor_near = win_rng.uniform() < 0.5 && spec.n_things > 2;
  int competitor = -1;
  if (competitor_near) {
    std::vector<int> neutrals;
    for (int i = 0; i < spec.n_things; ++i)
      if (clip.thing_modifiers[i] == kModifierNeutral) neutrals.push_back(i);
    competitor = neutrals[win_rng.below(neutrals.size())];
  }
  const auto competitor_window = pick_window(win_rng, T);

  // Feature map and per-frame depth/boxes.
  clip.features.frames = T;
  clip.features.width = FW;
  clip.features.height = FH;
  clip.features.channels = spec.channels;
  clip.features.source_width = W;
  clip.features.source_height = H;
  clip.features.values.assign(
      static_cast<std::size_t>(T) * FW * FH * spec.channels, 0.0f);

  clip.boxes.resize(T);
  clip.depth.reserve(T);

  for (int t = 0; t < T; ++t) {
    DepthMap depth;
    depth.width = W;
    depth.height = H;
    depth.values.resize(static_cast<std::size_t>(W) * H);
    for (int y = 0; y < H; ++y) {
      const float g = static_cast<float>(ground_depth(y, H));
      for (int x = 0; x < W; ++x)
        depth.values[static_cast<std::size_t>(y) * W + x] = g;
    }
    const Point3 ego = ego_location(depth, clip.intrinsics);

    // Noise first, signatures added on top.
    Rng noise_rng = clip_rng.fork(100 + t);
    for (int y = 0; y < FH; ++y)
      for (int x = 0; x < FW; ++x)
        for (int d = 0; d < spec.channels; ++d)
          clip.features.values[clip.features.index(t, x, y, d)] =
              static_cast<float>(0.1 * noise_rng.normal());

    // Stuff: paint depth to hit the per-frame min-distance target, then the
    // signature over the downsampled footprint.
    Rng stuff_rng = clip_rng.fork(200 + t);
    for (int s = 0; s < spec.n_stuff; ++s) {
      if (s == 0) {
        for (int y = lay.road_row0; y < FH; ++y)
          add_signature(clip.features, t, 0, y, FW, y + 1, sigs.stuff[0], 1.0);
        continue;
      }
      const bool near = spec.goal_label == s && t >= goal_window.first &&
                        t <= goal_window.second;
      const double target = near ? stuff_rng.uniform(kStuffNearLo, kStuffNearHi)
                                 : stuff_rng.uniform(kStuffFarLo, kStuffFarHi);
      const int fy = lay.strip_rows[s - 1];
      solve_strip_depth(depth, 0, fy * R, W, fy * R + R - 1, ds[s],
                        clip.intrinsics, ego, target);
      add_signature(clip.features, t, 0, fy, FW, fy + 1, sigs.stuff[s], 1.0);
    }

    // Things: jittered 2x2-cell boxes; depth solved in closed form for the
    // frame's target distance.
    Rng thing_rng = clip_rng.fork(300 + t);
    clip.boxes[t].reserve(spec.n_things);
    for (int i = 0; i < spec.n_things; ++i) {
      const auto [bx, by] = lay.thing_cells[i];
      const int cx = bx + static_cast<int>(thing_rng.below(2));
      const int cy = by + static_cast<int>(thing_rng.below(2));
      bool near = false;
      if (want_cause && i == spec.causal_thing)
        near = t >= cause_window.first && t <= cause_window.second;
      else if (i == competitor)
        near = t >= competitor_window.first && t <= competitor_window.second;
      const double target = near ? thing_rng.uniform(kThingNearLo, kThingNearHi)
                                 : thing_rng.uniform(kThingFarLo, kThingFarHi);

      const int u = (cx + 1) * R, v = (cy + 1) * R;
      const double delta =
          solve_thing_depth(u, v, clip.intrinsics, ego, target);
      paint_depth_rect(depth, cx * R, cy * R, (cx + 2) * R, (cy + 2) * R, delta);

      BoundingBox box;
      box.x0 = cx * R;
      box.y0 = cy * R;
      box.x1 = (cx + 2) * R;
      box.y1 = (cy + 2) * R;
      box.class_id = thing_classes[i];
      box.score = 0.95 - 0.05 * i / spec.n_things;
      clip.boxes[t].push_back(box);

      const double mod_scale =
          clip.thing_modifiers[i] == kModifierNeutral ? 0.0 : 0.6;
      add_signature(clip.features, t, cx, cy, cx + 2, cy + 2,
                    sigs.thing[thing_classes[i]], 1.0);
      if (mod_scale > 0.0)
        add_signature(clip.features, t, cx, cy, cx + 2, cy + 2,
                      sigs.modifier[clip.thing_modifiers[i]], mod_scale);
    }

    clip.depth.push_back(std::move(depth));
  }

  const LabelCheck check = check_labels(clip);
  if (check.goal != clip.goal_label || check.cause != clip.cause_label)
    throw std::logic_error("generate_clip: label self-check failed (got goal " +
                           std::to_string(check.goal) + ", cause " +
                           std::to_string(check.cause) + ")");
  return clip;
}

LabelCheck check_labels(const SceneClip& clip, double mu_thing,
                        double mu_stuff) {
  LabelCheck out;
  const int T = clip.spec.frames;

  bool crossing_near = false, parked_near = false;
  for (int t = 0; t < T; ++t) {
    const Point3 ego = ego_location(clip.depth[t], clip.intrinsics);
    for (std::size_t i = 0; i < clip.boxes[t].size(); ++i) {
      if (clip.thing_modifiers[i] == kModifierNeutral) continue;
      const Point3 p =
          thing_location(clip.boxes[t][i], clip.depth[t], clip.intrinsics);
      if (spatial_gate(p, ego, mu_thing)) {
        if (clip.thing_modifiers[i] == kModifierCrossing) crossing_near = true;
        if (clip.thing_modifiers[i] == kModifierParked) parked_near = true;
      }
    }
  }
  out.cause = crossing_near ? 1 : (parked_near ? 2 : 0);

  for (const StuffMask& m : clip.masks) {
    if (m.class_id == 0) continue;  // road: always near, never label-bearing
    const DownsampledMask dm =
        downsample_mask(m, clip.spec.feat_width, clip.spec.feat_height);
    bool near = false;
    for (int t = 0; t < T && !near; ++t) {
      const Point3 ego = ego_location(clip.depth[t], clip.intrinsics);
      near = stuff_min_distance(dm, clip.depth[t], clip.intrinsics, ego) <=
             mu_stuff;
    }
    if (near && out.goal == 0) out.goal = m.class_id;
  }
  return out;
}

namespace {

void write_raw(std::ofstream& f, const void* p, std::size_t n) {
  f.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

void write_u32(std::ofstream& f, std::uint32_t v) { write_raw(f, &v, 4); }
void write_u64(std::ofstream& f, std::uint64_t v) { write_raw(f, &v, 8); }

void read_raw(std::ifstream& f, void* p, std::size_t n) {
  f.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (!f) throw std::runtime_error("clip file truncated");
}

std::uint32_t read_u32(std::ifstream& f) {
  std::uint32_t v = 0;
  read_raw(f, &v, 4);
  return v;
}

std::uint64_t read_u64(std::ifstream& f) {
  std::uint64_t v = 0;
  read_raw(f, &v, 8);
  return v;
}

json spec_to_json(const SceneSpec& s) {
  return json{{"frames", s.frames},
              {"image_width", s.image_width},
              {"image_height", s.image_height},
              {"feat_width", s.feat_width},
              {"feat_height", s.feat_height},
              {"channels", s.channels},
              {"n_things", s.n_things},
              {"n_stuff", s.n_stuff},
              {"goal_label", s.goal_label},
              {"cause_label", s.cause_label},
              {"causal_thing", s.causal_thing},
              {"causal_in_range", s.causal_in_range},
              {"seed", s.seed},
              {"dataset_seed", s.dataset_seed}};
}

SceneSpec spec_from_json(const json& j) {
  SceneSpec s;
  s.frames = j.at("frames").get<int>();
  s.image_width = j.at("image_width").get<int>();
  s.image_height = j.at("image_height").get<int>();
  s.feat_width = j.at("feat_width").get<int>();
  s.feat_height = j.at("feat_height").get<int>();
  s.channels = j.at("channels").get<int>();
  s.n_things = j.at("n_things").get<int>();
  s.n_stuff = j.at("n_stuff").get<int>();
  s.goal_label = j.at("goal_label").get<int>();
  s.cause_label = j.at("cause_label").get<int>();
  s.causal_thing = j.at("causal_thing").get<int>();
  s.causal_in_range = j.at("causal_in_range").get<bool>();
  s.seed = j.at("seed").get<std::uint64_t>();
  s.dataset_seed = j.at("dataset_seed").get<std::uint64_t>();
  return s;
}

}  // namespace

void save_clip(const SceneClip& clip, const std::string& path) {
  json meta;
  meta["spec"] = spec_to_json(clip.spec);
  meta["goal_label"] = clip.goal_label;
  meta["cause_label"] = clip.cause_label;
  meta["causal_thing"] = clip.causal_thing;
  meta["thing_modifiers"] = clip.thing_modifiers;
  meta["intrinsics"] = {{"fx", clip.intrinsics.fx},
                        {"fy", clip.intrinsics.fy},
                        {"cx", clip.intrinsics.cx},
                        {"cy", clip.intrinsics.cy}};
  json boxes = json::array();
  for (const auto& frame : clip.boxes) {
    json fb = json::array();
    for (const BoundingBox& b : frame)
      fb.push_back({{"x0", b.x0},
                    {"y0", b.y0},
                    {"x1", b.x1},
                    {"y1", b.y1},
                    {"class_id", b.class_id},
                    {"score", b.score}});
    boxes.push_back(std::move(fb));
  }
  meta["boxes"] = std::move(boxes);
  json mask_classes = json::array();
  for (const StuffMask& m : clip.masks) mask_classes.push_back(m.class_id);
  meta["mask_classes"] = std::move(mask_classes);

  const std::string meta_str = meta.dump();

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write clip file: " + path);
  write_raw(f, "EGCL", 4);
  write_u32(f, 1);
  write_u64(f, meta_str.size());
  write_raw(f, meta_str.data(), meta_str.size());

  write_u64(f, clip.features.values.size());
  write_raw(f, clip.features.values.data(),
            clip.features.values.size() * sizeof(float));

  write_u64(f, clip.depth.size());
  for (const DepthMap& d : clip.depth)
    write_raw(f, d.values.data(), d.values.size() * sizeof(float));

  write_u64(f, clip.masks.size());
  for (const StuffMask& m : clip.masks) {
    const std::size_t nbits = m.values.size();
    std::vector<std::uint8_t> packed((nbits + 7) / 8, 0);
    for (std::size_t i = 0; i < nbits; ++i)
      if (m.values[i]) packed[i / 8] |= static_cast<std::uint8_t>(1u << (i % 8));
    write_raw(f, packed.data(), packed.size());
  }
  if (!f) throw std::runtime_error("write failed: " + path);
}

SceneClip load_clip(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open clip file: " + path);
  char magic[4];
  read_raw(f, magic, 4);
  if (std::memcmp(magic, "EGCL", 4) != 0)
    throw std::runtime_error("not a clip file: " + path);
  const std::uint32_t version = read_u32(f);
  if (version != 1)
    throw std::runtime_error("unsupported clip version " +
                             std::to_string(version));
  const std::uint64_t meta_len = read_u64(f);
  std::string meta_str(meta_len, '\0');
  read_raw(f, meta_str.data(), meta_len);
  const json meta = json::parse(meta_str);

  SceneClip clip;
  clip.spec = spec_from_json(meta.at("spec"));
  clip.goal_label = meta.at("goal_label").get<int>();
  clip.cause_label = meta.at("cause_label").get<int>();
  clip.causal_thing = meta.at("causal_thing").get<int>();
  clip.thing_modifiers = meta.at("thing_modifiers").get<std::vector<int>>();
  const json& intr = meta.at("intrinsics");
  clip.intrinsics = {intr.at("fx").get<double>(), intr.at("fy").get<double>(),
                     intr.at("cx").get<double>(), intr.at("cy").get<double>()};
  for (const json& fb : meta.at("boxes")) {
    std::vector<BoundingBox> frame;
    for (const json& jb : fb) {
      BoundingBox b;
      b.x0 = jb.at("x0").get<double>();
      b.y0 = jb.at("y0").get<double>();
      b.x1 = jb.at("x1").get<double>();
      b.y1 = jb.at("y1").get<double>();
      b.class_id = jb.at("class_id").get<int>();
      b.score = jb.at("score").get<double>();
      frame.push_back(b);
    }
    clip.boxes.push_back(std::move(frame));
  }

  clip.features.frames = clip.spec.frames;
  clip.features.width = clip.spec.feat_width;
  clip.features.height = clip.spec.feat_height;
  clip.features.channels = clip.spec.channels;
  clip.features.source_width = clip.spec.image_width;
  clip.features.source_height = clip.spec.image_height;
  const std::uint64_t n_feat = read_u64(f);
  clip.features.values.resize(n_feat);
  read_raw(f, clip.features.values.data(), n_feat * sizeof(float));

  const std::uint64_t n_depth = read_u64(f);
  const std::size_t px =
      static_cast<std::size_t>(clip.spec.image_width) * clip.spec.image_height;
  for (std::uint64_t t = 0; t < n_depth; ++t) {
    DepthMap d;
    d.width = clip.spec.image_width;
    d.height = clip.spec.image_height;
    d.values.resize(px);
    read_raw(f, d.values.data(), px * sizeof(float));
    clip.depth.push_back(std::move(d));
  }

  const std::uint64_t n_masks = read_u64(f);
  const auto mask_classes = meta.at("mask_classes").get<std::vector<int>>();
  if (mask_classes.size() != n_masks)
    throw std::runtime_error("clip mask metadata mismatch: " + path);
  for (std::uint64_t i = 0; i < n_masks; ++i) {
    StuffMask m;
    m.width = clip.spec.image_width;
    m.height = clip.spec.image_height;
    m.class_id = mask_classes[i];
    m.values.assign(px, 0);
    std::vector<std::uint8_t> packed((px + 7) / 8);
    read_raw(f, packed.data(), packed.size());
    for (std::size_t k = 0; k < px; ++k)
      m.values[k] = (packed[k / 8] >> (k % 8)) & 1u;
    clip.masks.push_back(std::move(m));
  }
  return clip;
}

DatasetReport make_dataset(const std::string& out_dir, int n_train, int n_eval,
                           std::uint64_t seed, const SceneSpec& base) {
  const int n_goal = static_cast<int>(goal_class_names().size());
  const int n_cause = static_cast<int>(cause_class_names().size());
  DatasetReport report;
  report.n_train = n_train;
  report.n_eval = n_eval;
  report.frames_per_clip = base.frames;
  report.train_goal_counts.assign(n_goal, 0);
  report.train_cause_counts.assign(n_cause, 0);
  report.eval_goal_counts.assign(n_goal, 0);
  report.eval_cause_counts.assign(n_cause, 0);

  Rng seeder(seed);
  for (int split = 0; split < 2; ++split) {
    const bool is_train = split == 0;
    const int n = is_train ? n_train : n_eval;
    const fs::path dir = fs::path(out_dir) / (is_train ? "train" : "eval");
    fs::create_directories(dir);
    for (int i = 0; i < n; ++i) {
      const int combo = i % (n_goal * n_cause);
      SceneSpec spec = base;
      spec.goal_label = combo % n_goal;
      spec.cause_label = combo / n_goal;
      spec.causal_thing =
          spec.cause_label == 0 ? 0 : i % std::max(1, spec.n_things);
      spec.causal_in_range = true;
      spec.dataset_seed = seed;
      spec.seed =
          seeder.fork(is_train ? i : (1ull << 32) + i).next_u64();
      const SceneClip clip = generate_clip(spec);

      char name[32];
      std::snprintf(name, sizeof(name), "clip_%05d.egcl", i);
      save_clip(clip, (dir / name).string());

      auto& goal_counts =
          is_train ? report.train_goal_counts : report.eval_goal_counts;
      auto& cause_counts =
          is_train ? report.train_cause_counts : report.eval_cause_counts;
      ++goal_counts[clip.goal_label];
      ++cause_counts[clip.cause_label];
    }
  }

  json j;
  j["n_train"] = report.n_train;
  j["n_eval"] = report.n_eval;
  j["frames_per_clip"] = report.frames_per_clip;
  j["goal_classes"] = goal_class_names();
  j["cause_classes"] = cause_class_names();
  j["train_goal_clip_counts"] = report.train_goal_counts;
  j["train_cause_clip_counts"] = report.train_cause_counts;
  j["eval_goal_clip_counts"] = report.eval_goal_counts;
  j["eval_cause_clip_counts"] = report.eval_cause_counts;
  auto frames_of = [&](const std::vector<int>& v) {
    std::vector<int> f;
    f.reserve(v.size());
    for (int c : v) f.push_back(c * report.frames_per_clip);
    return f;
  };
  j["train_goal_frame_counts"] = frames_of(report.train_goal_counts);
  j["train_cause_frame_counts"] = frames_of(report.train_cause_counts);
  j["eval_goal_frame_counts"] = frames_of(report.eval_goal_counts);
  j["eval_cause_frame_counts"] = frames_of(report.eval_cause_counts);
  std::ofstream bf(fs::path(out_dir) / "balance.json");
  bf << j.dump(2) << "\n";
  return report;
}

std::vector<std::string> list_clips(const std::string& dir) {
  std::vector<std::string> out;
  if (!fs::is_directory(dir))
    throw std::runtime_error("not a dataset directory: " + dir);
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".egcl")
      out.push_back(entry.path().string());
  std::sort(out.begin(), out.end());
  return out;
}

PreparedClip prepare_clip(const SceneClip& clip, int top_k, int roi_grid) {
  const int T = clip.spec.frames;
  const int D = clip.spec.channels;
  PreparedClip out;
  out.goal_label = clip.goal_label;
  out.cause_label = clip.cause_label;

  std::vector<DownsampledMask> ds;
  std::vector<int> ds_class;
  for (const StuffMask& m : clip.masks) {
    if (m.count_set() == 0) continue;  // vanished object: drop the node
    ds.push_back(downsample_mask(m, clip.spec.feat_width, clip.spec.feat_height));
    ds_class.push_back(m.class_id);
  }

  BoundingBox frame_box;
  frame_box.x0 = 0;
  frame_box.y0 = 0;
  frame_box.x1 = clip.spec.image_width;
  frame_box.y1 = clip.spec.image_height;
  frame_box.class_id = kEgoClassId;
  frame_box.score = 1.0;

  for (int t = 0; t < T; ++t) {
    const Point3 ego = ego_location(clip.depth[t], clip.intrinsics);
    const Tensor ego_feat =
        roi_align_lite(clip.features, t, frame_box, roi_grid);

    const std::vector<BoundingBox> sel = select_top_k(clip.boxes[t], top_k);
    NodeSet things;
    std::vector<double> tvals;
    tvals.reserve((sel.size() + 1) * D);
    for (const BoundingBox& b : sel) {
      const Tensor feat = roi_align_lite(clip.features, t, b, roi_grid);
      tvals.insert(tvals.end(), feat.data().begin(), feat.data().end());
      things.locations.push_back(
          thing_location(b, clip.depth[t], clip.intrinsics));
      things.classes.push_back(b.class_id);
    }
    tvals.insert(tvals.end(), ego_feat.data().begin(), ego_feat.data().end());
    things.locations.push_back(ego);
    things.classes.push_back(kEgoClassId);
    things.features = Tensor::from_data(
        {sel.size() + 1, static_cast<std::size_t>(D)}, std::move(tvals));
    out.thing_nodes.push_back(std::move(things));

    if (t == 0 && clip.cause_label != 0) {
      for (std::size_t k = 0; k < sel.size(); ++k)
        if (sel[k].score ==
                clip.boxes[t][static_cast<std::size_t>(clip.causal_thing)].score &&
            sel[k].class_id ==
                clip.boxes[t][static_cast<std::size_t>(clip.causal_thing)].class_id)
          out.causal_node = static_cast<int>(k);
    }

    NodeSet stuff;
    std::vector<double> svals;
    std::vector<double> dists;
    svals.reserve((ds.size() + 1) * D);
    for (std::size_t i = 0; i < ds.size(); ++i) {
      const Tensor feat = mask_align(clip.features, t, ds[i]);
      svals.insert(svals.end(), feat.data().begin(), feat.data().end());
      Point3 nearest{0, 0, 0};
      dists.push_back(stuff_min_distance(ds[i], clip.depth[t], clip.intrinsics,
                                         ego, &nearest));
      stuff.locations.push_back(nearest);
      stuff.classes.push_back(ds_class[i]);
    }
    svals.insert(svals.end(), ego_feat.data().begin(), ego_feat.data().end());
    stuff.locations.push_back(ego);
    stuff.classes.push_back(kEgoClassId);
    stuff.features = Tensor::from_data(
        {ds.size() + 1, static_cast<std::size_t>(D)}, std::move(svals));
    out.stuff_nodes.push_back(std::move(stuff));
    out.stuff_dists.push_back(std::move(dists));
  }

  std::vector<double> mean(D, 0.0);
  const FeatureMap& fm = clip.features;
  for (int t = 0; t < T; ++t)
    for (int y = 0; y < fm.height; ++y)
      for (int x = 0; x < fm.width; ++x)
        for (int d = 0; d < D; ++d) mean[d] += fm.at(t, x, y, d);
  const double denom = static_cast<double>(T) * fm.width * fm.height;
  for (double& v : mean) v /= denom;
  out.global_raw =
      Tensor::from_data({1, static_cast<std::size_t>(D)}, std::move(mean));
  return out;
}

}  // namespace egograph
