#pragma once

#include <cstdint>
#include <vector>

#include "egograph/tensor.hpp"

namespace egograph {

/// Backbone-style feature volume for one clip: frames x height x width x
/// channels, stored as f32. source_width/height are the full-frame pixel
/// dimensions the spatial grid was derived from.
struct FeatureMap {
  int frames = 0;
  int width = 0;
  int height = 0;
  int channels = 0;
  int source_width = 0;
  int source_height = 0;
  std::vector<float> values;  // [t][y][x][d] row-major

  std::size_t index(int t, int x, int y, int d) const {
    return ((static_cast<std::size_t>(t) * height + y) * width + x) * channels +
           d;
  }
  float at(int t, int x, int y, int d) const { return values[index(t, x, y, d)]; }
  std::size_t numel() const {
    return static_cast<std::size_t>(frames) * height * width * channels;
  }
  bool valid() const {
    return frames >= 1 && width >= 1 && height >= 1 && channels >= 1 &&
           values.size() == numel();
  }
};

/// Detection box in full-frame pixel coordinates.
struct BoundingBox {
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  int class_id = 0;
  double score = 0.0;

  double center_x() const { return 0.5 * (x0 + x1); }
  double center_y() const { return 0.5 * (y0 + y1); }
  double area() const { return (x1 - x0) * (y1 - y0); }
};

/// Full-resolution binary mask of one stuff object.
struct StuffMask {
  int width = 0;
  int height = 0;
  int class_id = 0;
  std::vector<std::uint8_t> values;  // 0/1, row-major [y][x]

  std::uint8_t at(int x, int y) const { return values[static_cast<std::size_t>(y) * width + x]; }
  std::size_t count_set() const;
};

/// Mask reduced to the feature map's spatial grid.
struct DownsampledMask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> values;

  std::uint8_t at(int x, int y) const { return values[static_cast<std::size_t>(y) * width + x]; }
  std::size_t count_set() const;
};

/// Simplified RoIAlign: the box is mapped to feature coordinates by the
/// spatial ratio, one bilinear sample is taken at the center of each bin of
/// a grid x grid lattice, and the result is the channel-wise max. Returns a
/// 1 x D tensor.
Tensor roi_align_lite(const FeatureMap& fm, int t, const BoundingBox& box,
                      int grid = 7);

/// Masked average pooling over the feature map at frame t; the mask must
/// match the map's spatial dims and be nonempty. Returns a 1 x D tensor.
Tensor mask_align(const FeatureMap& fm, int t, const DownsampledMask& mask);

/// Block-reduce to W x H: an output pixel is set when at least half of its
/// source block is set. A nonempty source that would vanish keeps the single
/// output pixel containing its centroid, so thin structures survive.
DownsampledMask downsample_mask(const StuffMask& mask, int w, int h);

/// Top-K detections across all classes, ordered by score descending with
/// ties kept in input order. Returns fewer when fewer exist.
std::vector<BoundingBox> select_top_k(const std::vector<BoundingBox>& dets,
                                      int k);

}  // namespace egograph
