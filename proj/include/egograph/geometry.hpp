#pragma once

#include <vector>

#include "egograph/features.hpp"

namespace egograph {

/// Pinhole intrinsics; the implied 3x3 matrix is invertible when both focal
/// lengths are positive.
struct CameraIntrinsics {
  double fx = 1.0, fy = 1.0;
  double cx = 0.0, cy = 0.0;
};

struct Point3 {
  double x = 0.0, y = 0.0, z = 0.0;
};

double distance(const Point3& a, const Point3& b);

/// Per-pixel relative depth, all values positive.
struct DepthMap {
  int width = 0;
  int height = 0;
  std::vector<float> values;  // row-major [y][x]

  float at(int x, int y) const { return values[static_cast<std::size_t>(y) * width + x]; }
  /// Nearest-pixel sample at a possibly fractional position.
  double sample_nearest(double u, double v) const;
};

/// Back-projects pixel (u, v): x = d*(u-cx)/fx, y = d*(v-cy)/fy, z = d, with
/// the depth d sampled at the nearest pixel.
Point3 unproject(double u, double v, const DepthMap& depth,
                 const CameraIntrinsics& intr);

/// 3D location of a detection: unprojection at the box center, rounded to
/// the nearest integer pixel.
Point3 thing_location(const BoundingBox& box, const DepthMap& depth,
                      const CameraIntrinsics& intr);

/// The ego vehicle anchors at the middle-bottom pixel of the frame.
Point3 ego_location(const DepthMap& depth, const CameraIntrinsics& intr);

/// 1 when the two points lie within mu of each other (inclusive), else 0.
int spatial_gate(const Point3& a, const Point3& b, double mu);

/// Minimum 3D distance from the ego point to any set pixel of a downsampled
/// mask. Mask pixels are scaled back to full-frame coordinates by the
/// downsample ratio (block centers); depth is sampled at the nearest
/// full-resolution pixel. `nearest` (optional) receives the closest point.
double stuff_min_distance(const DownsampledMask& mask, const DepthMap& depth,
                          const CameraIntrinsics& intr, const Point3& ego,
                          Point3* nearest = nullptr);

}  // namespace egograph
