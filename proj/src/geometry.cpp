#include "egograph/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace egograph {

double distance(const Point3& a, const Point3& b) {
  const double dx = a.x - b.x, dy = a.y - b.y, dz = a.z - b.z;
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

double DepthMap::sample_nearest(double u, double v) const {
  const int x = std::clamp(static_cast<int>(std::lround(u)), 0, width - 1);
  const int y = std::clamp(static_cast<int>(std::lround(v)), 0, height - 1);
  return static_cast<double>(at(x, y));
}

Point3 unproject(double u, double v, const DepthMap& depth,
                 const CameraIntrinsics& intr) {
  if (intr.fx <= 0.0 || intr.fy <= 0.0)
    throw NumericError("unproject: focal lengths must be positive");
  if (u < 0.0 || v < 0.0 || u > depth.width - 1 || v > depth.height - 1)
    throw NumericError("unproject: pixel (" + std::to_string(u) + ", " +
                       std::to_string(v) + ") outside " +
                       std::to_string(depth.width) + "x" +
                       std::to_string(depth.height));
  const double d = depth.sample_nearest(u, v);
  return Point3{d * (u - intr.cx) / intr.fx, d * (v - intr.cy) / intr.fy, d};
}

Point3 thing_location(const BoundingBox& box, const DepthMap& depth,
                      const CameraIntrinsics& intr) {
  if (box.x1 <= box.x0 || box.y1 <= box.y0)
    throw NumericError("thing_location: degenerate box");
  const double cu = std::lround(box.center_x());
  const double cv = std::lround(box.center_y());
  return unproject(std::clamp(cu, 0.0, static_cast<double>(depth.width - 1)),
                   std::clamp(cv, 0.0, static_cast<double>(depth.height - 1)),
                   depth, intr);
}

Point3 ego_location(const DepthMap& depth, const CameraIntrinsics& intr) {
  return unproject(depth.width / 2, depth.height - 1, depth, intr);
}

int spatial_gate(const Point3& a, const Point3& b, double mu) {
  return distance(a, b) <= mu ? 1 : 0;
}

double stuff_min_distance(const DownsampledMask& mask, const DepthMap& depth,
                          const CameraIntrinsics& intr, const Point3& ego,
                          Point3* nearest) {
  if (mask.count_set() == 0)
    throw NumericError("stuff_min_distance: empty mask");
  const double rx = static_cast<double>(depth.width) / mask.width;
  const double ry = static_cast<double>(depth.height) / mask.height;
  double best = std::numeric_limits<double>::infinity();
  for (int my = 0; my < mask.height; ++my)
    for (int mx = 0; mx < mask.width; ++mx) {
      if (!mask.at(mx, my)) continue;
      // Block-center position in full-frame pixel index space.
      const double u =
          std::clamp((mx + 0.5) * rx - 0.5, 0.0, static_cast<double>(depth.width - 1));
      const double v =
          std::clamp((my + 0.5) * ry - 0.5, 0.0, static_cast<double>(depth.height - 1));
      const Point3 p = unproject(u, v, depth, intr);
      const double d = distance(p, ego);
      if (d < best) {
        best = d;
        if (nearest) *nearest = p;
      }
    }
  return best;
}

}  // namespace egograph
