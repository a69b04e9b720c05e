#include "egograph/features.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace egograph {

std::size_t StuffMask::count_set() const {
  return static_cast<std::size_t>(
      std::count_if(values.begin(), values.end(), [](std::uint8_t v) { return v != 0; }));
}

std::size_t DownsampledMask::count_set() const {
  return static_cast<std::size_t>(
      std::count_if(values.begin(), values.end(), [](std::uint8_t v) { return v != 0; }));
}

namespace {

// One bilinear sample at feature coordinates (x, y); out-of-range samples
// follow the usual RoIAlign clamping.
void bilinear_sample(const FeatureMap& fm, int t, double x, double y,
                     std::vector<double>& out) {
  const int w = fm.width, h = fm.height, d = fm.channels;
  if (y < -1.0 || y > h || x < -1.0 || x > w) {
    std::fill(out.begin(), out.end(), 0.0);
    return;
  }
  x = std::max(x, 0.0);
  y = std::max(y, 0.0);
  int x_lo = static_cast<int>(x);
  int y_lo = static_cast<int>(y);
  int x_hi, y_hi;
  if (x_lo >= w - 1) {
    x_hi = x_lo = w - 1;
    x = static_cast<double>(x_lo);
  } else {
    x_hi = x_lo + 1;
  }
  if (y_lo >= h - 1) {
    y_hi = y_lo = h - 1;
    y = static_cast<double>(y_lo);
  } else {
    y_hi = y_lo + 1;
  }
  const double lx = x - x_lo, ly = y - y_lo;
  const double w00 = (1 - ly) * (1 - lx), w01 = (1 - ly) * lx;
  const double w10 = ly * (1 - lx), w11 = ly * lx;
  for (int c = 0; c < d; ++c) {
    out[c] = w00 * fm.at(t, x_lo, y_lo, c) + w01 * fm.at(t, x_hi, y_lo, c) +
             w10 * fm.at(t, x_lo, y_hi, c) + w11 * fm.at(t, x_hi, y_hi, c);
  }
}

}  // namespace

Tensor roi_align_lite(const FeatureMap& fm, int t, const BoundingBox& box,
                      int grid) {
  if (!fm.valid()) throw ShapeError("roi_align_lite: invalid feature map");
  if (t < 0 || t >= fm.frames)
    throw ShapeError("roi_align_lite: frame " + std::to_string(t) + " out of " +
                     std::to_string(fm.frames));
  if (grid < 1) throw ShapeError("roi_align_lite: grid must be >= 1");
  if (box.x1 <= box.x0 || box.y1 <= box.y0)
    throw NumericError("roi_align_lite: degenerate box");
  if (box.x1 <= 0 || box.y1 <= 0 || box.x0 >= fm.source_width ||
      box.y0 >= fm.source_height)
    throw NumericError("roi_align_lite: box fully outside the frame");

  const double rx = static_cast<double>(fm.width) / fm.source_width;
  const double ry = static_cast<double>(fm.height) / fm.source_height;
  const double fx0 = box.x0 * rx, fy0 = box.y0 * ry;
  const double bin_w = (box.x1 - box.x0) * rx / grid;
  const double bin_h = (box.y1 - box.y0) * ry / grid;

  const int d = fm.channels;
  std::vector<double> sample(d), best(d, -std::numeric_limits<double>::infinity());
  for (int gy = 0; gy < grid; ++gy)
    for (int gx = 0; gx < grid; ++gx) {
      bilinear_sample(fm, t, fx0 + (gx + 0.5) * bin_w, fy0 + (gy + 0.5) * bin_h,
                      sample);
      for (int c = 0; c < d; ++c) best[c] = std::max(best[c], sample[c]);
    }
  return Tensor::from_data({1, static_cast<std::size_t>(d)}, std::move(best));
}

Tensor mask_align(const FeatureMap& fm, int t, const DownsampledMask& mask) {
  if (!fm.valid()) throw ShapeError("mask_align: invalid feature map");
  if (t < 0 || t >= fm.frames)
    throw ShapeError("mask_align: frame " + std::to_string(t) + " out of " +
                     std::to_string(fm.frames));
  if (mask.width != fm.width || mask.height != fm.height)
    throw ShapeError("mask_align: mask " + std::to_string(mask.width) + "x" +
                     std::to_string(mask.height) + " does not match feature map " +
                     std::to_string(fm.width) + "x" + std::to_string(fm.height));
  const int d = fm.channels;
  std::vector<double> acc(d, 0.0);
  std::size_t count = 0;
  for (int y = 0; y < mask.height; ++y)
    for (int x = 0; x < mask.width; ++x)
      if (mask.at(x, y)) {
        ++count;
        for (int c = 0; c < d; ++c) acc[c] += fm.at(t, x, y, c);
      }
  if (count == 0) throw NumericError("mask_align: empty mask");
  for (auto& v : acc) v /= static_cast<double>(count);
  return Tensor::from_data({1, static_cast<std::size_t>(d)}, std::move(acc));
}

DownsampledMask downsample_mask(const StuffMask& mask, int w, int h) {
  if (w < 1 || h < 1) throw ShapeError("downsample_mask: target dims must be >= 1");
  DownsampledMask out;
  out.width = w;
  out.height = h;
  out.values.assign(static_cast<std::size_t>(w) * h, 0);

  std::vector<std::uint32_t> set_count(out.values.size(), 0);
  std::vector<std::uint32_t> total_count(out.values.size(), 0);
  double cx = 0.0, cy = 0.0;
  std::size_t n_set = 0;
  for (int y = 0; y < mask.height; ++y) {
    const int by = static_cast<int>(static_cast<std::int64_t>(y) * h / mask.height);
    for (int x = 0; x < mask.width; ++x) {
      const int bx = static_cast<int>(static_cast<std::int64_t>(x) * w / mask.width);
      const std::size_t b = static_cast<std::size_t>(by) * w + bx;
      ++total_count[b];
      if (mask.at(x, y)) {
        ++set_count[b];
        cx += x;
        cy += y;
        ++n_set;
      }
    }
  }
  bool any = false;
  for (std::size_t b = 0; b < out.values.size(); ++b)
    if (2 * set_count[b] >= total_count[b] && set_count[b] > 0) {
      out.values[b] = 1;
      any = true;
    }
  if (!any && n_set > 0) {
    // Centroid fallback keeps thin structures alive.
    const int bx = std::min(w - 1, static_cast<int>(cx / n_set * w / mask.width));
    const int by = std::min(h - 1, static_cast<int>(cy / n_set * h / mask.height));
    out.values[static_cast<std::size_t>(by) * w + bx] = 1;
  }
  return out;
}

std::vector<BoundingBox> select_top_k(const std::vector<BoundingBox>& dets,
                                      int k) {
  if (k < 1) throw NumericError("select_top_k: k must be >= 1");
  std::vector<BoundingBox> out = dets;
  std::stable_sort(out.begin(), out.end(),
                   [](const BoundingBox& a, const BoundingBox& b) {
                     return a.score > b.score;
                   });
  if (out.size() > static_cast<std::size_t>(k)) out.resize(k);
  return out;
}

}  // namespace egograph
