#include <doctest.h>

#include <cmath>
#include <limits>

#include "egograph/geometry.hpp"
#include "egograph/rng.hpp"

using namespace egograph;

namespace {

DepthMap constant_depth(int w, int h, float value) {
  DepthMap d;
  d.width = w;
  d.height = h;
  d.values.assign(static_cast<std::size_t>(w) * h, value);
  return d;
}

DepthMap random_depth(int w, int h, Rng& rng) {
  DepthMap d = constant_depth(w, h, 1.0f);
  for (float& v : d.values) v = static_cast<float>(rng.uniform(0.2, 9.0));
  return d;
}

}  // namespace

TEST_CASE("unproject with unit intrinsics scales the pixel by depth") {
  DepthMap d = constant_depth(8, 8, 2.0f);
  const CameraIntrinsics intr{1.0, 1.0, 0.0, 0.0};
  const Point3 p = unproject(3, 4, d, intr);
  CHECK(p.x == doctest::Approx(6.0));
  CHECK(p.y == doctest::Approx(8.0));
  CHECK(p.z == doctest::Approx(2.0));
}

TEST_CASE("unproject at the principal point lands on the optical axis") {
  DepthMap d = constant_depth(300, 300, 5.0f);
  const CameraIntrinsics intr{73.0, 145.0, 112.0, 112.0};
  const Point3 p = unproject(112, 112, d, intr);
  CHECK(p.x == 0.0);
  CHECK(p.y == 0.0);
  CHECK(p.z == doctest::Approx(5.0));
}

TEST_CASE("unproject hand-evaluated off-axis case") {
  DepthMap d = constant_depth(300, 300, 5.0f);
  const CameraIntrinsics intr{100.0, 100.0, 112.0, 112.0};
  const Point3 p = unproject(212, 112, d, intr);
  CHECK(p.x == doctest::Approx(5.0));
  CHECK(p.y == doctest::Approx(0.0));
  CHECK(p.z == doctest::Approx(5.0));
}

TEST_CASE("unproject then project recovers the pixel") {
  Rng rng(31);
  DepthMap d = random_depth(40, 30, rng);
  const CameraIntrinsics intr{37.0, 52.0, 19.5, 14.0};
  for (int trial = 0; trial < 50; ++trial) {
    const double u = rng.below(40);
    const double v = rng.below(30);
    const Point3 p = unproject(u, v, d, intr);
    CHECK(intr.fx * p.x / p.z + intr.cx == doctest::Approx(u).epsilon(1e-9));
    CHECK(intr.fy * p.y / p.z + intr.cy == doctest::Approx(v).epsilon(1e-9));
  }
}

TEST_CASE("unproject rejects out-of-bounds pixels") {
  DepthMap d = constant_depth(4, 4, 1.0f);
  const CameraIntrinsics intr;
  CHECK_THROWS(unproject(-1, 0, d, intr));
  CHECK_THROWS(unproject(0, 4, d, intr));
}

TEST_CASE("depth is sampled at the nearest pixel") {
  DepthMap d = constant_depth(2, 1, 1.0f);
  d.values = {1.0f, 9.0f};
  CHECK(d.sample_nearest(0.4, 0.0) == doctest::Approx(1.0));
  CHECK(d.sample_nearest(0.6, 0.0) == doctest::Approx(9.0));
}

TEST_CASE("thing_location unprojects the rounded box center") {
  Rng rng(32);
  DepthMap d = random_depth(64, 64, rng);
  const CameraIntrinsics intr{64.0, 64.0, 32.0, 32.0};

  const BoundingBox fixed{10, 10, 30, 30, 0, 1.0};
  const Point3 a = thing_location(fixed, d, intr);
  const Point3 b = unproject(20, 20, d, intr);
  CHECK(a.x == b.x);
  CHECK(a.y == b.y);
  CHECK(a.z == b.z);

  for (int trial = 0; trial < 30; ++trial) {
    BoundingBox box;
    box.x0 = rng.uniform(0.0, 40.0);
    box.y0 = rng.uniform(0.0, 40.0);
    box.x1 = box.x0 + rng.uniform(1.0, 20.0);
    box.y1 = box.y0 + rng.uniform(1.0, 20.0);
    const Point3 got = thing_location(box, d, intr);
    const Point3 want = unproject(std::round(box.center_x()),
                                  std::round(box.center_y()), d, intr);
    CHECK(got.x == want.x);
    CHECK(got.y == want.y);
    CHECK(got.z == want.z);
  }
}

TEST_CASE("thing_location rejects a degenerate box") {
  DepthMap d = constant_depth(8, 8, 1.0f);
  const CameraIntrinsics intr;
  const BoundingBox flat{3, 3, 3, 5, 0, 1.0};
  CHECK_THROWS(thing_location(flat, d, intr));
}

TEST_CASE("ego anchors at the middle-bottom pixel") {
  Rng rng(33);
  for (int trial = 0; trial < 10; ++trial) {
    DepthMap d = random_depth(24, 18, rng);
    const CameraIntrinsics intr{11.0, 13.0, 12.0, 9.0};
    const Point3 got = ego_location(d, intr);
    const Point3 want = unproject(12, 17, d, intr);  // (width/2, height-1)
    CHECK(got.x == want.x);
    CHECK(got.y == want.y);
    CHECK(got.z == want.z);
  }
}

TEST_CASE("spatial gate is inclusive at the threshold and symmetric") {
  const Point3 a{0, 0, 0};
  const Point3 b{0, 0, 3.0};
  const Point3 c{0, 0, 3.1};
  CHECK(spatial_gate(a, a, 3.0) == 1);
  CHECK(spatial_gate(a, b, 3.0) == 1);
  CHECK(spatial_gate(a, c, 3.0) == 0);
  Rng rng(34);
  for (int trial = 0; trial < 50; ++trial) {
    const Point3 p{rng.normal(), rng.normal(), rng.normal()};
    const Point3 q{rng.normal(), rng.normal(), rng.normal()};
    const double mu = rng.uniform(0.1, 4.0);
    CHECK(spatial_gate(p, q, mu) == spatial_gate(q, p, mu));
  }
}

TEST_CASE("scaling depths scales distances, preserving the gate pattern") {
  Rng rng(35);
  DepthMap d = random_depth(16, 16, rng);
  const CameraIntrinsics intr{16.0, 16.0, 8.0, 8.0};
  const double c = 2.75;
  DepthMap scaled = d;
  for (float& v : scaled.values) v = static_cast<float>(v * c);
  const Point3 p1 = unproject(3, 5, d, intr);
  const Point3 q1 = unproject(12, 9, d, intr);
  const Point3 p2 = unproject(3, 5, scaled, intr);
  const Point3 q2 = unproject(12, 9, scaled, intr);
  CHECK(distance(p2, q2) == doctest::Approx(c * distance(p1, q1)).epsilon(1e-6));
  CHECK(spatial_gate(p1, q1, 1.3) == spatial_gate(p2, q2, c * 1.3));
}

TEST_CASE("stuff_min_distance equals the exhaustive per-pixel minimum") {
  Rng rng(36);
  for (int trial = 0; trial < 20; ++trial) {
    const int fw = 8, fh = 8, ratio = 4;
    DepthMap d = random_depth(fw * ratio, fh * ratio, rng);
    const CameraIntrinsics intr{32.0, 32.0, 16.0, 16.0};
    const Point3 ego = ego_location(d, intr);

    DownsampledMask m;
    m.width = fw;
    m.height = fh;
    m.values.assign(fw * fh, 0);
    int set = 0;
    for (auto& v : m.values)
      if (rng.uniform() < 0.3) {
        v = 1;
        ++set;
      }
    if (set == 0) m.values[rng.below(fw * fh)] = 1;

    double want = std::numeric_limits<double>::infinity();
    for (int my = 0; my < fh; ++my)
      for (int mx = 0; mx < fw; ++mx) {
        if (!m.at(mx, my)) continue;
        auto back = [&](double c, int limit) {
          return std::min(std::max((c + 0.5) * ratio - 0.5, 0.0),
                          static_cast<double>(limit - 1));
        };
        const Point3 p =
            unproject(back(mx, fw * ratio), back(my, fh * ratio), d, intr);
        want = std::min(want, distance(p, ego));
      }
    Point3 nearest;
    const double got = stuff_min_distance(m, d, intr, ego, &nearest);
    CHECK(got == doctest::Approx(want).epsilon(1e-12));
    CHECK(distance(nearest, ego) == doctest::Approx(got).epsilon(1e-12));
  }
}

TEST_CASE("stuff_min_distance picks the smaller of two candidate pixels") {
  DepthMap d = constant_depth(8, 8, 1.0f);
  // two separated depths so the two set pixels land at distances ~5 apart
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x)
      d.values[static_cast<std::size_t>(y) * 8 + x] = (y < 4) ? 7.0f : 1.5f;
  const CameraIntrinsics intr{8.0, 8.0, 4.0, 4.0};
  const Point3 ego = ego_location(d, intr);
  DownsampledMask m;
  m.width = 4;
  m.height = 4;
  m.values.assign(16, 0);
  m.values[1] = 1;   // far block
  m.values[13] = 1;  // near block
  DownsampledMask near_only = m;
  near_only.values[1] = 0;
  const double both = stuff_min_distance(m, d, intr, ego);
  const double near_dist = stuff_min_distance(near_only, d, intr, ego);
  CHECK(both == doctest::Approx(near_dist));
  DownsampledMask far_only = m;
  far_only.values[13] = 0;
  CHECK(stuff_min_distance(far_only, d, intr, ego) > both);
}

TEST_CASE("stuff_min_distance is zero for the ego's own pixel") {
  DepthMap d = constant_depth(4, 4, 2.0f);
  const CameraIntrinsics intr{4.0, 4.0, 2.0, 2.0};
  const Point3 ego = ego_location(d, intr);
  // ratio 1: mask pixel (2,3) maps straight onto the ego anchor
  DownsampledMask m;
  m.width = 4;
  m.height = 4;
  m.values.assign(16, 0);
  m.values[3 * 4 + 2] = 1;
  CHECK(stuff_min_distance(m, d, intr, ego) == doctest::Approx(0.0));
}

TEST_CASE("stuff_min_distance rejects an empty mask") {
  DepthMap d = constant_depth(4, 4, 1.0f);
  const CameraIntrinsics intr;
  DownsampledMask m;
  m.width = 4;
  m.height = 4;
  m.values.assign(16, 0);
  CHECK_THROWS(stuff_min_distance(m, d, intr, Point3{}));
}
