#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

#include "pvx/rectify.hpp"
#include "support.hpp"

using namespace pvx;
using testing::error_of;

namespace {

constexpr double kPi = 3.14159265358979323846;

ModuleMask rect_mask(int x0, int y0, int w, int h, int fw = 200, int fh = 150) {
  std::vector<PixelXY> px;
  for (int y = y0; y < y0 + h; ++y)
    for (int x = x0; x < x0 + w; ++x) px.push_back({x, y});
  return ModuleMask::from_pixels(0, fw, fh, px);
}

// Pixels whose centers fall inside the convex polygon.
ModuleMask polygon_mask(const std::vector<Point2>& poly, int fw, int fh) {
  std::vector<PixelXY> px;
  for (int y = 0; y < fh; ++y)
    for (int x = 0; x < fw; ++x) {
      const Point2 c{x + 0.5, y + 0.5};
      bool pos = false, neg = false;
      for (std::size_t i = 0; i < poly.size(); ++i) {
        const Point2 a = poly[i], b = poly[(i + 1) % poly.size()];
        const double z = (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
        pos |= z > 0;
        neg |= z < 0;
      }
      if (!(pos && neg)) px.push_back({x, y});
    }
  return ModuleMask::from_pixels(0, fw, fh, px);
}

// Exhaustive search over every order of edge merges; returns the minimal
// perimeter reachable (infinity if no sequence reaches four vertices).
double brute_force_min_perimeter(const std::vector<Point2>& poly, Point2 center, double limit) {
  if (poly.size() <= 4) {
    double p = 0;
    for (std::size_t i = 0; i < poly.size(); ++i) {
      const Point2 a = poly[i], b = poly[(i + 1) % poly.size()];
      p += std::hypot(b.x - a.x, b.y - a.y);
    }
    return p;
  }
  double best = std::numeric_limits<double>::infinity();
  const std::size_t n = poly.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Point2 a = poly[(i + n - 1) % n], b = poly[i], c = poly[(i + 1) % n], d = poly[(i + 2) % n];
    // Solve a + s (b - a) = c + t (d - c).
    const double m11 = b.x - a.x, m12 = -(d.x - c.x), m21 = b.y - a.y, m22 = -(d.y - c.y);
    const double det = m11 * m22 - m12 * m21;
    const double cross_dirs = (b.x - a.x) * (d.y - c.y) - (b.y - a.y) * (d.x - c.x);
    if (cross_dirs <= 1e-12) continue;
    const double s = ((c.x - a.x) * m22 - m12 * (c.y - a.y)) / det;
    const Point2 p{a.x + s * (b.x - a.x), a.y + s * (b.y - a.y)};
    if (std::hypot(p.x - center.x, p.y - center.y) > limit) continue;
    std::vector<Point2> next;
    for (std::size_t k = 0; k < n; ++k) {
      if (k == i) next.push_back(p);
      else if (k != (i + 1) % n) next.push_back(poly[k]);
    }
    best = std::min(best, brute_force_min_perimeter(next, center, limit));
  }
  return best;
}

std::size_t oracle_quad_pixels(const Quadrilateral& q, int fw, int fh, const ModuleMask* mask, std::size_t* inter) {
  std::size_t count = 0;
  if (inter) *inter = 0;
  for (int y = 0; y < fh; ++y)
    for (int x = 0; x < fw; ++x) {
      const Point2 c{x + 0.5, y + 0.5};
      bool pos = false, neg = false;
      for (int i = 0; i < 4; ++i) {
        const Point2 a = q.corners[i], b = q.corners[(i + 1) % 4];
        const double z = (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
        pos |= z > 1e-9;
        neg |= z < -1e-9;
      }
      if (pos && neg) continue;
      ++count;
      if (inter && mask && mask->contains(x, y)) ++*inter;
    }
  return count;
}

std::array<Point2, 4> random_convex_quad(std::mt19937& rng, double scale = 100.0) {
  std::uniform_real_distribution<double> jitter(-0.35, 0.35), radius(0.4, 1.0), off(-200, 200);
  const Point2 c{off(rng), off(rng)};
  std::array<Point2, 4> q;
  for (int i = 0; i < 4; ++i) {
    const double ang = (i + 0.5 + jitter(rng)) * kPi / 2.0;
    const double r = scale * radius(rng);
    q[i] = {c.x + r * std::cos(ang), c.y + r * std::sin(ang)};
  }
  return q;
}

double max_residual(const Homography& h, std::span<const Point2, 4> src, std::span<const Point2, 4> dst) {
  double worst = 0.0;
  for (int i = 0; i < 4; ++i) worst = std::max(worst, distance(h.apply(src[i]), dst[i]));
  return worst;
}

}  // namespace

TEST_SUITE("rectify") {

TEST_CASE("axis-aligned rectangle fits its own corners") {
  const auto q = fit_min_perimeter_quad(rect_mask(10, 20, 20, 10));
  CHECK(q.corners[0] == Point2{10, 20});
  CHECK(q.corners[1] == Point2{30, 20});
  CHECK(q.corners[2] == Point2{30, 30});
  CHECK(q.corners[3] == Point2{10, 30});
}

TEST_CASE("octagon cut rectangle recovers the uncut rectangle") {
  std::vector<PixelXY> px;
  for (int y = 0; y < 10; ++y)
    for (int x = 0; x < 20; ++x) {
      const bool corner = (x == 0 || x == 19) && (y == 0 || y == 9);
      if (!corner) px.push_back({x + 40, y + 30});
    }
  const auto mask = ModuleMask::from_pixels(0, 200, 150, px);
  const auto hull = mask_hull(mask);
  CHECK(hull.size() == 8);
  const auto q = fit_min_perimeter_quad(mask);
  CHECK(q.corners[0].x == doctest::Approx(40));
  CHECK(q.corners[0].y == doctest::Approx(30));
  CHECK(q.corners[2].x == doctest::Approx(60));
  CHECK(q.corners[2].y == doctest::Approx(40));
  CHECK(q.perimeter() == doctest::Approx(60.0));
  const Box b = mask.bbox();
  const Point2 center{0.5 * (b.x_min + b.x_max), 0.5 * (b.y_min + b.y_max)};
  CHECK(brute_force_min_perimeter(hull, center, 1.5 * std::hypot(b.width(), b.height())) ==
        doctest::Approx(q.perimeter()));
}

TEST_CASE("rotated square keeps its four corners") {
  const std::vector<Point2> diamond{{50, 10}, {90, 50}, {50, 90}, {10, 50}};
  const auto mask = polygon_mask(diamond, 120, 120);
  const auto q = fit_min_perimeter_quad(mask);
  // The pixel staircase bulges at most one pixel beyond the true edges.
  for (const auto& corner : diamond) {
    double best = 1e9;
    for (const auto& c : q.corners) best = std::min(best, distance(c, corner));
    CHECK(best < 2.0);
  }
  CHECK(q.convex());
}

TEST_CASE("fit matches brute force merging on small hulls") {
  std::mt19937 rng(21);
  int compared = 0;
  for (int trial = 0; trial < 60; ++trial) {
    auto base = random_convex_quad(rng, 20.0);
    std::vector<Point2> poly;
    for (auto& p : base) poly.push_back({p.x + 250, p.y + 250});
    const auto mask = polygon_mask(poly, 500, 500);
    const auto hull = mask_hull(mask);
    if (hull.size() > 9) continue;
    const Box b = mask.bbox();
    const Point2 center{0.5 * (b.x_min + b.x_max), 0.5 * (b.y_min + b.y_max)};
    const double brute = brute_force_min_perimeter(hull, center, 1.5 * std::hypot(b.width(), b.height()));
    const auto q = fit_min_perimeter_quad_unclipped(mask);
    const double bbox_perimeter = 2 * (b.width() + b.height());
    CHECK(q.perimeter() <= bbox_perimeter + 1e-9);
    CHECK(q.perimeter() == doctest::Approx(std::min(brute, bbox_perimeter)));
    ++compared;
  }
  CHECK(compared > 10);
}

TEST_CASE("exhaustive search never loses to greedy merging") {
  std::mt19937 rng(17);
  QuadFitParams greedy;
  greedy.exact_max_vertices = 0;
  for (int trial = 0; trial < 100; ++trial) {
    auto base = random_convex_quad(rng, 40.0);
    std::vector<Point2> poly;
    for (auto& p : base) poly.push_back({p.x + 200, p.y + 200});
    const auto mask = polygon_mask(poly, 400, 400);
    const auto exact = fit_min_perimeter_quad_unclipped(mask);
    const auto merged = fit_min_perimeter_quad_unclipped(mask, greedy);
    CHECK(exact.perimeter() <= merged.perimeter() + 1e-9);
    for (auto p : mask.pixels()) REQUIRE(exact.contains({p.x + 0.5, p.y + 0.5}, 1e-6));
  }
}

TEST_CASE("quad encloses every pixel center and beats the bbox") {
  std::mt19937 rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    auto base = random_convex_quad(rng, 30.0);
    std::vector<Point2> poly;
    for (auto& p : base) poly.push_back({p.x * 0.3 + 150, p.y * 0.3 + 150});
    const auto mask = polygon_mask(poly, 300, 300);
    const auto q = fit_min_perimeter_quad_unclipped(mask);
    const Box b = mask.bbox();
    CHECK(q.perimeter() <= 2 * (b.width() + b.height()) + 1e-9);
    for (auto p : mask.pixels()) REQUIRE(q.contains({p.x + 0.5, p.y + 0.5}, 1e-6));
  }
}

TEST_CASE("translation moves the quad by the same offset") {
  const std::vector<Point2> poly{{20, 14}, {61, 22}, {55, 47}, {18, 40}};
  const auto a = fit_min_perimeter_quad(polygon_mask(poly, 200, 150));
  std::vector<Point2> moved;
  for (auto p : poly) moved.push_back({p.x + 37, p.y + 21});
  const auto b = fit_min_perimeter_quad(polygon_mask(moved, 200, 150));
  for (int i = 0; i < 4; ++i) {
    CHECK(b.corners[i].x == doctest::Approx(a.corners[i].x + 37).epsilon(1e-9));
    CHECK(b.corners[i].y == doctest::Approx(a.corners[i].y + 21).epsilon(1e-9));
  }
}

TEST_CASE("fitted corners are clipped to the frame") {
  // A wedge touching the frame corner: merge corners could leave the frame.
  const std::vector<Point2> poly{{0, 0}, {30, 0}, {40, 12}, {0, 20}};
  const auto q = fit_min_perimeter_quad(polygon_mask(poly, 40, 30));
  for (const auto& c : q.corners) {
    CHECK(c.x >= 0);
    CHECK(c.x <= 40);
    CHECK(c.y >= 0);
    CHECK(c.y <= 30);
  }
}

TEST_CASE("degenerate hulls are rejected") {
  const std::vector<Point2> two{{0, 0}, {1, 1}};
  CHECK(error_of([&] { reduce_hull_to_quad(two, Box{0, 0, 1, 1}); }) == ErrorCode::DegenerateMask);
}

TEST_CASE("canonical order starts top-left and runs clockwise on screen") {
  Quadrilateral q{{Point2{30, 30}, Point2{10, 30}, Point2{30, 10}, Point2{10, 10}}};
  const auto c = canonical_order(q);
  CHECK(c.corners[0] == Point2{10, 10});
  CHECK(c.corners[1] == Point2{30, 10});
  CHECK(c.corners[2] == Point2{30, 30});
  CHECK(c.corners[3] == Point2{10, 30});
}

TEST_CASE("dlt reproduces simple maps") {
  const std::array<Point2, 4> unit{Point2{0, 0}, Point2{1, 0}, Point2{1, 1}, Point2{0, 1}};
  const auto id = dlt_homography(unit, unit);
  CHECK(max_abs_difference(id, Homography{}) < 1e-12);
  const std::array<Point2, 4> wide{Point2{0, 0}, Point2{2, 0}, Point2{2, 1}, Point2{0, 1}};
  const auto s = dlt_homography(unit, wide);
  CHECK(max_abs_difference(s, Homography::scaling(2, 1)) < 1e-12);
}

TEST_CASE("dlt residual and round trip on random quads") {
  std::mt19937 rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    const auto src = random_convex_quad(rng);
    const auto dst = random_convex_quad(rng);
    const auto h = dlt_homography(src, dst);
    CHECK(max_residual(h, src, dst) < 1e-9);
    CHECK(std::abs(h(2, 2) - 1.0) < 1e-15);
    const auto back = dlt_homography(dst, src);
    CHECK(max_abs_difference((back * h), Homography{}) < 1e-9);
    CHECK(max_residual(h.inverse(), dst, src) < 1e-9);
  }
}

TEST_CASE("collinear points are degenerate") {
  const std::array<Point2, 4> bad{Point2{0, 0}, Point2{1, 1}, Point2{2, 2}, Point2{0, 5}};
  const std::array<Point2, 4> ok{Point2{0, 0}, Point2{1, 0}, Point2{1, 1}, Point2{0, 1}};
  CHECK(error_of([&] { dlt_homography(bad, ok); }) == ErrorCode::DegenerateConfiguration);
  CHECK(error_of([&] { dlt_homography(ok, bad); }) == ErrorCode::DegenerateConfiguration);
}

TEST_CASE("least squares fit recovers a known homography") {
  std::mt19937 rng(11);
  std::uniform_real_distribution<double> u(0, 640);
  const std::array<Point2, 4> a{Point2{0, 0}, Point2{640, 0}, Point2{640, 512}, Point2{0, 512}};
  const std::array<Point2, 4> b{Point2{12, 5}, Point2{630, -4}, Point2{650, 520}, Point2{-8, 500}};
  const auto truth = dlt_homography(a, b);
  std::vector<Point2> src, dst;
  for (int i = 0; i < 50; ++i) {
    const Point2 p{u(rng), u(rng) * 0.8};
    src.push_back(p);
    dst.push_back(truth.apply(p));
  }
  const auto fit = fit_homography(src, dst);
  for (std::size_t i = 0; i < src.size(); ++i) CHECK(distance(fit.apply(src[i]), dst[i]) < 1e-6);
}

TEST_CASE("patch size rounds the longer sides half up") {
  Quadrilateral q{{Point2{0, 0}, Point2{10.5, 0}, Point2{10.4, 6.49}, Point2{0, 6.2}}};
  const auto [w, h] = patch_size(q);
  CHECK(w == 11);
  CHECK(h == 6);
}

TEST_CASE("axis-aligned quad warps to the exact crop") {
  std::mt19937 rng(2);
  std::uniform_int_distribution<int> d(0, 65535);
  Frame f{3, RasterU16(60, 40)};
  for (auto& v : f.raster.data()) v = static_cast<std::uint16_t>(d(rng));
  const Quadrilateral q{{Point2{7, 5}, Point2{31, 5}, Point2{31, 17}, Point2{7, 17}}};
  const auto patch = warp_patch(f, q);
  REQUIRE(patch.width() == 24);
  REQUIRE(patch.height() == 12);
  CHECK(patch.source_frame == 3);
  for (int v = 0; v < 12; ++v)
    for (int u = 0; u < 24; ++u) REQUIRE(patch.pixels(u, v) == f.raster(7 + u, 5 + v));
}

TEST_CASE("quarter-turned quad warps to the rotated crop") {
  std::mt19937 rng(4);
  std::uniform_int_distribution<int> d(0, 65535);
  Frame f{0, RasterU16(50, 50)};
  for (auto& v : f.raster.data()) v = static_cast<std::uint16_t>(d(rng));
  // Region x in [10, 30), y in [5, 13); the patch's top edge runs up its left side.
  const Quadrilateral q{{Point2{10, 13}, Point2{10, 5}, Point2{30, 5}, Point2{30, 13}}};
  const auto patch = warp_patch(f, q);
  REQUIRE(patch.width() == 8);
  REQUIRE(patch.height() == 20);
  for (int v = 0; v < 20; ++v)
    for (int u = 0; u < 8; ++u) REQUIRE(patch.pixels(u, v) == f.raster(10 + v, 12 - u));
}

TEST_CASE("sheared quad over a linear ramp matches the analytic ramp") {
  Frame f{0, RasterU16(200, 160)};
  auto ramp = [](double x, double y) { return 1000.0 + 37.0 * x + 11.0 * y; };
  for (int y = 0; y < 160; ++y)
    for (int x = 0; x < 200; ++x) f.raster(x, y) = static_cast<std::uint16_t>(std::lround(ramp(x, y)));
  // Parallelogram, so the quad-to-rectangle map is affine and easy to invert by hand.
  const Point2 tl{40.3, 30.7}, tr{120.9, 42.1}, bl{52.6, 90.2};
  const Point2 br = tr + (bl - tl);
  const Quadrilateral q{{tl, tr, br, bl}};
  const auto patch = warp_patch(f, q);
  const auto [w, h] = patch_size(q);
  for (int v = 0; v < h; ++v)
    for (int u = 0; u < w; ++u) {
      const double a = (u + 0.5) / w, b = (v + 0.5) / h;
      const Point2 p = tl + a * (tr - tl) + b * (bl - tl);
      REQUIRE(std::abs(patch.pixels(u, v) - ramp(p.x - 0.5, p.y - 0.5)) <= 0.5 + 1e-6);
    }
}

TEST_CASE("constant region warps to a constant patch") {
  Frame f{0, RasterU16(80, 80, 31234)};
  const Quadrilateral q{{Point2{10.2, 12.9}, Point2{61.7, 8.3}, Point2{70.1, 66.6}, Point2{5.5, 59.4}}};
  const auto patch = warp_patch(f, q);
  for (auto v : patch.pixels.data()) CHECK(v == 31234);
}

TEST_CASE("iou of a rectangle with its own quad is one") {
  const auto m = rect_mask(10, 10, 30, 12);
  const auto c = check_mask(m);
  CHECK(c.iou == 1.0);
  CHECK(c.accepted);
}

TEST_CASE("l-shaped mask is rejected") {
  // Two 40x4 arms meeting at a corner: area 40*4 + 36*4 = 304.
  std::vector<PixelXY> px;
  for (int y = 0; y < 40; ++y)
    for (int x = 0; x < 40; ++x)
      if (x < 4 || y >= 36) px.push_back({x + 20, y + 20});
  const auto m = ModuleMask::from_pixels(0, 100, 100, px);
  const auto c = check_mask(m);
  std::size_t inter = 0;
  const auto quad_px = oracle_quad_pixels(c.quad, 100, 100, &m, &inter);
  const double oracle = double(inter) / double(m.area() + quad_px - inter);
  CHECK(c.iou == doctest::Approx(oracle).epsilon(1e-12));
  CHECK(c.iou < 0.9);
  CHECK_FALSE(c.accepted);
}

TEST_CASE("slightly eroded rectangle is accepted") {
  std::mt19937 rng(8);
  std::uniform_real_distribution<double> u(0, 1);
  // 40x20 rectangle with about 5% of its pixels shaved from the boundary band.
  std::vector<PixelXY> px;
  for (int y = 0; y < 20; ++y)
    for (int x = 0; x < 40; ++x) {
      const bool band = x < 2 || x >= 38 || y < 2 || y >= 18;
      const bool corner = (x == 0 || x == 39) && (y == 0 || y == 19);
      if (band && !corner && u(rng) < 0.18) continue;
      px.push_back({x + 30, y + 30});
    }
  const auto m = ModuleMask::from_pixels(0, 120, 100, px);
  const auto c = check_mask(m);
  std::size_t inter = 0;
  const auto quad_px = oracle_quad_pixels(c.quad, 120, 100, &m, &inter);
  const double oracle = double(inter) / double(m.area() + quad_px - inter);
  CHECK(c.iou == doctest::Approx(oracle).epsilon(1e-12));
  CHECK(c.iou > 0.9);
  CHECK(c.iou < 0.99);
  CHECK(c.accepted);
}

}  // TEST_SUITE
