#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "pvx/row_filter.hpp"
#include "support.hpp"

using namespace pvx;
using testing::error_of;

namespace {

CenterLine line(double slope, double intercept, int inliers, double residual = 0.0) {
  CenterLine l;
  l.slope = slope;
  l.intercept = intercept;
  for (int i = 0; i < inliers; ++i) l.inliers.push_back(i);
  l.residual = residual;
  return l;
}

std::set<int> as_set(const std::vector<int>& v) { return {v.begin(), v.end()}; }

}  // namespace

TEST_SUITE("row_filter") {

TEST_CASE("two exact horizontal rows") {
  std::vector<Point2> c;
  for (int i = 0; i < 6; ++i) c.push_back({30.0 + 50 * i, 100});
  for (int i = 0; i < 6; ++i) c.push_back({30.0 + 50 * i, 20});
  const auto lines = fit_lines(c);
  REQUIRE(lines.size() == 2);
  std::vector<double> intercepts{lines[0].intercept, lines[1].intercept};
  std::sort(intercepts.begin(), intercepts.end());
  CHECK(intercepts[0] == doctest::Approx(20));
  CHECK(intercepts[1] == doctest::Approx(100));
  for (const auto& l : lines) {
    CHECK(l.slope == doctest::Approx(0).epsilon(1e-12));
    CHECK(l.inliers.size() == 6);
  }
}

TEST_CASE("steep lines are rejected") {
  std::vector<Point2> c;
  const double s = std::tan(35.0 * 3.14159265358979323846 / 180.0);
  for (int i = 0; i < 6; ++i) c.push_back({40.0 * i, 10 + s * 40.0 * i});
  CHECK(error_of([&] { fit_lines(c); }) == ErrorCode::NoLinesFound);
  // The same points are accepted once the slope is within the limit.
  std::vector<Point2> gentle;
  const double g = std::tan(15.0 * 3.14159265358979323846 / 180.0);
  for (int i = 0; i < 6; ++i) gentle.push_back({40.0 * i, 10 + g * 40.0 * i});
  CHECK(fit_lines(gentle).size() == 1);
}

TEST_CASE("noisy lines are partitioned as generated") {
  std::mt19937 rng(12);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Point2> c;
    std::vector<int> label;
    for (int i = 0; i < 8; ++i) {
      c.push_back({20.0 + 70 * i + noise(rng), 300 + 0.05 * (20.0 + 70 * i) + noise(rng)});
      label.push_back(0);
      c.push_back({35.0 + 70 * i + noise(rng), 200 - 0.03 * (35.0 + 70 * i) + noise(rng)});
      label.push_back(1);
    }
    RowFilterParams p;
    const auto lines = fit_lines(c, 5.0, p);
    REQUIRE(lines.size() == 2);
    for (const auto& l : lines) {
      REQUIRE(l.inliers.size() == 8);
      const int first = label[static_cast<std::size_t>(l.inliers[0])];
      for (int k : l.inliers) CHECK(label[static_cast<std::size_t>(k)] == first);
    }
  }
}

TEST_CASE("shuffled centers give identical lines") {
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> jitter(-1.5, 1.5);
  std::vector<Point2> c;
  for (int r = 0; r < 3; ++r)
    for (int i = 0; i < 9; ++i) c.push_back({15.0 + 44 * i + jitter(rng), 420.0 - 31 * r + 0.04 * i * 44 + jitter(rng)});
  const auto a = fit_lines(c);
  std::vector<int> perm(c.size());
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<Point2> shuffled;
  for (int k : perm) shuffled.push_back(c[static_cast<std::size_t>(k)]);
  const auto b = fit_lines(shuffled);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].slope == b[i].slope);
    CHECK(a[i].intercept == b[i].intercept);
    std::vector<int> mapped;
    for (int k : b[i].inliers) mapped.push_back(perm[static_cast<std::size_t>(k)]);
    std::sort(mapped.begin(), mapped.end());
    CHECK(mapped == a[i].inliers);
  }
}

TEST_CASE("vertical pitch and tolerance") {
  std::vector<Point2> c;
  for (int r = 0; r < 2; ++r)
    for (int i = 0; i < 5; ++i) c.push_back({50.0 * i, 100.0 + 32 * r});
  CHECK(median_vertical_pitch(c) == doctest::Approx(32));
  CHECK(inlier_tolerance(c) == doctest::Approx(8));
  std::vector<Point2> single{{0, 0}, {50, 0}, {100, 0}};
  CHECK(median_vertical_pitch(single) == 0.0);
  CHECK(inlier_tolerance(single) == 10.0);
}

TEST_CASE("parallel lines survive pruning") {
  const auto kept = prune_intersecting({line(0, 50, 5), line(0, 90, 5)}, 0, 640);
  CHECK(kept.size() == 2);
}

TEST_CASE("crossing pair loses the line with fewer inliers") {
  // y = 50 and y = 0.2 x + 40 meet at x = 50, inside the frame.
  const auto a = line(0.0, 50, 6), b = line(0.2, 40, 4);
  CHECK(lines_intersect(a, b, 0, 640));
  CHECK_FALSE(lines_intersect(a, b, 60, 640));
  const auto kept = prune_intersecting({a, b}, 0, 640);
  REQUIRE(kept.size() == 1);
  CHECK(kept[0].slope == 0.0);
  const auto kept2 = prune_intersecting({b, a}, 0, 640);
  REQUIRE(kept2.size() == 1);
  CHECK(kept2[0].slope == 0.0);
}

TEST_CASE("equal inliers fall back to the larger residual") {
  const auto kept = prune_intersecting({line(0.0, 50, 5, 0.5), line(0.2, 40, 5, 2.0)}, 0, 640);
  REQUIRE(kept.size() == 1);
  CHECK(kept[0].residual == 0.5);
}

TEST_CASE("line crossing two others is removed alone") {
  const auto kept = prune_intersecting({line(0, 100, 3), line(0, 200, 3), line(0.5, 50, 9)}, 0, 640);
  REQUIRE(kept.size() == 2);
  CHECK(kept[0].intercept == 100);
  CHECK(kept[1].intercept == 200);
}

TEST_CASE("front rows are the largest intercepts") {
  std::vector<CenterLine> lines{line(0, 60, 3), line(0, 20, 3), line(0, 100, 3)};
  lines[0].inliers = {3, 4, 5};
  lines[1].inliers = {6, 7, 8};
  lines[2].inliers = {0, 1, 2};
  const auto two = select_front_rows(lines, 2);
  REQUIRE(two.lines.size() == 2);
  CHECK(two.lines[0].intercept == 100);
  CHECK(two.lines[1].intercept == 60);
  CHECK(two.ordinals == std::vector<int>{0, 1, 2, 3, 4, 5});
  const std::vector<CenterLine> one{line(0, 7, 3)};
  CHECK(select_front_rows(one, 1).lines.size() == 1);
  CHECK(error_of([&] { select_front_rows(std::vector<CenterLine>{lines[0], lines[1]}, 3); }) == ErrorCode::TooFewLines);
}

TEST_CASE("background row is dropped") {
  // Front stack of two sub-rows near the bottom, a background row higher up.
  std::vector<Point2> c;
  std::set<int> front;
  for (int i = 0; i < 10; ++i) {
    front.insert(static_cast<int>(c.size()));
    c.push_back({30.0 + 46 * i, 470 + 0.01 * i});
    front.insert(static_cast<int>(c.size()));
    c.push_back({30.0 + 46 * i, 440 + 0.01 * i});
  }
  for (int i = 0; i < 12; ++i) c.push_back({12.0 + 40 * i, 360 - 0.02 * i});
  for (int i = 0; i < 12; ++i) c.push_back({12.0 + 40 * i, 335 - 0.02 * i});
  const auto rows = filter_front_rows(c, 2, 0, 640);
  CHECK(as_set(rows.ordinals) == front);
}

}  // TEST_SUITE
