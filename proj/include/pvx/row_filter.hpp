#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "pvx/geometry.hpp"

namespace pvx {

// y = slope * x + intercept, fitted to a subset of mask centers.
struct CenterLine {
  double slope = 0.0;
  double intercept = 0.0;
  std::vector<int> inliers;  // ordinals into the input center list, ascending
  double residual = 0.0;     // RMS perpendicular distance of the inliers

  double y_at(double x) const { return slope * x + intercept; }
};

struct RowFilterParams {
  int min_inliers = 3;
  double inlier_tol_factor = 0.25;  // times the median vertical pitch
  double fallback_tol_px = 10.0;
  int iterations = 500;
  double max_angle_deg = 20.0;
  std::uint64_t rng_seed = 0x0f17e2;
};

// Median distance from each center to its nearest neighbour lying more
// vertically than horizontally from it; 0 when no such pair exists.
double median_vertical_pitch(std::span<const Point2> centers);
double inlier_tolerance(std::span<const Point2> centers, const RowFilterParams& params = {});

// Sequential RANSAC: fit a line, remove its inliers, repeat. Throws NoLinesFound.
std::vector<CenterLine> fit_lines(std::span<const Point2> centers, const RowFilterParams& params = {});
std::vector<CenterLine> fit_lines(std::span<const Point2> centers, double inlier_tol, const RowFilterParams& params);

bool lines_intersect(const CenterLine& a, const CenterLine& b, double x_min, double x_max);

// Repeatedly drops the line crossing the most others inside [x_min, x_max].
// Ties: fewer inliers first, then larger residual, then later position.
std::vector<CenterLine> prune_intersecting(std::vector<CenterLine> lines, double x_min, double x_max);

struct FrontRows {
  std::vector<CenterLine> lines;  // by descending intercept
  std::vector<int> ordinals;      // ascending, no duplicates
};

// The rows_per_stack lines with the largest intercepts. Throws TooFewLines.
FrontRows select_front_rows(std::span<const CenterLine> lines, int rows_per_stack);

// fit_lines -> prune_intersecting -> select_front_rows.
FrontRows filter_front_rows(std::span<const Point2> centers, int rows_per_stack, double x_min, double x_max,
                            const RowFilterParams& params = {});

}  // namespace pvx
