#include "pvx/row_filter.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "pvx/error.hpp"

namespace pvx {

namespace {

constexpr double kDegToRad = 3.14159265358979323846 / 180.0;

struct Candidate {
  Point2 point;
  Point2 direction;  // unit vector
};

double perpendicular(const Candidate& line, Point2 p) { return std::abs(cross(line.direction, p - line.point)); }

// Total least squares line through the points, as y = slope x + intercept.
bool tls_fit(std::span<const Point2> pts, double& slope, double& intercept) {
  double mx = 0, my = 0;
  for (auto p : pts) {
    mx += p.x;
    my += p.y;
  }
  mx /= static_cast<double>(pts.size());
  my /= static_cast<double>(pts.size());
  double sxx = 0, syy = 0, sxy = 0;
  for (auto p : pts) {
    sxx += (p.x - mx) * (p.x - mx);
    syy += (p.y - my) * (p.y - my);
    sxy += (p.x - mx) * (p.y - my);
  }
  // Principal direction of the scatter matrix.
  const double theta = 0.5 * std::atan2(2 * sxy, sxx - syy);
  const double dx = std::cos(theta), dy = std::sin(theta);
  if (std::abs(dx) < 1e-12) return false;
  slope = dy / dx;
  intercept = my - slope * mx;
  return true;
}

}  // namespace

double median_vertical_pitch(std::span<const Point2> centers) {
  std::vector<double> pitches;
  for (std::size_t i = 0; i < centers.size(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < centers.size(); ++j) {
      if (i == j) continue;
      const Point2 d = centers[j] - centers[i];
      if (std::abs(d.y) > std::abs(d.x)) best = std::min(best, norm(d));
    }
    if (std::isfinite(best)) pitches.push_back(best);
  }
  if (pitches.empty()) return 0.0;
  std::sort(pitches.begin(), pitches.end());
  const std::size_t n = pitches.size();
  return n % 2 ? pitches[n / 2] : 0.5 * (pitches[n / 2 - 1] + pitches[n / 2]);
}

double inlier_tolerance(std::span<const Point2> centers, const RowFilterParams& params) {
  const double pitch = median_vertical_pitch(centers);
  return pitch > 0.0 ? params.inlier_tol_factor * pitch : params.fallback_tol_px;
}

std::vector<CenterLine> fit_lines(std::span<const Point2> centers, const RowFilterParams& params) {
  return fit_lines(centers, inlier_tolerance(centers, params), params);
}

std::vector<CenterLine> fit_lines(std::span<const Point2> centers, double tol, const RowFilterParams& params) {
  // Canonical order so that the result does not depend on input order.
  std::vector<int> order(centers.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    const Point2 p = centers[static_cast<std::size_t>(a)], q = centers[static_cast<std::size_t>(b)];
    return p.x != q.x ? p.x < q.x : p.y < q.y;
  });

  const double max_slope = std::tan(params.max_angle_deg * kDegToRad);
  std::mt19937_64 rng(params.rng_seed);
  std::vector<int> remaining = order;
  std::vector<CenterLine> lines;

  while (static_cast<int>(remaining.size()) >= params.min_inliers) {
    const std::size_t n = remaining.size();
    auto pt = [&](std::size_t k) { return centers[static_cast<std::size_t>(remaining[k])]; };

    std::vector<std::size_t> best;
    auto consider = [&](std::size_t i, std::size_t j) {
      const Point2 a = pt(i), b = pt(j);
      const Point2 d = b - a;
      if (d.x == 0.0 || std::abs(d.y / d.x) > max_slope) return;
      const Candidate c{a, (1.0 / norm(d)) * d};
      std::vector<std::size_t> in;
      for (std::size_t k = 0; k < n; ++k)
        if (perpendicular(c, pt(k)) <= tol) in.push_back(k);
      if (in.size() > best.size()) best = std::move(in);
    };
    const std::size_t pairs = n * (n - 1) / 2;
    if (pairs <= static_cast<std::size_t>(params.iterations)) {
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) consider(i, j);
    } else {
      std::uniform_int_distribution<std::size_t> pick(0, n - 1);
      for (int it = 0; it < params.iterations; ++it) {
        const std::size_t i = pick(rng);
        std::size_t j = pick(rng);
        while (j == i) j = pick(rng);
        consider(std::min(i, j), std::max(i, j));
      }
    }
    if (static_cast<int>(best.size()) < params.min_inliers) break;

    std::vector<Point2> pts;
    for (auto k : best) pts.push_back(pt(k));
    CenterLine line;
    if (!tls_fit(pts, line.slope, line.intercept) || std::abs(line.slope) > max_slope) {
      // Keep the consensus but fall back to the line through its extreme points.
      const Point2 a = pts.front(), b = pts.back();
      line.slope = (b.y - a.y) / (b.x - a.x);
      line.intercept = a.y - line.slope * a.x;
    }
    double ss = 0.0;
    const double scale = std::sqrt(1.0 + line.slope * line.slope);
    for (auto p : pts) {
      const double r = (p.y - line.y_at(p.x)) / scale;
      ss += r * r;
    }
    line.residual = std::sqrt(ss / static_cast<double>(pts.size()));
    for (auto k : best) line.inliers.push_back(remaining[k]);
    std::sort(line.inliers.begin(), line.inliers.end());
    lines.push_back(std::move(line));

    std::vector<int> rest;
    std::size_t b = 0;
    for (std::size_t k = 0; k < n; ++k) {
      if (b < best.size() && best[b] == k) {
        ++b;
        continue;
      }
      rest.push_back(remaining[k]);
    }
    remaining = std::move(rest);
  }
  if (lines.empty()) fail(ErrorCode::NoLinesFound, "no line with enough collinear mask centers");
  return lines;
}

bool lines_intersect(const CenterLine& a, const CenterLine& b, double x_min, double x_max) {
  const double d0 = a.y_at(x_min) - b.y_at(x_min);
  const double d1 = a.y_at(x_max) - b.y_at(x_max);
  return d0 * d1 <= 0.0;
}

std::vector<CenterLine> prune_intersecting(std::vector<CenterLine> lines, double x_min, double x_max) {
  while (lines.size() > 1) {
    std::vector<int> count(lines.size(), 0);
    for (std::size_t i = 0; i < lines.size(); ++i)
      for (std::size_t j = i + 1; j < lines.size(); ++j)
        if (lines_intersect(lines[i], lines[j], x_min, x_max)) {
          ++count[i];
          ++count[j];
        }
    std::size_t worst = 0;
    for (std::size_t i = 1; i < lines.size(); ++i) {
      const auto& a = lines[i];
      const auto& w = lines[worst];
      if (count[i] != count[worst]) {
        if (count[i] > count[worst]) worst = i;
      } else if (a.inliers.size() != w.inliers.size()) {
        if (a.inliers.size() < w.inliers.size()) worst = i;
      } else if (a.residual >= w.residual) {
        worst = i;
      }
    }
    if (count[worst] == 0) break;
    lines.erase(lines.begin() + static_cast<std::ptrdiff_t>(worst));
  }
  return lines;
}

FrontRows select_front_rows(std::span<const CenterLine> lines, int rows_per_stack) {
  if (rows_per_stack < 1) fail(ErrorCode::InvalidArgument, "rows_per_stack must be >= 1");
  if (static_cast<int>(lines.size()) < rows_per_stack)
    fail(ErrorCode::TooFewLines, "found " + std::to_string(lines.size()) + " lines, need " + std::to_string(rows_per_stack));
  std::vector<CenterLine> sorted(lines.begin(), lines.end());
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const CenterLine& a, const CenterLine& b) { return a.intercept > b.intercept; });
  sorted.resize(static_cast<std::size_t>(rows_per_stack));
  FrontRows out;
  for (const auto& l : sorted) out.ordinals.insert(out.ordinals.end(), l.inliers.begin(), l.inliers.end());
  std::sort(out.ordinals.begin(), out.ordinals.end());
  out.ordinals.erase(std::unique(out.ordinals.begin(), out.ordinals.end()), out.ordinals.end());
  out.lines = std::move(sorted);
  return out;
}

FrontRows filter_front_rows(std::span<const Point2> centers, int rows_per_stack, double x_min, double x_max,
                            const RowFilterParams& params) {
  auto lines = prune_intersecting(fit_lines(centers, params), x_min, x_max);
  return select_front_rows(lines, rows_per_stack);
}

}  // namespace pvx
