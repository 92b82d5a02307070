#include "pvx/rectify.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>

#include <Eigen/Dense>

#include "pvx/error.hpp"

namespace pvx {

// --- polygons -----------------------------------------------------------------------

double Quadrilateral::perimeter() const { return polygon_perimeter(corners); }

bool Quadrilateral::contains(Point2 p, double eps) const {
  bool any_pos = false, any_neg = false;
  for (int i = 0; i < 4; ++i) {
    const Point2 a = corners[i];
    const Point2 b = corners[(i + 1) % 4];
    const double c = cross(b - a, p - a);
    if (c > eps) any_pos = true;
    if (c < -eps) any_neg = true;
  }
  return !(any_pos && any_neg);
}

bool Quadrilateral::convex() const {
  int sign = 0;
  for (int i = 0; i < 4; ++i) {
    const Point2 a = corners[i], b = corners[(i + 1) % 4], c = corners[(i + 2) % 4];
    const double z = cross(b - a, c - b);
    if (std::abs(z) < 1e-12) continue;
    const int s = z > 0 ? 1 : -1;
    if (sign == 0) sign = s;
    if (s != sign) return false;
  }
  return sign != 0;
}

Box Quadrilateral::bounds() const {
  Box b{corners[0].x, corners[0].y, corners[0].x, corners[0].y};
  for (const auto& p : corners) {
    b.x_min = std::min(b.x_min, p.x);
    b.y_min = std::min(b.y_min, p.y);
    b.x_max = std::max(b.x_max, p.x);
    b.y_max = std::max(b.y_max, p.y);
  }
  return b;
}

double polygon_perimeter(std::span<const Point2> polygon) {
  double sum = 0.0;
  for (std::size_t i = 0; i < polygon.size(); ++i) sum += distance(polygon[i], polygon[(i + 1) % polygon.size()]);
  return sum;
}

std::vector<Point2> convex_hull(std::vector<Point2> pts) {
  std::sort(pts.begin(), pts.end(), [](Point2 a, Point2 b) { return a.x != b.x ? a.x < b.x : a.y < b.y; });
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  if (pts.size() < 3) return pts;
  std::vector<Point2> hull(2 * pts.size());
  std::size_t k = 0;
  for (const auto& p : pts) {
    while (k >= 2 && cross(hull[k - 1] - hull[k - 2], p - hull[k - 2]) <= 0) --k;
    hull[k++] = p;
  }
  for (std::size_t i = pts.size() - 1, t = k + 1; i-- > 0;) {
    const Point2 p = pts[i];
    while (k >= t && cross(hull[k - 1] - hull[k - 2], p - hull[k - 2]) <= 0) --k;
    hull[k++] = p;
  }
  hull.resize(k - 1);
  return hull;
}

std::vector<Point2> mask_hull(const ModuleMask& mask) {
  std::vector<Point2> pts;
  const RasterU8& bm = mask.bitmap();
  for (int y = 0; y < bm.height(); ++y) {
    int lo = -1, hi = -1;
    for (int x = 0; x < bm.width(); ++x)
      if (bm(x, y)) {
        if (lo < 0) lo = x;
        hi = x;
      }
    if (lo < 0) continue;
    const double top = mask.y0() + y, bottom = top + 1.0;
    const double left = mask.x0() + lo, right = mask.x0() + hi + 1.0;
    pts.push_back({left, top});
    pts.push_back({left, bottom});
    pts.push_back({right, top});
    pts.push_back({right, bottom});
  }
  return convex_hull(std::move(pts));
}

namespace {

struct Merge {
  bool valid = false;
  Point2 corner;
  double delta = 0.0;
};

// Removing edge (v[i], v[i+1]) by extending its two neighbouring edges until
// they meet.
Merge evaluate_merge(const std::vector<Point2>& v, std::size_t i, Point2 center, double limit) {
  const std::size_t n = v.size();
  const Point2 a = v[(i + n - 1) % n];
  const Point2 b = v[i];
  const Point2 c = v[(i + 1) % n];
  const Point2 d = v[(i + 2) % n];
  const Point2 d1 = b - a;
  const Point2 d2 = d - c;
  const double denom = cross(d1, d2);
  if (denom <= 1e-12 * norm(d1) * norm(d2)) return {};
  const double t = cross(c - a, d2) / denom;
  const Point2 p = a + t * d1;
  if (distance(p, center) > limit) return {};
  const double delta = distance(a, p) + distance(p, d) - distance(a, b) - distance(b, c) - distance(c, d);
  return {true, p, delta};
}

// Smallest-perimeter quad whose four sides lie on lines through hull edges.
// Every such line supports the hull, so the quad always encloses it.
std::optional<Quadrilateral> exact_quad(const std::vector<Point2>& h, Point2 center, double limit) {
  const std::size_t n = h.size();
  std::vector<Point2> dir(n);
  std::vector<double> heading(n);
  double area2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) area2 += cross(h[i], h[(i + 1) % n]);
  const double sense = area2 >= 0.0 ? 1.0 : -1.0;
  for (std::size_t i = 0; i < n; ++i) {
    dir[i] = h[(i + 1) % n] - h[i];
    heading[i] = sense * std::atan2(dir[i].y, dir[i].x);
  }
  const auto turn = [&](std::size_t i, std::size_t j) {
    double t = heading[j] - heading[i];
    while (t < 0.0) t += 2.0 * std::numbers::pi;
    while (t >= 2.0 * std::numbers::pi) t -= 2.0 * std::numbers::pi;
    return t;
  };
  constexpr double kEps = 1e-9;
  std::optional<Quadrilateral> best;
  double best_perimeter = 0.0;
  std::array<std::size_t, 4> e{};
  for (e[0] = 0; e[0] < n; ++e[0])
    for (e[1] = e[0] + 1; e[1] < n; ++e[1]) {
      if (turn(e[0], e[1]) >= std::numbers::pi - kEps) break;
      for (e[2] = e[1] + 1; e[2] < n; ++e[2]) {
        if (turn(e[1], e[2]) >= std::numbers::pi - kEps) break;
        for (e[3] = e[2] + 1; e[3] < n; ++e[3]) {
          if (turn(e[2], e[3]) >= std::numbers::pi - kEps) break;
          if (turn(e[3], e[0]) >= std::numbers::pi - kEps) continue;
          bool ok = true;
          Quadrilateral q;
          for (std::size_t k = 0; k < 4 && ok; ++k) {
            const std::size_t a = e[k];
            const std::size_t b = e[(k + 1) % 4];
            const double denom = cross(dir[a], dir[b]);
            if (std::abs(denom) <= 1e-12 * norm(dir[a]) * norm(dir[b])) {
              ok = false;
              break;
            }
            const Point2 p = h[a] + (cross(h[b] - h[a], dir[b]) / denom) * dir[a];
            if (distance(p, center) > limit) ok = false;
            q.corners[k] = p;
          }
          if (!ok) continue;
          const double per = q.perimeter();
          if (!best || per < best_perimeter - 1e-12) {
            best = q;
            best_perimeter = per;
          }
        }
      }
    }
  return best;
}

Quadrilateral box_quad(const Box& b) {
  return {{Point2{b.x_min, b.y_min}, Point2{b.x_max, b.y_min}, Point2{b.x_max, b.y_max}, Point2{b.x_min, b.y_max}}};
}

}  // namespace

Quadrilateral reduce_hull_to_quad(std::span<const Point2> hull, const Box& bounds, const QuadFitParams& params) {
  if (hull.size() < 3) fail(ErrorCode::DegenerateMask, "hull has fewer than 3 vertices");
  std::vector<Point2> poly(hull.begin(), hull.end());
  const Point2 center{0.5 * (bounds.x_min + bounds.x_max), 0.5 * (bounds.y_min + bounds.y_max)};
  const double limit = params.merge_limit_factor * std::hypot(bounds.width(), bounds.height());
  const Quadrilateral bbox = box_quad(bounds);

  if (poly.size() > 4 && poly.size() <= params.exact_max_vertices) {
    const auto q = exact_quad(poly, center, limit);
    if (!q || q->perimeter() > bbox.perimeter()) return bbox;
    return *q;
  }

  bool stuck = false;
  while (poly.size() > 4) {
    std::size_t best = poly.size();
    Merge best_merge;
    for (std::size_t i = 0; i < poly.size(); ++i) {
      const Merge m = evaluate_merge(poly, i, center, limit);
      if (m.valid && (best == poly.size() || m.delta < best_merge.delta)) {
        best = i;
        best_merge = m;
      }
    }
    if (best == poly.size()) {
      stuck = true;
      break;
    }
    const std::size_t n = poly.size();
    const std::size_t next = (best + 1) % n;
    poly[best] = best_merge.corner;
    poly.erase(poly.begin() + static_cast<std::ptrdiff_t>(next));
  }
  if (poly.size() == 3) {
    // Split the longest edge so a (degenerate) quad still results.
    std::size_t longest = 0;
    for (std::size_t i = 1; i < 3; ++i)
      if (distance(poly[i], poly[(i + 1) % 3]) > distance(poly[longest], poly[(longest + 1) % 3])) longest = i;
    const Point2 mid = 0.5 * (poly[longest] + poly[(longest + 1) % 3]);
    poly.insert(poly.begin() + static_cast<std::ptrdiff_t>(longest) + 1, mid);
  }
  if (stuck) return bbox;
  Quadrilateral q{{poly[0], poly[1], poly[2], poly[3]}};
  if (q.perimeter() > bbox.perimeter()) return bbox;
  return q;
}

Quadrilateral canonical_order(const Quadrilateral& quad) {
  Point2 c{};
  for (const auto& p : quad.corners) c = c + 0.25 * p;
  std::array<Point2, 4> pts = quad.corners;
  std::sort(pts.begin(), pts.end(),
            [c](Point2 a, Point2 b) { return std::atan2(a.y - c.y, a.x - c.x) < std::atan2(b.y - c.y, b.x - c.x); });
  std::size_t start = 0;
  for (std::size_t i = 1; i < 4; ++i)
    if (pts[i].x + pts[i].y < pts[start].x + pts[start].y) start = i;
  Quadrilateral out;
  for (std::size_t i = 0; i < 4; ++i) out.corners[i] = pts[(start + i) % 4];
  return out;
}

Quadrilateral fit_min_perimeter_quad_unclipped(const ModuleMask& mask, const QuadFitParams& params) {
  if (mask.area() == 0) fail(ErrorCode::DegenerateMask, "empty mask");
  const auto hull = mask_hull(mask);
  return canonical_order(reduce_hull_to_quad(hull, mask.bbox(), params));
}

Quadrilateral fit_min_perimeter_quad(const ModuleMask& mask, const QuadFitParams& params) {
  Quadrilateral q = fit_min_perimeter_quad_unclipped(mask, params);
  for (auto& p : q.corners) {
    p.x = std::clamp(p.x, 0.0, static_cast<double>(mask.frame_width()));
    p.y = std::clamp(p.y, 0.0, static_cast<double>(mask.frame_height()));
  }
  return q;
}

// --- homographies -------------------------------------------------------------------------

namespace {

bool three_collinear(std::span<const Point2, 4> p) {
  double extent = 0.0;
  for (const auto& a : p)
    for (const auto& b : p) extent = std::max(extent, distance(a, b));
  if (extent <= 0.0) return true;
  const double tol = 1e-10 * extent * extent;
  for (int i = 0; i < 4; ++i)
    for (int j = i + 1; j < 4; ++j)
      for (int k = j + 1; k < 4; ++k)
        if (std::abs(cross(p[j] - p[i], p[k] - p[i])) <= tol) return true;
  return false;
}

// Similarity transform moving the centroid to the origin with mean distance sqrt(2).
Eigen::Matrix3d normalizer(std::span<const Point2> pts) {
  double cx = 0.0, cy = 0.0;
  for (const auto& p : pts) {
    cx += p.x;
    cy += p.y;
  }
  cx /= static_cast<double>(pts.size());
  cy /= static_cast<double>(pts.size());
  double mean = 0.0;
  for (const auto& p : pts) mean += std::hypot(p.x - cx, p.y - cy);
  mean /= static_cast<double>(pts.size());
  const double s = mean > 0.0 ? std::sqrt(2.0) / mean : 1.0;
  Eigen::Matrix3d t;
  t << s, 0, -s * cx, 0, s, -s * cy, 0, 0, 1;
  return t;
}

Homography solve_dlt(std::span<const Point2> src, std::span<const Point2> dst) {
  const Eigen::Matrix3d ts = normalizer(src);
  const Eigen::Matrix3d td = normalizer(dst);
  const std::size_t n = src.size();
  Eigen::MatrixXd a(2 * n, 9);
  for (std::size_t i = 0; i < n; ++i) {
    const Eigen::Vector3d s = ts * Eigen::Vector3d(src[i].x, src[i].y, 1.0);
    const Eigen::Vector3d d = td * Eigen::Vector3d(dst[i].x, dst[i].y, 1.0);
    const double x = s.x() / s.z(), y = s.y() / s.z();
    const double u = d.x() / d.z(), v = d.y() / d.z();
    a.row(2 * i) << -x, -y, -1, 0, 0, 0, u * x, u * y, u;
    a.row(2 * i + 1) << 0, 0, 0, -x, -y, -1, v * x, v * y, v;
  }
  Eigen::VectorXd h;
  if (n == 4) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
    h = svd.matrixV().col(8);
  } else {
    const Eigen::Matrix<double, 9, 9> ata = a.transpose() * a;
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, 9, 9>> eig(ata);
    h = eig.eigenvectors().col(0);
  }
  Eigen::Matrix3d hn;
  hn << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), h(8);
  const Eigen::Matrix3d full = td.inverse() * hn * ts;
  Homography::Matrix m;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) m[r][c] = full(r, c);
  Homography out(m);
  if (std::abs(out.determinant()) < 1e-300) fail(ErrorCode::DegenerateConfiguration, "singular homography");
  out = out.normalized();
  if (std::abs(out.determinant()) <= 1e-12) fail(ErrorCode::DegenerateConfiguration, "homography not invertible");
  return out;
}

}  // namespace

Homography dlt_homography(std::span<const Point2, 4> src, std::span<const Point2, 4> dst) {
  if (three_collinear(src) || three_collinear(dst))
    fail(ErrorCode::DegenerateConfiguration, "three of four points are collinear");
  return solve_dlt(src, dst);
}

Homography fit_homography(std::span<const Point2> src, std::span<const Point2> dst) {
  if (src.size() != dst.size() || src.size() < 4)
    fail(ErrorCode::DegenerateConfiguration, "need at least four correspondences");
  if (src.size() == 4) return dlt_homography(std::span<const Point2, 4>(src.data(), 4), std::span<const Point2, 4>(dst.data(), 4));
  return solve_dlt(src, dst);
}

// --- warping ----------------------------------------------------------------------------

namespace {
int round_half_up(double v) { return static_cast<int>(std::floor(v + 0.5)); }
}  // namespace

std::pair<int, int> patch_size(const Quadrilateral& q) {
  const auto& c = q.corners;
  const double w = std::max(distance(c[0], c[1]), distance(c[3], c[2]));
  const double h = std::max(distance(c[0], c[3]), distance(c[1], c[2]));
  return {std::max(1, round_half_up(w)), std::max(1, round_half_up(h))};
}

double sample_bilinear(const RasterU16& r, double x, double y) {
  const double fx = std::clamp(x - 0.5, 0.0, static_cast<double>(r.width() - 1));
  const double fy = std::clamp(y - 0.5, 0.0, static_cast<double>(r.height() - 1));
  const int x0 = static_cast<int>(std::floor(fx));
  const int y0 = static_cast<int>(std::floor(fy));
  const int x1 = std::min(x0 + 1, r.width() - 1);
  const int y1 = std::min(y0 + 1, r.height() - 1);
  const double ax = fx - x0, ay = fy - y0;
  const double top = (1 - ax) * r(x0, y0) + ax * r(x1, y0);
  const double bottom = (1 - ax) * r(x0, y1) + ax * r(x1, y1);
  return (1 - ay) * top + ay * bottom;
}

Patch warp_patch(const Frame& frame, const Quadrilateral& quad) {
  const auto [w, h] = patch_size(quad);
  const std::array<Point2, 4> rect{Point2{0, 0}, Point2{double(w), 0}, Point2{double(w), double(h)}, Point2{0, double(h)}};
  const Homography back = dlt_homography(quad.corners, rect).inverse();
  Patch patch{RasterU16(w, h), frame.index};
  for (int v = 0; v < h; ++v)
    for (int u = 0; u < w; ++u) {
      const Point2 src = back.apply({u + 0.5, v + 0.5});
      const double value = sample_bilinear(frame.raster, src.x, src.y);
      patch.pixels(u, v) = static_cast<std::uint16_t>(std::clamp(std::lround(value), 0L, 65535L));
    }
  return patch;
}

double iou_quad_mask(const ModuleMask& mask, const Quadrilateral& quad) {
  const Box qb = quad.bounds();
  const Box mb = mask.bbox();
  const int x_lo = static_cast<int>(std::floor(std::min(qb.x_min, mb.x_min)));
  const int y_lo = static_cast<int>(std::floor(std::min(qb.y_min, mb.y_min)));
  const int x_hi = static_cast<int>(std::ceil(std::max(qb.x_max, mb.x_max)));
  const int y_hi = static_cast<int>(std::ceil(std::max(qb.y_max, mb.y_max)));
  std::size_t inter = 0, quad_count = 0;
  for (int y = y_lo; y < y_hi; ++y)
    for (int x = x_lo; x < x_hi; ++x) {
      if (!quad.contains({x + 0.5, y + 0.5})) continue;
      ++quad_count;
      if (mask.contains(x, y)) ++inter;
    }
  const std::size_t uni = mask.area() + quad_count - inter;
  return uni > 0 ? static_cast<double>(inter) / static_cast<double>(uni) : 0.0;
}

QuadCheck check_mask(const ModuleMask& mask, double iou_min, const QuadFitParams& params) {
  QuadCheck out;
  out.quad = fit_min_perimeter_quad(mask, params);
  out.iou = iou_quad_mask(mask, out.quad);
  out.accepted = !(out.iou < iou_min);
  return out;
}

}  // namespace pvx
