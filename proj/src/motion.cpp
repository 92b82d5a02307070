#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <random>

#include <Eigen/Dense>

#include "pvx/error.hpp"
#include "pvx/rectify.hpp"
#include "pvx/tracking.hpp"

namespace pvx {

double mean_horizontal_motion(const Homography& h, int width, int height) {
  double sum = 0.0;
  for (int j = 0; j < 5; ++j)
    for (int i = 0; i < 5; ++i) {
      const Point2 p{(i + 0.5) * width / 5.0, (j + 0.5) * height / 5.0};
      sum += h.apply(p).x - p.x;
    }
  return sum / 25.0;
}

namespace {

std::vector<float> gaussian_kernel(double sigma) {
  const int r = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<float> k(2 * r + 1);
  double total = 0.0;
  for (int i = -r; i <= r; ++i) {
    k[i + r] = static_cast<float>(std::exp(-0.5 * i * i / (sigma * sigma)));
    total += k[i + r];
  }
  for (auto& v : k) v = static_cast<float>(v / total);
  return k;
}

// Separable convolution with clamped borders.
RasterF blur(const RasterF& src, double sigma) {
  const auto k = gaussian_kernel(sigma);
  const int r = static_cast<int>(k.size() / 2);
  const int w = src.width(), h = src.height();
  RasterF tmp(w, h), out(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      float acc = 0.0f;
      for (int i = -r; i <= r; ++i) acc += k[i + r] * src(std::clamp(x + i, 0, w - 1), y);
      tmp(x, y) = acc;
    }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      float acc = 0.0f;
      for (int i = -r; i <= r; ++i) acc += k[i + r] * tmp(x, std::clamp(y + i, 0, h - 1));
      out(x, y) = acc;
    }
  return out;
}

RasterF to_float(const RasterU16& raster) {
  RasterF out(raster.width(), raster.height());
  for (std::size_t i = 0; i < raster.size(); ++i) out.data()[i] = static_cast<float>(raster.data()[i]);
  return out;
}

constexpr int kPatchRadius = 15;

struct PatternPair {
  int ax, ay, bx, by;
};

const std::array<PatternPair, 256>& brief_pattern() {
  static const std::array<PatternPair, 256> pattern = [] {
    std::array<PatternPair, 256> p{};
    std::mt19937 rng(0xb41ef);
    std::normal_distribution<double> d(0.0, (2 * kPatchRadius + 1) / 5.0);
    auto draw = [&] {
      return static_cast<int>(std::clamp(std::lround(d(rng)), long{-kPatchRadius}, long{kPatchRadius}));
    };
    for (auto& pair : p) {
      do {
        pair = {draw(), draw(), draw(), draw()};
      } while (pair.ax == pair.bx && pair.ay == pair.by);
    }
    return p;
  }();
  return pattern;
}

// Solves the 8x8 system for a homography with h33 = 1 through four exact
// correspondences. Returns false for degenerate samples.
bool solve_four(const Point2* s, const Point2* d, Homography& out) {
  for (int i = 0; i < 4; ++i)
    for (int j = i + 1; j < 4; ++j)
      for (int k = j + 1; k < 4; ++k) {
        if (std::abs(cross(s[j] - s[i], s[k] - s[i])) < 1e-3) return false;
        if (std::abs(cross(d[j] - d[i], d[k] - d[i])) < 1e-3) return false;
      }
  // Center and scale for conditioning.
  Point2 cs{}, cd{};
  for (int i = 0; i < 4; ++i) {
    cs = cs + 0.25 * s[i];
    cd = cd + 0.25 * d[i];
  }
  double ss = 0, sd = 0;
  for (int i = 0; i < 4; ++i) {
    ss += distance(s[i], cs);
    sd += distance(d[i], cd);
  }
  ss = ss > 0 ? 4.0 / ss : 1.0;
  sd = sd > 0 ? 4.0 / sd : 1.0;
  Eigen::Matrix<double, 8, 8> a;
  Eigen::Matrix<double, 8, 1> b;
  for (int i = 0; i < 4; ++i) {
    const double x = (s[i].x - cs.x) * ss, y = (s[i].y - cs.y) * ss;
    const double u = (d[i].x - cd.x) * sd, v = (d[i].y - cd.y) * sd;
    a.row(2 * i) << x, y, 1, 0, 0, 0, -u * x, -u * y;
    a.row(2 * i + 1) << 0, 0, 0, x, y, 1, -v * x, -v * y;
    b(2 * i) = u;
    b(2 * i + 1) = v;
  }
  const Eigen::Matrix<double, 8, 1> h = a.partialPivLu().solve(b);
  if (!h.allFinite()) return false;
  const Homography hn({{{h(0), h(1), h(2)}, {h(3), h(4), h(5)}, {h(6), h(7), 1.0}}});
  const Homography to_s = Homography::scaling(ss, ss) * Homography::translation(-cs.x, -cs.y);
  const Homography from_d = Homography::translation(cd.x, cd.y) * Homography::scaling(1.0 / sd, 1.0 / sd);
  try {
    out = from_d * hn * to_s;
  } catch (const Error&) {
    return false;
  }
  return std::abs(out.determinant()) > 1e-12;
}

std::vector<int> inliers_of(const Homography& h, std::span<const Point2> src, std::span<const Point2> dst,
                            double threshold) {
  std::vector<int> in;
  Homography inv;
  try {
    inv = h.inverse();
  } catch (const Error&) {
    return in;
  }
  const double t2 = threshold * threshold;
  for (std::size_t i = 0; i < src.size(); ++i) {
    const Point2 f = h.apply(src[i]) - dst[i];
    const Point2 b = inv.apply(dst[i]) - src[i];
    const double e = f.x * f.x + f.y * f.y + b.x * b.x + b.y * b.y;
    if (e < t2) in.push_back(static_cast<int>(i));
  }
  return in;
}

}  // namespace

std::vector<Keypoint> detect_corners(const RasterU16& raster, const KeypointParams& params) {
  const int w = raster.width(), h = raster.height();
  if (w < 2 * params.border + 3 || h < 2 * params.border + 3) return {};
  const RasterF img = blur(to_float(raster), 1.0);
  RasterF ixx(w, h), iyy(w, h), ixy(w, h);
  for (int y = 1; y < h - 1; ++y)
    for (int x = 1; x < w - 1; ++x) {
      const float gx = (img(x + 1, y - 1) + 2 * img(x + 1, y) + img(x + 1, y + 1)) -
                       (img(x - 1, y - 1) + 2 * img(x - 1, y) + img(x - 1, y + 1));
      const float gy = (img(x - 1, y + 1) + 2 * img(x, y + 1) + img(x + 1, y + 1)) -
                       (img(x - 1, y - 1) + 2 * img(x, y - 1) + img(x + 1, y - 1));
      ixx(x, y) = gx * gx;
      iyy(x, y) = gy * gy;
      ixy(x, y) = gx * gy;
    }
  const RasterF sxx = blur(ixx, 1.5), syy = blur(iyy, 1.5), sxy = blur(ixy, 1.5);
  RasterF resp(w, h);
  float peak = 0.0f;
  for (std::size_t i = 0; i < resp.size(); ++i) {
    const double a = sxx.data()[i], b = syy.data()[i], c = sxy.data()[i];
    const double r = a * b - c * c - params.harris_k * (a + b) * (a + b);
    resp.data()[i] = static_cast<float>(r);
    peak = std::max(peak, resp.data()[i]);
  }
  if (!(peak > 0.0f)) return {};
  const float floor_resp = static_cast<float>(params.min_response_ratio * peak);

  const int gc = std::max(1, params.grid_cols), gr = std::max(1, params.grid_rows);
  std::vector<std::vector<Keypoint>> cells(static_cast<std::size_t>(gc * gr));
  const int b = params.border;
  for (int y = b; y < h - b; ++y)
    for (int x = b; x < w - b; ++x) {
      const float r = resp(x, y);
      if (r <= floor_resp) continue;
      bool is_max = true;
      for (int dy = -2; dy <= 2 && is_max; ++dy)
        for (int dx = -2; dx <= 2; ++dx) {
          if (dx == 0 && dy == 0) continue;
          const float o = resp(x + dx, y + dy);
          // Ties resolve towards the earlier pixel in scan order.
          if (o > r || (o == r && (dy < 0 || (dy == 0 && dx < 0)))) {
            is_max = false;
            break;
          }
        }
      if (!is_max) continue;
      const int cx = std::min(gc - 1, (x - b) * gc / std::max(1, w - 2 * b));
      const int cy = std::min(gr - 1, (y - b) * gr / std::max(1, h - 2 * b));
      cells[static_cast<std::size_t>(cy * gc + cx)].push_back({{x + 0.5, y + 0.5}, r});
    }
  std::vector<Keypoint> out;
  for (auto& cell : cells) {
    std::stable_sort(cell.begin(), cell.end(), [](const Keypoint& a, const Keypoint& b) { return a.response > b.response; });
    if (static_cast<int>(cell.size()) > params.per_cell) cell.resize(static_cast<std::size_t>(params.per_cell));
    out.insert(out.end(), cell.begin(), cell.end());
  }
  std::sort(out.begin(), out.end(), [](const Keypoint& a, const Keypoint& b) {
    return a.at.y != b.at.y ? a.at.y < b.at.y : a.at.x < b.at.x;
  });
  return out;
}

std::vector<Descriptor> describe(const RasterU16& raster, std::span<const Keypoint> keypoints) {
  const RasterF img = blur(to_float(raster), 2.0);
  const auto& pattern = brief_pattern();
  std::vector<Descriptor> out(keypoints.size());
  for (std::size_t k = 0; k < keypoints.size(); ++k) {
    const int cx = static_cast<int>(std::floor(keypoints[k].at.x));
    const int cy = static_cast<int>(std::floor(keypoints[k].at.y));
    Descriptor d{};
    for (std::size_t i = 0; i < pattern.size(); ++i) {
      const auto& p = pattern[i];
      const int ax = std::clamp(cx + p.ax, 0, img.width() - 1), ay = std::clamp(cy + p.ay, 0, img.height() - 1);
      const int bx = std::clamp(cx + p.bx, 0, img.width() - 1), by = std::clamp(cy + p.by, 0, img.height() - 1);
      if (img(ax, ay) < img(bx, by)) d[i / 64] |= std::uint64_t{1} << (i % 64);
    }
    out[k] = d;
  }
  return out;
}

int hamming(const Descriptor& a, const Descriptor& b) {
  int d = 0;
  for (std::size_t i = 0; i < a.size(); ++i) d += std::popcount(a[i] ^ b[i]);
  return d;
}

std::vector<std::pair<int, int>> match_descriptors(std::span<const Descriptor> a, std::span<const Descriptor> b,
                                                   const KeypointParams& params) {
  struct Best {
    int index = -1;
    int first = std::numeric_limits<int>::max();
    int second = std::numeric_limits<int>::max();
  };
  std::vector<Best> ab(a.size()), ba(b.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j) {
      const int d = hamming(a[i], b[j]);
      auto update = [d](Best& best, int idx) {
        if (d < best.first) {
          best.second = best.first;
          best.first = d;
          best.index = idx;
        } else if (d < best.second) {
          best.second = d;
        }
      };
      update(ab[i], static_cast<int>(j));
      update(ba[j], static_cast<int>(i));
    }
  auto passes = [&](const Best& best) {
    if (best.index < 0 || best.first > params.max_hamming) return false;
    return best.second == std::numeric_limits<int>::max() || best.first < params.ratio_test * best.second;
  };
  std::vector<std::pair<int, int>> out;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const Best& f = ab[i];
    if (!passes(f)) continue;
    const Best& r = ba[static_cast<std::size_t>(f.index)];
    if (r.index == static_cast<int>(i) && passes(r)) out.emplace_back(static_cast<int>(i), f.index);
  }
  return out;
}

RansacResult ransac_homography(std::span<const Point2> src, std::span<const Point2> dst, const KeypointParams& params) {
  const std::size_t n = src.size();
  if (n < 4 || dst.size() != n)
    fail(ErrorCode::MotionEstimationFailed, "fewer than 4 correspondences (" + std::to_string(n) + ")");
  std::mt19937_64 rng(params.rng_seed);
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  std::vector<int> best;
  for (int it = 0; it < params.ransac_iterations; ++it) {
    std::array<std::size_t, 4> idx{};
    for (int k = 0; k < 4; ++k) {
      bool fresh;
      do {
        idx[k] = pick(rng);
        fresh = std::find(idx.begin(), idx.begin() + k, idx[k]) == idx.begin() + k;
      } while (!fresh);
    }
    const Point2 s[4] = {src[idx[0]], src[idx[1]], src[idx[2]], src[idx[3]]};
    const Point2 d[4] = {dst[idx[0]], dst[idx[1]], dst[idx[2]], dst[idx[3]]};
    Homography h;
    if (!solve_four(s, d, h)) continue;
    auto in = inliers_of(h, src, dst, params.ransac_threshold_px);
    if (in.size() > best.size()) best = std::move(in);
    if (best.size() == n) break;
  }
  if (best.size() < 4)
    fail(ErrorCode::MotionEstimationFailed, "RANSAC found " + std::to_string(best.size()) + " inliers");

  RansacResult out;
  for (int round = 0; round < 3; ++round) {
    std::vector<Point2> s, d;
    for (int i : best) {
      s.push_back(src[static_cast<std::size_t>(i)]);
      d.push_back(dst[static_cast<std::size_t>(i)]);
    }
    Homography h;
    try {
      h = fit_homography(s, d);
    } catch (const Error&) {
      fail(ErrorCode::MotionEstimationFailed, "degenerate inlier set");
    }
    auto in = inliers_of(h, src, dst, params.ransac_threshold_px);
    out.h = h;
    if (in.size() < 4 || in == best) break;
    best = std::move(in);
  }
  out.inliers = best;
  return out;
}

InterFrameMotion estimate_motion(const Frame& from, const Frame& to, const KeypointParams& params) {
  if (from.width() != to.width() || from.height() != to.height())
    fail(ErrorCode::ShapeMismatch, "frames differ in shape");
  const auto ka = detect_corners(from.raster, params);
  const auto kb = detect_corners(to.raster, params);
  if (ka.size() < 4 || kb.size() < 4)
    fail(ErrorCode::MotionEstimationFailed, "too few keypoints between frames " + std::to_string(from.index) +
                                                " and " + std::to_string(to.index));
  const auto da = describe(from.raster, ka);
  const auto db = describe(to.raster, kb);
  const auto matches = match_descriptors(da, db, params);
  std::vector<Point2> src, dst;
  for (auto [i, j] : matches) {
    src.push_back(ka[static_cast<std::size_t>(i)].at);
    dst.push_back(kb[static_cast<std::size_t>(j)].at);
  }
  RansacResult r;
  try {
    r = ransac_homography(src, dst, params);
  } catch (const Error& e) {
    fail(ErrorCode::MotionEstimationFailed,
         "frames " + std::to_string(from.index) + "->" + std::to_string(to.index) + ": " + e.what());
  }
  InterFrameMotion m;
  m.from_frame = from.index;
  m.to_frame = to.index;
  m.h = r.h;
  m.inlier_count = static_cast<int>(r.inliers.size());
  m.mean_horizontal_motion = mean_horizontal_motion(r.h, from.width(), from.height());
  return m;
}

InterFrameMotion KeypointMotionEstimator::estimate(const Frame& from, const Frame& to) const {
  return estimate_motion(from, to, params_);
}

InterFrameMotion InjectedMotion::estimate(const Frame& from, const Frame& to) const {
  const auto it = h_.find(from.index);
  if (it == h_.end()) fail(ErrorCode::MotionEstimationFailed, "no injected motion for frame " + std::to_string(from.index));
  InterFrameMotion m;
  m.from_frame = from.index;
  m.to_frame = to.index;
  m.h = it->second;
  m.inlier_count = 4;
  m.mean_horizontal_motion = mean_horizontal_motion(m.h, from.width(), from.height());
  return m;
}

std::string_view to_string(ScanDirection d) { return d == ScanDirection::Leftward ? "leftward" : "rightward"; }

ScanDirection estimate_scan_direction(std::span<const InterFrameMotion> motions) {
  if (motions.empty()) fail(ErrorCode::AmbiguousDirection, "no inter-frame motions");
  std::vector<double> v;
  for (const auto& m : motions) v.push_back(m.mean_horizontal_motion);
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  const double median = n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
  if (std::abs(median) <= 0.1) fail(ErrorCode::AmbiguousDirection, "median horizontal motion is ~0");
  return median < 0 ? ScanDirection::Rightward : ScanDirection::Leftward;
}

double direction_flip_fraction(std::span<const InterFrameMotion> motions, ScanDirection direction) {
  if (motions.empty()) return 0.0;
  int flips = 0;
  for (const auto& m : motions) {
    const double x = m.mean_horizontal_motion;
    if ((direction == ScanDirection::Rightward && x > 0.1) || (direction == ScanDirection::Leftward && x < -0.1)) ++flips;
  }
  return static_cast<double>(flips) / static_cast<double>(motions.size());
}

}  // namespace pvx
