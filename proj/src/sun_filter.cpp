#include "pvx/sun_filter.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "pvx/error.hpp"

namespace pvx {

namespace {

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

PatchThermalStats make_stats(int ordinal, double t_max, int x, int y) {
  return {ordinal, t_max, x, y, std::hypot(static_cast<double>(x), static_cast<double>(y))};
}

PatchThermalStats thermal_stats(const RasterU16& patch, int ordinal, const TemperatureLaw& law) {
  if (patch.empty()) fail(ErrorCode::InvalidArgument, "empty patch");
  int bx = 0, by = 0;
  std::uint16_t best = patch(0, 0);
  // Row-major scan with a strict comparison keeps the smallest (y, x) on plateaus.
  for (int y = 0; y < patch.height(); ++y)
    for (int x = 0; x < patch.width(); ++x)
      if (patch(x, y) > best) {
        best = patch(x, y);
        bx = x;
        by = y;
      }
  return make_stats(ordinal, law.to_celsius(best), bx, by);
}

ReflectionReference select_reference(std::span<const PatchThermalStats> stats, const SunFilterParams& params) {
  const int n = static_cast<int>(stats.size());
  if (n == 0) fail(ErrorCode::InvalidArgument, "no patches");

  // Maximal runs of small position steps, as inclusive stats ranges.
  std::vector<std::pair<int, int>> runs;
  int start = 0;
  for (int i = 0; i + 1 < n; ++i) {
    const bool jump = std::abs(stats[static_cast<std::size_t>(i + 1)].p - stats[static_cast<std::size_t>(i)].p) >
                      params.position_step_px;
    if (jump) {
      if (i > start) runs.emplace_back(start, i);
      start = i + 1;
    }
  }
  if (n - 1 > start) runs.emplace_back(start, n - 1);

  std::vector<std::pair<int, int>> candidates;
  for (const auto& r : runs)
    if (r.second - r.first + 1 > params.run_fraction * n) candidates.push_back(r);
  if (candidates.empty()) {
    // Longest run, earliest on ties; a sequence without any run falls back to its first entry.
    std::pair<int, int> best{0, 0};
    for (const auto& r : runs)
      if (r.second - r.first > best.second - best.first) best = r;
    candidates.push_back(best);
  }

  std::size_t pick = 0;
  double best_var = 0.0;
  for (std::size_t c = 0; c < candidates.size(); ++c) {
    const auto [a, b] = candidates[c];
    double mean = 0.0;
    for (int i = a; i <= b; ++i) mean += stats[static_cast<std::size_t>(i)].t_max;
    mean /= (b - a + 1);
    double var = 0.0;
    for (int i = a; i <= b; ++i) {
      const double d = stats[static_cast<std::size_t>(i)].t_max - mean;
      var += d * d;
    }
    var /= (b - a + 1);
    if (c == 0 || var < best_var) {
      best_var = var;
      pick = c;
    }
  }

  const auto [a, b] = candidates[pick];
  std::vector<double> t, x, y;
  for (int i = a; i <= b; ++i) {
    const auto& s = stats[static_cast<std::size_t>(i)];
    t.push_back(s.t_max);
    x.push_back(s.x);
    y.push_back(s.y);
  }
  return {median(t), median(x), median(y), a, b};
}

std::vector<SunDecision> filter_reflections(std::span<const PatchThermalStats> stats, const ReflectionReference& ref,
                                            const SunFilterParams& params) {
  std::vector<SunDecision> out;
  out.reserve(stats.size());
  for (const auto& s : stats) {
    const double dt = s.t_max - ref.t_ref;
    const double dist = std::hypot(s.x - ref.x_ref, s.y - ref.y_ref);
    SunDecision d;
    if (std::abs(dt) > params.delta_t && dist > params.delta_pos_px) {
      char buf[96];
      std::snprintf(buf, sizeof buf, "reflection dT=%.2f dpos=%.2f", dt, dist);
      d.keep = false;
      d.reason = buf;
    }
    out.push_back(std::move(d));
  }
  return out;
}

}  // namespace pvx
