#include "pvx/segmentation.hpp"

#include <algorithm>
#include <cstdio>
#include <limits>
#include <numeric>
#include <tuple>

#include <json.hpp>

#include "pvx/error.hpp"

namespace pvx {

using nlohmann::json;

// --- ModuleMask ----------------------------------------------------------------------

ModuleMask ModuleMask::from_pixels(int frame_index, int frame_width, int frame_height,
                                   std::span<const PixelXY> pixels) {
  if (pixels.empty()) fail(ErrorCode::EmptyMask, "mask has no pixels");
  int x_min = std::numeric_limits<int>::max(), y_min = x_min;
  int x_max = std::numeric_limits<int>::min(), y_max = x_max;
  for (const auto& p : pixels) {
    if (p.x < 0 || p.y < 0 || p.x >= frame_width || p.y >= frame_height)
      fail(ErrorCode::ShapeMismatch, "mask pixel outside frame");
    x_min = std::min(x_min, p.x);
    y_min = std::min(y_min, p.y);
    x_max = std::max(x_max, p.x);
    y_max = std::max(y_max, p.y);
  }
  ModuleMask m;
  m.frame_index_ = frame_index;
  m.frame_width_ = frame_width;
  m.frame_height_ = frame_height;
  m.x0_ = x_min;
  m.y0_ = y_min;
  m.bitmap_ = RasterU8(x_max - x_min + 1, y_max - y_min + 1, 0);
  double sx = 0.0, sy = 0.0;
  for (const auto& p : pixels) {
    auto& cell = m.bitmap_(p.x - x_min, p.y - y_min);
    if (cell) continue;
    cell = 1;
    ++m.area_;
    sx += p.x + 0.5;
    sy += p.y + 0.5;
  }
  m.center_ = {sx / static_cast<double>(m.area_), sy / static_cast<double>(m.area_)};
  return m;
}

Box ModuleMask::bbox() const {
  return {static_cast<double>(x0_), static_cast<double>(y0_), static_cast<double>(x0_ + bitmap_.width()),
          static_cast<double>(y0_ + bitmap_.height())};
}

std::vector<PixelXY> ModuleMask::pixels() const {
  std::vector<PixelXY> out;
  out.reserve(area_);
  for (int y = 0; y < bitmap_.height(); ++y)
    for (int x = 0; x < bitmap_.width(); ++x)
      if (bitmap_(x, y)) out.push_back({x + x0_, y + y0_});
  return out;
}

std::vector<std::uint32_t> ModuleMask::to_rle() const {
  std::vector<std::uint32_t> runs;
  std::uint64_t cursor = 0;  // first linear index not yet covered by a run
  std::uint64_t fg_start = 0;
  std::uint64_t fg_end = 0;  // one past the current foreground run
  bool open = false;
  for (int y = 0; y < bitmap_.height(); ++y) {
    for (int x = 0; x < bitmap_.width(); ++x) {
      if (!bitmap_(x, y)) continue;
      const std::uint64_t linear = static_cast<std::uint64_t>(y + y0_) * frame_width_ + (x + x0_);
      if (open && linear == fg_end) {
        ++fg_end;
        continue;
      }
      if (open) {
        runs.push_back(static_cast<std::uint32_t>(fg_end - fg_start));
        cursor = fg_end;
      }
      runs.push_back(static_cast<std::uint32_t>(linear - cursor));
      fg_start = linear;
      fg_end = linear + 1;
      open = true;
    }
  }
  if (open) runs.push_back(static_cast<std::uint32_t>(fg_end - fg_start));
  return runs;
}

ModuleMask ModuleMask::from_rle(int frame_index, int frame_width, int frame_height,
                                std::span<const std::uint32_t> rle) {
  const std::uint64_t total = static_cast<std::uint64_t>(frame_width) * static_cast<std::uint64_t>(frame_height);
  std::uint64_t cursor = 0;
  std::vector<PixelXY> pixels;
  for (std::size_t i = 0; i < rle.size(); ++i) {
    const std::uint64_t end = cursor + rle[i];
    if (end > total) fail(ErrorCode::ShapeMismatch, "RLE longer than frame area");
    if (i % 2 == 1) {
      for (std::uint64_t k = cursor; k < end; ++k)
        pixels.push_back({static_cast<int>(k % frame_width), static_cast<int>(k / frame_width)});
    }
    cursor = end;
  }
  if (pixels.empty()) fail(ErrorCode::EmptyMask, "mask has no foreground pixels");
  return from_pixels(frame_index, frame_width, frame_height, pixels);
}

// --- threshold segmenter -----------------------------------------------------------------

std::vector<ModuleMask> segment_threshold(const TemperatureFrame& tf, const ThresholdParams& params) {
  const RasterF& c = tf.celsius;
  const int w = c.width();
  const int h = c.height();
  Raster<std::int32_t> label(w, h, -1);
  std::vector<ModuleMask> masks;
  std::vector<PixelXY> stack;
  std::vector<PixelXY> component;
  const float thr = static_cast<float>(params.threshold_celsius);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (label(x, y) != -1 || c(x, y) < thr) continue;
      component.clear();
      stack.clear();
      stack.push_back({x, y});
      label(x, y) = 0;
      bool touches_border = false;
      while (!stack.empty()) {
        const PixelXY p = stack.back();
        stack.pop_back();
        component.push_back(p);
        if (p.x == 0 || p.y == 0 || p.x == w - 1 || p.y == h - 1) touches_border = true;
        const PixelXY nbrs[4] = {{p.x - 1, p.y}, {p.x + 1, p.y}, {p.x, p.y - 1}, {p.x, p.y + 1}};
        for (const auto& n : nbrs) {
          if (!c.contains(n.x, n.y) || label(n.x, n.y) != -1 || c(n.x, n.y) < thr) continue;
          label(n.x, n.y) = 0;
          stack.push_back(n);
        }
      }
      if (touches_border) continue;
      if (component.size() < params.min_area_px || component.size() > params.max_area_px) continue;
      masks.push_back(ModuleMask::from_pixels(tf.index, w, h, component));
    }
  }
  return masks;
}

// --- mask files ------------------------------------------------------------------------------

std::string mask_file_name(int frame_index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "masks_%06d.json", frame_index);
  return buf;
}

std::vector<ModuleMask> parse_masks(std::string_view json_text, int frame_index) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    fail(ErrorCode::Parse, e.what());
  }
  int w = 0, h = 0;
  std::vector<ModuleMask> masks;
  try {
    w = j.at("width").get<int>();
    h = j.at("height").get<int>();
    if (w <= 0 || h <= 0) fail(ErrorCode::ShapeMismatch, "mask file has non-positive shape");
    std::size_t entry = 0;
    for (const auto& inst : j.at("instances")) {
      const auto rle = inst.at("rle").get<std::vector<std::uint32_t>>();
      try {
        masks.push_back(ModuleMask::from_rle(frame_index, w, h, rle));
      } catch (const Error& e) {
        fail(e.code(), "instance " + std::to_string(entry) + ": " + e.what());
      }
      ++entry;
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::Parse, e.what());
  }
  return masks;
}

std::vector<ModuleMask> load_masks(const std::filesystem::path& path, int frame_index) {
  return parse_masks(read_text_file(path), frame_index);
}

std::vector<ModuleMask> load_masks(const std::filesystem::path& path, int frame_index, int frame_width,
                                   int frame_height) {
  auto masks = load_masks(path, frame_index);
  for (const auto& m : masks)
    if (m.frame_width() != frame_width || m.frame_height() != frame_height)
      fail(ErrorCode::ShapeMismatch, "mask file shape differs from frame shape: " + path.string());
  return masks;
}

std::string masks_to_json(int frame_width, int frame_height, std::span<const ModuleMask> masks) {
  json instances = json::array();
  for (const auto& m : masks) instances.push_back(json{{"rle", m.to_rle()}});
  return json{{"width", frame_width}, {"height", frame_height}, {"instances", instances}}.dump() + "\n";
}

void write_masks(const std::filesystem::path& path, int frame_width, int frame_height,
                 std::span<const ModuleMask> masks) {
  write_text_file(path, masks_to_json(frame_width, frame_height, masks));
}

// --- detection metrics -------------------------------------------------------------------------

namespace {

void finish_counts(ThresholdCounts& c) {
  c.precision = c.tp + c.fp > 0 ? static_cast<double>(c.tp) / (c.tp + c.fp) : 0.0;
  c.recall = c.tp + c.fn > 0 ? static_cast<double>(c.tp) / (c.tp + c.fn) : 0.0;
  const int denom = 2 * c.tp + c.fp + c.fn;
  c.f1 = denom > 0 ? 2.0 * c.tp / denom : 0.0;
}

std::array<ThresholdCounts, kIouThresholds.size()> count_frame(std::span<const Box> predicted,
                                                                 std::span<const Box> truth) {
  for (const auto& b : predicted)
    if (!b.well_formed()) fail(ErrorCode::MalformedBox, "malformed predicted box");
  for (const auto& b : truth)
    if (!b.well_formed()) fail(ErrorCode::MalformedBox, "malformed ground-truth box");

  struct Pair {
    double iou;
    std::size_t p;
    std::size_t t;
  };
  std::vector<Pair> pairs;
  for (std::size_t p = 0; p < predicted.size(); ++p)
    for (std::size_t t = 0; t < truth.size(); ++t) {
      const double v = iou(predicted[p], truth[t]);
      if (v > 0.0) pairs.push_back({v, p, t});
    }
  std::sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) {
    return std::tie(b.iou, a.p, a.t) < std::tie(a.iou, b.p, b.t);
  });

  std::array<ThresholdCounts, kIouThresholds.size()> out{};
  for (std::size_t k = 0; k < kIouThresholds.size(); ++k) {
    const double tau = kIouThresholds[k];
    std::vector<char> p_used(predicted.size(), 0), t_used(truth.size(), 0);
    int tp = 0;
    for (const auto& pr : pairs) {
      if (!(pr.iou > tau)) break;
      if (p_used[pr.p] || t_used[pr.t]) continue;
      p_used[pr.p] = t_used[pr.t] = 1;
      ++tp;
    }
    out[k].iou_threshold = tau;
    out[k].tp = tp;
    out[k].fp = static_cast<int>(predicted.size()) - tp;
    out[k].fn = static_cast<int>(truth.size()) - tp;
  }
  return out;
}

}  // namespace

double average_precision(std::span<const ThresholdCounts> points) {
  if (points.empty()) return 0.0;
  std::vector<std::pair<double, double>> pr;
  for (const auto& c : points) pr.emplace_back(c.recall, c.precision);
  std::sort(pr.begin(), pr.end(), [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first < b.first : a.second > b.second;
  });
  // Anchor the curve at recall 0 with the precision of its lowest-recall point.
  if (pr.front().first > 0.0) pr.insert(pr.begin(), {0.0, pr.front().second});
  double area = 0.0;
  for (std::size_t i = 1; i < pr.size(); ++i)
    area += (pr[i].first - pr[i - 1].first) * 0.5 * (pr[i].second + pr[i - 1].second);
  return std::clamp(area, 0.0, 1.0);
}

DetectionEval evaluate_detections(std::span<const Box> predicted, std::span<const Box> truth) {
  const FrameDetections frame{{predicted.begin(), predicted.end()}, {truth.begin(), truth.end()}};
  return evaluate_detection_frames(std::span<const FrameDetections>(&frame, 1));
}

DetectionEval evaluate_detection_frames(std::span<const FrameDetections> frames, DetectionAveraging averaging) {
  DetectionEval out;
  for (std::size_t k = 0; k < kIouThresholds.size(); ++k) out.per_threshold[k].iou_threshold = kIouThresholds[k];

  if (averaging == DetectionAveraging::Pooled || frames.empty()) {
    for (const auto& f : frames) {
      const auto counts = count_frame(f.predicted, f.truth);
      for (std::size_t k = 0; k < counts.size(); ++k) {
        out.per_threshold[k].tp += counts[k].tp;
        out.per_threshold[k].fp += counts[k].fp;
        out.per_threshold[k].fn += counts[k].fn;
      }
    }
    double f1_sum = 0.0;
    for (auto& c : out.per_threshold) {
      finish_counts(c);
      f1_sum += c.f1;
    }
    out.mean_f1 = f1_sum / static_cast<double>(kIouThresholds.size());
    out.ap = average_precision(out.per_threshold);
    return out;
  }

  // Per-frame averaging: counts are still summed for reporting, but
  // precision/recall/F1/AP are means of per-frame values.
  std::array<double, kIouThresholds.size()> p{}, r{}, f{};
  double ap_sum = 0.0;
  for (const auto& frame : frames) {
    auto counts = count_frame(frame.predicted, frame.truth);
    for (std::size_t k = 0; k < counts.size(); ++k) {
      counts[k].iou_threshold = kIouThresholds[k];
      finish_counts(counts[k]);
      out.per_threshold[k].tp += counts[k].tp;
      out.per_threshold[k].fp += counts[k].fp;
      out.per_threshold[k].fn += counts[k].fn;
      p[k] += counts[k].precision;
      r[k] += counts[k].recall;
      f[k] += counts[k].f1;
    }
    ap_sum += average_precision(counts);
  }
  const double n = static_cast<double>(frames.size());
  double f1_sum = 0.0;
  for (std::size_t k = 0; k < kIouThresholds.size(); ++k) {
    out.per_threshold[k].precision = p[k] / n;
    out.per_threshold[k].recall = r[k] / n;
    out.per_threshold[k].f1 = f[k] / n;
    f1_sum += out.per_threshold[k].f1;
  }
  out.mean_f1 = f1_sum / static_cast<double>(kIouThresholds.size());
  out.ap = ap_sum / n;
  return out;
}

}  // namespace pvx
