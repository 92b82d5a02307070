#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "pvx/geometry.hpp"
#include "pvx/ingest.hpp"
#include "pvx/raster.hpp"

namespace pvx {

struct PixelXY {
  int x = 0;
  int y = 0;
  friend bool operator==(const PixelXY&, const PixelXY&) = default;
};

// Binary instance mask of one module in one frame. Pixels are stored as a
// bitmap cropped to the tight bounding box.
class ModuleMask {
 public:
  ModuleMask() = default;

  // Throws EmptyMask for an empty pixel list and ShapeMismatch for pixels
  // outside the frame.
  static ModuleMask from_pixels(int frame_index, int frame_width, int frame_height, std::span<const PixelXY> pixels);

  int frame_index() const { return frame_index_; }
  int frame_width() const { return frame_width_; }
  int frame_height() const { return frame_height_; }

  // Tight box in continuous coordinates (exclusive max edges).
  Box bbox() const;
  int x0() const { return x0_; }
  int y0() const { return y0_; }
  int bbox_width() const { return bitmap_.width(); }
  int bbox_height() const { return bitmap_.height(); }

  // Centroid of the pixel centers.
  Point2 center() const { return center_; }
  std::size_t area() const { return area_; }

  bool contains(int x, int y) const {
    const int lx = x - x0_;
    const int ly = y - y0_;
    return bitmap_.contains(lx, ly) && bitmap_(lx, ly) != 0;
  }

  std::vector<PixelXY> pixels() const;
  const RasterU8& bitmap() const { return bitmap_; }

  // Alternating background/foreground run lengths, row-major over the frame,
  // starting with background. Trailing background is omitted.
  std::vector<std::uint32_t> to_rle() const;
  static ModuleMask from_rle(int frame_index, int frame_width, int frame_height, std::span<const std::uint32_t> rle);

 private:
  int frame_index_ = 0;
  int frame_width_ = 0;
  int frame_height_ = 0;
  int x0_ = 0;
  int y0_ = 0;
  RasterU8 bitmap_;
  std::size_t area_ = 0;
  Point2 center_;
};

struct ThresholdParams {
  double threshold_celsius = 30.0;
  std::size_t min_area_px = 50;
  std::size_t max_area_px = 50000;
};

// 4-connected components of (celsius >= threshold) whose area lies within the
// configured range. Components touching the frame border are discarded.
std::vector<ModuleMask> segment_threshold(const TemperatureFrame& tf, const ThresholdParams& params);

std::string mask_file_name(int frame_index);
std::vector<ModuleMask> load_masks(const std::filesystem::path& path, int frame_index);
// Additionally checks the file's declared shape against the frame.
std::vector<ModuleMask> load_masks(const std::filesystem::path& path, int frame_index, int frame_width, int frame_height);
std::vector<ModuleMask> parse_masks(std::string_view json_text, int frame_index);
std::string masks_to_json(int frame_width, int frame_height, std::span<const ModuleMask> masks);
void write_masks(const std::filesystem::path& path, int frame_width, int frame_height, std::span<const ModuleMask> masks);

// --- detection metrics -------------------------------------------------------------

inline constexpr std::array<double, 10> kIouThresholds = {0.5, 0.55, 0.6, 0.65, 0.7, 0.75, 0.8, 0.85, 0.9, 0.95};

struct ThresholdCounts {
  double iou_threshold = 0.0;
  int tp = 0;
  int fp = 0;
  int fn = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

struct DetectionEval {
  std::array<ThresholdCounts, kIouThresholds.size()> per_threshold{};
  double ap = 0.0;
  double mean_f1 = 0.0;
};

// Greedy one-to-one matching in descending IoU order; a pair counts as a true
// positive when its IoU is strictly larger than the threshold.
DetectionEval evaluate_detections(std::span<const Box> predicted, std::span<const Box> truth);

struct FrameDetections {
  std::vector<Box> predicted;
  std::vector<Box> truth;
};

enum class DetectionAveraging { Pooled, PerFrame };

// Pooled: counts summed over frames before computing metrics.
// PerFrame: metrics computed per frame and averaged.
DetectionEval evaluate_detection_frames(std::span<const FrameDetections> frames,
                                        DetectionAveraging averaging = DetectionAveraging::Pooled);

// Area under the precision/recall points (trapezoidal, recall-sorted).
double average_precision(std::span<const ThresholdCounts> points);

}  // namespace pvx
