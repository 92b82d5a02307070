#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pvx/geometry.hpp"
#include "pvx/ingest.hpp"
#include "pvx/segmentation.hpp"

namespace pvx {

// --- inter-frame motion ------------------------------------------------------------

struct InterFrameMotion {
  int from_frame = 0;
  int to_frame = 0;
  Homography h;  // maps from_frame coordinates to to_frame coordinates
  int inlier_count = 0;
  double mean_horizontal_motion = 0.0;
};

// Mean x displacement of a 5x5 grid of frame points under h.
double mean_horizontal_motion(const Homography& h, int width, int height);

class MotionEstimator {
 public:
  virtual ~MotionEstimator() = default;
  // Throws MotionEstimationFailed when no reliable homography is found.
  virtual InterFrameMotion estimate(const Frame& from, const Frame& to) const = 0;
};

struct KeypointParams {
  int grid_cols = 8;
  int grid_rows = 8;
  int per_cell = 24;
  int border = 18;
  double harris_k = 0.04;
  double min_response_ratio = 1e-4;  // relative to the strongest corner
  double ratio_test = 0.8;
  int max_hamming = 80;
  int ransac_iterations = 1000;
  double ransac_threshold_px = 3.0;  // symmetric transfer error
  std::uint64_t rng_seed = 0x5eed;
};

struct Keypoint {
  Point2 at;
  float response = 0.0f;
};

using Descriptor = std::array<std::uint64_t, 4>;

std::vector<Keypoint> detect_corners(const RasterU16& raster, const KeypointParams& params = {});
std::vector<Descriptor> describe(const RasterU16& raster, std::span<const Keypoint> keypoints);
int hamming(const Descriptor& a, const Descriptor& b);

// Index pairs (into a, into b) passing the ratio test in both directions.
std::vector<std::pair<int, int>> match_descriptors(std::span<const Descriptor> a, std::span<const Descriptor> b,
                                                   const KeypointParams& params = {});

struct RansacResult {
  Homography h;
  std::vector<int> inliers;
};

// 4-point RANSAC followed by a least-squares refit on the inliers.
// Throws MotionEstimationFailed with fewer than 4 inliers.
RansacResult ransac_homography(std::span<const Point2> src, std::span<const Point2> dst, const KeypointParams& params);

// Corner detector + binary descriptor + Hamming matching + RANSAC.
class KeypointMotionEstimator final : public MotionEstimator {
 public:
  explicit KeypointMotionEstimator(KeypointParams params = {}) : params_(params) {}
  InterFrameMotion estimate(const Frame& from, const Frame& to) const override;

 private:
  KeypointParams params_;
};

// Returns known homographies, keyed by the source frame index.
class InjectedMotion final : public MotionEstimator {
 public:
  explicit InjectedMotion(std::map<int, Homography> by_from_frame) : h_(std::move(by_from_frame)) {}
  InterFrameMotion estimate(const Frame& from, const Frame& to) const override;

 private:
  std::map<int, Homography> h_;
};

InterFrameMotion estimate_motion(const Frame& from, const Frame& to, const KeypointParams& params = {});

enum class ScanDirection { Leftward, Rightward };

std::string_view to_string(ScanDirection d);

// Content moving left in the image means the camera scans rightward.
// Throws AmbiguousDirection when the median motion lies within +-0.1 px.
ScanDirection estimate_scan_direction(std::span<const InterFrameMotion> motions);

// Fraction of motions whose horizontal sign disagrees with the scan direction.
double direction_flip_fraction(std::span<const InterFrameMotion> motions, ScanDirection direction);

// --- track ids ----------------------------------------------------------------------

struct TrackId {
  std::uint64_t hi = 0;
  std::uint32_t lo = 0;

  std::string hex() const;  // 24 lowercase hex digits
  static TrackId parse(std::string_view hex);
  friend auto operator<=>(const TrackId&, const TrackId&) = default;
};

class TrackIdGenerator {
 public:
  explicit TrackIdGenerator(std::uint64_t seed) : rng_(seed) {}
  TrackId next();

 private:
  std::mt19937_64 rng_;
};

}  // namespace pvx

template <>
struct std::hash<pvx::TrackId> {
  std::size_t operator()(const pvx::TrackId& id) const noexcept {
    return std::hash<std::uint64_t>{}(id.hi ^ (static_cast<std::uint64_t>(id.lo) * 0x9e3779b97f4a7c15ull));
  }
};

namespace pvx {

// --- association ----------------------------------------------------------------------

struct AssociationParams {
  // Matches farther than gate_factor x median nearest-neighbour spacing of the
  // current centers are treated as unmatched. 0 disables the gate.
  double gate_factor = 0.7;
};

double median_nearest_neighbor_spacing(std::span<const Point2> points);

// Returns one id per current center, in order.
std::vector<TrackId> associate(std::span<const Point2> prev_centers, std::span<const TrackId> prev_ids,
                               const Homography& prev_to_curr, std::span<const Point2> curr_centers,
                               TrackIdGenerator& ids, const AssociationParams& params = {});

std::vector<TrackId> associate(std::span<const ModuleMask> prev_masks, std::span<const TrackId> prev_ids,
                               const InterFrameMotion& motion, std::span<const ModuleMask> curr_masks,
                               TrackIdGenerator& ids, const AssociationParams& params = {});

// Per-frame track ids aligned with mask ordinals.
class TrackStore {
 public:
  void add_frame(int frame_index, std::vector<TrackId> ids);

  const std::vector<int>& frames() const { return frames_; }
  const std::vector<TrackId>& ids(int frame_index) const;
  bool has_frame(int frame_index) const { return assignments_.count(frame_index) != 0; }

  // Longest run of consecutive frames each track appears in.
  const std::map<TrackId, int>& track_lengths() const { return lengths_; }
  std::size_t track_count() const { return lengths_.size(); }

  // Number of frames in which a TrackId appears on more than one mask.
  int duplicate_violations() const;

 private:
  std::vector<int> frames_;
  std::map<int, std::vector<TrackId>> assignments_;
  std::map<TrackId, int> lengths_;
  std::map<TrackId, std::pair<int, int>> current_run_;  // last frame seen, run length
};

// Runs association over consecutive frames. masks[i] belongs to frame_indices[i];
// motions[i] connects frame i to frame i + 1.
TrackStore track_sequence(std::span<const int> frame_indices, std::span<const std::vector<ModuleMask>> masks,
                          std::span<const InterFrameMotion> motions, std::uint64_t seed,
                          const AssociationParams& params = {});

}  // namespace pvx
