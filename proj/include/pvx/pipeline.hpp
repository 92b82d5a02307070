#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "pvx/error.hpp"
#include "pvx/ingest.hpp"
#include "pvx/plant_graph.hpp"
#include "pvx/rectify.hpp"
#include "pvx/row_filter.hpp"
#include "pvx/segmentation.hpp"
#include "pvx/sun_filter.hpp"
#include "pvx/tracking.hpp"

namespace pvx {

enum class SegmenterKind { Threshold, MaskFiles };

struct RunConfig {
  // Relative paths in the config file resolve against the file's directory.
  std::filesystem::path frames_dir;
  std::filesystem::path gps_file;        // optional; served by the API
  std::filesystem::path plant_file;
  std::filesystem::path row_specs_file;
  std::filesystem::path mask_dir;        // segmenter = masks
  std::filesystem::path motion_file;     // optional known homographies
  std::filesystem::path predictions_file;  // optional, scored against labels_file
  std::filesystem::path labels_file;
  std::filesystem::path output_dir;
  std::string plant_name = "plant";

  SegmenterKind segmenter = SegmenterKind::Threshold;
  ThresholdParams threshold;
  TemperatureLaw law;
  bool rotate_ccw = true;

  double iou_min = 0.9;
  QuadFitParams quad;
  RowFilterParams row_filter;
  KeypointParams keypoints;
  AssociationParams association;
  double uav_max_flip_fraction = 0.1;
  TrackGraphParams track_graph;
  bool gap_adjacency = true;
  MatchParams match;
  SunFilterParams sun;

  int parallelism = 1;
  std::uint64_t rng_seed = 1;
};

// Throws Parse for malformed JSON and InvalidConfig for out-of-range values.
RunConfig parse_run_config(std::string_view json_text, const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);
std::string run_config_to_json(const RunConfig& config);

// Known inter-frame homographies: {"homographies":[{"from":i,"to":i+1,"h":[[...],[...],[...]]}]}.
std::map<int, Homography> parse_motion_file(std::string_view json_text);
std::string motion_file_json(const std::map<int, Homography>& by_from_frame);

class Segmenter {
 public:
  virtual ~Segmenter() = default;
  virtual std::vector<ModuleMask> segment(const Frame& frame) const = 0;
};

class ThresholdSegmenter final : public Segmenter {
 public:
  ThresholdSegmenter(TemperatureLaw law, ThresholdParams params) : law_(law), params_(params) {}
  std::vector<ModuleMask> segment(const Frame& frame) const override;

 private:
  TemperatureLaw law_;
  ThresholdParams params_;
};

// Reads masks_{index:06d}.json; a missing file means no masks.
class MaskFileSegmenter final : public Segmenter {
 public:
  explicit MaskFileSegmenter(std::filesystem::path dir) : dir_(std::move(dir)) {}
  std::vector<ModuleMask> segment(const Frame& frame) const override;

 private:
  std::filesystem::path dir_;
};

enum class FailureClass { None, UAVTrajectory, SegmentationError, IrregularLayout, RowFilterError, TrackGraphError, Other };

std::string_view to_string(FailureClass f);
FailureClass classify_failure(ErrorCode code);

struct RowResult {
  std::string row_id;
  FailureClass failure = FailureClass::None;
  std::string message;
  int frames = 0;
  int modules_extracted = 0;
  int patches_extracted = 0;
  int patches_dropped_sun = 0;
  std::vector<PlantId> missing_plants;
  std::optional<ScanDirection> direction;

  bool ok() const { return failure == FailureClass::None; }
  std::string to_json() const;
};

struct PatchRecord {
  int ordinal = 0;
  int source_frame = 0;
  Quadrilateral quad;
  Patch patch;
  PatchThermalStats stats;
  SunDecision decision;
};

struct ModuleRecord {
  PlantId plant;
  TrackId track;
  std::vector<PatchRecord> patches;  // in frame order
};

struct RowOutcome {
  RowResult result;
  std::vector<TrackedFrame> front;  // front-row masks and their track ids per frame
  TrackStore tracks;
  IdMapping mapping;
  std::vector<ModuleRecord> modules;  // sorted by plant id
};

// Seed for a row's track ids, independent of scheduling.
std::uint64_t row_seed(std::uint64_t run_seed, std::string_view row_id);

// One row end to end. Stage errors end up in result.failure; nothing throws.
RowOutcome run_row(const RowWorkUnit& unit, const PlantLayout& layout, const RunConfig& config,
                   const Segmenter& segmenter, const MotionEstimator& motion);

// dataset/<plant>/<row.column>/patch_{ordinal:04d}.pgm + meta.json for kept
// patches, and rows/<row_id>/{result.json, mapping.csv, drop_log.csv}.
void write_row_outputs(const RowOutcome& outcome, const RunConfig& config);

struct PlantSummary {
  std::string plant_name;
  std::vector<RowResult> rows;  // in row-spec order

  int rows_ok() const;
  double success_rate() const;
  std::string to_json() const;
};

// Processes every row spec on a pool of config.parallelism workers and writes
// summary.json. Throws InvalidConfig (or Io/Parse) for unusable inputs only.
PlantSummary run_plant(const RunConfig& config);

}  // namespace pvx
