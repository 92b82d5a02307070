#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "pvx/eval_vote.hpp"
#include "pvx/geometry.hpp"
#include "pvx/ingest.hpp"
#include "pvx/plant_graph.hpp"
#include "pvx/segmentation.hpp"
#include "pvx/tracking.hpp"

namespace pvx {

// Camera position over the planar world (metres), heading and height.
struct CameraPose {
  double x = 0.0;
  double y = 0.0;
  double yaw_deg = 0.0;
  double altitude_m = 15.0;
};

struct SceneRowConfig {
  std::string row_id;
  int rows_per_stack = 2;
  int columns = 6;     // modules per sub-row
  int table_size = 0;  // modules per table; 0 = one continuous table
  std::vector<int> table_sizes;  // explicit sizes from the left; overrides table_size
  std::vector<CameraPose> poses;  // explicit trajectory; empty = parametric sweep
};

struct AnomalySpec {
  PlantId plant_id;
  AnomalyClass cls = AnomalyClass::Healthy;
  std::optional<double> delta_t;  // overrides the class default
};

struct ReflectionSpec {
  PlantId plant_id;
  int first_frame = 0;  // global frame indices, inclusive
  int last_frame = 0;
  double delta_t = 8.0;
  double delta_t_jitter = 1.0;  // per-frame uniform flicker of the glint
  double delta_pos_px = 15.0;
};

struct SceneConfig {
  int frame_width = 640;
  int frame_height = 512;
  double focal_px = 640.0;
  double pitch_deg = 10.0;  // optical axis from nadir, looking across the rows

  double module_width_m = 1.0;
  double module_height_m = 0.6;
  double gap_x_m = 0.11;
  double gap_y_m = 0.17;
  double table_gap_m = 0.8;
  double module_celsius = 42.0;
  double background_celsius = 18.0;

  std::vector<SceneRowConfig> rows;
  bool background_row = true;
  double background_distance_m = 2.5;

  double altitude_m = 15.0;
  double speed_m = 0.5;  // per frame
  ScanDirection direction = ScanDirection::Rightward;
  double jitter_m = 0.02;
  double yaw_jitter_deg = 0.3;
  int backtrack_frames = 0;  // frames retracing the sweep at its end
  int min_frames = 8;

  std::vector<AnomalySpec> anomalies;
  std::vector<ReflectionSpec> reflections;
  double texture_noise = 0.1;  // per-pixel deg C
  std::uint64_t rng_seed = 1;
};

// Throws Parse or InvalidConfig.
SceneConfig parse_scene_config(std::string_view json_text);
std::string scene_config_to_json(const SceneConfig& config);

struct TruthMask {
  std::optional<PlantId> plant_id;  // empty for background modules
  ModuleMask mask;
  std::array<Point2, 4> corners;  // projected module corners: TL, TR, BR, BL
  bool touches_border = false;
};

struct TruthFrame {
  int index = 0;
  std::string row_id;
  CameraPose pose;
  Homography world_to_image;
  std::vector<TruthMask> masks;
};

struct ReflectionTruth {
  PlantId plant_id;
  int frame_index = 0;
  friend auto operator<=>(const ReflectionTruth&, const ReflectionTruth&) = default;
};

struct SceneTruth {
  std::vector<TruthFrame> frames;
  PlantLayout layout;
  std::vector<RowSpec> row_specs;
  std::map<PlantId, AnomalyClass> labels;
  std::vector<ReflectionTruth> reflections;  // sorted; fully visible frames only
  double pixels_per_metre = 0.0;             // nominal scale at the front stack

  std::string to_json() const;
};

struct Scene {
  std::vector<Frame> frames;
  std::vector<GpsFix> gps;
  SceneTruth truth;
};

// Throws InvalidConfig.
Scene generate_scene(const SceneConfig& config);

// Exact map from frame t-1 to frame t. Throws OutOfRange unless 1 <= t < frame count.
Homography truth_homography(const SceneTruth& truth, int t);

// Camera matrix of a pose restricted to the ground plane.
Homography ground_to_image(const SceneConfig& config, const CameraPose& pose);

// frames/, masks/ (border-free truth masks), gps.csv, rows.json, plant.json,
// truth.json, labels.csv, scene.json and motion.json (true inter-frame homographies).
void write_scene(const Scene& scene, const SceneConfig& config, const std::filesystem::path& dir);

}  // namespace pvx
