#include "pvx/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <mutex>
#include <set>
#include <thread>

#include <json.hpp>

#include "pvx/error.hpp"
#include "pvx/eval_vote.hpp"

namespace pvx {

namespace fs = std::filesystem;
using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

// --- config ------------------------------------------------------------------------------

namespace {

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys{
      "frames", "gps", "plant_file", "row_specs", "masks", "motion", "predictions", "labels", "output",
      "plant_name", "segmenter", "threshold_celsius", "min_area_px", "max_area_px", "temperature_scale",
      "temperature_offset", "rotate_ccw", "iou_min", "quad_merge_limit", "track_min_frames", "angle_max_deg",
      "row_min_inliers", "row_inlier_tol_factor", "row_fallback_tol_px", "row_ransac_iterations",
      "ransac_iterations", "ransac_threshold_px", "gate_factor", "uav_max_flip_fraction", "dilation_factor",
      "overlap_threshold_px", "gap_mode", "gap_search_factor", "gap_adjacency", "match_step_budget",
      "match_max_candidates", "sun_delta_t", "sun_delta_pos_px", "run_fraction", "position_step_px",
      "parallelism", "rng_seed"};
  return keys;
}

fs::path resolve(const fs::path& base, const std::string& p) {
  if (p.empty()) return {};
  const fs::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

void require(bool ok, const std::string& what) {
  if (!ok) fail(ErrorCode::InvalidConfig, what);
}

std::string rel(const fs::path& p) { return p.generic_string(); }

}  // namespace

RunConfig parse_run_config(std::string_view json_text, const fs::path& base_dir) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    fail(ErrorCode::Parse, std::string("run config: ") + e.what());
  }
  if (!j.is_object()) fail(ErrorCode::Parse, "run config must be a JSON object");
  for (const auto& [key, value] : j.items())
    if (!known_keys().count(key)) fail(ErrorCode::InvalidConfig, "unknown config key '" + key + "'");

  RunConfig c;
  try {
    const auto path = [&](const char* key) { return resolve(base_dir, j.value(key, std::string())); };
    c.frames_dir = path("frames");
    c.gps_file = path("gps");
    c.plant_file = path("plant_file");
    c.row_specs_file = path("row_specs");
    c.mask_dir = path("masks");
    c.motion_file = path("motion");
    c.predictions_file = path("predictions");
    c.labels_file = path("labels");
    c.output_dir = path("output");
    c.plant_name = j.value("plant_name", c.plant_name);

    const std::string seg = j.value("segmenter", std::string("threshold"));
    if (seg == "threshold") c.segmenter = SegmenterKind::Threshold;
    else if (seg == "masks") c.segmenter = SegmenterKind::MaskFiles;
    else fail(ErrorCode::InvalidConfig, "segmenter must be 'threshold' or 'masks'");
    c.threshold.threshold_celsius = j.value("threshold_celsius", c.threshold.threshold_celsius);
    c.threshold.min_area_px = j.value("min_area_px", c.threshold.min_area_px);
    c.threshold.max_area_px = j.value("max_area_px", c.threshold.max_area_px);
    c.law.scale = j.value("temperature_scale", c.law.scale);
    c.law.offset = j.value("temperature_offset", c.law.offset);
    c.rotate_ccw = j.value("rotate_ccw", c.rotate_ccw);

    c.iou_min = j.value("iou_min", c.iou_min);
    c.quad.merge_limit_factor = j.value("quad_merge_limit", c.quad.merge_limit_factor);
    c.track_graph.min_track_frames = j.value("track_min_frames", c.track_graph.min_track_frames);
    c.row_filter.max_angle_deg = j.value("angle_max_deg", c.row_filter.max_angle_deg);
    c.row_filter.min_inliers = j.value("row_min_inliers", c.row_filter.min_inliers);
    c.row_filter.inlier_tol_factor = j.value("row_inlier_tol_factor", c.row_filter.inlier_tol_factor);
    c.row_filter.fallback_tol_px = j.value("row_fallback_tol_px", c.row_filter.fallback_tol_px);
    c.row_filter.iterations = j.value("row_ransac_iterations", c.row_filter.iterations);
    c.keypoints.ransac_iterations = j.value("ransac_iterations", c.keypoints.ransac_iterations);
    c.keypoints.ransac_threshold_px = j.value("ransac_threshold_px", c.keypoints.ransac_threshold_px);
    c.association.gate_factor = j.value("gate_factor", c.association.gate_factor);
    c.uav_max_flip_fraction = j.value("uav_max_flip_fraction", c.uav_max_flip_fraction);
    c.track_graph.dilation_factor = j.value("dilation_factor", c.track_graph.dilation_factor);
    c.track_graph.overlap_threshold_px = j.value("overlap_threshold_px", c.track_graph.overlap_threshold_px);
    c.track_graph.gap_mode = j.value("gap_mode", c.track_graph.gap_mode);
    c.track_graph.gap_search_factor = j.value("gap_search_factor", c.track_graph.gap_search_factor);
    c.gap_adjacency = j.value("gap_adjacency", c.gap_adjacency);
    c.match.step_budget = j.value("match_step_budget", c.match.step_budget);
    c.match.max_candidates = j.value("match_max_candidates", c.match.max_candidates);
    c.sun.delta_t = j.value("sun_delta_t", c.sun.delta_t);
    c.sun.delta_pos_px = j.value("sun_delta_pos_px", c.sun.delta_pos_px);
    c.sun.run_fraction = j.value("run_fraction", c.sun.run_fraction);
    c.sun.position_step_px = j.value("position_step_px", c.sun.position_step_px);
    c.parallelism = j.value("parallelism", c.parallelism);
    c.rng_seed = j.value("rng_seed", c.rng_seed);
  } catch (const json::exception& e) {
    fail(ErrorCode::InvalidConfig, std::string("run config: ") + e.what());
  }

  require(!c.frames_dir.empty(), "'frames' is required");
  require(!c.plant_file.empty(), "'plant_file' is required");
  require(!c.row_specs_file.empty(), "'row_specs' is required");
  require(!c.output_dir.empty(), "'output' is required");
  require(c.segmenter != SegmenterKind::MaskFiles || !c.mask_dir.empty(), "'masks' is required by the mask segmenter");
  require(c.threshold.min_area_px > 0 && c.threshold.max_area_px >= c.threshold.min_area_px,
          "area limits must be positive and ordered");
  require(c.law.scale > 0, "temperature_scale must be positive");
  require(c.iou_min > 0 && c.iou_min <= 1, "iou_min must lie in (0, 1]");
  require(c.quad.merge_limit_factor > 0, "quad_merge_limit must be positive");
  require(c.track_graph.min_track_frames > 0, "track_min_frames must be positive");
  require(c.row_filter.max_angle_deg > 0 && c.row_filter.max_angle_deg < 90, "angle_max_deg must lie in (0, 90)");
  require(c.row_filter.min_inliers >= 2, "row_min_inliers must be at least 2");
  require(c.row_filter.inlier_tol_factor > 0 && c.row_filter.fallback_tol_px > 0, "row tolerances must be positive");
  require(c.row_filter.iterations > 0 && c.keypoints.ransac_iterations > 0, "RANSAC iterations must be positive");
  require(c.keypoints.ransac_threshold_px > 0, "ransac_threshold_px must be positive");
  require(c.association.gate_factor >= 0, "gate_factor must be non-negative");
  require(c.uav_max_flip_fraction > 0 && c.uav_max_flip_fraction < 1, "uav_max_flip_fraction must lie in (0, 1)");
  require(c.track_graph.dilation_factor > 0 && c.track_graph.overlap_threshold_px > 0,
          "dilation and overlap must be positive");
  require(c.track_graph.gap_search_factor > 0, "gap_search_factor must be positive");
  require(c.match.step_budget > 0 && c.match.max_candidates > 0, "matching budgets must be positive");
  require(c.sun.delta_t > 0 && c.sun.delta_pos_px > 0 && c.sun.position_step_px > 0, "sun thresholds must be positive");
  require(c.sun.run_fraction > 0 && c.sun.run_fraction < 1, "run_fraction must lie in (0, 1)");
  require(c.parallelism >= 1, "parallelism must be at least 1");
  return c;
}

RunConfig load_run_config(const fs::path& path) {
  return parse_run_config(read_text_file(path), fs::absolute(path).parent_path());
}

std::string run_config_to_json(const RunConfig& c) {
  ojson j;
  j["frames"] = rel(c.frames_dir);
  j["gps"] = rel(c.gps_file);
  j["plant_file"] = rel(c.plant_file);
  j["row_specs"] = rel(c.row_specs_file);
  j["masks"] = rel(c.mask_dir);
  j["motion"] = rel(c.motion_file);
  j["predictions"] = rel(c.predictions_file);
  j["labels"] = rel(c.labels_file);
  j["output"] = rel(c.output_dir);
  j["plant_name"] = c.plant_name;
  j["segmenter"] = c.segmenter == SegmenterKind::Threshold ? "threshold" : "masks";
  j["threshold_celsius"] = c.threshold.threshold_celsius;
  j["min_area_px"] = c.threshold.min_area_px;
  j["max_area_px"] = c.threshold.max_area_px;
  j["temperature_scale"] = c.law.scale;
  j["temperature_offset"] = c.law.offset;
  j["rotate_ccw"] = c.rotate_ccw;
  j["iou_min"] = c.iou_min;
  j["quad_merge_limit"] = c.quad.merge_limit_factor;
  j["track_min_frames"] = c.track_graph.min_track_frames;
  j["angle_max_deg"] = c.row_filter.max_angle_deg;
  j["row_min_inliers"] = c.row_filter.min_inliers;
  j["row_inlier_tol_factor"] = c.row_filter.inlier_tol_factor;
  j["row_fallback_tol_px"] = c.row_filter.fallback_tol_px;
  j["row_ransac_iterations"] = c.row_filter.iterations;
  j["ransac_iterations"] = c.keypoints.ransac_iterations;
  j["ransac_threshold_px"] = c.keypoints.ransac_threshold_px;
  j["gate_factor"] = c.association.gate_factor;
  j["uav_max_flip_fraction"] = c.uav_max_flip_fraction;
  j["dilation_factor"] = c.track_graph.dilation_factor;
  j["overlap_threshold_px"] = c.track_graph.overlap_threshold_px;
  j["gap_mode"] = c.track_graph.gap_mode;
  j["gap_search_factor"] = c.track_graph.gap_search_factor;
  j["gap_adjacency"] = c.gap_adjacency;
  j["match_step_budget"] = c.match.step_budget;
  j["match_max_candidates"] = c.match.max_candidates;
  j["sun_delta_t"] = c.sun.delta_t;
  j["sun_delta_pos_px"] = c.sun.delta_pos_px;
  j["run_fraction"] = c.sun.run_fraction;
  j["position_step_px"] = c.sun.position_step_px;
  j["parallelism"] = c.parallelism;
  j["rng_seed"] = c.rng_seed;
  return j.dump(2) + "\n";
}

std::map<int, Homography> parse_motion_file(std::string_view json_text) {
  std::map<int, Homography> out;
  try {
    const json j = json::parse(json_text);
    for (const auto& e : j.at("homographies")) {
      const int from = e.at("from").get<int>();
      if (e.value("to", from + 1) != from + 1) fail(ErrorCode::Parse, "motion entries must link consecutive frames");
      Homography::Matrix m{};
      const auto& rows = e.at("h");
      if (rows.size() != 3) fail(ErrorCode::Parse, "homography must be 3x3");
      for (int r = 0; r < 3; ++r) {
        if (rows[r].size() != 3) fail(ErrorCode::Parse, "homography must be 3x3");
        for (int c = 0; c < 3; ++c) m[r][c] = rows[r][c].get<double>();
      }
      out[from] = Homography(m);
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::Parse, std::string("motion file: ") + e.what());
  }
  return out;
}

std::string motion_file_json(const std::map<int, Homography>& by_from_frame) {
  ojson arr = ojson::array();
  for (const auto& [from, h] : by_from_frame) {
    ojson m = ojson::array();
    for (int r = 0; r < 3; ++r) m.push_back({h(r, 0), h(r, 1), h(r, 2)});
    arr.push_back({{"from", from}, {"to", from + 1}, {"h", m}});
  }
  ojson j;
  j["homographies"] = arr;
  return j.dump(1) + "\n";
}

// --- segmenters --------------------------------------------------------------------------

std::vector<ModuleMask> ThresholdSegmenter::segment(const Frame& frame) const {
  return segment_threshold(raw_to_celsius(frame, law_), params_);
}

std::vector<ModuleMask> MaskFileSegmenter::segment(const Frame& frame) const {
  const fs::path p = dir_ / mask_file_name(frame.index);
  if (!fs::exists(p)) return {};
  return load_masks(p, frame.index, frame.width(), frame.height());
}

// --- failure taxonomy ---------------------------------------------------------------------

std::string_view to_string(FailureClass f) {
  switch (f) {
    case FailureClass::None: return "ok";
    case FailureClass::UAVTrajectory: return "UAVTrajectory";
    case FailureClass::SegmentationError: return "SegmentationError";
    case FailureClass::IrregularLayout: return "IrregularLayout";
    case FailureClass::RowFilterError: return "RowFilterError";
    case FailureClass::TrackGraphError: return "TrackGraphError";
    case FailureClass::Other: return "Other";
  }
  return "Other";
}

FailureClass classify_failure(ErrorCode code) {
  switch (code) {
    case ErrorCode::MotionEstimationFailed:
    case ErrorCode::AmbiguousDirection:
    case ErrorCode::TrajectoryViolation:
      return FailureClass::UAVTrajectory;
    case ErrorCode::NoMasks:
    case ErrorCode::EmptyMask:
    case ErrorCode::ShapeMismatch:
    case ErrorCode::DegenerateMask:
      return FailureClass::SegmentationError;
    case ErrorCode::UnknownRow:
    case ErrorCode::IrregularLayout:
      return FailureClass::IrregularLayout;
    case ErrorCode::NoLinesFound:
    case ErrorCode::TooFewLines:
      return FailureClass::RowFilterError;
    case ErrorCode::EmptyGraph:
    case ErrorCode::SeedNotFound:
    case ErrorCode::RowUnmatchable:
      return FailureClass::TrackGraphError;
    default:
      return FailureClass::Other;
  }
}

std::string RowResult::to_json() const {
  ojson j;
  j["row_id"] = row_id;
  j["status"] = ok() ? "ok" : "failed";
  if (!ok()) {
    j["failure"] = std::string(to_string(failure));
    j["message"] = message;
  }
  j["frames"] = frames;
  if (direction) j["direction"] = std::string(to_string(*direction));
  j["modules_extracted"] = modules_extracted;
  j["patches_extracted"] = patches_extracted;
  j["patches_dropped_sun"] = patches_dropped_sun;
  ojson missing = ojson::array();
  for (const auto& p : missing_plants) missing.push_back(p.str());
  j["missing_plants"] = missing;
  return j.dump(2) + "\n";
}

std::uint64_t row_seed(std::uint64_t run_seed, std::string_view row_id) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : row_id) h = (h ^ ch) * 0x100000001b3ull;
  std::uint64_t z = run_seed + h + 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// --- one row ---------------------------------------------------------------------------------

namespace {

struct FrameMasks {
  std::vector<ModuleMask> masks;    // accepted by the quad test
  std::vector<Quadrilateral> quads;
  FrontRows rows;                   // ordinals index masks
};

// Front rows restated against the front-mask list.
FrontRows reindex(const FrontRows& rows) {
  FrontRows out;
  out.lines = rows.lines;
  for (auto& l : out.lines)
    for (int& k : l.inliers)
      k = static_cast<int>(std::lower_bound(rows.ordinals.begin(), rows.ordinals.end(), k) - rows.ordinals.begin());
  for (std::size_t i = 0; i < rows.ordinals.size(); ++i) out.ordinals.push_back(static_cast<int>(i));
  return out;
}

void check_layout(const PlantLayout& layout, const RowSpec& spec) {
  const PlantRow& row = layout.row(spec.row_id);
  if (row.bottom_left() != spec.seed_bottom_left)
    fail(ErrorCode::IrregularLayout, "seed " + spec.seed_bottom_left.str() + " is not the bottom-left module of row " +
                                         spec.row_id);
  if (row.top_right() != spec.top_right)
    fail(ErrorCode::IrregularLayout, "plant id " + spec.top_right.str() + " is not the top-right module of row " +
                                         spec.row_id);
}

void run_stages(const RowWorkUnit& unit, const PlantLayout& layout, const RunConfig& config,
                const Segmenter& segmenter, const MotionEstimator& motion, RowOutcome& out) {
  const RowSpec& spec = unit.spec;
  if (unit.frames.empty()) fail(ErrorCode::NoMasks, "row has no frames");
  check_layout(layout, spec);
  const PlantGraph plant = build_plant_graph(layout, spec.row_id, spec.rows_per_stack, config.gap_adjacency);

  std::vector<Frame> frames;
  frames.reserve(unit.frames.size());
  for (const Frame& f : unit.frames) frames.push_back(normalize_orientation(f, spec, config.rotate_ccw));

  // Segmentation and the quad sanity test.
  std::vector<FrameMasks> per_frame(frames.size());
  for (std::size_t k = 0; k < frames.size(); ++k) {
    for (auto& m : segmenter.segment(frames[k])) {
      const QuadCheck qc = check_mask(m, config.iou_min, config.quad);
      if (!qc.accepted) continue;
      per_frame[k].masks.push_back(std::move(m));
      per_frame[k].quads.push_back(qc.quad);
    }
    if (per_frame[k].masks.empty())
      fail(ErrorCode::NoMasks, "frame " + std::to_string(frames[k].index) + " has no usable module masks");
  }

  // Front-row filter.
  for (std::size_t k = 0; k < frames.size(); ++k) {
    std::vector<Point2> centers;
    for (const auto& m : per_frame[k].masks) centers.push_back(m.center());
    try {
      per_frame[k].rows = filter_front_rows(centers, spec.rows_per_stack, 0.0, frames[k].width(), config.row_filter);
    } catch (const Error& e) {
      throw Error(e.code(), "frame " + std::to_string(frames[k].index) + ": " + e.what());
    }
  }

  // Motion and scan direction.
  std::vector<InterFrameMotion> motions;
  for (std::size_t k = 0; k + 1 < frames.size(); ++k) motions.push_back(motion.estimate(frames[k], frames[k + 1]));
  ScanDirection direction = ScanDirection::Rightward;
  if (!motions.empty()) {
    direction = estimate_scan_direction(motions);
    const double flips = direction_flip_fraction(motions, direction);
    if (flips > config.uav_max_flip_fraction)
      fail(ErrorCode::TrajectoryViolation, "camera reverses in " + std::to_string(static_cast<int>(flips * 100 + 0.5)) +
                                               "% of frame pairs");
  }
  out.result.direction = direction;

  // Tracking over front-row masks.
  std::vector<int> indices;
  std::vector<std::vector<ModuleMask>> front_masks(frames.size());
  for (std::size_t k = 0; k < frames.size(); ++k) {
    indices.push_back(frames[k].index);
    for (int o : per_frame[k].rows.ordinals) front_masks[k].push_back(per_frame[k].masks[static_cast<std::size_t>(o)]);
  }
  out.tracks = track_sequence(indices, front_masks, motions, row_seed(config.rng_seed, spec.row_id), config.association);
  out.front.resize(frames.size());
  for (std::size_t k = 0; k < frames.size(); ++k) {
    out.front[k].frame_index = frames[k].index;
    out.front[k].masks = front_masks[k];
    out.front[k].ids = out.tracks.ids(frames[k].index);
  }

  // Graph matching.
  const TrackGraph tg = build_track_graph(out.front, out.tracks.track_lengths(), spec.rows_per_stack, config.track_graph);
  const std::size_t seed_pos = seed_frame_position(frames.size(), direction);
  std::vector<Point2> seed_centers;
  for (const auto& m : out.front[seed_pos].masks) seed_centers.push_back(m.center());
  const TrackId seed = find_seed(seed_centers, out.front[seed_pos].ids, reindex(per_frame[seed_pos].rows));
  out.mapping = match_graphs(tg, plant, seed, spec.seed_bottom_left, config.match);

  // Patches grouped by plant id, then the reflection filter.
  std::map<PlantId, ModuleRecord> modules;
  for (std::size_t k = 0; k < frames.size(); ++k) {
    const auto& fm = per_frame[k];
    for (std::size_t j = 0; j < fm.rows.ordinals.size(); ++j) {
      const auto it = out.mapping.pairs.find(out.front[k].ids[j]);
      if (it == out.mapping.pairs.end()) continue;
      ModuleRecord& rec = modules[it->second];
      rec.plant = it->second;
      rec.track = it->first;
      PatchRecord p;
      p.ordinal = static_cast<int>(rec.patches.size());
      p.source_frame = frames[k].index;
      p.quad = fm.quads[static_cast<std::size_t>(fm.rows.ordinals[j])];
      p.patch = warp_patch(frames[k], p.quad);
      p.stats = thermal_stats(p.patch.pixels, p.ordinal, config.law);
      rec.patches.push_back(std::move(p));
    }
  }
  for (auto& [id, rec] : modules) {
    std::vector<PatchThermalStats> stats;
    for (const auto& p : rec.patches) stats.push_back(p.stats);
    const ReflectionReference ref = select_reference(stats, config.sun);
    const auto decisions = filter_reflections(stats, ref, config.sun);
    for (std::size_t i = 0; i < rec.patches.size(); ++i) {
      rec.patches[i].decision = decisions[i];
      if (decisions[i].keep) ++out.result.patches_extracted;
      else ++out.result.patches_dropped_sun;
    }
    out.modules.push_back(std::move(rec));
  }
  out.result.modules_extracted = static_cast<int>(out.modules.size());
  out.result.missing_plants = out.mapping.missing_plants;
}

}  // namespace

RowOutcome run_row(const RowWorkUnit& unit, const PlantLayout& layout, const RunConfig& config,
                   const Segmenter& segmenter, const MotionEstimator& motion) {
  RowOutcome out;
  out.result.row_id = unit.spec.row_id;
  out.result.frames = static_cast<int>(unit.frames.size());
  try {
    run_stages(unit, layout, config, segmenter, motion, out);
  } catch (const Error& e) {
    out.result.failure = classify_failure(e.code());
    out.result.message = std::string(to_string(e.code())) + ": " + e.what();
  } catch (const std::exception& e) {
    out.result.failure = FailureClass::Other;
    out.result.message = e.what();
  }
  if (!out.result.ok()) {
    out.modules.clear();
    out.result.modules_extracted = 0;
    out.result.patches_extracted = 0;
    out.result.patches_dropped_sun = 0;
  }
  return out;
}

// --- outputs ----------------------------------------------------------------------------------

namespace {

std::string patch_name(int ordinal) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "patch_%04d.pgm", ordinal);
  return buf;
}

}  // namespace

void write_row_outputs(const RowOutcome& outcome, const RunConfig& config) {
  const fs::path row_dir = config.output_dir / "rows" / outcome.result.row_id;
  fs::remove_all(row_dir);
  fs::create_directories(row_dir);
  if (outcome.result.ok()) {
    std::string mapping = "track_id,plant_id\n";
    for (const auto& [track, plant] : outcome.mapping.pairs) mapping += track.hex() + "," + plant.str() + "\n";
    write_text_file(row_dir / "mapping.csv", mapping);

    std::string drops = "plant_id,ordinal,reason\n";
    for (const auto& rec : outcome.modules) {
      const fs::path dir = config.output_dir / "dataset" / config.plant_name / rec.plant.str();
      fs::remove_all(dir);
      fs::create_directories(dir);
      ojson meta;
      meta["plant_id"] = rec.plant.str();
      meta["row_id"] = outcome.result.row_id;
      meta["track_id"] = rec.track.hex();
      ojson patches = ojson::array();
      ojson dropped = ojson::array();
      for (const auto& p : rec.patches) {
        if (!p.decision.keep) {
          drops += rec.plant.str() + "," + std::to_string(p.ordinal) + "," + p.decision.reason + "\n";
          dropped.push_back(p.ordinal);
          continue;
        }
        write_pgm(dir / patch_name(p.ordinal), p.patch.pixels);
        ojson quad = ojson::array();
        for (const auto& c : p.quad.corners) quad.push_back({c.x, c.y});
        patches.push_back({{"ordinal", p.ordinal},
                           {"file", patch_name(p.ordinal)},
                           {"source_frame", p.source_frame},
                           {"width", p.patch.width()},
                           {"height", p.patch.height()},
                           {"quad", quad}});
      }
      meta["patches"] = patches;
      meta["dropped_sun"] = dropped;
      write_text_file(dir / "meta.json", meta.dump(2) + "\n");
    }
    write_text_file(row_dir / "drop_log.csv", drops);
  }
  write_text_file(row_dir / "result.json", outcome.result.to_json());
}

// --- whole plant ----------------------------------------------------------------------------

int PlantSummary::rows_ok() const {
  return static_cast<int>(std::count_if(rows.begin(), rows.end(), [](const RowResult& r) { return r.ok(); }));
}

double PlantSummary::success_rate() const {
  return rows.empty() ? 0.0 : static_cast<double>(rows_ok()) / static_cast<double>(rows.size());
}

std::string PlantSummary::to_json() const {
  ojson j;
  j["plant"] = plant_name;
  j["rows_total"] = rows.size();
  j["rows_ok"] = rows_ok();
  j["success_rate"] = success_rate();
  int modules = 0, patches = 0, dropped = 0;
  for (const auto& r : rows) {
    modules += r.modules_extracted;
    patches += r.patches_extracted;
    dropped += r.patches_dropped_sun;
  }
  j["modules_extracted"] = modules;
  j["patches_extracted"] = patches;
  j["patches_dropped_sun"] = dropped;
  j["patches_per_module"] = modules > 0 ? static_cast<double>(patches) / modules : 0.0;
  ojson failures = ojson::object();
  for (FailureClass f : {FailureClass::UAVTrajectory, FailureClass::SegmentationError, FailureClass::IrregularLayout,
                         FailureClass::RowFilterError, FailureClass::TrackGraphError, FailureClass::Other})
    failures[std::string(to_string(f))] =
        std::count_if(rows.begin(), rows.end(), [f](const RowResult& r) { return r.failure == f; });
  j["failures"] = failures;
  ojson rows_j = ojson::array();
  for (const auto& r : rows) rows_j.push_back(ojson::parse(r.to_json()));
  j["rows"] = rows_j;
  return j.dump(2) + "\n";
}

namespace {

RowResult process_row(const RowSpec& spec, const FrameCatalog& catalog, const PlantLayout& layout,
                      const RunConfig& config, const Segmenter& segmenter, const MotionEstimator& motion) {
  RowOutcome outcome;
  try {
    if (spec.first_frame > spec.last_frame) fail(ErrorCode::InvalidArgument, "first_frame exceeds last_frame");
    std::vector<Frame> frames;
    for (int i = spec.first_frame; i <= spec.last_frame; ++i) {
      if (!catalog.contains(i)) fail(ErrorCode::UnknownFrame, "frame " + std::to_string(i) + " does not exist");
      frames.push_back(catalog.load(i));
    }
    outcome = run_row(RowWorkUnit{spec, frames}, layout, config, segmenter, motion);
  } catch (const Error& e) {
    outcome = RowOutcome{};
    outcome.result.row_id = spec.row_id;
    outcome.result.failure = FailureClass::Other;
    outcome.result.message = std::string(to_string(e.code())) + ": " + e.what();
  }
  try {
    write_row_outputs(outcome, config);
  } catch (const std::exception& e) {
    outcome.result.failure = FailureClass::Other;
    outcome.result.message = std::string("writing outputs: ") + e.what();
  }
  return outcome.result;
}

}  // namespace

PlantSummary run_plant(const RunConfig& config) {
  require(!config.frames_dir.empty() && fs::is_directory(config.frames_dir), "frames directory missing");
  require(!config.plant_file.empty() && fs::exists(config.plant_file), "plant file missing");
  require(!config.row_specs_file.empty() && fs::exists(config.row_specs_file), "row spec file missing");
  require(!config.output_dir.empty(), "output directory not set");
  require(config.segmenter != SegmenterKind::MaskFiles || fs::is_directory(config.mask_dir),
          "mask directory missing");
  require(config.motion_file.empty() || fs::exists(config.motion_file), "motion file missing");

  const PlantLayout layout = load_plant_layout(config.plant_file);
  const std::vector<RowSpec> specs = load_row_specs(config.row_specs_file);
  std::set<std::string> seen;
  for (const auto& s : specs) require(seen.insert(s.row_id).second, "duplicate row id " + s.row_id);
  const FrameCatalog catalog = index_frame_sequence(config.frames_dir);

  std::unique_ptr<MotionEstimator> motion;
  if (!config.motion_file.empty())
    motion = std::make_unique<InjectedMotion>(parse_motion_file(read_text_file(config.motion_file)));
  else
    motion = std::make_unique<KeypointMotionEstimator>(config.keypoints);
  std::unique_ptr<Segmenter> segmenter;
  if (config.segmenter == SegmenterKind::MaskFiles)
    segmenter = std::make_unique<MaskFileSegmenter>(config.mask_dir);
  else
    segmenter = std::make_unique<ThresholdSegmenter>(config.law, config.threshold);

  fs::create_directories(config.output_dir);
  PlantSummary summary;
  summary.plant_name = config.plant_name;
  summary.rows.resize(specs.size());

  std::atomic<std::size_t> next{0};
  const auto worker = [&] {
    for (std::size_t i = next++; i < specs.size(); i = next++)
      summary.rows[i] = process_row(specs[i], catalog, layout, config, *segmenter, *motion);
  };
  const std::size_t n_workers = std::min<std::size_t>(static_cast<std::size_t>(config.parallelism), specs.size());
  if (n_workers <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < n_workers; ++w) pool.emplace_back(worker);
  }

  write_text_file(config.output_dir / "summary.json", summary.to_json());
  if (!config.predictions_file.empty() && !config.labels_file.empty()) {
    const auto preds = parse_predictions_csv(read_text_file(config.predictions_file));
    const auto truth = parse_truth_csv(read_text_file(config.labels_file));
    write_text_file(config.output_dir / "evaluation.json", evaluate_predictions(preds, truth).to_json());
  }
  return summary;
}

}  // namespace pvx
