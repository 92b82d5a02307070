#include "pvx/scene_sim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <set>

#include <json.hpp>

#include "pvx/error.hpp"

namespace pvx {

namespace fs = std::filesystem;
using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

double lattice(std::uint64_t seed, long long ix, long long iy) {
  const std::uint64_t h = splitmix(seed ^ splitmix(static_cast<std::uint64_t>(ix) * 0x632be59bd9b4e019ULL ^
                                                   static_cast<std::uint64_t>(iy)));
  return static_cast<double>(h >> 11) * (2.0 / 9007199254740992.0) - 1.0;
}

double value_noise(std::uint64_t seed, double x, double y) {
  const double fx = std::floor(x), fy = std::floor(y);
  const auto ix = static_cast<long long>(fx), iy = static_cast<long long>(fy);
  auto smooth = [](double t) { return t * t * (3 - 2 * t); };
  const double tx = smooth(x - fx), ty = smooth(y - fy);
  const double a = lattice(seed, ix, iy), b = lattice(seed, ix + 1, iy);
  const double c = lattice(seed, ix, iy + 1), d = lattice(seed, ix + 1, iy + 1);
  return (a + (b - a) * tx) * (1 - ty) + (c + (d - c) * tx) * ty;
}

double class_default_delta(AnomalyClass c) {
  switch (c) {
    case AnomalyClass::Healthy: return 0.0;
    case AnomalyClass::Mh: return 6.0;
    case AnomalyClass::Mp: return 4.0;
    case AnomalyClass::Sh: return 10.0;
    case AnomalyClass::Sp: return 5.0;
    case AnomalyClass::Pid: return 6.0;
    case AnomalyClass::CmPlus: return 7.0;
    case AnomalyClass::CsPlus: return 8.0;
    case AnomalyClass::C: return 12.0;
    case AnomalyClass::D: return -4.0;
    case AnomalyClass::Chs: return 18.0;
  }
  return 0.0;
}

// Stylized pattern weight in [0, 1] at normalized module coordinates (a right, b down).
// `w` and `h` are the module size in metres, used for spots of physical size.
double pattern(AnomalyClass c, double a, double b, double w, double h) {
  auto spot = [&](double ca, double cb, double radius_m) {
    return std::hypot((a - ca) * w, (b - cb) * h) <= radius_m ? 1.0 : 0.0;
  };
  const int cell_i = std::min(5, static_cast<int>(a * 6)), cell_j = std::min(9, static_cast<int>(b * 10));
  switch (c) {
    case AnomalyClass::Healthy: return 0.0;
    case AnomalyClass::Mh: return std::max({spot(0.25, 0.3, 0.06), spot(0.6, 0.7, 0.06), spot(0.8, 0.35, 0.06)});
    case AnomalyClass::Mp: return (static_cast<int>(a * 6) + static_cast<int>(b * 4)) % 2 == 0 ? 1.0 : 0.0;
    case AnomalyClass::Sh: return a < 1.0 / 3 ? 1.0 : 0.0;
    case AnomalyClass::Sp: return a >= 1.0 / 3 && a < 2.0 / 3 && (cell_i + cell_j) % 2 == 0 ? 1.0 : 0.0;
    case AnomalyClass::Pid: return b > 0.75 ? 1.0 : 0.0;
    case AnomalyClass::CmPlus: return (cell_i * 7 + cell_j * 3) % 5 == 0 ? 1.0 : 0.0;
    case AnomalyClass::CsPlus: return cell_i == 3 && cell_j == 5 ? 1.0 : 0.0;
    case AnomalyClass::C: return cell_i == 1 && cell_j == 2 ? 1.0 : 0.0;
    case AnomalyClass::D: return b < 0.25 ? 1.0 : 0.0;
    case AnomalyClass::Chs: return spot(0.7, 0.4, 0.04);
  }
  return 0.0;
}

// Junction box: a faint flat-topped warm spot that anchors the module's temperature maximum.
constexpr double kBoxA = 0.12, kBoxB = 0.18, kBoxRadius = 0.05, kBoxDelta = 1.0;
constexpr double kGlintRadius = 0.05;

struct ModuleCell {
  std::optional<PlantId> id;
  double x0 = 0, x1 = 0, y0 = 0, y1 = 0;  // world extents; y1 is the far (top) edge
  double base = 0;
  AnomalyClass cls = AnomalyClass::Healthy;
  double delta = 0;
};

struct RowWorld {
  int n = 1;
  double w = 1, h = 0.6, gy = 0.1;
  std::vector<double> col_x;
  std::vector<double> bg_x;
  double bg_y0 = 0;
  double length = 0;
  std::vector<ModuleCell> front;  // index sub_from_bottom * cols + col
  std::vector<ModuleCell> back;   // same for the background stack

  int cols() const { return static_cast<int>(col_x.size()); }

  // Index into front (>= 0), background (<= -2) or -1 for bare ground.
  int lookup(double X, double Y) const {
    auto find = [&](const std::vector<double>& xs, double y_base) -> int {
      const double yy = Y - y_base;
      if (yy < 0) return -1;
      const double pitch = h + gy;
      const int k = static_cast<int>(std::floor(yy / pitch));
      if (k >= n || yy - k * pitch >= h) return -1;
      const auto it = std::upper_bound(xs.begin(), xs.end(), X);
      if (it == xs.begin()) return -1;
      const int j = static_cast<int>(it - xs.begin()) - 1;
      if (X >= xs[static_cast<std::size_t>(j)] + w) return -1;
      return k * static_cast<int>(xs.size()) + j;
    };
    const int f = find(col_x, 0.0);
    if (f >= 0) return f;
    if (!bg_x.empty()) {
      const int b = find(bg_x, bg_y0);
      if (b >= 0) return -2 - b;
    }
    return -1;
  }
};

void invalid(const std::string& what) { fail(ErrorCode::InvalidConfig, what); }

void validate(const SceneConfig& c) {
  if (c.frame_width < 64 || c.frame_height < 64) invalid("frame size too small");
  if (!(c.focal_px > 0) || !(c.pitch_deg >= 0 && c.pitch_deg < 60)) invalid("camera intrinsics out of range");
  if (!(c.module_width_m > 0 && c.module_height_m > 0 && c.gap_x_m >= 0 && c.gap_y_m >= 0 && c.table_gap_m >= 0))
    invalid("module geometry must be positive");
  if (c.rows.empty()) invalid("scene has no rows");
  if (!(c.altitude_m > 0) || !(c.speed_m >= 0) || c.min_frames < 1 || c.backtrack_frames < 0)
    invalid("trajectory parameters out of range");
  if (!(c.texture_noise >= 0) || !(c.jitter_m >= 0) || !(c.yaw_jitter_deg >= 0)) invalid("noise must be non-negative");
  std::set<std::string> ids;
  for (const auto& r : c.rows) {
    if (r.row_id.empty() || !ids.insert(r.row_id).second) invalid("row ids must be unique and non-empty");
    if (r.rows_per_stack < 1 || r.columns < 1 || r.table_size < 0) invalid("row " + r.row_id + " has an invalid grid");
    if (!r.table_sizes.empty()) {
      int sum = 0;
      for (int t : r.table_sizes) {
        if (t < 1) invalid("row " + r.row_id + " has an empty table");
        sum += t;
      }
      if (sum != r.columns) invalid("row " + r.row_id + " table sizes do not add up to its columns");
    }
    if (r.poses.empty() && !(c.speed_m > 0)) invalid("parametric sweep needs a positive speed");
  }
}

// Table number of every column, counted from the left.
std::vector<int> table_index(const SceneRowConfig& r) {
  std::vector<int> out;
  if (!r.table_sizes.empty()) {
    for (std::size_t t = 0; t < r.table_sizes.size(); ++t)
      for (int k = 0; k < r.table_sizes[t]; ++k) out.push_back(static_cast<int>(t));
    return out;
  }
  for (int j = 0; j < r.columns; ++j) out.push_back(r.table_size > 0 ? j / r.table_size : 0);
  return out;
}

CameraPose pose_from_json(const json& j) {
  CameraPose p;
  p.x = j.at("x").get<double>();
  p.y = j.at("y").get<double>();
  p.yaw_deg = j.value("yaw_deg", 0.0);
  p.altitude_m = j.value("altitude_m", 15.0);
  return p;
}

ojson pose_to_json(const CameraPose& p) {
  return ojson{{"x", p.x}, {"y", p.y}, {"yaw_deg", p.yaw_deg}, {"altitude_m", p.altitude_m}};
}

ojson homography_to_json(const Homography& h) {
  ojson m = ojson::array();
  for (int r = 0; r < 3; ++r) m.push_back({h(r, 0), h(r, 1), h(r, 2)});
  return m;
}

// Camera y that puts the ground line Y = 0 at image row `v` in the frame centre.
double camera_y_for_row(const SceneConfig& c, double v, double altitude) {
  const double phi = c.pitch_deg * kDeg;
  // Camera axes for zero yaw: x = (1,0,0), y = (0,-cos,-sin), z = (0,sin,-cos).
  const double b = (v - 0.5 * c.frame_height) / c.focal_px;
  const double dy = -std::cos(phi) * b + std::sin(phi);
  const double dz = -std::sin(phi) * b - std::cos(phi);
  const double lambda = -altitude / dz;
  return -lambda * dy;
}

}  // namespace

Homography ground_to_image(const SceneConfig& c, const CameraPose& pose) {
  const double phi = c.pitch_deg * kDeg, psi = pose.yaw_deg * kDeg;
  const std::array<double, 3> xc{std::cos(psi), std::sin(psi), 0.0};
  const std::array<double, 3> fwd{-std::sin(psi), std::cos(psi), 0.0};
  const std::array<double, 3> zc{std::sin(phi) * fwd[0], std::sin(phi) * fwd[1], -std::cos(phi)};
  const std::array<double, 3> yc{zc[1] * xc[2] - zc[2] * xc[1], zc[2] * xc[0] - zc[0] * xc[2],
                                 zc[0] * xc[1] - zc[1] * xc[0]};
  const std::array<std::array<double, 3>, 3> R{xc, yc, zc};
  const std::array<double, 3> C{pose.x, pose.y, pose.altitude_m};
  Homography::Matrix m{};
  for (int r = 0; r < 3; ++r) {
    const auto& row = R[static_cast<std::size_t>(r)];
    m[static_cast<std::size_t>(r)] = {row[0], row[1], -(row[0] * C[0] + row[1] * C[1] + row[2] * C[2])};
  }
  const double f = c.focal_px, cx = 0.5 * c.frame_width, cy = 0.5 * c.frame_height;
  Homography::Matrix k{{{f, 0, cx}, {0, f, cy}, {0, 0, 1}}};
  return Homography(k) * Homography(m);
}

SceneConfig parse_scene_config(std::string_view json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    fail(ErrorCode::Parse, std::string("scene config: ") + e.what());
  }
  SceneConfig c;
  try {
    c.frame_width = j.value("frame_width", c.frame_width);
    c.frame_height = j.value("frame_height", c.frame_height);
    c.focal_px = j.value("focal_px", c.focal_px);
    c.pitch_deg = j.value("pitch_deg", c.pitch_deg);
    c.module_width_m = j.value("module_width_m", c.module_width_m);
    c.module_height_m = j.value("module_height_m", c.module_height_m);
    c.gap_x_m = j.value("gap_x_m", c.gap_x_m);
    c.gap_y_m = j.value("gap_y_m", c.gap_y_m);
    c.table_gap_m = j.value("table_gap_m", c.table_gap_m);
    c.module_celsius = j.value("module_celsius", c.module_celsius);
    c.background_celsius = j.value("background_celsius", c.background_celsius);
    c.background_row = j.value("background_row", c.background_row);
    c.background_distance_m = j.value("background_distance_m", c.background_distance_m);
    c.altitude_m = j.value("altitude_m", c.altitude_m);
    c.speed_m = j.value("speed_m", c.speed_m);
    const std::string dir = j.value("direction", std::string("right"));
    if (dir != "right" && dir != "left") invalid("direction must be 'right' or 'left'");
    c.direction = dir == "right" ? ScanDirection::Rightward : ScanDirection::Leftward;
    c.jitter_m = j.value("jitter_m", c.jitter_m);
    c.yaw_jitter_deg = j.value("yaw_jitter_deg", c.yaw_jitter_deg);
    c.backtrack_frames = j.value("backtrack_frames", c.backtrack_frames);
    c.min_frames = j.value("min_frames", c.min_frames);
    c.texture_noise = j.value("texture_noise", c.texture_noise);
    c.rng_seed = j.value("rng_seed", c.rng_seed);
    for (const auto& jr : j.at("rows")) {
      SceneRowConfig r;
      r.row_id = jr.at("row_id").get<std::string>();
      r.rows_per_stack = jr.value("rows_per_stack", r.rows_per_stack);
      r.columns = jr.value("columns", r.columns);
      r.table_size = jr.value("table_size", r.table_size);
      if (jr.contains("table_sizes")) r.table_sizes = jr.at("table_sizes").get<std::vector<int>>();
      if (jr.contains("poses"))
        for (const auto& jp : jr.at("poses")) r.poses.push_back(pose_from_json(jp));
      c.rows.push_back(std::move(r));
    }
    if (j.contains("anomalies"))
      for (const auto& ja : j.at("anomalies")) {
        AnomalySpec a;
        a.plant_id = PlantId::parse(ja.at("plant_id").get<std::string>());
        a.cls = parse_anomaly_class(ja.at("class").get<std::string>());
        if (ja.contains("delta_t")) a.delta_t = ja.at("delta_t").get<double>();
        c.anomalies.push_back(a);
      }
    if (j.contains("reflections"))
      for (const auto& jf : j.at("reflections")) {
        ReflectionSpec f;
        f.plant_id = PlantId::parse(jf.at("plant_id").get<std::string>());
        f.first_frame = jf.at("first_frame").get<int>();
        f.last_frame = jf.at("last_frame").get<int>();
        f.delta_t = jf.value("delta_t", f.delta_t);
        f.delta_t_jitter = jf.value("delta_t_jitter", f.delta_t_jitter);
        f.delta_pos_px = jf.value("delta_pos_px", f.delta_pos_px);
        c.reflections.push_back(f);
      }
  } catch (const json::exception& e) {
    fail(ErrorCode::InvalidConfig, std::string("scene config: ") + e.what());
  }
  validate(c);
  return c;
}

std::string scene_config_to_json(const SceneConfig& c) {
  ojson j;
  j["frame_width"] = c.frame_width;
  j["frame_height"] = c.frame_height;
  j["focal_px"] = c.focal_px;
  j["pitch_deg"] = c.pitch_deg;
  j["module_width_m"] = c.module_width_m;
  j["module_height_m"] = c.module_height_m;
  j["gap_x_m"] = c.gap_x_m;
  j["gap_y_m"] = c.gap_y_m;
  j["table_gap_m"] = c.table_gap_m;
  j["module_celsius"] = c.module_celsius;
  j["background_celsius"] = c.background_celsius;
  j["background_row"] = c.background_row;
  j["background_distance_m"] = c.background_distance_m;
  j["altitude_m"] = c.altitude_m;
  j["speed_m"] = c.speed_m;
  j["direction"] = c.direction == ScanDirection::Rightward ? "right" : "left";
  j["jitter_m"] = c.jitter_m;
  j["yaw_jitter_deg"] = c.yaw_jitter_deg;
  j["backtrack_frames"] = c.backtrack_frames;
  j["min_frames"] = c.min_frames;
  j["texture_noise"] = c.texture_noise;
  j["rng_seed"] = c.rng_seed;
  ojson rows = ojson::array();
  for (const auto& r : c.rows) {
    ojson jr{{"row_id", r.row_id}, {"rows_per_stack", r.rows_per_stack}, {"columns", r.columns},
             {"table_size", r.table_size}};
    if (!r.table_sizes.empty()) jr["table_sizes"] = r.table_sizes;
    if (!r.poses.empty()) {
      ojson poses = ojson::array();
      for (const auto& p : r.poses) poses.push_back(pose_to_json(p));
      jr["poses"] = poses;
    }
    rows.push_back(jr);
  }
  j["rows"] = rows;
  ojson an = ojson::array();
  for (const auto& a : c.anomalies) {
    ojson ja{{"plant_id", a.plant_id.str()}, {"class", std::string(to_string(a.cls))}};
    if (a.delta_t) ja["delta_t"] = *a.delta_t;
    an.push_back(ja);
  }
  j["anomalies"] = an;
  ojson rf = ojson::array();
  for (const auto& f : c.reflections)
    rf.push_back({{"plant_id", f.plant_id.str()}, {"first_frame", f.first_frame}, {"last_frame", f.last_frame},
                  {"delta_t", f.delta_t}, {"delta_t_jitter", f.delta_t_jitter}, {"delta_pos_px", f.delta_pos_px}});
  j["reflections"] = rf;
  return j.dump(2) + "\n";
}

Scene generate_scene(const SceneConfig& c) {
  validate(c);
  const int W = c.frame_width, H = c.frame_height;
  const double w = c.module_width_m, h = c.module_height_m;
  Scene scene;
  std::mt19937_64 rng(splitmix(c.rng_seed));
  std::normal_distribution<double> base_noise(0.0, 0.1);

  std::map<PlantId, const AnomalySpec*> anomaly_of;
  for (const auto& a : c.anomalies) anomaly_of[a.plant_id] = &a;
  std::set<PlantId> known;

  int plant_row_base = 0;
  int frame_index = 0;
  const double v_bottom = H - 40.0;
  for (std::size_t ri = 0; ri < c.rows.size(); ++ri) {
    const auto& rc = c.rows[ri];
    RowWorld world;
    world.n = rc.rows_per_stack;
    world.w = w;
    world.h = h;
    world.gy = c.gap_y_m;
    const std::vector<int> table_of = table_index(rc);
    for (int j = 0; j < rc.columns; ++j) {
      const int tables_before = table_of[static_cast<std::size_t>(j)];
      world.col_x.push_back(j * (w + c.gap_x_m) + tables_before * (c.table_gap_m - c.gap_x_m));
    }
    world.length = world.col_x.back() + w;
    const double stack_top = world.n * (h + c.gap_y_m) - c.gap_y_m;

    // Plant layout: sub-row 0 on top, one empty column per table gap.
    PlantRow prow;
    prow.row_id = rc.row_id;
    for (int i = 0; i < world.n; ++i) {
      std::vector<std::optional<PlantId>> sub;
      for (int j = 0; j < rc.columns; ++j) {
        if (j > 0 && table_of[static_cast<std::size_t>(j)] != table_of[static_cast<std::size_t>(j - 1)]) sub.emplace_back();
        sub.emplace_back(PlantId{plant_row_base + i + 1, j + 1});
      }
      prow.grid.push_back(std::move(sub));
    }
    for (int k = 0; k < world.n; ++k)
      for (int j = 0; j < rc.columns; ++j) {
        ModuleCell m;
        const int i = world.n - 1 - k;
        m.id = PlantId{plant_row_base + i + 1, j + 1};
        known.insert(*m.id);
        m.x0 = world.col_x[static_cast<std::size_t>(j)];
        m.x1 = m.x0 + w;
        m.y0 = k * (h + c.gap_y_m);
        m.y1 = m.y0 + h;
        m.base = c.module_celsius + std::clamp(base_noise(rng), -0.2, 0.2);
        const auto it = anomaly_of.find(*m.id);
        if (it != anomaly_of.end()) {
          m.cls = it->second->cls;
          m.delta = it->second->delta_t.value_or(class_default_delta(m.cls));
        }
        scene.truth.labels[*m.id] = m.cls;
        world.front.push_back(m);
      }
    if (c.background_row) {
      world.bg_y0 = stack_top + c.background_distance_m;
      for (double x = -30.0 + 0.37; x < world.length + 30.0; x += w + c.gap_x_m) world.bg_x.push_back(x);
      for (int k = 0; k < world.n; ++k)
        for (double x : world.bg_x) {
          ModuleCell m;
          m.x0 = x;
          m.x1 = x + w;
          m.y0 = world.bg_y0 + k * (h + c.gap_y_m);
          m.y1 = m.y0 + h;
          m.base = c.module_celsius + std::clamp(base_noise(rng), -0.2, 0.2);
          world.back.push_back(m);
        }
    }

    // Trajectory.
    const double cam_y = camera_y_for_row(c, v_bottom, c.altitude_m);
    const Homography h0 = ground_to_image(c, CameraPose{0.0, cam_y, 0.0, c.altitude_m});
    const Point2 a0 = h0.apply({0.0, 0.0}), a1 = h0.apply({1.0, 0.0});
    const double s0 = a1.x - a0.x;
    if (ri == 0) scene.truth.pixels_per_metre = s0;
    std::vector<CameraPose> poses = rc.poses;
    if (poses.empty()) {
      const double x_start = (a0.x - 0.3 * W) / s0;
      const double x_end = (h0.apply({world.length, 0.0}).x - 0.7 * W) / s0;
      const int count =
          std::max(c.min_frames, static_cast<int>(std::ceil(std::max(0.0, x_end - x_start) / c.speed_m)) + 1);
      std::normal_distribution<double> jit(0.0, c.jitter_m), yaw(0.0, c.yaw_jitter_deg);
      std::vector<double> xs;
      for (int t = 0; t < count; ++t) xs.push_back(x_start + t * c.speed_m);
      if (c.direction == ScanDirection::Leftward) std::reverse(xs.begin(), xs.end());
      for (int k = 1; k <= c.backtrack_frames && count - 1 - k >= 0; ++k)
        xs.push_back(xs[static_cast<std::size_t>(count - 1 - k)]);
      for (double x : xs)
        poses.push_back({x + jit(rng), cam_y + jit(rng), yaw(rng), c.altitude_m + jit(rng)});
    }

    RowSpec spec;
    spec.row_id = rc.row_id;
    spec.first_frame = frame_index;
    spec.last_frame = frame_index + static_cast<int>(poses.size()) - 1;
    spec.rows_per_stack = world.n;
    spec.seed_bottom_left = *prow.bottom_left();
    spec.top_right = *prow.top_right();
    scene.truth.row_specs.push_back(spec);
    scene.truth.layout.rows.push_back(std::move(prow));

    for (const auto& pose : poses) {
      const Homography g = ground_to_image(c, pose);
      const Homography ginv = g.inverse();
      Frame frame{frame_index, RasterU16(W, H)};
      Raster<int> label(W, H, -1);
      std::mt19937_64 frng(splitmix(c.rng_seed ^ splitmix(static_cast<std::uint64_t>(frame_index) + 0x51ed)));
      std::normal_distribution<double> noise(0.0, c.texture_noise);

      // Glints active in this frame.
      struct Glint {
        int cell;
        double a, b, delta;
      };
      std::vector<Glint> glints;
      for (const auto& rf : c.reflections) {
        if (frame_index < rf.first_frame || frame_index > rf.last_frame) continue;
        for (std::size_t k = 0; k < world.front.size(); ++k)
          if (world.front[k].id == rf.plant_id) {
            std::mt19937_64 grng(splitmix(c.rng_seed ^ static_cast<std::uint64_t>(frame_index) * 7919 ^
                                          static_cast<std::uint64_t>(rf.plant_id.row) << 20 ^
                                          static_cast<std::uint64_t>(rf.plant_id.column)));
            std::uniform_real_distribution<double> flicker(-rf.delta_t_jitter, rf.delta_t_jitter);
            const double off = rf.delta_pos_px / s0;
            glints.push_back({static_cast<int>(k), kBoxA * w + 0.8 * off, kBoxB * h + 0.6 * off,
                              rf.delta_t + (rf.delta_t_jitter > 0 ? flicker(grng) : 0.0)});
          }
      }

      const TemperatureLaw law;
      const std::uint64_t tex_seed = splitmix(c.rng_seed ^ (ri + 1) * 0x9e37ULL);
      for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
          const Point2 p = ginv.apply({x + 0.5, y + 0.5});
          const int hit = world.lookup(p.x, p.y);
          double t;
          if (hit == -1) {
            t = c.background_celsius + 2.5 * value_noise(tex_seed, p.x / 0.6, p.y / 0.6) +
                1.5 * value_noise(tex_seed + 1, p.x / 0.2, p.y / 0.2);
          } else {
            const ModuleCell& m = hit >= 0 ? world.front[static_cast<std::size_t>(hit)]
                                           : world.back[static_cast<std::size_t>(-2 - hit)];
            const double lu = p.x - m.x0, lv = m.y1 - p.y;  // metres from the far-left corner
            t = m.base;
            if (m.delta != 0.0) t += m.delta * pattern(m.cls, lu / w, lv / h, w, h);
            if (std::hypot(lu - kBoxA * w, lv - kBoxB * h) <= kBoxRadius) t += kBoxDelta;
            for (const auto& gl : glints)
              if (gl.cell == hit && std::hypot(lu - gl.a, lv - gl.b) <= kGlintRadius) t += gl.delta;
            label(x, y) = hit >= 0 ? hit : 1000000 + (-2 - hit);
          }
          t += noise(frng);
          frame.raster(x, y) = static_cast<std::uint16_t>(std::clamp(std::lround(law.to_raw(t)), 0L, 65535L));
        }

      TruthFrame tf;
      tf.index = frame_index;
      tf.row_id = rc.row_id;
      tf.pose = pose;
      tf.world_to_image = g;
      std::map<int, std::vector<PixelXY>> pixels;
      for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x)
          if (label(x, y) >= 0) pixels[label(x, y)].push_back({x, y});
      for (auto& [lab, px] : pixels) {
        const bool front = lab < 1000000;
        const ModuleCell& m = front ? world.front[static_cast<std::size_t>(lab)]
                                    : world.back[static_cast<std::size_t>(lab - 1000000)];
        TruthMask tm;
        tm.plant_id = m.id;
        tm.mask = ModuleMask::from_pixels(frame_index, W, H, px);
        tm.corners = {g.apply({m.x0, m.y1}), g.apply({m.x1, m.y1}), g.apply({m.x1, m.y0}), g.apply({m.x0, m.y0})};
        for (const auto& q : px)
          if (q.x == 0 || q.y == 0 || q.x == W - 1 || q.y == H - 1) {
            tm.touches_border = true;
            break;
          }
        if (front && !tm.touches_border)
          for (const auto& gl : glints)
            if (gl.cell == lab) scene.truth.reflections.push_back({*m.id, frame_index});
        tf.masks.push_back(std::move(tm));
      }
      scene.truth.frames.push_back(std::move(tf));

      const double lat = 48.0 + (static_cast<double>(ri) * 10.0 + pose.y) / 111320.0;
      const double lon = 11.0 + pose.x / (111320.0 * std::cos(48.0 * kDeg));
      scene.gps.push_back({frame_index, lat, lon, pose.altitude_m});
      scene.frames.push_back(std::move(frame));
      ++frame_index;
    }
    plant_row_base += world.n;
  }
  for (const auto& a : c.anomalies)
    if (!known.count(a.plant_id)) invalid("anomaly on unknown module " + a.plant_id.str());
  for (const auto& r : c.reflections) {
    if (!known.count(r.plant_id)) invalid("reflection on unknown module " + r.plant_id.str());
    if (r.first_frame > r.last_frame) invalid("reflection frame range is empty");
  }
  std::sort(scene.truth.reflections.begin(), scene.truth.reflections.end());
  return scene;
}

Homography truth_homography(const SceneTruth& truth, int t) {
  if (t < 1 || t >= static_cast<int>(truth.frames.size()))
    fail(ErrorCode::OutOfRange, "no inter-frame motion into frame " + std::to_string(t));
  const auto& a = truth.frames[static_cast<std::size_t>(t - 1)];
  const auto& b = truth.frames[static_cast<std::size_t>(t)];
  return (b.world_to_image * a.world_to_image.inverse()).normalized();
}

std::string SceneTruth::to_json() const {
  ojson j;
  j["pixels_per_metre"] = pixels_per_metre;
  j["plant"] = ojson::parse(plant_layout_to_json(layout));
  j["rows"] = ojson::parse(row_specs_to_json(row_specs));
  ojson lab = ojson::object();
  for (const auto& [id, cls] : labels) lab[id.str()] = std::string(to_string(cls));
  j["labels"] = lab;
  ojson refl = ojson::array();
  for (const auto& r : reflections) refl.push_back({{"plant_id", r.plant_id.str()}, {"frame", r.frame_index}});
  j["reflections"] = refl;
  ojson frames_j = ojson::array();
  for (const auto& f : frames) {
    ojson masks = ojson::array();
    for (const auto& m : f.masks) {
      const Box b = m.mask.bbox();
      ojson corners = ojson::array();
      for (const auto& p : m.corners) corners.push_back({p.x, p.y});
      masks.push_back({{"plant_id", m.plant_id ? ojson(m.plant_id->str()) : ojson(nullptr)},
                       {"bbox", {b.x_min, b.y_min, b.x_max, b.y_max}},
                       {"corners", corners},
                       {"touches_border", m.touches_border}});
    }
    frames_j.push_back({{"index", f.index},
                        {"row_id", f.row_id},
                        {"pose", pose_to_json(f.pose)},
                        {"world_to_image", homography_to_json(f.world_to_image)},
                        {"masks", masks}});
  }
  j["frames"] = frames_j;
  return j.dump(1) + "\n";
}

void write_scene(const Scene& scene, const SceneConfig& config, const fs::path& dir) {
  fs::create_directories(dir / "frames");
  fs::create_directories(dir / "masks");
  for (std::size_t k = 0; k < scene.frames.size(); ++k) {
    const Frame& f = scene.frames[k];
    write_pgm(dir / "frames" / frame_file_name(f.index), f.raster);
    std::vector<ModuleMask> masks;
    for (const auto& m : scene.truth.frames[k].masks)
      if (!m.touches_border) masks.push_back(m.mask);
    write_masks(dir / "masks" / mask_file_name(f.index), f.width(), f.height(), masks);
  }
  write_text_file(dir / "gps.csv", format_gps_csv(scene.gps));
  write_text_file(dir / "rows.json", row_specs_to_json(scene.truth.row_specs));
  write_text_file(dir / "plant.json", plant_layout_to_json(scene.truth.layout));
  write_text_file(dir / "truth.json", scene.truth.to_json());
  std::string labels = "plant_id,label\n";
  for (const auto& [id, cls] : scene.truth.labels) labels += id.str() + "," + std::string(to_string(cls)) + "\n";
  write_text_file(dir / "labels.csv", labels);
  write_text_file(dir / "scene.json", scene_config_to_json(config));
  ojson motion = ojson::array();
  for (int t = 1; t < static_cast<int>(scene.truth.frames.size()); ++t) {
    motion.push_back({{"from", scene.truth.frames[static_cast<std::size_t>(t - 1)].index},
                      {"to", scene.truth.frames[static_cast<std::size_t>(t)].index},
                      {"h", homography_to_json(truth_homography(scene.truth, t))}});
  }
  ojson mj;
  mj["homographies"] = motion;
  write_text_file(dir / "motion.json", mj.dump(1) + "\n");
}

}  // namespace pvx
