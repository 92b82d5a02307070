#include "pvx/ingest.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <regex>
#include <sstream>

#include <json.hpp>

#include "pvx/error.hpp"

namespace pvx {

namespace fs = std::filesystem;
using nlohmann::json;

// --- files -----------------------------------------------------------------------

std::string read_text_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const fs::path& path, std::string_view text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::Io, "cannot write " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) fail(ErrorCode::Io, "short write to " + path.string());
}

// --- PGM -------------------------------------------------------------------------

namespace {

// Reads the next whitespace-delimited header token, skipping '#' comments.
bool next_token(std::string_view data, std::size_t& pos, std::string& token) {
  token.clear();
  while (pos < data.size()) {
    const char c = data[pos];
    if (c == '#') {
      while (pos < data.size() && data[pos] != '\n') ++pos;
    } else if (std::isspace(static_cast<unsigned char>(c))) {
      ++pos;
    } else {
      break;
    }
  }
  while (pos < data.size() && !std::isspace(static_cast<unsigned char>(data[pos]))) token += data[pos++];
  return !token.empty();
}

int header_int(std::string_view data, std::size_t& pos, const fs::path& path) {
  std::string tok;
  int value = 0;
  if (!next_token(data, pos, tok)) fail(ErrorCode::CorruptImage, "truncated PGM header: " + path.string());
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), value);
  if (ec != std::errc{} || ptr != tok.data() + tok.size() || value <= 0)
    fail(ErrorCode::CorruptImage, "bad PGM header field in " + path.string());
  return value;
}

std::string pgm_header(int width, int height, int maxval) {
  return "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n" + std::to_string(maxval) + "\n";
}

}  // namespace

RasterU16 read_pgm(const fs::path& path) {
  std::string bytes;
  try {
    bytes = read_text_file(path);
  } catch (const Error&) {
    fail(ErrorCode::CorruptImage, "cannot read " + path.string());
  }
  std::size_t pos = 0;
  std::string magic;
  if (!next_token(bytes, pos, magic) || magic != "P5") fail(ErrorCode::CorruptImage, "not a binary PGM: " + path.string());
  const int width = header_int(bytes, pos, path);
  const int height = header_int(bytes, pos, path);
  const int maxval = header_int(bytes, pos, path);
  if (maxval > 65535) fail(ErrorCode::CorruptImage, "PGM maxval out of range: " + path.string());
  ++pos;  // single whitespace after maxval
  const std::size_t bpp = maxval > 255 ? 2 : 1;
  const std::size_t count = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  if (pos > bytes.size() || bytes.size() - pos < count * bpp)
    fail(ErrorCode::CorruptImage, "truncated PGM payload: " + path.string());
  RasterU16 raster(width, height);
  auto& px = raster.data();
  const auto* src = reinterpret_cast<const unsigned char*>(bytes.data() + pos);
  for (std::size_t i = 0; i < count; ++i) {
    px[i] = bpp == 2 ? static_cast<std::uint16_t>((src[2 * i] << 8) | src[2 * i + 1]) : src[i];
  }
  return raster;
}

std::string encode_pgm(const RasterU16& raster) {
  std::string out = pgm_header(raster.width(), raster.height(), 65535);
  out.reserve(out.size() + raster.size() * 2);
  for (std::uint16_t v : raster.data()) {
    out.push_back(static_cast<char>(v >> 8));
    out.push_back(static_cast<char>(v & 0xff));
  }
  return out;
}

void write_pgm(const fs::path& path, const RasterU16& raster) { write_text_file(path, encode_pgm(raster)); }

void write_pgm(const fs::path& path, const RasterU8& raster) {
  std::string out = pgm_header(raster.width(), raster.height(), 255);
  out.append(reinterpret_cast<const char*>(raster.data().data()), raster.size());
  write_text_file(path, out);
}

std::string frame_file_name(int index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "frame_%06d.pgm", index);
  return buf;
}

// --- frame sequences ---------------------------------------------------------------

bool FrameCatalog::contains(int index) const {
  return std::binary_search(indices.begin(), indices.end(), index);
}

Frame FrameCatalog::load(int index) const {
  auto it = std::lower_bound(indices.begin(), indices.end(), index);
  if (it == indices.end() || *it != index) fail(ErrorCode::UnknownFrame, "unknown frame " + std::to_string(index));
  return Frame{index, read_pgm(paths[static_cast<std::size_t>(it - indices.begin())])};
}

FrameCatalog index_frame_sequence(const fs::path& dir) {
  if (!fs::is_directory(dir)) fail(ErrorCode::Io, "not a directory: " + dir.string());
  static const std::regex pattern(R"(frame_(\d+)\.pgm)");
  std::map<int, fs::path> found;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    std::smatch m;
    const std::string name = entry.path().filename().string();
    if (!std::regex_match(name, m, pattern)) continue;
    found.emplace(std::stoi(m[1].str()), entry.path());
  }
  FrameCatalog catalog;
  for (const auto& [index, path] : found) {
    if (!catalog.indices.empty() && index != catalog.indices.back() + 1)
      fail(ErrorCode::MissingFrame, "missing frame " + std::to_string(catalog.indices.back() + 1));
    catalog.indices.push_back(index);
    catalog.paths.push_back(path);
  }
  return catalog;
}

std::vector<Frame> load_frame_sequence(const fs::path& dir) {
  const FrameCatalog catalog = index_frame_sequence(dir);
  std::vector<Frame> frames;
  frames.reserve(catalog.indices.size());
  for (std::size_t i = 0; i < catalog.indices.size(); ++i)
    frames.push_back(Frame{catalog.indices[i], read_pgm(catalog.paths[i])});
  return frames;
}

// --- temperature ---------------------------------------------------------------------

TemperatureFrame raw_to_celsius(const Frame& frame, const TemperatureLaw& law) {
  TemperatureFrame tf{frame.index, RasterF(frame.width(), frame.height())};
  const auto& src = frame.raster.data();
  auto& dst = tf.celsius.data();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = static_cast<float>(law.to_celsius(src[i]));
  return tf;
}

NormalizedFrame normalize_to_u8(const TemperatureFrame& tf) {
  NormalizedFrame out{RasterU8(tf.celsius.width(), tf.celsius.height()), false};
  const auto& src = tf.celsius.data();
  if (src.empty()) return out;
  const auto [lo_it, hi_it] = std::minmax_element(src.begin(), src.end());
  const double lo = *lo_it;
  const double hi = *hi_it;
  if (!(hi > lo)) {
    out.constant = true;
    return out;
  }
  auto& dst = out.pixels.data();
  const double scale = 255.0 / (hi - lo);
  for (std::size_t i = 0; i < src.size(); ++i) {
    const double v = std::floor((static_cast<double>(src[i]) - lo) * scale);
    dst[i] = static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
  }
  return out;
}

// --- orientation -----------------------------------------------------------------------

RasterU16 rotate90(const RasterU16& raster, bool counter_clockwise) {
  const int w = raster.width();
  const int h = raster.height();
  RasterU16 out(h, w);
  for (int y = 0; y < w; ++y)
    for (int x = 0; x < h; ++x)
      out(x, y) = counter_clockwise ? raster(w - 1 - y, x) : raster(y, h - 1 - x);
  return out;
}

Frame normalize_orientation(const Frame& frame, const RowSpec& spec, bool counter_clockwise) {
  if (spec.orientation == Orientation::Horizontal) return frame;
  return Frame{frame.index, rotate90(frame.raster, counter_clockwise)};
}

// --- GPS CSV -----------------------------------------------------------------------------

namespace {

std::vector<std::string_view> split_csv_line(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    fields.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return fields;
}

template <typename T>
bool parse_number(std::string_view text, T& value) {
  while (!text.empty() && text.front() == ' ') text.remove_prefix(1);
  while (!text.empty() && text.back() == ' ') text.remove_suffix(1);
  if (text.empty()) return false;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  return ec == std::errc{} && ptr == text.data() + text.size();
}

}  // namespace

std::vector<GpsFix> parse_gps_csv_text(std::string_view text) {
  std::vector<GpsFix> fixes;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  bool header_seen = false;
  while (pos <= text.size()) {
    auto nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    if (!header_seen) {
      if (line != "frame_index,latitude,longitude,altitude")
        fail(ErrorCode::MalformedRow, "line 1: unexpected GPS header");
      header_seen = true;
      continue;
    }
    const auto fields = split_csv_line(line);
    GpsFix fix;
    if (fields.size() != 4 || !parse_number(fields[0], fix.frame_index) || !parse_number(fields[1], fix.latitude) ||
        !parse_number(fields[2], fix.longitude))
      fail(ErrorCode::MalformedRow, "line " + std::to_string(line_no) + ": malformed GPS row");
    if (!fields[3].empty()) {
      double alt = 0.0;
      if (!parse_number(fields[3], alt)) fail(ErrorCode::MalformedRow, "line " + std::to_string(line_no) + ": bad altitude");
      fix.altitude = alt;
    }
    if (!(std::abs(fix.latitude) <= 90.0)) fail(ErrorCode::RangeViolation, "latitude out of range on line " + std::to_string(line_no));
    if (!(std::abs(fix.longitude) <= 180.0)) fail(ErrorCode::RangeViolation, "longitude out of range on line " + std::to_string(line_no));
    fixes.push_back(fix);
  }
  if (!header_seen) fail(ErrorCode::MalformedRow, "line 1: missing GPS header");
  return fixes;
}

std::vector<GpsFix> parse_gps_csv(const fs::path& path) { return parse_gps_csv_text(read_text_file(path)); }

std::string format_gps_csv(std::span<const GpsFix> fixes) {
  std::string out = "frame_index,latitude,longitude,altitude\n";
  char buf[128];
  for (const auto& f : fixes) {
    std::snprintf(buf, sizeof buf, "%d,%.8f,%.8f,", f.frame_index, f.latitude, f.longitude);
    out += buf;
    if (f.altitude) {
      std::snprintf(buf, sizeof buf, "%.3f", *f.altitude);
      out += buf;
    }
    out += '\n';
  }
  return out;
}

// --- row groups ----------------------------------------------------------------------------

std::vector<RowWorkUnit> resolve_row_groups(std::span<const RowSpec> specs, std::span<const Frame> frames) {
  std::vector<RowWorkUnit> units;
  for (const auto& spec : specs) {
    if (spec.first_frame > spec.last_frame)
      fail(ErrorCode::InvalidArgument, "row " + spec.row_id + ": first_frame > last_frame");
    if (frames.empty()) fail(ErrorCode::UnknownFrame, "unknown frame " + std::to_string(spec.first_frame));
    const int base = frames.front().index;
    for (int idx : {spec.first_frame, spec.last_frame}) {
      if (idx < base || idx - base >= static_cast<int>(frames.size()))
        fail(ErrorCode::UnknownFrame, "unknown frame " + std::to_string(idx));
    }
    const auto offset = static_cast<std::size_t>(spec.first_frame - base);
    const auto count = static_cast<std::size_t>(spec.last_frame - spec.first_frame + 1);
    units.push_back(RowWorkUnit{spec, frames.subspan(offset, count)});
  }
  return units;
}

// --- row spec JSON ----------------------------------------------------------------------------

namespace {

RowSpec row_spec_from_json(const json& j) {
  RowSpec s;
  try {
    s.row_id = j.at("row_id").get<std::string>();
    s.first_frame = j.at("first_frame").get<int>();
    s.last_frame = j.at("last_frame").get<int>();
    s.seed_bottom_left = PlantId::parse(j.at("seed_plant_id_bottom_left").get<std::string>());
    s.top_right = PlantId::parse(j.at("plant_id_top_right").get<std::string>());
    s.rows_per_stack = j.value("rows_per_stack", 1);
    const std::string orient = j.value("orientation", std::string("horizontal"));
    if (orient == "horizontal") {
      s.orientation = Orientation::Horizontal;
    } else if (orient == "vertical") {
      s.orientation = Orientation::Vertical;
    } else {
      fail(ErrorCode::Parse, "orientation must be horizontal or vertical");
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::Parse, std::string("row spec: ") + e.what());
  }
  if (s.row_id.empty()) fail(ErrorCode::InvalidArgument, "row spec: empty row_id");
  if (s.first_frame < 0 || s.first_frame > s.last_frame)
    fail(ErrorCode::InvalidArgument, "row " + s.row_id + ": first_frame must not exceed last_frame");
  if (s.rows_per_stack < 1) fail(ErrorCode::InvalidArgument, "row " + s.row_id + ": rows_per_stack must be >= 1");
  return s;
}

json row_spec_to_json(const RowSpec& s) {
  return json{{"row_id", s.row_id},
              {"first_frame", s.first_frame},
              {"last_frame", s.last_frame},
              {"seed_plant_id_bottom_left", s.seed_bottom_left.str()},
              {"plant_id_top_right", s.top_right.str()},
              {"rows_per_stack", s.rows_per_stack},
              {"orientation", s.orientation == Orientation::Vertical ? "vertical" : "horizontal"}};
}

json parse_json_or_fail(std::string_view text) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorCode::Parse, e.what());
  }
}

}  // namespace

RowSpec parse_row_spec(std::string_view json_text) { return row_spec_from_json(parse_json_or_fail(json_text)); }

std::vector<RowSpec> parse_row_specs(std::string_view json_text) {
  const json j = parse_json_or_fail(json_text);
  if (!j.is_array()) fail(ErrorCode::Parse, "row specs must be a JSON array");
  std::vector<RowSpec> specs;
  for (const auto& item : j) specs.push_back(row_spec_from_json(item));
  return specs;
}

std::string row_specs_to_json(std::span<const RowSpec> specs) {
  json arr = json::array();
  for (const auto& s : specs) arr.push_back(row_spec_to_json(s));
  return arr.dump(2) + "\n";
}

std::vector<RowSpec> load_row_specs(const fs::path& path) {
  if (!fs::exists(path)) return {};
  return parse_row_specs(read_text_file(path));
}

void save_row_specs_atomic(const fs::path& path, std::span<const RowSpec> specs) {
  fs::path tmp = path;
  tmp += ".tmp";
  write_text_file(tmp, row_specs_to_json(specs));
  fs::rename(tmp, path);
}

}  // namespace pvx
