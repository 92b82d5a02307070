#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pvx/plant_id.hpp"
#include "pvx/raster.hpp"

namespace pvx {

struct Frame {
  int index = 0;
  RasterU16 raster;

  int width() const { return raster.width(); }
  int height() const { return raster.height(); }
};

struct GpsFix {
  int frame_index = 0;
  double latitude = 0.0;
  double longitude = 0.0;
  std::optional<double> altitude;

  friend bool operator==(const GpsFix&, const GpsFix&) = default;
};

enum class Orientation { Horizontal, Vertical };

struct RowSpec {
  std::string row_id;
  int first_frame = 0;
  int last_frame = 0;
  PlantId seed_bottom_left;
  PlantId top_right;
  int rows_per_stack = 1;
  Orientation orientation = Orientation::Horizontal;

  friend bool operator==(const RowSpec&, const RowSpec&) = default;
};

struct TemperatureFrame {
  int index = 0;
  RasterF celsius;
};

// Linear raw -> Celsius transfer. The default reads raw values as centi-Kelvin.
struct TemperatureLaw {
  double scale = 0.01;
  double offset = -273.15;

  double to_celsius(double raw) const { return raw * scale + offset; }
  double to_raw(double celsius) const { return (celsius - offset) / scale; }
};

struct NormalizedFrame {
  RasterU8 pixels;
  bool constant = false;  // max == min; pixels are all zero
};

// A row spec together with the frames it covers (a view into the sorted frame list).
struct RowWorkUnit {
  RowSpec spec;
  std::span<const Frame> frames;
};

// --- 16-bit / 8-bit binary PGM -------------------------------------------------

RasterU16 read_pgm(const std::filesystem::path& path);
void write_pgm(const std::filesystem::path& path, const RasterU16& raster);
void write_pgm(const std::filesystem::path& path, const RasterU8& raster);
std::string encode_pgm(const RasterU16& raster);

std::string frame_file_name(int index);

// Numbered frames found in a directory, sorted by index, gaps rejected.
struct FrameCatalog {
  std::vector<int> indices;
  std::vector<std::filesystem::path> paths;

  bool contains(int index) const;
  Frame load(int index) const;
};

FrameCatalog index_frame_sequence(const std::filesystem::path& dir);
std::vector<Frame> load_frame_sequence(const std::filesystem::path& dir);

TemperatureFrame raw_to_celsius(const Frame& frame, const TemperatureLaw& law = {});
NormalizedFrame normalize_to_u8(const TemperatureFrame& tf);

// Rotates vertical-row frames by 90 degrees (counter-clockwise unless told otherwise).
Frame normalize_orientation(const Frame& frame, const RowSpec& spec, bool counter_clockwise = true);
RasterU16 rotate90(const RasterU16& raster, bool counter_clockwise);

std::vector<GpsFix> parse_gps_csv(const std::filesystem::path& path);
std::vector<GpsFix> parse_gps_csv_text(std::string_view text);
std::string format_gps_csv(std::span<const GpsFix> fixes);

// `frames` must be sorted ascending with contiguous indices.
std::vector<RowWorkUnit> resolve_row_groups(std::span<const RowSpec> specs, std::span<const Frame> frames);

std::vector<RowSpec> parse_row_specs(std::string_view json_text);
RowSpec parse_row_spec(std::string_view json_text);
std::string row_specs_to_json(std::span<const RowSpec> specs);
std::vector<RowSpec> load_row_specs(const std::filesystem::path& path);
// Writes a sibling temp file and renames it over `path`.
void save_row_specs_atomic(const std::filesystem::path& path, std::span<const RowSpec> specs);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);

}  // namespace pvx
