#pragma once

#include <span>
#include <string>
#include <vector>

#include "pvx/ingest.hpp"
#include "pvx/raster.hpp"

namespace pvx {

// Maximum temperature of one patch and where it sits.
struct PatchThermalStats {
  int ordinal = 0;
  double t_max = 0.0;  // deg C
  int x = 0;
  int y = 0;
  double p = 0.0;  // |(x, y)|
};

// Plateaus resolve to the smallest (y, x). The patch must be non-empty.
PatchThermalStats thermal_stats(const RasterU16& patch, int ordinal, const TemperatureLaw& law = {});
PatchThermalStats make_stats(int ordinal, double t_max, int x, int y);

struct SunFilterParams {
  double position_step_px = 10.0;  // binarization threshold on |p_{i+1} - p_i|
  double run_fraction = 0.3;
  double delta_t = 5.0;
  double delta_pos_px = 10.0;
};

struct ReflectionReference {
  double t_ref = 0.0;
  double x_ref = 0.0;
  double y_ref = 0.0;
  int first = 0;  // inclusive index range into the stats list
  int last = 0;
};

// Throws InvalidArgument for an empty list.
ReflectionReference select_reference(std::span<const PatchThermalStats> stats, const SunFilterParams& params = {});

struct SunDecision {
  bool keep = true;
  std::string reason;  // empty when kept
};

std::vector<SunDecision> filter_reflections(std::span<const PatchThermalStats> stats, const ReflectionReference& ref,
                                            const SunFilterParams& params = {});

}  // namespace pvx
