#include "pvx/pvx.h"

#include <exception>
#include <filesystem>
#include <memory>
#include <new>
#include <string>

#include <json.hpp>

#include "pvx/error.hpp"
#include "pvx/eval_vote.hpp"
#include "pvx/pipeline.hpp"
#include "pvx/rectify.hpp"
#include "pvx/scene_sim.hpp"
#include "pvx/server.hpp"

struct pvx_config {
  pvx::RunConfig config;
};

struct pvx_report {
  std::string json;
};

struct pvx_server {
  std::unique_ptr<pvx::ApiServer> server;
};

namespace {

thread_local std::string last_error;

pvx_status status_of(pvx::ErrorCode code) {
  using pvx::ErrorCode;
  switch (code) {
    case ErrorCode::InvalidArgument: return PVX_ERR_INVALID_ARGUMENT;
    case ErrorCode::Io: return PVX_ERR_IO;
    case ErrorCode::Parse:
    case ErrorCode::MalformedRow:
    case ErrorCode::MalformedBox:
      return PVX_ERR_PARSE;
    case ErrorCode::InvalidConfig: return PVX_ERR_CONFIG;
    case ErrorCode::RangeViolation:
    case ErrorCode::OutOfRange:
    case ErrorCode::UnknownFrame:
      return PVX_ERR_RANGE;
    case ErrorCode::MissingFrame: return PVX_ERR_MISSING_FRAME;
    case ErrorCode::CorruptImage: return PVX_ERR_CORRUPT_IMAGE;
    case ErrorCode::DegenerateConfiguration:
    case ErrorCode::DegenerateMask:
      return PVX_ERR_DEGENERATE;
    case ErrorCode::KeyMismatch: return PVX_ERR_KEY_MISMATCH;
    case ErrorCode::PortInUse: return PVX_ERR_PORT_IN_USE;
    case ErrorCode::ShapeMismatch:
    case ErrorCode::EmptyMask:
    case ErrorCode::MotionEstimationFailed:
    case ErrorCode::AmbiguousDirection:
    case ErrorCode::NoLinesFound:
    case ErrorCode::TooFewLines:
    case ErrorCode::EmptyGraph:
    case ErrorCode::UnknownRow:
    case ErrorCode::SeedNotFound:
    case ErrorCode::RowUnmatchable:
    case ErrorCode::IrregularLayout:
    case ErrorCode::NoMasks:
    case ErrorCode::TrajectoryViolation:
      return PVX_ERR_PIPELINE;
  }
  return PVX_ERR_INTERNAL;
}

template <typename F>
pvx_status guarded(F&& body) {
  try {
    body();
    last_error.clear();
    return PVX_OK;
  } catch (const pvx::Error& e) {
    last_error = e.what();
    return status_of(e.code());
  } catch (const std::bad_alloc&) {
    last_error = "out of memory";
    return PVX_ERR_INTERNAL;
  } catch (const std::filesystem::filesystem_error& e) {
    last_error = e.what();
    return PVX_ERR_IO;
  } catch (const std::exception& e) {
    last_error = e.what();
    return PVX_ERR_INTERNAL;
  }
}

pvx_status invalid(const char* what) {
  last_error = what;
  return PVX_ERR_INVALID_ARGUMENT;
}

}  // namespace

extern "C" {

const char* pvx_version(void) { return "0.1.0"; }

const char* pvx_status_name(pvx_status status) {
  switch (status) {
    case PVX_OK: return "ok";
    case PVX_ERR_INVALID_ARGUMENT: return "invalid argument";
    case PVX_ERR_IO: return "i/o error";
    case PVX_ERR_PARSE: return "parse error";
    case PVX_ERR_CONFIG: return "configuration error";
    case PVX_ERR_RANGE: return "value out of range";
    case PVX_ERR_MISSING_FRAME: return "missing frame";
    case PVX_ERR_CORRUPT_IMAGE: return "corrupt image";
    case PVX_ERR_DEGENERATE: return "degenerate geometry";
    case PVX_ERR_KEY_MISMATCH: return "key mismatch";
    case PVX_ERR_PORT_IN_USE: return "port in use";
    case PVX_ERR_PIPELINE: return "pipeline error";
    case PVX_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

const char* pvx_last_error(void) { return last_error.c_str(); }

pvx_status pvx_config_load(const char* path, pvx_config** out) {
  if (!path || !out) return invalid("path and out must not be null");
  *out = nullptr;
  return guarded([&] { *out = new pvx_config{pvx::load_run_config(path)}; });
}

pvx_status pvx_config_parse(const char* json_text, const char* base_dir, pvx_config** out) {
  if (!json_text || !out) return invalid("json_text and out must not be null");
  *out = nullptr;
  return guarded([&] { *out = new pvx_config{pvx::parse_run_config(json_text, base_dir ? base_dir : "")}; });
}

pvx_status pvx_config_set_parallelism(pvx_config* config, int workers) {
  if (!config) return invalid("config must not be null");
  if (workers < 1) return invalid("parallelism must be at least 1");
  config->config.parallelism = workers;
  return PVX_OK;
}

pvx_status pvx_config_set_output(pvx_config* config, const char* output_dir) {
  if (!config || !output_dir || !*output_dir) return invalid("config and output_dir must be set");
  config->config.output_dir = output_dir;
  return PVX_OK;
}

void pvx_config_free(pvx_config* config) { delete config; }

const char* pvx_report_json(const pvx_report* report) { return report ? report->json.c_str() : ""; }

void pvx_report_free(pvx_report* report) { delete report; }

pvx_status pvx_run_plant(const pvx_config* config, pvx_report** summary, int* failed_rows) {
  if (!config) return invalid("config must not be null");
  if (summary) *summary = nullptr;
  return guarded([&] {
    const pvx::PlantSummary s = pvx::run_plant(config->config);
    if (failed_rows) *failed_rows = static_cast<int>(s.rows.size()) - s.rows_ok();
    if (summary) *summary = new pvx_report{s.to_json()};
  });
}

pvx_status pvx_simulate(const char* scene_path, const char* out_dir) {
  if (!scene_path || !out_dir) return invalid("scene_path and out_dir must not be null");
  return guarded([&] {
    const pvx::SceneConfig cfg = pvx::parse_scene_config(pvx::read_text_file(scene_path));
    const pvx::Scene scene = pvx::generate_scene(cfg);
    const std::filesystem::path dir(out_dir);
    pvx::write_scene(scene, cfg, dir);
    nlohmann::ordered_json run;
    run["frames"] = "frames";
    run["gps"] = "gps.csv";
    run["plant_file"] = "plant.json";
    run["row_specs"] = "rows.json";
    run["masks"] = "masks";
    run["labels"] = "labels.csv";
    run["output"] = "out";
    run["plant_name"] = "sim";
    run["rng_seed"] = cfg.rng_seed;
    pvx::write_text_file(dir / "run.json", run.dump(2) + "\n");
  });
}

pvx_status pvx_evaluate(const char* predictions_csv, const char* truth_csv, pvx_report** report) {
  if (!predictions_csv || !truth_csv || !report) return invalid("arguments must not be null");
  *report = nullptr;
  return guarded([&] {
    const auto preds = pvx::parse_predictions_csv(pvx::read_text_file(predictions_csv));
    const auto truth = pvx::parse_truth_csv(pvx::read_text_file(truth_csv));
    *report = new pvx_report{pvx::evaluate_predictions(preds, truth).to_json()};
  });
}

pvx_status pvx_server_start(const pvx_config* config, const char* host, int port, pvx_server** out) {
  if (!config || !out) return invalid("config and out must not be null");
  if (port < 0 || port > 65535) return invalid("port out of range");
  *out = nullptr;
  return guarded([&] {
    pvx::ServerOptions opts;
    opts.frames_dir = config->config.frames_dir;
    opts.gps_file = config->config.gps_file;
    opts.row_specs_file = config->config.row_specs_file;
    opts.plant_file = config->config.plant_file;
    opts.law = config->config.law;
    auto s = std::make_unique<pvx_server>();
    s->server = std::make_unique<pvx::ApiServer>(opts);
    s->server->start(host ? host : "127.0.0.1", port);
    *out = s.release();
  });
}

int pvx_server_port(const pvx_server* server) { return server ? server->server->port() : 0; }

void pvx_server_wait(pvx_server* server) {
  if (server) server->server->wait();
}

void pvx_server_stop(pvx_server* server) {
  if (server) server->server->stop();
}

void pvx_server_free(pvx_server* server) { delete server; }

pvx_status pvx_homography_dlt(const double src[8], const double dst[8], double h[9]) {
  if (!src || !dst || !h) return invalid("arguments must not be null");
  return guarded([&] {
    std::array<pvx::Point2, 4> s, d;
    for (int i = 0; i < 4; ++i) {
      s[static_cast<std::size_t>(i)] = {src[2 * i], src[2 * i + 1]};
      d[static_cast<std::size_t>(i)] = {dst[2 * i], dst[2 * i + 1]};
    }
    const pvx::Homography m = pvx::dlt_homography(s, d);
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) h[3 * r + c] = m(r, c);
  });
}

pvx_status pvx_vote_experiment(int modules, int patches_per_module, double flip_prob, uint64_t seed,
                               double* patch_accuracy, double* module_accuracy) {
  if (!patch_accuracy || !module_accuracy) return invalid("output pointers must not be null");
  return guarded([&] {
    const auto r = pvx::vote_improvement_experiment(modules, patches_per_module, flip_prob, seed);
    *patch_accuracy = r.patch_accuracy;
    *module_accuracy = r.module_accuracy;
  });
}

}  // extern "C"
