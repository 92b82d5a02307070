/* C interface of the pvx library. Every call returns a pvx_status; on failure
 * pvx_last_error() describes the cause for the calling thread. Objects handed
 * out through pointer arguments are owned by the caller and released with the
 * matching *_free function. */
#ifndef PVX_PVX_H
#define PVX_PVX_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(__GNUC__)
#define PVX_API __attribute__((visibility("default")))
#else
#define PVX_API
#endif

typedef enum pvx_status {
  PVX_OK = 0,
  PVX_ERR_INVALID_ARGUMENT = 1,
  PVX_ERR_IO = 2,
  PVX_ERR_PARSE = 3,
  PVX_ERR_CONFIG = 4,
  PVX_ERR_RANGE = 5,
  PVX_ERR_MISSING_FRAME = 6,
  PVX_ERR_CORRUPT_IMAGE = 7,
  PVX_ERR_DEGENERATE = 8,
  PVX_ERR_KEY_MISMATCH = 9,
  PVX_ERR_PORT_IN_USE = 10,
  PVX_ERR_PIPELINE = 11,
  PVX_ERR_INTERNAL = 12
} pvx_status;

typedef struct pvx_config pvx_config;
typedef struct pvx_report pvx_report;
typedef struct pvx_server pvx_server;

PVX_API const char* pvx_version(void);
PVX_API const char* pvx_status_name(pvx_status status);
/* Message of the last failed call on this thread ("" if none). */
PVX_API const char* pvx_last_error(void);

/* Run configuration (JSON). Relative paths resolve against the file's directory. */
PVX_API pvx_status pvx_config_load(const char* path, pvx_config** out);
PVX_API pvx_status pvx_config_parse(const char* json_text, const char* base_dir, pvx_config** out);
PVX_API pvx_status pvx_config_set_parallelism(pvx_config* config, int workers);
PVX_API pvx_status pvx_config_set_output(pvx_config* config, const char* output_dir);
PVX_API void pvx_config_free(pvx_config* config);

/* Reports carry a JSON document; the string stays valid until pvx_report_free. */
PVX_API const char* pvx_report_json(const pvx_report* report);
PVX_API void pvx_report_free(pvx_report* report);

/* Processes every row and writes the dataset and summary.json to the output
 * directory. Row failures are reported in the summary, not as a status;
 * failed_rows (optional) receives their count. */
PVX_API pvx_status pvx_run_plant(const pvx_config* config, pvx_report** summary, int* failed_rows);

/* Renders a synthetic scene described by a scene JSON file into out_dir and
 * writes a matching run.json next to it. */
PVX_API pvx_status pvx_simulate(const char* scene_path, const char* out_dir);

/* Patch-level and module-level classification report from two CSV files. */
PVX_API pvx_status pvx_evaluate(const char* predictions_csv, const char* truth_csv, pvx_report** report);

/* HTTP API for row grouping. port 0 picks a free port; see pvx_server_port. */
PVX_API pvx_status pvx_server_start(const pvx_config* config, const char* host, int port, pvx_server** out);
PVX_API int pvx_server_port(const pvx_server* server);
/* Blocks until pvx_server_stop is called from another thread. */
PVX_API void pvx_server_wait(pvx_server* server);
PVX_API void pvx_server_stop(pvx_server* server);
PVX_API void pvx_server_free(pvx_server* server);

/* Exact 4-point homography; points are x0,y0,...,x3,y3, h is row-major 3x3. */
PVX_API pvx_status pvx_homography_dlt(const double src[8], const double dst[8], double h[9]);

PVX_API pvx_status pvx_vote_experiment(int modules, int patches_per_module, double flip_prob, uint64_t seed,
                                       double* patch_accuracy, double* module_accuracy);

#ifdef __cplusplus
}
#endif

#endif
