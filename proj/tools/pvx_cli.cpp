// pvx command line. Talks to the library only through the C interface.
#include <csignal>
#include <cstdio>
#include <string>

#include <CLI11.hpp>

#include "pvx/pvx.h"

namespace {

constexpr int kExitRowsFailed = 3;
constexpr int kExitError = 2;

pvx_server* active_server = nullptr;

void on_signal(int) {
  if (active_server) pvx_server_stop(active_server);
}

int report_error(pvx_status st) {
  std::fprintf(stderr, "pvx: %s: %s\n", pvx_status_name(st), pvx_last_error());
  return kExitError;
}

int load_config(const std::string& path, pvx_config** cfg) {
  const pvx_status st = pvx_config_load(path.c_str(), cfg);
  return st == PVX_OK ? 0 : report_error(st);
}

int cmd_extract(const std::string& config_path, int parallelism, const std::string& output, bool quiet) {
  pvx_config* cfg = nullptr;
  if (int rc = load_config(config_path, &cfg)) return rc;
  pvx_status st = PVX_OK;
  if (parallelism > 0) st = pvx_config_set_parallelism(cfg, parallelism);
  if (st == PVX_OK && !output.empty()) st = pvx_config_set_output(cfg, output.c_str());
  pvx_report* summary = nullptr;
  int failed = 0;
  if (st == PVX_OK) st = pvx_run_plant(cfg, &summary, &failed);
  pvx_config_free(cfg);
  if (st != PVX_OK) return report_error(st);
  if (!quiet) std::printf("%s\n", pvx_report_json(summary));
  pvx_report_free(summary);
  return failed > 0 ? kExitRowsFailed : 0;
}

int cmd_simulate(const std::string& scene, const std::string& out) {
  const pvx_status st = pvx_simulate(scene.c_str(), out.c_str());
  if (st != PVX_OK) return report_error(st);
  std::printf("scene written to %s\n", out.c_str());
  return 0;
}

int cmd_evaluate(const std::string& pred, const std::string& truth) {
  pvx_report* report = nullptr;
  const pvx_status st = pvx_evaluate(pred.c_str(), truth.c_str(), &report);
  if (st != PVX_OK) return report_error(st);
  std::printf("%s\n", pvx_report_json(report));
  pvx_report_free(report);
  return 0;
}

int cmd_serve(const std::string& config_path, const std::string& host, int port) {
  pvx_config* cfg = nullptr;
  if (int rc = load_config(config_path, &cfg)) return rc;
  pvx_server* server = nullptr;
  const pvx_status st = pvx_server_start(cfg, host.c_str(), port, &server);
  pvx_config_free(cfg);
  if (st != PVX_OK) return report_error(st);
  active_server = server;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  std::printf("listening on http://%s:%d\n", host.c_str(), pvx_server_port(server));
  std::fflush(stdout);
  pvx_server_wait(server);
  active_server = nullptr;
  pvx_server_free(server);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Thermal PV module dataset extraction"};
  app.set_version_flag("--version", std::string(pvx_version()));
  app.require_subcommand(1);

  std::string config_path, output, scene, out_dir, pred, truth, host = "127.0.0.1";
  int parallelism = 0;
  int port = 8080;
  bool quiet = false;

  auto* extract = app.add_subcommand("extract", "Run the pipeline on every row of a plant");
  extract->add_option("--config", config_path, "Run configuration JSON")->required()->check(CLI::ExistingFile);
  extract->add_option("--parallelism", parallelism, "Rows processed concurrently")->check(CLI::PositiveNumber);
  extract->add_option("--output", output, "Output directory (overrides the config)");
  extract->add_flag("--quiet", quiet, "Do not print the summary");

  auto* simulate = app.add_subcommand("simulate", "Render a synthetic plant scene");
  simulate->add_option("--scene", scene, "Scene JSON")->required()->check(CLI::ExistingFile);
  simulate->add_option("--out", out_dir, "Output directory")->required();

  auto* evaluate = app.add_subcommand("evaluate", "Score patch predictions against module labels");
  evaluate->add_option("--pred", pred, "Predictions CSV")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--truth", truth, "Truth CSV")->required()->check(CLI::ExistingFile);

  auto* serve = app.add_subcommand("serve", "Serve the row grouping API");
  serve->add_option("--config", config_path, "Run configuration JSON")->required()->check(CLI::ExistingFile);
  serve->add_option("--host", host, "Bind address");
  serve->add_option("--port", port, "Port, 0 picks a free one")->check(CLI::Range(0, 65535));

  CLI11_PARSE(app, argc, argv);

  if (*extract) return cmd_extract(config_path, parallelism, output, quiet);
  if (*simulate) return cmd_simulate(scene, out_dir);
  if (*evaluate) return cmd_evaluate(pred, truth);
  if (*serve) return cmd_serve(config_path, host, port);
  return kExitError;
}
