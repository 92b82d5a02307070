#pragma once

#include <filesystem>
#include <memory>
#include <string>

#include "pvx/ingest.hpp"
#include "pvx/raster.hpp"

namespace pvx {

struct ServerOptions {
  std::filesystem::path frames_dir;
  std::filesystem::path gps_file;        // optional
  std::filesystem::path row_specs_file;  // created on the first POST
  std::filesystem::path plant_file;      // optional
  std::filesystem::path static_dir;      // optional UI assets served at /
  TemperatureLaw law;
};

// 8-bit grayscale PNG.
std::string encode_png(const RasterU8& raster);

// Row-grouping API:
//   GET /api/gps, GET /api/frames/{i}/preview, GET /api/rows, POST /api/rows,
//   DELETE /api/rows/{row_id}, GET /api/plantfile.
// Reads run concurrently; row-spec writes are serialized and atomic.
class ApiServer {
 public:
  explicit ApiServer(ServerOptions options);
  ~ApiServer();
  ApiServer(const ApiServer&) = delete;
  ApiServer& operator=(const ApiServer&) = delete;

  // Binds and starts serving on a background thread. Port 0 picks a free
  // port. Throws PortInUse when binding fails.
  void start(const std::string& host, int port);
  int port() const;
  // Blocks until stop() is called.
  void wait();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace pvx
