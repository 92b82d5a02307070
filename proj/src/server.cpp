#include "pvx/server.hpp"

#include <mutex>
#include <thread>

#include <httplib.h>
#include <json.hpp>
#include <png.h>

#include "pvx/error.hpp"
#include "pvx/plant_graph.hpp"

namespace pvx {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

void append_png(png_structp png, png_bytep data, png_size_t length) {
  auto* out = static_cast<std::string*>(png_get_io_ptr(png));
  out->append(reinterpret_cast<const char*>(data), length);
}

void send_error(httplib::Response& res, int status, const std::string& message) {
  res.status = status;
  res.set_content(json{{"error", message}}.dump(), "application/json");
}

int status_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::Parse:
    case ErrorCode::InvalidArgument:
    case ErrorCode::UnknownFrame:
    case ErrorCode::RangeViolation:
      return 400;
    default:
      return 500;
  }
}

}  // namespace

std::string encode_png(const RasterU8& raster) {
  if (raster.width() <= 0 || raster.height() <= 0) fail(ErrorCode::InvalidArgument, "cannot encode an empty image");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) fail(ErrorCode::Io, "png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    fail(ErrorCode::Io, "png_create_info_struct failed");
  }
  std::string out;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    fail(ErrorCode::Io, "PNG encoding failed");
  }
  png_set_write_fn(png, &out, append_png, nullptr);
  png_set_IHDR(png, info, static_cast<png_uint_32>(raster.width()), static_cast<png_uint_32>(raster.height()), 8,
               PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < raster.height(); ++y)
    png_write_row(png, const_cast<png_bytep>(raster.row(y).data()));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return out;
}

struct ApiServer::Impl {
  ServerOptions options;
  FrameCatalog catalog;
  httplib::Server http;
  std::thread thread;
  std::mutex rows_mutex;
  int port = 0;

  void routes();
};

void ApiServer::Impl::routes() {
  // SO_REUSEADDR only; the library default SO_REUSEPORT would let a second server share the port.
  http.set_socket_options([](socket_t sock) {
    int yes = 1;
    setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const void*>(&yes), sizeof(yes));
  });
  http.Get("/api/gps", [this](const httplib::Request&, httplib::Response& res) {
    json arr = json::array();
    if (!options.gps_file.empty()) {
      try {
        for (const auto& f : parse_gps_csv(options.gps_file)) {
          json j{{"frame_index", f.frame_index}, {"latitude", f.latitude}, {"longitude", f.longitude}};
          j["altitude"] = f.altitude ? json(*f.altitude) : json(nullptr);
          arr.push_back(j);
        }
      } catch (const Error& e) {
        return send_error(res, 500, e.what());
      }
    }
    res.set_content(arr.dump(), "application/json");
  });

  http.Get(R"(/api/frames/(\d+)/preview)", [this](const httplib::Request& req, httplib::Response& res) {
    int index = 0;
    try {
      index = std::stoi(req.matches[1].str());
    } catch (const std::exception&) {
      return send_error(res, 404, "no such frame");
    }
    if (!catalog.contains(index)) return send_error(res, 404, "no frame " + std::to_string(index));
    try {
      const NormalizedFrame n = normalize_to_u8(raw_to_celsius(catalog.load(index), options.law));
      res.set_content(encode_png(n.pixels), "image/png");
    } catch (const Error& e) {
      send_error(res, 500, e.what());
    }
  });

  http.Get("/api/rows", [this](const httplib::Request&, httplib::Response& res) {
    std::lock_guard lock(rows_mutex);
    try {
      res.set_content(row_specs_to_json(load_row_specs(options.row_specs_file)), "application/json");
    } catch (const Error& e) {
      send_error(res, 500, e.what());
    }
  });

  http.Post("/api/rows", [this](const httplib::Request& req, httplib::Response& res) {
    RowSpec spec;
    try {
      spec = parse_row_spec(req.body);
      for (int i : {spec.first_frame, spec.last_frame})
        if (!catalog.contains(i)) fail(ErrorCode::UnknownFrame, "frame " + std::to_string(i) + " does not exist");
    } catch (const Error& e) {
      return send_error(res, status_for(e.code()), e.what());
    }
    std::lock_guard lock(rows_mutex);
    try {
      auto specs = load_row_specs(options.row_specs_file);
      for (const auto& s : specs)
        if (s.row_id == spec.row_id) return send_error(res, 409, "row " + spec.row_id + " already exists");
      specs.push_back(spec);
      save_row_specs_atomic(options.row_specs_file, specs);
      res.set_content(row_specs_to_json(std::span<const RowSpec>(&spec, 1)), "application/json");
    } catch (const std::exception& e) {
      send_error(res, 500, e.what());
    }
  });

  http.Delete(R"(/api/rows/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
    const std::string id = req.matches[1].str();
    std::lock_guard lock(rows_mutex);
    try {
      auto specs = load_row_specs(options.row_specs_file);
      const auto it = std::find_if(specs.begin(), specs.end(), [&](const RowSpec& s) { return s.row_id == id; });
      if (it == specs.end()) return send_error(res, 404, "no row " + id);
      specs.erase(it);
      save_row_specs_atomic(options.row_specs_file, specs);
      res.set_content(json{{"deleted", id}}.dump(), "application/json");
    } catch (const std::exception& e) {
      send_error(res, 500, e.what());
    }
  });

  http.Get("/api/plantfile", [this](const httplib::Request&, httplib::Response& res) {
    if (options.plant_file.empty() || !fs::exists(options.plant_file)) return send_error(res, 404, "no plant file");
    try {
      res.set_content(plant_layout_to_json(load_plant_layout(options.plant_file)), "application/json");
    } catch (const Error& e) {
      send_error(res, 500, e.what());
    }
  });

  if (!options.static_dir.empty()) http.set_mount_point("/", options.static_dir.string());
}

ApiServer::ApiServer(ServerOptions options) : impl_(std::make_unique<Impl>()) {
  impl_->options = std::move(options);
  if (impl_->options.row_specs_file.empty()) fail(ErrorCode::InvalidConfig, "row spec file not set");
  impl_->catalog = index_frame_sequence(impl_->options.frames_dir);
  impl_->routes();
}

ApiServer::~ApiServer() {
  stop();
  wait();
}

void ApiServer::start(const std::string& host, int port) {
  if (impl_->thread.joinable()) fail(ErrorCode::InvalidArgument, "server already started");
  if (port == 0) {
    impl_->port = impl_->http.bind_to_any_port(host);
    if (impl_->port <= 0) fail(ErrorCode::PortInUse, "could not bind " + host);
  } else {
    if (!impl_->http.bind_to_port(host, port)) fail(ErrorCode::PortInUse, "port " + std::to_string(port) + " is in use");
    impl_->port = port;
  }
  impl_->thread = std::thread([this] { impl_->http.listen_after_bind(); });
  impl_->http.wait_until_ready();
}

int ApiServer::port() const { return impl_->port; }

void ApiServer::wait() {
  if (impl_->thread.joinable()) impl_->thread.join();
}

void ApiServer::stop() { impl_->http.stop(); }

}  // namespace pvx
