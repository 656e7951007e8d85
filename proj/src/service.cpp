#include "maiscope/service.hpp"

#include <cstdio>
#include <map>
#include <mutex>
#include <optional>
#include <thread>

#include "httplib.h"
#include "maiscope/commands.hpp"
#include "maiscope/error.hpp"
#include "maiscope/hashing.hpp"

namespace maiscope {

using nlohmann::json;

namespace {

int status_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kEndOfFrames:
    case ErrorCode::kInvalidTransition: return 409;
    case ErrorCode::kNotFound: return 404;
    case ErrorCode::kOracleMiss:
    case ErrorCode::kEmptySlide:
    case ErrorCode::kEmptyCrop: return 422;
    case ErrorCode::kBackendUnavailable:
    case ErrorCode::kEndpointUnreachable: return 503;
    case ErrorCode::kStorageFull: return 507;
    case ErrorCode::kIoFailure:
    case ErrorCode::kInternal: return 500;
    default: return 400;
  }
}

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, const Error& e) {
  send_json(res, status_for(e.code()), {{"error", error_name(e.code())}, {"message", e.what()}});
}

void send_png(httplib::Response& res, const std::vector<std::uint8_t>& png) {
  res.status = 200;
  res.set_content(reinterpret_cast<const char*>(png.data()), png.size(), "image/png");
}

// Empty bodies count as {}. Anything else must be a JSON object.
bool parse_body(const httplib::Request& req, httplib::Response& res, json& out) {
  if (req.body.find_first_not_of(" \t\r\n") == std::string::npos) {
    out = json::object();
    return true;
  }
  out = json::parse(req.body, nullptr, false);
  if (out.is_discarded() || !out.is_object()) {
    send_json(res, 400, {{"error", "MalformedJson"}, {"message", "request body must be a JSON object"}});
    return false;
  }
  return true;
}

struct Capture {
  std::string stem;
  RasterImage slide;
  ScreeningRun run;
};

}  // namespace

struct DeviceService::Impl {
  AppConfig config;
  std::unique_ptr<CameraSource> camera;
  Store store;
  std::unique_ptr<SyncTransport> transport;
  httplib::Server server;
  std::thread thread;
  int port = 0;

  std::mutex capture_mutex;  // one pipeline run at a time
  std::mutex session_mutex;
  std::mutex camera_mutex;
  std::optional<Capture> last;
  bool unsaved = false;
  std::string preview_ref;
  std::optional<json> last_sync;
  std::map<std::string, std::vector<std::uint8_t>> frames;  // PNGs of the current preview and capture

  Impl(AppConfig c, std::unique_ptr<CameraSource> cam, StoreOptions store_options,
       std::unique_ptr<SyncTransport> t)
      : config(std::move(c)), camera(std::move(cam)), store(config.store_path, [&] {
          store_options.device_id = config.device_id;
          return std::move(store_options);
        }()),
        transport(std::move(t)) {}

  ~Impl() {
    if (unsaved && last) {
      std::fprintf(stderr, "maiscope: discarding unsaved result for frame %s\n", last->stem.c_str());
    }
  }

  template <typename F>
  httplib::Server::Handler handle(F body) {
    return [body](const httplib::Request& req, httplib::Response& res) {
      try {
        body(req, res);
      } catch (const Error& e) {
        send_error(res, e);
      } catch (const std::exception& e) {
        send_json(res, 500, {{"error", "Internal"}, {"message", e.what()}});
      }
    };
  }

  json sync_counts() const {
    json counts = {{"pending", 0}, {"uploading", 0}, {"synced", 0}, {"failed", 0}};
    for (const auto& r : store.records()) {
      switch (r.sync.status) {
        case SyncStatus::kPending: counts["pending"] = counts["pending"].get<int>() + 1; break;
        case SyncStatus::kUploading: counts["uploading"] = counts["uploading"].get<int>() + 1; break;
        case SyncStatus::kSynced: counts["synced"] = counts["synced"].get<int>() + 1; break;
        case SyncStatus::kFailed: counts["failed"] = counts["failed"].get<int>() + 1; break;
      }
    }
    return counts;
  }

  void preview(const httplib::Request&, httplib::Response& res) {
    const Frame f = [&] {
      std::lock_guard lock(camera_mutex);
      return camera->preview();
    }();
    auto png = encode_image(f.image, ImageFormat::kPng);
    {
      std::lock_guard lock(session_mutex);
      frames.erase(preview_ref);
      preview_ref = sha256_hex(png);
      frames[preview_ref] = png;
    }
    res.set_header("X-Frame-Ref", preview_ref);
    send_png(res, png);
  }

  void capture(const httplib::Request& req, httplib::Response& res) {
    json body;
    if (!parse_body(req, res, body)) return;
    std::lock_guard run_lock(capture_mutex);
    Frame f = [&] {
      std::lock_guard lock(camera_mutex);
      return camera->capture();
    }();
    ScreeningRun run = screen_image(config, f.image, f.stem);

    std::map<std::string, std::vector<std::uint8_t>> cache;
    auto overlay_png = encode_image(run.overlay, ImageFormat::kPng);
    cache[run.result.overlay_ref] = std::move(overlay_png);
    for (const auto& crop : run.crops) {
      auto png = encode_image(crop, ImageFormat::kPng);
      cache[sha256_hex(png)] = std::move(png);
    }
    auto slide_png = encode_image(f.image, ImageFormat::kPng);
    const std::string slide_ref = sha256_hex(slide_png);
    cache[slide_ref] = std::move(slide_png);

    const json result = to_json(run.result);
    const std::string stem = f.stem;
    {
      std::lock_guard lock(session_mutex);
      if (unsaved && last) {
        std::fprintf(stderr, "maiscope: discarding unsaved result for frame %s\n", last->stem.c_str());
      }
      if (!preview_ref.empty() && frames.count(preview_ref)) cache[preview_ref] = frames[preview_ref];
      frames = std::move(cache);
      last = Capture{f.stem, std::move(f.image), std::move(run)};
      unsaved = true;
    }
    send_json(res, 200,
              {{"frame", stem}, {"slide_ref", slide_ref}, {"overlay_ref", result["overlay_ref"]},
               {"result", result}});
  }

  void frame(const httplib::Request& req, httplib::Response& res) {
    const std::string hash = req.matches[1];
    {
      std::lock_guard lock(session_mutex);
      if (const auto it = frames.find(hash); it != frames.end()) {
        send_png(res, it->second);
        return;
      }
    }
    if (store.blobs().contains(hash)) {
      send_png(res, store.blobs().get(hash));
      return;
    }
    send_json(res, 404, {{"error", "NotFound"}, {"message", "no frame " + hash}});
  }

  void save(const httplib::Request& req, httplib::Response& res) {
    json body;
    if (!parse_body(req, res, body)) return;
    std::lock_guard lock(session_mutex);
    if (!last || !unsaved) {
      send_json(res, 409, {{"error", "NothingToSave"}, {"message", "no unsaved capture"}});
      return;
    }
    const SlideRecord record = store.save_run(last->slide, last->run);
    unsaved = false;
    send_json(res, 201, to_journal_json(record));
  }

  void list(const httplib::Request& req, httplib::Response& res) {
    std::optional<SyncStatus> wanted;
    if (req.has_param("state")) {
      const std::string s = req.get_param_value("state");
      wanted = sync_status_from_string(s);
      if (!wanted) throw Error(ErrorCode::kInvalidArgument, "unknown sync state '" + s + "'");
    }
    json out = json::array();
    for (const auto& r : store.records()) {
      if (!wanted || r.sync.status == *wanted) out.push_back(to_journal_json(r));
    }
    send_json(res, 200, out);
  }

  void show(const httplib::Request& req, httplib::Response& res) {
    const auto r = store.load(req.matches[1]);
    if (!r) throw Error(ErrorCode::kNotFound, "record " + std::string(req.matches[1]));
    send_json(res, 200, to_journal_json(*r));
  }

  void sync(const httplib::Request& req, httplib::Response& res) {
    json body;
    if (!parse_body(req, res, body)) return;
    {
      std::lock_guard lock(session_mutex);
      if (!transport) {
        transport = std::make_unique<HttpSyncTransport>(config.sync_endpoint, config.sync_token,
                                                        std::chrono::milliseconds(config.sync_timeout_ms));
      }
    }
    const json report = to_json(sync_once(store, *transport, config.sync_options()));
    {
      std::lock_guard lock(session_mutex);
      last_sync = report;
    }
    send_json(res, 200, report);
  }

  void session(const httplib::Request&, httplib::Response& res) {
    json out;
    json cam;
    {
      std::lock_guard lock(camera_mutex);
      cam = {{"kind", camera->kind()}, {"exhausted", camera->exhausted()}};
    }
    {
      std::lock_guard lock(session_mutex);
      out = {{"camera", cam},
             {"preview_ref", preview_ref.empty() ? json(nullptr) : json(preview_ref)},
             {"has_result", last.has_value()},
             {"unsaved", unsaved},
             {"frame", last ? json(last->stem) : json(nullptr)},
             {"result", last ? to_json(last->run.result) : json(nullptr)},
             {"last_sync", last_sync ? *last_sync : json(nullptr)}};
    }
    out["sync"] = sync_counts();
    send_json(res, 200, out);
  }

  void routes() {
    server.Get("/v1/health", handle([](const httplib::Request&, httplib::Response& res) {
      send_json(res, 200, {{"status", "ok"}, {"version", MAISCOPE_VERSION}});
    }));
    server.Get("/v1/preview", handle([this](const auto& q, auto& r) { preview(q, r); }));
    server.Post("/v1/capture", handle([this](const auto& q, auto& r) { capture(q, r); }));
    server.Get(R"(/v1/frames/([0-9a-f]{64}))", handle([this](const auto& q, auto& r) { frame(q, r); }));
    server.Post("/v1/records", handle([this](const auto& q, auto& r) { save(q, r); }));
    server.Get("/v1/records", handle([this](const auto& q, auto& r) { list(q, r); }));
    server.Get(R"(/v1/records/([A-Za-z0-9._-]+))", handle([this](const auto& q, auto& r) { show(q, r); }));
    server.Post("/v1/sync", handle([this](const auto& q, auto& r) { sync(q, r); }));
    server.Get("/v1/session", handle([this](const auto& q, auto& r) { session(q, r); }));
    if (!config.server_static_dir.empty() && !server.set_mount_point("/", config.server_static_dir)) {
      throw Error(ErrorCode::kBadConfig, "static directory " + config.server_static_dir + " not found");
    }
  }
};

DeviceService::DeviceService(AppConfig config, std::unique_ptr<CameraSource> camera, StoreOptions store_options,
                             std::unique_ptr<SyncTransport> transport) {
  config.validate();
  if (!camera) camera = open_camera(config.camera_kind, config.camera_path);
  impl_ = std::make_unique<Impl>(std::move(config), std::move(camera), std::move(store_options), std::move(transport));
  impl_->routes();
}

DeviceService::~DeviceService() { stop(); }

int DeviceService::start() {
  auto& svr = impl_->server;
  const auto& host = impl_->config.server_host;
  const int want = impl_->config.server_port;
  int bound = want;
  // httplib defaults to SO_REUSEPORT, which lets a second server share the port.
  svr.set_socket_options([](socket_t sock) {
    int yes = 1;
    ::setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
  });
  if (want == 0) {
    bound = svr.bind_to_any_port(host);
    if (bound < 0) throw Error(ErrorCode::kPortInUse, "cannot bind " + host);
  } else if (!svr.bind_to_port(host, want)) {
    throw Error(ErrorCode::kPortInUse, host + ":" + std::to_string(want));
  }
  impl_->port = bound;
  impl_->thread = std::thread([&svr] { svr.listen_after_bind(); });
  svr.wait_until_ready();
  return bound;
}

void DeviceService::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

void DeviceService::wait() {
  if (impl_->thread.joinable()) impl_->thread.join();
}

int DeviceService::port() const { return impl_->port; }

}  // namespace maiscope
