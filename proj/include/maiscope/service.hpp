#pragma once

#include <memory>

#include "maiscope/camera.hpp"
#include "maiscope/config.hpp"
#include "maiscope/store.hpp"
#include "maiscope/sync.hpp"

namespace maiscope {

// REST adapter over the camera, pipeline, store and sync operations.
//
//   GET  /v1/health            {"status":"ok","version"}
//   GET  /v1/preview           current frame, PNG
//   POST /v1/capture           screen the current frame, advance the camera
//   GET  /v1/frames/{hash}     PNG by content hash (session cache, then store)
//   POST /v1/records           save the last capture
//   GET  /v1/records?state=    journal entries, optionally filtered
//   GET  /v1/records/{id}
//   POST /v1/sync              one sync pass; returns the report
//   GET  /v1/session
//
// Anything under server.static_dir is served at /.
class DeviceService {
 public:
  // camera, transport: defaults come from the config when null.
  explicit DeviceService(AppConfig config, std::unique_ptr<CameraSource> camera = nullptr,
                         StoreOptions store_options = {}, std::unique_ptr<SyncTransport> transport = nullptr);
  ~DeviceService();
  DeviceService(const DeviceService&) = delete;
  DeviceService& operator=(const DeviceService&) = delete;

  // Binds server.host:server.port (0 = any free port) and serves in the
  // background. Returns the bound port. Throws PortInUse.
  int start();
  void stop();
  void wait();
  int port() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace maiscope
