#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <set>
#include <string>

namespace maiscope {

struct ReferenceServerOptions {
  std::filesystem::path state_dir;
  std::string token;  // empty: no auth
  // Fraction of requests (any route) hit by an injected fault: an HTTP 500,
  // a dropped request (no processing, reply after fault_delay) or a late
  // reply (processed, reply after fault_delay). Chosen uniformly.
  double fault_rate = 0.0;
  std::uint64_t fault_seed = 0;
  std::chrono::milliseconds fault_delay{1500};
  // PUT /v1/records/{id} for these ids always answers 500.
  std::set<std::string> failing_records;
};

// In-process cloud endpoint: blobs under state_dir/blobs/<2>/<sha>, records
// under state_dir/records/<id>.json. Idempotent by record id.
class ReferenceServer {
 public:
  explicit ReferenceServer(ReferenceServerOptions options);
  ~ReferenceServer();
  ReferenceServer(const ReferenceServer&) = delete;
  ReferenceServer& operator=(const ReferenceServer&) = delete;

  // Binds and serves on a background thread; port 0 picks a free port.
  // Returns the bound port. Throws PortInUse.
  int start(const std::string& host = "127.0.0.1", int port = 0);
  void stop();
  // Blocks until stop() (used by the CLI).
  void wait();

  std::string endpoint() const;
  std::size_t record_count() const;
  std::size_t blob_count() const;
  // SHA-256 over every file path and its bytes under state_dir.
  std::string state_digest() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace maiscope
