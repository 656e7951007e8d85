#pragma once

#include <chrono>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>

#include "maiscope/store.hpp"

namespace maiscope {

struct BackoffPolicy {
  double base_seconds = 2.0;
  double factor = 2.0;
  double cap_seconds = 300.0;
  double jitter = 0.20;  // +/- fraction
};

// Delay before the next try after `attempts` failures (attempts >= 1). The
// jitter is a pure function of record_id and attempts so schedules replay.
std::chrono::milliseconds backoff_delay(int attempts, std::string_view record_id, const BackoffPolicy& policy = {});

// status 0 means the request never completed (connect failure, timeout).
struct HttpReply {
  int status = 0;
  std::string body;
  std::string error;
};

// Must be safe to call from several threads at once.
class SyncTransport {
 public:
  virtual ~SyncTransport() = default;
  virtual HttpReply health() = 0;
  virtual HttpReply put_blob(const std::string& hash, std::span<const std::uint8_t> bytes) = 0;
  virtual HttpReply put_record(const std::string& record_id, const std::string& body) = 0;
};

class HttpSyncTransport final : public SyncTransport {
 public:
  // endpoint like "http://host:port"; empty token sends no Authorization header.
  HttpSyncTransport(std::string endpoint, std::string token,
                    std::chrono::milliseconds timeout = std::chrono::milliseconds(5000));

  HttpReply health() override;
  HttpReply put_blob(const std::string& hash, std::span<const std::uint8_t> bytes) override;
  HttpReply put_record(const std::string& record_id, const std::string& body) override;

 private:
  HttpReply put(const std::string& path, const char* data, std::size_t size, const char* content_type);

  std::string endpoint_;
  std::string token_;
  std::chrono::milliseconds timeout_;
};

struct SyncOptions {
  std::size_t batch_size = 16;
  int parallelism = 2;
  // Tries per HTTP request inside one run (network errors and 5xx only).
  int request_attempts = 3;
  BackoffPolicy backoff;

  void validate() const;
};

struct SyncReport {
  std::size_t uploaded = 0;
  std::size_t failed = 0;
  // Records not attempted: already synced, waiting out backoff, flagged for
  // review, or in a batch whose endpoint was unreachable.
  std::size_t skipped = 0;
  std::size_t conflicts = 0;
  std::size_t unreachable_batches = 0;
};

nlohmann::json to_json(const SyncReport& report);

// One pass over pending and failed records. Blobs go up before the record
// document. Uploading entries left by an interrupted run are first marked
// Failed, then retried in the same pass.
SyncReport sync_once(Store& store, SyncTransport& transport, const SyncOptions& options = {});

}  // namespace maiscope
