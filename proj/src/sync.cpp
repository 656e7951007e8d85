#include "maiscope/sync.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

#include "httplib.h"
#include "maiscope/error.hpp"
#include "maiscope/hashing.hpp"

namespace maiscope {

using nlohmann::json;

std::chrono::milliseconds backoff_delay(int attempts, std::string_view record_id, const BackoffPolicy& policy) {
  if (attempts < 1) return std::chrono::milliseconds(0);
  double seconds = policy.base_seconds * std::pow(policy.factor, attempts - 1);
  seconds = std::min(seconds, policy.cap_seconds);
  // 53 bits of the digest as a uniform in [0,1).
  const std::string digest = sha256_hex(std::string(record_id) + ":" + std::to_string(attempts));
  const std::uint64_t bits = std::stoull(digest.substr(0, 16), nullptr, 16) >> 11;
  const double u = static_cast<double>(bits) / 9007199254740992.0;
  seconds *= 1.0 + policy.jitter * (2.0 * u - 1.0);
  seconds = std::min(seconds, policy.cap_seconds);
  return std::chrono::milliseconds(static_cast<long long>(std::llround(seconds * 1000.0)));
}

// HTTP transport

HttpSyncTransport::HttpSyncTransport(std::string endpoint, std::string token, std::chrono::milliseconds timeout)
    : endpoint_(std::move(endpoint)), token_(std::move(token)), timeout_(timeout) {
  while (!endpoint_.empty() && endpoint_.back() == '/') endpoint_.pop_back();
  if (endpoint_.empty()) throw Error(ErrorCode::kBadConfig, "sync endpoint is not configured");
}

namespace {

httplib::Client make_client(const std::string& endpoint, const std::string& token, std::chrono::milliseconds timeout) {
  httplib::Client cli(endpoint);
  cli.set_connection_timeout(timeout);
  cli.set_read_timeout(timeout);
  cli.set_write_timeout(timeout);
  if (!token.empty()) cli.set_bearer_token_auth(token);
  return cli;
}

HttpReply to_reply(const httplib::Result& res) {
  if (!res) return {0, {}, httplib::to_string(res.error())};
  return {res->status, res->body, {}};
}

}  // namespace

HttpReply HttpSyncTransport::health() {
  auto cli = make_client(endpoint_, token_, timeout_);
  return to_reply(cli.Get("/v1/health"));
}

HttpReply HttpSyncTransport::put(const std::string& path, const char* data, std::size_t size,
                                 const char* content_type) {
  auto cli = make_client(endpoint_, token_, timeout_);
  return to_reply(cli.Put(path, data, size, content_type));
}

HttpReply HttpSyncTransport::put_blob(const std::string& hash, std::span<const std::uint8_t> bytes) {
  return put("/v1/blobs/" + hash, reinterpret_cast<const char*>(bytes.data()), bytes.size(),
             "application/octet-stream");
}

HttpReply HttpSyncTransport::put_record(const std::string& record_id, const std::string& body) {
  return put("/v1/records/" + record_id, body.data(), body.size(), "application/json");
}

// sync_once

void SyncOptions::validate() const {
  if (batch_size == 0) throw Error(ErrorCode::kBadConfig, "sync batch size must be positive");
  if (parallelism < 1) throw Error(ErrorCode::kBadConfig, "sync parallelism must be positive");
  if (request_attempts < 1) throw Error(ErrorCode::kBadConfig, "sync request attempts must be positive");
}

json to_json(const SyncReport& r) {
  return {{"uploaded", r.uploaded},
          {"failed", r.failed},
          {"skipped", r.skipped},
          {"conflicts", r.conflicts},
          {"unreachable_batches", r.unreachable_batches}};
}

namespace {

bool transient(const HttpReply& r) { return r.status == 0 || r.status >= 500; }

template <typename F>
HttpReply with_retries(int attempts, F&& request) {
  HttpReply reply;
  for (int i = 0; i < attempts; ++i) {
    reply = request();
    if (!transient(reply)) break;
  }
  return reply;
}

std::string describe(const HttpReply& r) {
  if (r.status == 0) return "network: " + r.error;
  std::string body = r.body.substr(0, 200);
  return "HTTP " + std::to_string(r.status) + (body.empty() ? "" : ": " + body);
}

enum class Outcome { kSynced, kFailed, kConflict };

class Uploader {
 public:
  Uploader(Store& store, SyncTransport& transport, const SyncOptions& options)
      : store_(store), transport_(transport), options_(options) {}

  Outcome upload(const SlideRecord& record) {
    SyncState uploading = record.sync;
    uploading.status = SyncStatus::kUploading;
    store_.transition(record.record_id, uploading);

    std::vector<std::string> blobs{record.slide_blob};
    blobs.insert(blobs.end(), record.crop_blobs.begin(), record.crop_blobs.end());
    const std::string overlay = record.result.value("overlay_ref", std::string());
    if (!overlay.empty() && store_.blobs().contains(overlay)) blobs.push_back(overlay);
    std::sort(blobs.begin(), blobs.end());
    blobs.erase(std::unique(blobs.begin(), blobs.end()), blobs.end());

    for (const auto& hash : blobs) {
      std::vector<std::uint8_t> bytes;
      try {
        bytes = store_.blobs().get(hash);
      } catch (const Error& e) {
        return fail(record, uploading, e.what(), false);
      }
      const HttpReply r =
          with_retries(options_.request_attempts, [&] { return transport_.put_blob(hash, bytes); });
      if (r.status != 200 && r.status != 201) return fail(record, uploading, "blob " + hash + ": " + describe(r), false);
    }

    const std::string body = record_document(record).dump();
    const HttpReply r =
        with_retries(options_.request_attempts, [&] { return transport_.put_record(record.record_id, body); });
    if (r.status == 200 || r.status == 201) return succeed(record, uploading);
    if (r.status == 409) {
      const json reply = json::parse(r.body, nullptr, false);
      const bool mismatch = reply.is_object() ? reply.value("mismatch", true) : true;
      if (!mismatch) return succeed(record, uploading);
      const std::string stored = reply.is_object() ? reply.value("stored_hash", std::string()) : std::string();
      return fail(record, uploading, "conflict: server holds different content (" + stored + ")", true);
    }
    return fail(record, uploading, "record: " + describe(r), false);
  }

 private:
  Outcome succeed(const SlideRecord& record, const SyncState& from) {
    SyncState s = from;
    s.status = SyncStatus::kSynced;
    s.last_error.clear();
    s.next_attempt_at.clear();
    store_.transition(record.record_id, s);
    return Outcome::kSynced;
  }

  Outcome fail(const SlideRecord& record, const SyncState& from, const std::string& why, bool review) {
    SyncState s = from;
    s.status = SyncStatus::kFailed;
    s.attempts = from.attempts + 1;
    s.last_error = why;
    s.needs_review = review;
    s.next_attempt_at =
        format_rfc3339(store_.now() + backoff_delay(s.attempts, record.record_id, options_.backoff));
    store_.transition(record.record_id, s);
    return review ? Outcome::kConflict : Outcome::kFailed;
  }

  Store& store_;
  SyncTransport& transport_;
  const SyncOptions& options_;
};

bool due(const SlideRecord& r, std::chrono::system_clock::time_point now) {
  if (r.sync.needs_review) return false;
  if (r.sync.status == SyncStatus::kFailed && !r.sync.next_attempt_at.empty()) {
    return parse_rfc3339(r.sync.next_attempt_at) <= now;
  }
  return true;
}

}  // namespace

SyncReport sync_once(Store& store, SyncTransport& transport, const SyncOptions& options) {
  options.validate();
  std::lock_guard run_lock(store.sync_mutex());

  for (const auto& r : store.records()) {
    if (r.sync.status != SyncStatus::kUploading) continue;
    SyncState s = r.sync;
    s.status = SyncStatus::kFailed;
    s.last_error = "interrupted upload";
    s.next_attempt_at.clear();
    store.transition(r.record_id, s);
  }

  const std::size_t total = store.records().size();
  const auto now = store.now();
  std::vector<SlideRecord> work;
  for (auto& r : store.list_pending()) {
    if (due(r, now)) work.push_back(std::move(r));
  }

  SyncReport report;
  Uploader uploader(store, transport, options);
  for (std::size_t start = 0; start < work.size(); start += options.batch_size) {
    const std::size_t end = std::min(work.size(), start + options.batch_size);
    const HttpReply probe = with_retries(options.request_attempts, [&] { return transport.health(); });
    if (probe.status == 401 || probe.status == 403) {
      throw Error(ErrorCode::kBadConfig, "sync endpoint rejected the token (HTTP " + std::to_string(probe.status) + ")");
    }
    if (probe.status != 200) {
      ++report.unreachable_batches;
      continue;
    }

    std::atomic<std::size_t> next{start};
    std::atomic<std::size_t> uploaded{0}, failed{0}, conflicts{0};
    std::mutex error_mutex;
    std::exception_ptr first_error;
    auto worker = [&] {
      try {
        for (std::size_t i = next++; i < end; i = next++) {
          switch (uploader.upload(work[i])) {
            case Outcome::kSynced: ++uploaded; break;
            case Outcome::kFailed: ++failed; break;
            case Outcome::kConflict:
              ++failed;
              ++conflicts;
              break;
          }
        }
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        next = end;
      }
    };
    const int threads = static_cast<int>(std::min<std::size_t>(options.parallelism, end - start));
    std::vector<std::thread> pool;
    for (int t = 1; t < threads; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
    report.uploaded += uploaded;
    report.failed += failed;
    report.conflicts += conflicts;
  }
  report.skipped = total - report.uploaded - report.failed;
  return report;
}

}  // namespace maiscope
