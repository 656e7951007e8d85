#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "maiscope/imaging.hpp"
#include "maiscope/pipeline.hpp"

namespace maiscope {

enum class SyncStatus { kPending, kUploading, kSynced, kFailed };

std::string_view to_string(SyncStatus status) noexcept;
std::optional<SyncStatus> sync_status_from_string(std::string_view s) noexcept;

struct SyncState {
  SyncStatus status = SyncStatus::kPending;
  int attempts = 0;
  std::string last_error;
  std::string next_attempt_at;  // RFC 3339; empty means "now"
  // Server holds different content for this record id; never retried.
  bool needs_review = false;

  friend bool operator==(const SyncState&, const SyncState&) = default;
};

// Pending -> Uploading -> {Synced, Failed}; Failed -> Uploading. Synced is terminal.
bool is_valid_transition(SyncStatus from, SyncStatus to) noexcept;

struct SlideRecord {
  std::string record_id;
  std::string device_id;
  std::string created_at;
  std::string app_version;
  std::string slide_blob;
  std::vector<std::string> crop_blobs;
  nlohmann::json result;
  SyncState sync;
};

// The document uploaded to the cloud: everything except sync bookkeeping.
nlohmann::json record_document(const SlideRecord& record);
std::string record_document_hash(const SlideRecord& record);
SlideRecord record_from_document(const nlohmann::json& doc);

nlohmann::json to_journal_json(const SlideRecord& record);
SlideRecord record_from_journal_json(const nlohmann::json& j);

std::string format_rfc3339(std::chrono::system_clock::time_point t);
std::chrono::system_clock::time_point parse_rfc3339(std::string_view s);

// Blobs keyed by SHA-256 under root/<first two hex chars>/<hash>.
class BlobStore {
 public:
  explicit BlobStore(std::filesystem::path root);

  // Writes (or finds) the blob and returns its hash. Flushed before return.
  std::string put(std::span<const std::uint8_t> bytes);
  std::vector<std::uint8_t> get(const std::string& hash) const;
  bool contains(const std::string& hash) const;
  std::filesystem::path path_for(const std::string& hash) const;
  std::size_t count() const;

 private:
  std::filesystem::path root_;
};

struct StoreOptions {
  std::string device_id = "maiscope-device";
  std::string app_version = MAISCOPE_VERSION;
  std::function<std::chrono::system_clock::time_point()> clock = [] { return std::chrono::system_clock::now(); };
  std::function<std::string()> id_source;  // defaults to random UUID v4
};

std::string random_uuid_v4();

// Layout: root/blobs/..., root/journal.jsonl. One writer per store directory.
class Store {
 public:
  explicit Store(std::filesystem::path root, StoreOptions options = {});

  // Stores slide, crops and overlay as PNG blobs, then appends a Pending record.
  // Crop and overlay hashes must match the result's references.
  SlideRecord save_record(const RasterImage& slide, std::span<const RasterImage> crops, const ScreeningResult& result,
                          const RasterImage& overlay);
  SlideRecord save_run(const RasterImage& slide, const ScreeningRun& run);

  std::optional<SlideRecord> load(const std::string& record_id) const;
  // Ordered by created_at, then record_id.
  std::vector<SlideRecord> records() const;
  // Pending and Failed records, oldest first.
  std::vector<SlideRecord> list_pending() const;

  // Appends a journal entry. Throws InvalidTransition for illegal moves.
  SlideRecord transition(const std::string& record_id, const SyncState& next);

  const BlobStore& blobs() const noexcept { return blobs_; }
  BlobStore& blobs() noexcept { return blobs_; }
  const std::filesystem::path& root() const noexcept { return root_; }
  std::chrono::system_clock::time_point now() const { return options_.clock(); }

  // Re-reads the journal from disk.
  void reload();

  // Held by sync_once so two sync runs never interleave on one store.
  std::mutex& sync_mutex() noexcept { return sync_mutex_; }

 private:
  void append_locked(const SlideRecord& record);
  std::vector<SlideRecord> sorted_locked() const;

  std::filesystem::path root_;
  StoreOptions options_;
  BlobStore blobs_;
  mutable std::mutex mutex_;
  std::mutex sync_mutex_;
  std::map<std::string, SlideRecord> records_;
};

}  // namespace maiscope
