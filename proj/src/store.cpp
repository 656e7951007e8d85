#include "maiscope/store.hpp"

#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>

#include <algorithm>
#include <boost/uuid/uuid_generators.hpp>
#include <boost/uuid/uuid_io.hpp>
#include <cerrno>
#include <cstring>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "maiscope/error.hpp"
#include "maiscope/hashing.hpp"

namespace maiscope {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kJournalName = "journal.jsonl";

[[noreturn]] void throw_errno(const std::string& what, int err) {
  const ErrorCode code = (err == ENOSPC || err == EDQUOT) ? ErrorCode::kStorageFull : ErrorCode::kIoFailure;
  throw Error(code, what + ": " + std::strerror(err));
}

class Fd {
 public:
  explicit Fd(int fd) : fd_(fd) {}
  ~Fd() {
    if (fd_ >= 0) ::close(fd_);
  }
  Fd(const Fd&) = delete;
  Fd& operator=(const Fd&) = delete;
  int get() const { return fd_; }
  int release() { return std::exchange(fd_, -1); }

 private:
  int fd_;
};

void write_all(int fd, const std::uint8_t* data, std::size_t n, const std::string& what) {
  while (n > 0) {
    const ssize_t w = ::write(fd, data, n);
    if (w < 0) {
      if (errno == EINTR) continue;
      throw_errno(what, errno);
    }
    data += w;
    n -= static_cast<std::size_t>(w);
  }
}

void fsync_dir(const fs::path& dir) {
  Fd fd(::open(dir.c_str(), O_RDONLY | O_DIRECTORY));
  if (fd.get() >= 0) ::fsync(fd.get());
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw_errno("cannot create " + dir.string(), ec.value());
}

json state_json(const SyncState& s) {
  json j = {{"status", to_string(s.status)}, {"attempts", s.attempts}};
  if (!s.last_error.empty()) j["last_error"] = s.last_error;
  if (!s.next_attempt_at.empty()) j["next_attempt_at"] = s.next_attempt_at;
  if (s.needs_review) j["needs_review"] = true;
  return j;
}

SyncState state_from_json(const json& j) {
  SyncState s;
  const auto status = sync_status_from_string(j.at("status").get<std::string>());
  if (!status) throw Error(ErrorCode::kSchemaError, "unknown sync status");
  s.status = *status;
  s.attempts = j.value("attempts", 0);
  s.last_error = j.value("last_error", std::string());
  s.next_attempt_at = j.value("next_attempt_at", std::string());
  s.needs_review = j.value("needs_review", false);
  return s;
}

bool older(const SlideRecord& a, const SlideRecord& b) {
  if (a.created_at != b.created_at) return a.created_at < b.created_at;
  return a.record_id < b.record_id;
}

}  // namespace

std::string_view to_string(SyncStatus status) noexcept {
  switch (status) {
    case SyncStatus::kPending: return "Pending";
    case SyncStatus::kUploading: return "Uploading";
    case SyncStatus::kSynced: return "Synced";
    case SyncStatus::kFailed: return "Failed";
  }
  return "Pending";
}

std::optional<SyncStatus> sync_status_from_string(std::string_view s) noexcept {
  for (auto st : {SyncStatus::kPending, SyncStatus::kUploading, SyncStatus::kSynced, SyncStatus::kFailed}) {
    if (to_string(st) == s) return st;
  }
  return std::nullopt;
}

bool is_valid_transition(SyncStatus from, SyncStatus to) noexcept {
  switch (from) {
    case SyncStatus::kPending: return to == SyncStatus::kUploading;
    case SyncStatus::kUploading: return to == SyncStatus::kSynced || to == SyncStatus::kFailed;
    case SyncStatus::kFailed: return to == SyncStatus::kUploading;
    case SyncStatus::kSynced: return false;
  }
  return false;
}

json record_document(const SlideRecord& r) {
  return {{"record_id", r.record_id},   {"device_id", r.device_id},   {"created_at", r.created_at},
          {"app_version", r.app_version}, {"slide_blob", r.slide_blob}, {"crop_blobs", r.crop_blobs},
          {"result", r.result}};
}

std::string record_document_hash(const SlideRecord& record) { return sha256_hex(record_document(record).dump()); }

SlideRecord record_from_document(const json& doc) {
  try {
    SlideRecord r;
    r.record_id = doc.at("record_id").get<std::string>();
    r.device_id = doc.at("device_id").get<std::string>();
    r.created_at = doc.at("created_at").get<std::string>();
    r.app_version = doc.value("app_version", std::string());
    r.slide_blob = doc.at("slide_blob").get<std::string>();
    r.crop_blobs = doc.at("crop_blobs").get<std::vector<std::string>>();
    r.result = doc.at("result");
    if (!r.result.is_object()) throw Error(ErrorCode::kSchemaError, "result must be an object");
    for (const auto& h : r.crop_blobs) {
      if (!is_sha256_hex(h)) throw Error(ErrorCode::kSchemaError, "bad crop blob hash");
    }
    if (!is_sha256_hex(r.slide_blob)) throw Error(ErrorCode::kSchemaError, "bad slide blob hash");
    return r;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kSchemaError, std::string("record document: ") + e.what());
  }
}

json to_journal_json(const SlideRecord& record) {
  json j = record_document(record);
  j["sync_state"] = state_json(record.sync);
  return j;
}

SlideRecord record_from_journal_json(const json& j) {
  SlideRecord r = record_from_document(j);
  try {
    r.sync = state_from_json(j.at("sync_state"));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kSchemaError, std::string("sync_state: ") + e.what());
  }
  return r;
}

std::string format_rfc3339(std::chrono::system_clock::time_point t) {
  using namespace std::chrono;
  const auto ms = time_point_cast<milliseconds>(t);
  auto secs = time_point_cast<seconds>(ms);
  long long frac = (ms - secs).count();
  if (frac < 0) {
    frac += 1000;
    secs -= seconds(1);
  }
  const std::time_t tt = system_clock::to_time_t(secs);
  std::tm tm{};
  gmtime_r(&tt, &tm);
  char buf[96];
  std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02d.%03lldZ", tm.tm_year + 1900, tm.tm_mon + 1, tm.tm_mday,
                tm.tm_hour, tm.tm_min, tm.tm_sec, frac);
  return buf;
}

std::chrono::system_clock::time_point parse_rfc3339(std::string_view s) {
  std::tm tm{};
  int ms = 0;
  const std::string str(s);
  int consumed = 0;
  if (std::sscanf(str.c_str(), "%4d-%2d-%2dT%2d:%2d:%2d%n", &tm.tm_year, &tm.tm_mon, &tm.tm_mday, &tm.tm_hour,
                  &tm.tm_min, &tm.tm_sec, &consumed) != 6) {
    throw Error(ErrorCode::kSchemaError, "bad timestamp '" + str + "'");
  }
  std::size_t pos = static_cast<std::size_t>(consumed);
  if (pos < str.size() && str[pos] == '.') {
    ++pos;
    int digits = 0;
    while (pos < str.size() && std::isdigit(static_cast<unsigned char>(str[pos]))) {
      if (digits < 3) ms = ms * 10 + (str[pos] - '0');
      ++digits;
      ++pos;
    }
    for (; digits < 3; ++digits) ms *= 10;
  }
  if (pos >= str.size() || (str[pos] != 'Z' && str[pos] != 'z')) {
    throw Error(ErrorCode::kSchemaError, "timestamp must be UTC: '" + str + "'");
  }
  tm.tm_year -= 1900;
  tm.tm_mon -= 1;
  const std::time_t tt = timegm(&tm);
  return std::chrono::system_clock::from_time_t(tt) + std::chrono::milliseconds(ms);
}

std::string random_uuid_v4() {
  thread_local boost::uuids::random_generator gen;
  return boost::uuids::to_string(gen());
}

// BlobStore

BlobStore::BlobStore(fs::path root) : root_(std::move(root)) { ensure_dir(root_); }

fs::path BlobStore::path_for(const std::string& hash) const {
  if (!is_sha256_hex(hash)) throw Error(ErrorCode::kInvalidArgument, "not a sha256 hex digest: '" + hash + "'");
  return root_ / hash.substr(0, 2) / hash;
}

bool BlobStore::contains(const std::string& hash) const {
  if (!is_sha256_hex(hash)) return false;
  std::error_code ec;
  return fs::is_regular_file(path_for(hash), ec);
}

std::string BlobStore::put(std::span<const std::uint8_t> bytes) {
  const std::string hash = sha256_hex(bytes);
  const fs::path target = path_for(hash);
  if (contains(hash)) return hash;
  ensure_dir(target.parent_path());

  std::string tmpl = (target.parent_path() / (".tmp-" + hash + "-XXXXXX")).string();
  Fd fd(::mkstemp(tmpl.data()));
  if (fd.get() < 0) throw_errno("cannot create temp blob", errno);
  try {
    write_all(fd.get(), bytes.data(), bytes.size(), "blob write");
    if (::fsync(fd.get()) != 0) throw_errno("blob fsync", errno);
    ::close(fd.release());
    if (::rename(tmpl.c_str(), target.c_str()) != 0) throw_errno("blob rename", errno);
  } catch (...) {
    ::unlink(tmpl.c_str());
    throw;
  }
  fsync_dir(target.parent_path());
  return hash;
}

std::vector<std::uint8_t> BlobStore::get(const std::string& hash) const {
  const fs::path p = path_for(hash);
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(ErrorCode::kNotFound, "blob " + hash);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::size_t BlobStore::count() const {
  std::size_t n = 0;
  std::error_code ec;
  for (const auto& e : fs::recursive_directory_iterator(root_, ec)) {
    if (e.is_regular_file() && is_sha256_hex(e.path().filename().string())) ++n;
  }
  return n;
}

// Store

Store::Store(fs::path root, StoreOptions options)
    : root_(std::move(root)), options_(std::move(options)), blobs_(root_ / "blobs") {
  if (!options_.id_source) options_.id_source = random_uuid_v4;
  if (!options_.clock) options_.clock = [] { return std::chrono::system_clock::now(); };
  reload();
}

void Store::reload() {
  std::lock_guard lock(mutex_);
  records_.clear();
  std::ifstream in(root_ / kJournalName, std::ios::binary);
  if (!in) return;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    // A torn final line (crash mid-append) fails to parse and is ignored.
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) continue;
    try {
      SlideRecord r = record_from_journal_json(j);
      records_[r.record_id] = std::move(r);
    } catch (const Error&) {
      continue;
    }
  }
}

void Store::append_locked(const SlideRecord& record) {
  std::string line = to_journal_json(record).dump() + "\n";
  const fs::path path = root_ / kJournalName;
  const bool existed = fs::exists(path);
  Fd fd(::open(path.c_str(), O_RDWR | O_APPEND | O_CREAT | O_CLOEXEC, 0644));
  if (fd.get() < 0) throw_errno("cannot open journal", errno);
  // After a torn append the file ends mid-line; start on a fresh one.
  const off_t size = ::lseek(fd.get(), 0, SEEK_END);
  char last = '\n';
  if (size > 0 && ::pread(fd.get(), &last, 1, size - 1) == 1 && last != '\n') line.insert(0, "\n");
  write_all(fd.get(), reinterpret_cast<const std::uint8_t*>(line.data()), line.size(), "journal append");
  if (::fsync(fd.get()) != 0) throw_errno("journal fsync", errno);
  if (!existed) fsync_dir(root_);
  records_[record.record_id] = record;
}

SlideRecord Store::save_record(const RasterImage& slide, std::span<const RasterImage> crops,
                               const ScreeningResult& result, const RasterImage& overlay) {
  std::multiset<std::string> expected;
  for (const auto& cell : result.cells) {
    if (cell.crop_ref) expected.insert(*cell.crop_ref);
  }
  std::vector<std::vector<std::uint8_t>> crop_png;
  std::multiset<std::string> actual;
  for (const auto& c : crops) {
    crop_png.push_back(encode_image(c, ImageFormat::kPng));
    actual.insert(sha256_hex(crop_png.back()));
  }
  if (expected != actual) throw Error(ErrorCode::kInvalidArgument, "crops do not match the result's crop references");
  const auto overlay_png = encode_image(overlay, ImageFormat::kPng);
  if (!result.overlay_ref.empty() && sha256_hex(overlay_png) != result.overlay_ref) {
    throw Error(ErrorCode::kInvalidArgument, "overlay does not match the result's overlay reference");
  }

  std::lock_guard lock(mutex_);
  SlideRecord record;
  record.slide_blob = blobs_.put(encode_image(slide, ImageFormat::kPng));
  for (const auto& png : crop_png) record.crop_blobs.push_back(blobs_.put(png));
  blobs_.put(overlay_png);

  record.record_id = options_.id_source();
  if (records_.count(record.record_id)) throw Error(ErrorCode::kInvalidArgument, "duplicate record id");
  record.device_id = options_.device_id;
  record.app_version = options_.app_version;
  record.created_at = format_rfc3339(options_.clock());
  record.result = to_json(result);
  append_locked(record);
  return record;
}

SlideRecord Store::save_run(const RasterImage& slide, const ScreeningRun& run) {
  return save_record(slide, run.crops, run.result, run.overlay);
}

std::optional<SlideRecord> Store::load(const std::string& record_id) const {
  std::lock_guard lock(mutex_);
  const auto it = records_.find(record_id);
  if (it == records_.end()) return std::nullopt;
  return it->second;
}

std::vector<SlideRecord> Store::sorted_locked() const {
  std::vector<SlideRecord> out;
  out.reserve(records_.size());
  for (const auto& [id, r] : records_) out.push_back(r);
  std::sort(out.begin(), out.end(), older);
  return out;
}

std::vector<SlideRecord> Store::records() const {
  std::lock_guard lock(mutex_);
  return sorted_locked();
}

std::vector<SlideRecord> Store::list_pending() const {
  std::lock_guard lock(mutex_);
  auto all = sorted_locked();
  std::erase_if(all, [](const SlideRecord& r) {
    return r.sync.status != SyncStatus::kPending && r.sync.status != SyncStatus::kFailed;
  });
  return all;
}

SlideRecord Store::transition(const std::string& record_id, const SyncState& next) {
  std::lock_guard lock(mutex_);
  const auto it = records_.find(record_id);
  if (it == records_.end()) throw Error(ErrorCode::kNotFound, "record " + record_id);
  if (!is_valid_transition(it->second.sync.status, next.status)) {
    throw Error(ErrorCode::kInvalidTransition, std::string(to_string(it->second.sync.status)) + " -> " +
                                                   std::string(to_string(next.status)) + " for " + record_id);
  }
  SlideRecord updated = it->second;
  updated.sync = next;
  append_locked(updated);
  return updated;
}

}  // namespace maiscope
