#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <fstream>
#include <set>

#include "doctest.h"
#include "maiscope/error.hpp"
#include "maiscope/hashing.hpp"
#include "maiscope/store.hpp"
#include "sample_runs.hpp"
#include "test_util.hpp"

using namespace maiscope;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::size_t count_files(const fs::path& dir) {
  std::size_t n = 0;
  for (const auto& e : fs::recursive_directory_iterator(dir)) n += e.is_regular_file() ? 1 : 0;
  return n;
}

SyncState state(SyncStatus s, int attempts = 0) {
  SyncState st;
  st.status = s;
  st.attempts = attempts;
  return st;
}

}  // namespace

TEST_CASE("empty blob hash") {
  TempDir dir;
  BlobStore blobs(dir / "blobs");
  const std::string h = blobs.put({});
  CHECK(h == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(blobs.path_for(h) == dir / "blobs" / "e3" / h);
  CHECK(blobs.contains(h));
  CHECK(blobs.get(h).empty());
  CHECK_THROWS_CODE(blobs.get(std::string(64, '0')), ErrorCode::kNotFound);
  CHECK_THROWS_CODE(blobs.path_for("../etc/passwd"), ErrorCode::kInvalidArgument);
  CHECK_FALSE(blobs.contains("XYZ"));
}

TEST_CASE("blob put is idempotent") {
  TempDir dir;
  BlobStore blobs(dir / "blobs");
  const std::vector<std::uint8_t> bytes{1, 2, 3};
  const auto a = blobs.put(bytes);
  const auto b = blobs.put(bytes);
  CHECK(a == b);
  CHECK(a == sha256_hex(bytes));
  CHECK(blobs.count() == 1);
  CHECK(blobs.get(a) == bytes);
}

TEST_CASE("sync state machine") {
  using S = SyncStatus;
  const std::set<std::pair<S, S>> allowed{
      {S::kPending, S::kUploading}, {S::kUploading, S::kSynced}, {S::kUploading, S::kFailed}, {S::kFailed, S::kUploading}};
  for (S a : {S::kPending, S::kUploading, S::kSynced, S::kFailed})
    for (S b : {S::kPending, S::kUploading, S::kSynced, S::kFailed}) CHECK(is_valid_transition(a, b) == allowed.count({a, b}));
  for (S a : {S::kPending, S::kUploading, S::kSynced, S::kFailed}) CHECK(sync_status_from_string(to_string(a)) == a);
  CHECK_FALSE(sync_status_from_string("Done").has_value());
}

TEST_CASE("timestamps") {
  const auto t = std::chrono::system_clock::time_point(std::chrono::milliseconds(1'700'000'000'123LL));
  const auto s = format_rfc3339(t);
  CHECK(s == "2023-11-14T22:13:20.123Z");
  CHECK(parse_rfc3339(s) == t);
  CHECK(parse_rfc3339("2023-11-14T22:13:20Z") == t - std::chrono::milliseconds(123));
  CHECK_THROWS_CODE(parse_rfc3339("yesterday"), ErrorCode::kSchemaError);
}

TEST_CASE("save then load round-trips bit-exactly") {
  TempDir dir;
  FakeTime time;
  const auto sample = sample_run(3);
  SlideRecord saved;
  {
    Store store(dir.path(), time.options());
    saved = store.save_run(sample.slide.image, sample.run);
  }
  Store store(dir.path(), time.options());
  const auto loaded = store.load(saved.record_id);
  REQUIRE(loaded);
  CHECK(to_journal_json(*loaded) == to_journal_json(saved));
  CHECK(loaded->sync.status == SyncStatus::kPending);
  CHECK(loaded->device_id == "test-device");
  CHECK(loaded->created_at == "2023-11-14T22:13:20.000Z");
  CHECK(screening_result_from_json(loaded->result) == sample.run.result);

  const auto slide_png = store.blobs().get(loaded->slide_blob);
  CHECK(slide_png == encode_image(sample.slide.image, ImageFormat::kPng));
  CHECK(decode_image(slide_png, ImageFormat::kPng) == sample.slide.image);
  REQUIRE(loaded->crop_blobs.size() == sample.run.crops.size());
  for (std::size_t i = 0; i < sample.run.crops.size(); ++i)
    CHECK(decode_image(store.blobs().get(loaded->crop_blobs[i]), ImageFormat::kPng) == sample.run.crops[i]);
  CHECK(decode_image(store.blobs().get(sample.run.result.overlay_ref), ImageFormat::kPng) == sample.run.overlay);
  CHECK_FALSE(store.load("nope"));
}

TEST_CASE("record document schema") {
  TempDir dir;
  FakeTime time;
  Store store(dir.path(), time.options());
  const auto sample = sample_run(4);
  const auto r = store.save_run(sample.slide.image, sample.run);
  const auto doc = record_document(r);
  for (const char* key : {"record_id", "device_id", "created_at", "slide_blob", "crop_blobs", "result", "app_version"})
    CHECK(doc.contains(key));
  CHECK_FALSE(doc.contains("sync_state"));
  for (const char* key : {"cells", "infected_count", "uninfected_count", "parasitemia_pct", "wbc_count", "platelet_count"})
    CHECK(doc["result"].contains(key));
  CHECK(to_journal_json(record_from_document(doc)) == to_journal_json([&] {
          auto copy = r;
          copy.sync = {};
          return copy;
        }()));
  CHECK(record_document_hash(r) == sha256_hex(doc.dump()));
  auto bad = doc;
  bad["slide_blob"] = "abc";
  CHECK_THROWS_CODE(record_from_document(bad), ErrorCode::kSchemaError);
}

TEST_CASE("identical slides share one blob") {
  TempDir dir;
  FakeTime time;
  Store store(dir.path(), time.options());
  const auto sample = sample_run(5);
  const auto a = store.save_run(sample.slide.image, sample.run);
  const auto blobs_after_one = store.blobs().count();
  const auto b = store.save_run(sample.slide.image, sample.run);
  CHECK(a.record_id != b.record_id);
  CHECK(a.slide_blob == b.slide_blob);
  CHECK(store.records().size() == 2);
  CHECK(store.blobs().count() == blobs_after_one);
}

TEST_CASE("save rejects crops and overlays that do not match the result") {
  TempDir dir;
  Store store(dir.path(), FakeTime{}.options());
  const auto sample = sample_run(6);
  REQUIRE_FALSE(sample.run.crops.empty());
  std::vector<RasterImage> crops = sample.run.crops;
  crops.pop_back();
  CHECK_THROWS_CODE(store.save_record(sample.slide.image, crops, sample.run.result, sample.run.overlay),
                    ErrorCode::kInvalidArgument);
  CHECK_THROWS_CODE(store.save_record(sample.slide.image, sample.run.crops, sample.run.result, sample.slide.image),
                    ErrorCode::kInvalidArgument);
  CHECK(store.records().empty());
}

TEST_CASE("list_pending filters and orders") {
  TempDir dir;
  FakeTime time;
  Store store(dir.path(), time.options());
  CHECK(store.list_pending().empty());
  const auto sample = sample_run(7);
  const auto r1 = store.save_run(sample.slide.image, sample.run);
  const auto r2 = store.save_run(sample.slide.image, sample.run);
  const auto r3 = store.save_run(sample.slide.image, sample.run);
  store.transition(r2.record_id, state(SyncStatus::kUploading));
  store.transition(r2.record_id, state(SyncStatus::kSynced));
  auto pending = store.list_pending();
  REQUIRE(pending.size() == 2);
  CHECK(pending[0].record_id == r1.record_id);
  CHECK(pending[1].record_id == r3.record_id);

  store.transition(r3.record_id, state(SyncStatus::kUploading));
  pending = store.list_pending();
  REQUIRE(pending.size() == 1);
  CHECK(pending[0].record_id == r1.record_id);

  store.transition(r3.record_id, state(SyncStatus::kFailed, 1));
  CHECK(store.list_pending().size() == 2);
}

TEST_CASE("ordering ties break by record id") {
  TempDir dir;
  FakeTime time;
  time.step_ms = 0;
  auto opts = time.options();
  int n = 0;
  opts.id_source = [&n] { return std::string(n++ % 2 ? "aaa" : "zzz") + std::to_string(n); };
  Store store(dir.path(), opts);
  const auto sample = sample_run(8);
  for (int i = 0; i < 4; ++i) store.save_run(sample.slide.image, sample.run);
  const auto all = store.records();
  for (std::size_t i = 1; i < all.size(); ++i) CHECK(all[i - 1].record_id < all[i].record_id);
}

TEST_CASE("illegal transitions are rejected and nothing is journaled") {
  TempDir dir;
  Store store(dir.path(), FakeTime{}.options());
  const auto sample = sample_run(9);
  const auto r = store.save_run(sample.slide.image, sample.run);
  const auto journal = slurp(dir / "journal.jsonl");
  CHECK_THROWS_CODE(store.transition(r.record_id, state(SyncStatus::kSynced)), ErrorCode::kInvalidTransition);
  CHECK_THROWS_CODE(store.transition("missing", state(SyncStatus::kUploading)), ErrorCode::kNotFound);
  CHECK(slurp(dir / "journal.jsonl") == journal);
  store.transition(r.record_id, state(SyncStatus::kUploading));
  store.transition(r.record_id, state(SyncStatus::kSynced));
  for (auto s : {SyncStatus::kPending, SyncStatus::kUploading, SyncStatus::kFailed, SyncStatus::kSynced})
    CHECK_THROWS_CODE(store.transition(r.record_id, state(s)), ErrorCode::kInvalidTransition);
  Store again(dir.path());
  CHECK(again.load(r.record_id)->sync.status == SyncStatus::kSynced);
}

TEST_CASE("torn journal lines are skipped and later appends survive") {
  TempDir dir;
  FakeTime time;
  const auto sample = sample_run(10);
  std::string first;
  {
    Store store(dir.path(), time.options());
    first = store.save_run(sample.slide.image, sample.run).record_id;
  }
  {
    std::ofstream out(dir / "journal.jsonl", std::ios::app | std::ios::binary);
    out << "{\"record_id\":\"torn\",\"device_";
  }
  Store store(dir.path(), time.options());
  CHECK(store.records().size() == 1);
  const auto second = store.save_run(sample.slide.image, sample.run).record_id;
  Store reread(dir.path());
  CHECK(reread.records().size() == 2);
  CHECK(reread.load(first));
  CHECK(reread.load(second));
}

TEST_CASE("killing the writer never leaves a record without its blobs") {
  const auto sample = sample_run(11, 12);
  std::size_t survived = 0;
  for (int trial = 0; trial < 6; ++trial) {
    TempDir dir;
    const pid_t pid = ::fork();
    REQUIRE(pid >= 0);
    if (pid == 0) {
      try {
        Store store(dir.path());
        for (;;) store.save_run(sample.slide.image, sample.run);
      } catch (...) {
      }
      ::_exit(0);
    }
    ::usleep(150000 + trial * 70000);
    ::kill(pid, SIGKILL);
    int status = 0;
    ::waitpid(pid, &status, 0);
    Store store(dir.path());
    survived += store.records().size();
    for (const auto& r : store.records()) {
      CHECK(store.blobs().contains(r.slide_blob));
      for (const auto& c : r.crop_blobs) CHECK(store.blobs().contains(c));
      CHECK(store.blobs().contains(r.result["overlay_ref"].get<std::string>()));
    }
    // No temp files are mistaken for blobs.
    for (const auto& e : fs::recursive_directory_iterator(dir / "blobs")) {
      if (!e.is_regular_file()) continue;
      const auto name = e.path().filename().string();
      if (name.size() == 64) CHECK(sha256_hex(slurp(e.path())) == name);
    }
  }
  CHECK(survived > 0);
}

TEST_CASE("default ids are UUID v4") {
  const auto id = random_uuid_v4();
  CHECK(id.size() == 36);
  CHECK(id[14] == '4');
  CHECK(std::string("89ab").find(id[19]) != std::string::npos);
  CHECK(random_uuid_v4() != id);
}

TEST_CASE("store files follow the documented layout") {
  TempDir dir;
  Store store(dir.path(), FakeTime{}.options());
  const auto sample = sample_run(12);
  const auto r = store.save_run(sample.slide.image, sample.run);
  CHECK(fs::exists(dir / "journal.jsonl"));
  CHECK(fs::exists(dir / "blobs" / r.slide_blob.substr(0, 2) / r.slide_blob));
  CHECK(count_files(dir / "blobs") == store.blobs().count());
}
