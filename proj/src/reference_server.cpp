#include "maiscope/reference_server.hpp"

#include <fstream>
#include <mutex>
#include <random>
#include <thread>

#include "httplib.h"
#include "json.hpp"
#include "maiscope/error.hpp"
#include "maiscope/hashing.hpp"
#include "maiscope/store.hpp"

namespace maiscope {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum class Fault { kNone, kServerError, kDrop, kLate };

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_atomic(const fs::path& target, std::string_view bytes) {
  fs::create_directories(target.parent_path());
  const fs::path tmp = target.parent_path() / (".tmp-" + target.filename().string());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorCode::kIoFailure, "cannot write " + tmp.string());
  }
  fs::rename(tmp, target);
}

void reply_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

}  // namespace

struct ReferenceServer::Impl {
  ReferenceServerOptions options;
  httplib::Server server;
  std::thread thread;
  int port = 0;
  std::string host;
  mutable std::mutex state_mutex;
  std::mutex rng_mutex;
  std::mt19937_64 rng;

  explicit Impl(ReferenceServerOptions o) : options(std::move(o)), rng(options.fault_seed) {}

  fs::path blob_path(const std::string& hash) const { return options.state_dir / "blobs" / hash.substr(0, 2) / hash; }
  fs::path record_path(const std::string& id) const { return options.state_dir / "records" / (id + ".json"); }

  Fault draw_fault() {
    if (options.fault_rate <= 0.0) return Fault::kNone;
    std::lock_guard lock(rng_mutex);
    const double u = static_cast<double>(rng() >> 11) / 9007199254740992.0;
    if (u >= options.fault_rate) return Fault::kNone;
    switch (rng() % 3) {
      case 0: return Fault::kServerError;
      case 1: return Fault::kDrop;
      default: return Fault::kLate;
    }
  }

  bool authorized(const httplib::Request& req) const {
    if (options.token.empty()) return true;
    return req.get_header_value("Authorization") == "Bearer " + options.token;
  }

  // Wraps a handler with auth and fault injection.
  template <typename F>
  httplib::Server::Handler guarded(F handler) {
    return [this, handler](const httplib::Request& req, httplib::Response& res) {
      if (!authorized(req)) {
        reply_json(res, 401, {{"error", "unauthorized"}});
        return;
      }
      const Fault fault = draw_fault();
      switch (fault) {
        case Fault::kServerError:
          reply_json(res, 500, {{"error", "injected fault"}});
          return;
        case Fault::kDrop:
          std::this_thread::sleep_for(options.fault_delay);
          reply_json(res, 503, {{"error", "injected drop"}});
          return;
        case Fault::kLate:
          handler(req, res);
          std::this_thread::sleep_for(options.fault_delay);
          return;
        case Fault::kNone:
          handler(req, res);
          return;
      }
    };
  }

  void put_blob(const httplib::Request& req, httplib::Response& res) {
    const std::string hash = req.matches[1];
    if (sha256_hex(req.body) != hash) {
      reply_json(res, 400, {{"error", "body does not hash to " + hash}});
      return;
    }
    std::lock_guard lock(state_mutex);
    const fs::path p = blob_path(hash);
    if (fs::exists(p)) {
      reply_json(res, 200, {{"hash", hash}});
      return;
    }
    write_atomic(p, req.body);
    reply_json(res, 201, {{"hash", hash}});
  }

  void put_record(const httplib::Request& req, httplib::Response& res) {
    const std::string id = req.matches[1];
    if (options.failing_records.count(id)) {
      reply_json(res, 500, {{"error", "configured failure"}});
      return;
    }
    const json doc = json::parse(req.body, nullptr, false);
    if (doc.is_discarded() || !doc.is_object()) {
      reply_json(res, 400, {{"error", "malformed JSON"}});
      return;
    }
    SlideRecord record;
    try {
      record = record_from_document(doc);
    } catch (const Error& e) {
      reply_json(res, 400, {{"error", e.what()}});
      return;
    }
    if (record.record_id != id) {
      reply_json(res, 400, {{"error", "record_id does not match the URL"}});
      return;
    }
    const std::string stored_doc = doc.dump();
    const std::string hash = sha256_hex(stored_doc);

    std::lock_guard lock(state_mutex);
    const fs::path p = record_path(id);
    if (fs::exists(p)) {
      const std::string stored_hash = sha256_hex(read_file(p));
      reply_json(res, 409, {{"record_id", id}, {"stored_hash", stored_hash}, {"mismatch", stored_hash != hash}});
      return;
    }
    std::vector<std::string> refs{record.slide_blob};
    refs.insert(refs.end(), record.crop_blobs.begin(), record.crop_blobs.end());
    for (const auto& h : refs) {
      if (!fs::exists(blob_path(h))) {
        reply_json(res, 422, {{"error", "missing blob " + h}});
        return;
      }
    }
    write_atomic(p, stored_doc);
    reply_json(res, 201, {{"record_id", id}, {"hash", hash}});
  }

  void get_record(const httplib::Request& req, httplib::Response& res) {
    const std::string id = req.matches[1];
    std::lock_guard lock(state_mutex);
    const fs::path p = record_path(id);
    if (!fs::exists(p)) {
      reply_json(res, 404, {{"error", "no record " + id}});
      return;
    }
    res.status = 200;
    res.set_content(read_file(p), "application/json");
  }
};

ReferenceServer::ReferenceServer(ReferenceServerOptions options) : impl_(std::make_unique<Impl>(std::move(options))) {
  if (impl_->options.state_dir.empty()) throw Error(ErrorCode::kBadConfig, "reference server needs a state directory");
  if (impl_->options.fault_rate < 0.0 || impl_->options.fault_rate > 1.0) {
    throw Error(ErrorCode::kBadConfig, "fault rate must lie in [0,1]");
  }
  fs::create_directories(impl_->options.state_dir / "blobs");
  fs::create_directories(impl_->options.state_dir / "records");

  auto& svr = impl_->server;
  Impl* self = impl_.get();
  svr.Get("/v1/health", self->guarded([](const httplib::Request&, httplib::Response& res) {
    reply_json(res, 200, {{"status", "ok"}, {"version", MAISCOPE_VERSION}});
  }));
  svr.Put(R"(/v1/blobs/([0-9a-f]{64}))",
          self->guarded([self](const httplib::Request& req, httplib::Response& res) { self->put_blob(req, res); }));
  svr.Put(R"(/v1/records/([A-Za-z0-9._-]+))",
          self->guarded([self](const httplib::Request& req, httplib::Response& res) { self->put_record(req, res); }));
  svr.Get(R"(/v1/records/([A-Za-z0-9._-]+))",
          self->guarded([self](const httplib::Request& req, httplib::Response& res) { self->get_record(req, res); }));
  svr.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    std::string what = "internal error";
    try {
      std::rethrow_exception(ep);
    } catch (const std::exception& e) {
      what = e.what();
    } catch (...) {
    }
    reply_json(res, 500, {{"error", what}});
  });
}

ReferenceServer::~ReferenceServer() { stop(); }

int ReferenceServer::start(const std::string& host, int port) {
  auto& svr = impl_->server;
  int bound = port;
  // httplib defaults to SO_REUSEPORT, which lets a second server share the port.
  svr.set_socket_options([](socket_t sock) {
    int yes = 1;
    ::setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
  });
  if (port == 0) {
    bound = svr.bind_to_any_port(host);
    if (bound < 0) throw Error(ErrorCode::kPortInUse, "cannot bind " + host);
  } else if (!svr.bind_to_port(host, port)) {
    throw Error(ErrorCode::kPortInUse, host + ":" + std::to_string(port));
  }
  impl_->port = bound;
  impl_->host = host;
  impl_->thread = std::thread([&svr] { svr.listen_after_bind(); });
  svr.wait_until_ready();
  return bound;
}

void ReferenceServer::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

void ReferenceServer::wait() {
  if (impl_->thread.joinable()) impl_->thread.join();
}

std::string ReferenceServer::endpoint() const { return "http://" + impl_->host + ":" + std::to_string(impl_->port); }

std::size_t ReferenceServer::record_count() const {
  std::lock_guard lock(impl_->state_mutex);
  std::size_t n = 0;
  for (const auto& e : fs::directory_iterator(impl_->options.state_dir / "records")) {
    if (e.path().extension() == ".json" && e.path().filename().string()[0] != '.') ++n;
  }
  return n;
}

std::size_t ReferenceServer::blob_count() const {
  std::lock_guard lock(impl_->state_mutex);
  std::size_t n = 0;
  for (const auto& e : fs::recursive_directory_iterator(impl_->options.state_dir / "blobs")) {
    if (e.is_regular_file() && is_sha256_hex(e.path().filename().string())) ++n;
  }
  return n;
}

std::string ReferenceServer::state_digest() const {
  std::lock_guard lock(impl_->state_mutex);
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(impl_->options.state_dir)) {
    if (e.is_regular_file()) files.push_back(fs::relative(e.path(), impl_->options.state_dir));
  }
  std::sort(files.begin(), files.end());
  std::string acc;
  for (const auto& f : files) {
    acc += f.generic_string();
    acc.push_back('\0');
    acc += sha256_hex(read_file(impl_->options.state_dir / f));
    acc.push_back('\n');
  }
  return sha256_hex(acc);
}

}  // namespace maiscope
