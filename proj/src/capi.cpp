#include "maiscope/maiscope.h"

#include <cstdlib>
#include <cstring>
#include <new>
#include <string>

#include "maiscope/commands.hpp"
#include "maiscope/error.hpp"
#include "maiscope/reference_server.hpp"
#include "maiscope/service.hpp"
#include "maiscope/synthetic.hpp"

struct ms_image {
  maiscope::RasterImage img;
};

struct ms_config {
  maiscope::AppConfig cfg;
};

struct ms_service {
  std::unique_ptr<maiscope::DeviceService> svc;
};

struct ms_refserver {
  std::unique_ptr<maiscope::ReferenceServer> srv;
};

namespace {

using maiscope::Error;
using maiscope::ErrorCode;

static_assert(static_cast<int>(ErrorCode::kInvalidTransition) == MS_INVALID_TRANSITION);
static_assert(static_cast<int>(ErrorCode::kOracleMiss) == MS_ORACLE_MISS);
static_assert(static_cast<int>(ErrorCode::kInternal) == MS_INTERNAL);

thread_local std::string last_error;

ms_status fail(ErrorCode code, const std::string& message) {
  last_error = message;
  return static_cast<ms_status>(code);
}

// Runs f, translating exceptions into status codes.
template <typename F>
ms_status guard(F&& f) {
  try {
    f();
    return MS_OK;
  } catch (const Error& e) {
    return fail(e.code(), e.what());
  } catch (const std::bad_alloc&) {
    return fail(ErrorCode::kInternal, "out of memory");
  } catch (const std::filesystem::filesystem_error& e) {
    return fail(ErrorCode::kIoFailure, e.what());
  } catch (const std::exception& e) {
    return fail(ErrorCode::kInternal, e.what());
  } catch (...) {
    return fail(ErrorCode::kInternal, "unknown exception");
  }
}

void require(bool ok, const char* what) {
  if (!ok) throw Error(ErrorCode::kInvalidArgument, what);
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void put_json(char** out, const nlohmann::json& j) { *out = dup_string(j.dump()); }

maiscope::ImageFormat to_format(ms_image_format f) {
  switch (f) {
    case MS_FORMAT_PPM: return maiscope::ImageFormat::kPpm;
    case MS_FORMAT_PNG: return maiscope::ImageFormat::kPng;
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown image format");
}

ms_image* wrap(maiscope::RasterImage img) { return new ms_image{std::move(img)}; }

}  // namespace

extern "C" {

const char* ms_version(void) { return MAISCOPE_VERSION; }

const char* ms_last_error(void) { return last_error.c_str(); }

const char* ms_status_name(ms_status status) {
  return maiscope::error_name(static_cast<ErrorCode>(status)).data();
}

void ms_string_free(char* s) { std::free(s); }

void ms_buffer_free(uint8_t* buf) { std::free(buf); }

ms_status ms_image_new(int width, int height, const uint8_t* rgb, ms_image** out) {
  return guard([&] {
    require(out != nullptr, "out is null");
    require(width >= 1 && height >= 1, "image dimensions must be positive");
    if (rgb) {
      const std::size_t n = static_cast<std::size_t>(width) * static_cast<std::size_t>(height) * 3;
      *out = wrap(maiscope::RasterImage(width, height, std::vector<std::uint8_t>(rgb, rgb + n)));
    } else {
      *out = wrap(maiscope::RasterImage(width, height));
    }
  });
}

ms_status ms_image_decode(const uint8_t* bytes, size_t len, ms_image_format format, ms_image** out) {
  return guard([&] {
    require(out != nullptr, "out is null");
    require(bytes != nullptr || len == 0, "bytes is null");
    *out = wrap(maiscope::decode_image(std::span<const std::uint8_t>(bytes, len), to_format(format)));
  });
}

ms_status ms_image_load(const char* path, ms_image** out) {
  return guard([&] {
    require(path && out, "null argument");
    *out = wrap(maiscope::load_image(path));
  });
}

ms_status ms_image_encode(const ms_image* img, ms_image_format format, uint8_t** out, size_t* len) {
  return guard([&] {
    require(img && out && len, "null argument");
    const auto bytes = maiscope::encode_image(img->img, to_format(format));
    auto* buf = static_cast<uint8_t*>(std::malloc(bytes.size() ? bytes.size() : 1));
    if (!buf) throw std::bad_alloc();
    std::memcpy(buf, bytes.data(), bytes.size());
    *out = buf;
    *len = bytes.size();
  });
}

ms_status ms_image_save(const ms_image* img, const char* path) {
  return guard([&] {
    require(img && path, "null argument");
    maiscope::save_image(img->img, path);
  });
}

ms_status ms_image_resize(const ms_image* img, int width, int height, ms_image** out) {
  return guard([&] {
    require(img && out, "null argument");
    *out = wrap(maiscope::resize(img->img, width, height));
  });
}

ms_status ms_image_crop(const ms_image* img, int top, int left, int bottom, int right, ms_image** out) {
  return guard([&] {
    require(img && out, "null argument");
    *out = wrap(maiscope::crop(img->img, {top, left, bottom, right}));
  });
}

int ms_image_width(const ms_image* img) { return img ? img->img.width() : 0; }

int ms_image_height(const ms_image* img) { return img ? img->img.height() : 0; }

const uint8_t* ms_image_data(const ms_image* img) { return img ? img->img.bytes().data() : nullptr; }

void ms_image_free(ms_image* img) { delete img; }

ms_status ms_config_new(ms_config** out) {
  return guard([&] {
    require(out != nullptr, "out is null");
    *out = new ms_config{};
  });
}

ms_status ms_config_load_file(ms_config* config, const char* path) {
  return guard([&] {
    require(config && path, "null argument");
    maiscope::apply_config_file(config->cfg, path);
  });
}

ms_status ms_config_set(ms_config* config, const char* key, const char* value) {
  return guard([&] {
    require(config && key && value, "null argument");
    maiscope::apply_setting(config->cfg, key, value);
  });
}

ms_status ms_config_apply_env(ms_config* config) {
  return guard([&] {
    require(config != nullptr, "config is null");
    maiscope::apply_environment(config->cfg);
  });
}

ms_status ms_config_validate(const ms_config* config) {
  return guard([&] {
    require(config != nullptr, "config is null");
    config->cfg.validate();
  });
}

ms_status ms_config_to_json(const ms_config* config, char** out_json) {
  return guard([&] {
    require(config && out_json, "null argument");
    put_json(out_json, maiscope::to_json(config->cfg));
  });
}

void ms_config_free(ms_config* config) { delete config; }

ms_status ms_screen_file(const ms_config* config, const char* input, const char* out_dir, int save,
                         char** out_json) {
  return guard([&] {
    require(config && input && out_json, "null argument");
    const auto out = maiscope::screen_file(config->cfg, input, out_dir ? out_dir : "", save != 0);
    nlohmann::json j = {{"result", maiscope::to_json(out.run.result)}, {"record", nullptr}};
    if (out.record) j["record"] = maiscope::to_journal_json(*out.record);
    put_json(out_json, j);
  });
}

ms_status ms_eval_det_dump(const char* preds_path, const char* gt_dir, size_t max_dets, char** out_json) {
  return guard([&] {
    require(preds_path && gt_dir && out_json, "null argument");
    require(max_dets > 0, "max_dets must be positive");
    put_json(out_json, maiscope::evaluate_dump(preds_path, gt_dir, {max_dets}));
  });
}

ms_status ms_eval_det_backend(const ms_config* config, const char* gt_dir, const char* images_dir,
                              const char* dump_path, size_t max_dets, char** out_json) {
  return guard([&] {
    require(config && gt_dir && out_json, "null argument");
    require(max_dets > 0, "max_dets must be positive");
    put_json(out_json, maiscope::evaluate_detector(config->cfg, gt_dir, images_dir ? images_dir : "",
                                                   dump_path ? dump_path : "", {max_dets}));
  });
}

ms_status ms_eval_cls(const ms_config* config, const char* root, double decision_threshold, char** out_json) {
  return guard([&] {
    require(config && root && out_json, "null argument");
    put_json(out_json, maiscope::evaluate_classifier(config->cfg, root, decision_threshold));
  });
}

void ms_slide_spec_default(ms_slide_spec* spec) {
  if (!spec) return;
  const maiscope::SyntheticSlideSpec d;
  spec->seed = d.seed;
  spec->n_rbc = d.n_rbc;
  spec->n_wbc = d.n_wbc;
  spec->n_platelet = d.n_platelet;
  spec->parasitized_fraction = d.parasitized_fraction;
  spec->width = d.width;
  spec->height = d.height;
  spec->contamination = d.contamination;
}

ms_status ms_gen_slides(const ms_slide_spec* spec, int count, const char* out_dir) {
  return guard([&] {
    require(spec && out_dir, "null argument");
    require(count >= 0, "count must not be negative");
    maiscope::SyntheticSlideSpec s;
    s.seed = spec->seed;
    s.n_rbc = spec->n_rbc;
    s.n_wbc = spec->n_wbc;
    s.n_platelet = spec->n_platelet;
    s.parasitized_fraction = spec->parasitized_fraction;
    s.width = spec->width;
    s.height = spec->height;
    s.contamination = spec->contamination;
    maiscope::generate_slide_set(s, count, out_dir);
  });
}

ms_status ms_store_list(const char* store_path, const char* state, char** out_json) {
  return guard([&] {
    require(store_path && out_json, "null argument");
    put_json(out_json, maiscope::list_records(store_path, state ? state : ""));
  });
}

ms_status ms_store_show(const char* store_path, const char* record_id, char** out_json) {
  return guard([&] {
    require(store_path && record_id && out_json, "null argument");
    put_json(out_json, maiscope::show_record(store_path, record_id));
  });
}

ms_status ms_sync_once(const ms_config* config, char** out_json) {
  return guard([&] {
    require(config && out_json, "null argument");
    const auto report = maiscope::run_sync(config->cfg);
    put_json(out_json, maiscope::to_json(report));
  });
}

ms_status ms_service_start(const ms_config* config, ms_service** out, int* bound_port) {
  return guard([&] {
    require(config && out, "null argument");
    auto svc = std::make_unique<maiscope::DeviceService>(config->cfg);
    const int port = svc->start();
    if (bound_port) *bound_port = port;
    *out = new ms_service{std::move(svc)};
  });
}

void ms_service_stop(ms_service* service) {
  if (!service) return;
  service->svc->stop();
  delete service;
}

ms_status ms_refserver_start(const char* state_dir, const char* host, int port, const char* token,
                             double fault_rate, uint64_t fault_seed, ms_refserver** out, int* bound_port) {
  return guard([&] {
    require(state_dir && out, "null argument");
    maiscope::ReferenceServerOptions opts;
    opts.state_dir = state_dir;
    opts.token = token ? token : "";
    opts.fault_rate = fault_rate;
    opts.fault_seed = fault_seed;
    auto srv = std::make_unique<maiscope::ReferenceServer>(opts);
    const int p = srv->start(host ? host : "127.0.0.1", port);
    if (bound_port) *bound_port = p;
    *out = new ms_refserver{std::move(srv)};
  });
}

void ms_refserver_stop(ms_refserver* server) {
  if (!server) return;
  server->srv->stop();
  delete server;
}

}  // extern "C"
