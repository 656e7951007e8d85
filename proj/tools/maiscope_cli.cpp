// maiscope command-line front end. Talks to libmaiscope through the C API only.

#include <csignal>
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "maiscope/maiscope.h"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

struct Failure {
  int exit_code;
};

// Status -> exit code; configuration problems count as usage errors.
void check(ms_status st) {
  if (st == MS_OK) return;
  std::cerr << "maiscope: " << ms_last_error() << "\n";
  throw Failure{st == MS_BAD_CONFIG || st == MS_INVALID_ARGUMENT ? kExitUsage : kExitRuntime};
}

std::string take(char* s) {
  std::string out = s ? s : "";
  ms_string_free(s);
  return out;
}

void print_json(const std::string& text) { std::cout << nlohmann::json::parse(text).dump(2) << "\n"; }

class Config {
 public:
  Config() { check(ms_config_new(&cfg_)); }
  ~Config() { ms_config_free(cfg_); }
  Config(const Config&) = delete;
  Config& operator=(const Config&) = delete;

  void set(const std::string& key, const std::string& value) { check(ms_config_set(cfg_, key.c_str(), value.c_str())); }
  const ms_config* get() const { return cfg_; }
  ms_config* get() { return cfg_; }

 private:
  ms_config* cfg_ = nullptr;
};

// Flags shared by every subcommand that builds a configuration.
struct CommonFlags {
  std::string config_file;
  std::vector<std::string> settings;  // key=value
  // Flag-level overrides, applied last.
  std::vector<std::pair<std::string, std::string>> overrides;
};

void build_config(Config& cfg, const CommonFlags& flags) {
  if (!flags.config_file.empty()) check(ms_config_load_file(cfg.get(), flags.config_file.c_str()));
  check(ms_config_apply_env(cfg.get()));
  for (const auto& kv : flags.settings) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) {
      std::cerr << "maiscope: --set expects key=value, got '" << kv << "'\n";
      throw Failure{kExitUsage};
    }
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  for (const auto& [k, v] : flags.overrides) cfg.set(k, v);
  check(ms_config_validate(cfg.get()));
}

// Registers an option whose value becomes a config override when given.
void override_option(CLI::App* app, CommonFlags& flags, const std::string& name, const std::string& key,
                     const std::string& help) {
  app->add_option_function<std::string>(
      name, [&flags, key](const std::string& v) { flags.overrides.emplace_back(key, v); }, help);
}

void add_common(CLI::App* app, CommonFlags& flags) {
  app->add_option("--config", flags.config_file, "Configuration file")->check(CLI::ExistingFile);
  app->add_option("--set", flags.settings, "Override a setting, key=value (repeatable)");
}

sigset_t termination_signals() {
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  return set;
}

void wait_for_signal() {
  const sigset_t set = termination_signals();
  int sig = 0;
  sigwait(&set, &sig);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"maiscope: blood-smear screening pipeline, evaluation and device tools"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(ms_version()));

  // screen
  CommonFlags screen_flags;
  std::string screen_input, screen_out;
  bool screen_save = false;
  auto* screen = app.add_subcommand("screen", "Run one slide image through the pipeline");
  add_common(screen, screen_flags);
  screen->add_option("--input", screen_input, "Slide image (.ppm or .png)")->required()->check(CLI::ExistingFile);
  screen->add_option("--out", screen_out, "Output directory for result.json, overlay.png and crops/");
  screen->add_flag("--save", screen_save, "Also save the result into the store");
  override_option(screen, screen_flags, "--detector", "detector.backend", "oracle | heuristic | external");
  override_option(screen, screen_flags, "--classifier", "classifier.backend", "oracle | heuristic | external");
  override_option(screen, screen_flags, "--fixtures", "oracle.fixtures", "Oracle fixture directory");
  override_option(screen, screen_flags, "--threshold", "pipeline.malaria_threshold", "Malaria threshold");
  override_option(screen, screen_flags, "--score-floor", "detector.score_floor", "Detection score floor");
  override_option(screen, screen_flags, "--nms-iou", "detector.nms_iou", "NMS IoU");
  override_option(screen, screen_flags, "--store", "store.path", "Store directory");
  override_option(screen, screen_flags, "--labels", "pipeline.draw_labels", "Draw class letters (true|false)");

  // eval-det
  CommonFlags det_flags;
  std::string det_gt, det_preds, det_images, det_dump;
  std::size_t det_max = 100;
  auto* eval_det = app.add_subcommand("eval-det", "Detection AP family against a VOC directory");
  add_common(eval_det, det_flags);
  eval_det->add_option("--gt", det_gt, "Directory of VOC XML files")->required()->check(CLI::ExistingDirectory);
  auto* preds_opt = eval_det->add_option("--preds", det_preds, "Prediction dump (JSON lines)")->check(CLI::ExistingFile);
  override_option(eval_det, det_flags, "--detector", "detector.backend", "Run this detector instead of --preds");
  override_option(eval_det, det_flags, "--fixtures", "oracle.fixtures", "Oracle fixture directory");
  eval_det->add_option("--images", det_images, "Image directory (default: --gt)");
  eval_det->add_option("--dump", det_dump, "Write the detector's predictions here");
  eval_det->add_option("--max-dets", det_max, "Detections kept per image and class")->check(CLI::PositiveNumber);

  // eval-cls
  CommonFlags cls_flags;
  std::string cls_root;
  double cls_threshold = 0.5;
  auto* eval_cls = app.add_subcommand("eval-cls", "Classifier accuracy on a Parasitized/Uninfected tree");
  add_common(eval_cls, cls_flags);
  eval_cls->add_option("--root", cls_root, "Dataset root")->required()->check(CLI::ExistingDirectory);
  eval_cls->add_option("--threshold", cls_threshold, "Decision threshold on p_infected");
  override_option(eval_cls, cls_flags, "--classifier", "classifier.backend", "oracle | heuristic | external");

  // gen-slides
  ms_slide_spec spec;
  ms_slide_spec_default(&spec);
  int gen_count = 1;
  std::string gen_out;
  auto* gen = app.add_subcommand("gen-slides", "Write synthetic slides with ground truth");
  gen->add_option("--seed", spec.seed, "Seed of the first slide");
  gen->add_option("--count", gen_count, "Number of slides")->check(CLI::NonNegativeNumber);
  gen->add_option("--out", gen_out, "Output directory")->required();
  gen->add_option("--rbc", spec.n_rbc, "Red cells per slide");
  gen->add_option("--wbc", spec.n_wbc, "White cells per slide");
  gen->add_option("--platelets", spec.n_platelet, "Platelets per slide");
  gen->add_option("--fraction", spec.parasitized_fraction, "Fraction of red cells parasitized");
  gen->add_option("--width", spec.width, "Slide width");
  gen->add_option("--height", spec.height, "Slide height");
  gen->add_option("--contamination", spec.contamination, "Dirt specks per slide");

  // serve
  CommonFlags serve_flags;
  auto* serve = app.add_subcommand("serve", "Run the device HTTP service");
  add_common(serve, serve_flags);
  override_option(serve, serve_flags, "--port", "server.port", "Port (0 picks one)");
  override_option(serve, serve_flags, "--host", "server.host", "Bind address");
  override_option(serve, serve_flags, "--camera-kind", "camera.kind", "directory | file | live");
  override_option(serve, serve_flags, "--camera-path", "camera.path", "Frame directory or file");
  override_option(serve, serve_flags, "--store", "store.path", "Store directory");
  override_option(serve, serve_flags, "--static", "server.static_dir", "Console assets served at /");
  override_option(serve, serve_flags, "--detector", "detector.backend", "oracle | heuristic | external");
  override_option(serve, serve_flags, "--classifier", "classifier.backend", "oracle | heuristic | external");
  override_option(serve, serve_flags, "--fixtures", "oracle.fixtures", "Oracle fixture directory");
  override_option(serve, serve_flags, "--endpoint", "sync.endpoint", "Cloud endpoint for /v1/sync");

  // sync
  CommonFlags sync_flags;
  auto* sync = app.add_subcommand("sync", "Upload pending records once");
  add_common(sync, sync_flags);
  override_option(sync, sync_flags, "--endpoint", "sync.endpoint", "Cloud endpoint, http://host:port");
  override_option(sync, sync_flags, "--store", "store.path", "Store directory");

  // store ls | show
  CommonFlags store_flags;
  std::string store_state, store_id;
  auto* store = app.add_subcommand("store", "Inspect the local store");
  add_common(store, store_flags);
  override_option(store, store_flags, "--store", "store.path", "Store directory");
  store->require_subcommand(1);
  store->fallthrough();  // "store ls --store d" as well as "store --store d ls"
  auto* store_ls = store->add_subcommand("ls", "List records");
  store_ls->fallthrough();
  store_ls->add_option("--state", store_state, "Pending | Uploading | Synced | Failed");
  auto* store_show = store->add_subcommand("show", "Show one record");
  store_show->fallthrough();
  store_show->add_option("id", store_id, "Record id")->required();

  // refserver
  std::string ref_dir, ref_host = "127.0.0.1", ref_token;
  int ref_port = 8090;
  double ref_fault = 0.0;
  std::uint64_t ref_seed = 0;
  auto* ref = app.add_subcommand("refserver", "Run the reference cloud endpoint");
  ref->add_option("--state-dir", ref_dir, "Server state directory")->required();
  ref->add_option("--host", ref_host, "Bind address");
  ref->add_option("--port", ref_port, "Port (0 picks one)");
  ref->add_option("--token", ref_token, "Required bearer token");
  ref->add_option("--fault-rate", ref_fault, "Fraction of requests to fail")->check(CLI::Range(0.0, 1.0));
  ref->add_option("--fault-seed", ref_seed, "Fault injection seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (screen->parsed()) {
      Config cfg;
      build_config(cfg, screen_flags);
      char* out = nullptr;
      check(ms_screen_file(cfg.get(), screen_input.c_str(), screen_out.empty() ? nullptr : screen_out.c_str(),
                           screen_save ? 1 : 0, &out));
      const auto j = nlohmann::json::parse(take(out));
      const auto& r = j["result"];
      nlohmann::json summary = {{"infected_count", r["infected_count"]},
                                {"uninfected_count", r["uninfected_count"]},
                                {"parasitemia_pct", r["parasitemia_pct"]},
                                {"wbc_count", r["wbc_count"]},
                                {"platelet_count", r["platelet_count"]},
                                {"overlay_ref", r["overlay_ref"]}};
      if (!j["record"].is_null()) summary["record_id"] = j["record"]["record_id"];
      std::cout << summary.dump(2) << "\n";
    } else if (eval_det->parsed()) {
      Config cfg;
      build_config(cfg, det_flags);
      const bool with_backend =
          std::any_of(det_flags.overrides.begin(), det_flags.overrides.end(),
                      [](const auto& kv) { return kv.first == "detector.backend"; });
      if (with_backend == (preds_opt->count() > 0)) {
        std::cerr << "maiscope: eval-det needs exactly one of --preds or --detector\n";
        return kExitUsage;
      }
      char* out = nullptr;
      if (preds_opt->count() > 0) {
        check(ms_eval_det_dump(det_preds.c_str(), det_gt.c_str(), det_max, &out));
      } else {
        check(ms_eval_det_backend(cfg.get(), det_gt.c_str(), det_images.empty() ? nullptr : det_images.c_str(),
                                  det_dump.empty() ? nullptr : det_dump.c_str(), det_max, &out));
      }
      print_json(take(out));
    } else if (eval_cls->parsed()) {
      Config cfg;
      build_config(cfg, cls_flags);
      char* out = nullptr;
      check(ms_eval_cls(cfg.get(), cls_root.c_str(), cls_threshold, &out));
      print_json(take(out));
    } else if (gen->parsed()) {
      check(ms_gen_slides(&spec, gen_count, gen_out.c_str()));
      std::cout << "wrote " << gen_count << " slide(s) to " << gen_out << "\n";
    } else if (serve->parsed()) {
      Config cfg;
      build_config(cfg, serve_flags);
      const sigset_t set = termination_signals();
      pthread_sigmask(SIG_BLOCK, &set, nullptr);
      ms_service* svc = nullptr;
      int port = 0;
      check(ms_service_start(cfg.get(), &svc, &port));
      std::cout << "serving on port " << port << std::endl;
      wait_for_signal();
      ms_service_stop(svc);
    } else if (sync->parsed()) {
      Config cfg;
      build_config(cfg, sync_flags);
      char* out = nullptr;
      check(ms_sync_once(cfg.get(), &out));
      const std::string report = take(out);
      print_json(report);
      const auto j = nlohmann::json::parse(report);
      if (j["unreachable_batches"].get<int>() > 0 && j["uploaded"].get<int>() == 0 && j["failed"].get<int>() == 0) {
        std::cerr << "maiscope: EndpointUnreachable: no batch could reach the endpoint\n";
        return kExitRuntime;
      }
    } else if (store->parsed()) {
      Config cfg;
      build_config(cfg, store_flags);
      char* cfg_json = nullptr;
      check(ms_config_to_json(cfg.get(), &cfg_json));
      const std::string path = nlohmann::json::parse(take(cfg_json))["store.path"];
      char* out = nullptr;
      if (store_ls->parsed()) {
        check(ms_store_list(path.c_str(), store_state.empty() ? nullptr : store_state.c_str(), &out));
        for (const auto& r : nlohmann::json::parse(take(out))) {
          std::printf("%s  %s  %-9s  infected=%s uninfected=%s\n", r["record_id"].get<std::string>().c_str(),
                      r["created_at"].get<std::string>().c_str(),
                      r["sync_state"]["status"].get<std::string>().c_str(),
                      r["result"]["infected_count"].dump().c_str(), r["result"]["uninfected_count"].dump().c_str());
        }
      } else {
        check(ms_store_show(path.c_str(), store_id.c_str(), &out));
        print_json(take(out));
      }
    } else if (ref->parsed()) {
      const sigset_t set = termination_signals();
      pthread_sigmask(SIG_BLOCK, &set, nullptr);
      ms_refserver* srv = nullptr;
      int port = 0;
      check(ms_refserver_start(ref_dir.c_str(), ref_host.c_str(), ref_port, ref_token.empty() ? nullptr : ref_token.c_str(),
                               ref_fault, ref_seed, &srv, &port));
      std::cout << "reference server on port " << port << std::endl;
      wait_for_signal();
      ms_refserver_stop(srv);
    }
  } catch (const Failure& f) {
    return f.exit_code;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "maiscope: unexpected library output: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}
