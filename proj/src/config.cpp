#include "maiscope/config.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>

#include "maiscope/datasets.hpp"
#include "maiscope/error.hpp"

namespace maiscope {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

[[noreturn]] void bad(std::string_view key, std::string_view value, std::string_view what) {
  throw Error(ErrorCode::kBadConfig, std::string(key) + " = '" + std::string(value) + "': " + std::string(what));
}

double to_double(std::string_view key, std::string_view v) {
  const std::string s(v);
  char* end = nullptr;
  const double d = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size()) bad(key, v, "expected a number");
  return d;
}

long long to_int(std::string_view key, std::string_view v) {
  long long out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) bad(key, v, "expected an integer");
  return out;
}

bool to_bool(std::string_view key, std::string_view v) {
  if (v == "true") return true;
  if (v == "false") return false;
  bad(key, v, "expected true or false");
}

using Setter = std::function<void(AppConfig&, std::string_view key, std::string_view value)>;

const std::vector<std::pair<std::string, Setter>>& setters() {
  static const std::vector<std::pair<std::string, Setter>> table = {
      {"store.path", [](AppConfig& c, auto, auto v) { c.store_path = v; }},
      {"device.id", [](AppConfig& c, auto, auto v) { c.device_id = v; }},
      {"detector.backend", [](AppConfig& c, auto, auto v) { c.detector_backend = v; }},
      {"detector.command", [](AppConfig& c, auto, auto v) { c.detector_command = v; }},
      {"detector.score_floor", [](AppConfig& c, auto k, auto v) { c.score_floor = to_double(k, v); }},
      {"detector.nms_iou", [](AppConfig& c, auto k, auto v) { c.nms_iou = to_double(k, v); }},
      {"classifier.backend", [](AppConfig& c, auto, auto v) { c.classifier_backend = v; }},
      {"classifier.command", [](AppConfig& c, auto, auto v) { c.classifier_command = v; }},
      {"oracle.fixtures", [](AppConfig& c, auto, auto v) { c.fixtures_dir = v; }},
      {"pipeline.malaria_threshold", [](AppConfig& c, auto k, auto v) { c.malaria_threshold = to_double(k, v); }},
      {"pipeline.classify_parallelism",
       [](AppConfig& c, auto k, auto v) { c.classify_parallelism = static_cast<int>(to_int(k, v)); }},
      {"pipeline.draw_labels", [](AppConfig& c, auto k, auto v) { c.draw_labels = to_bool(k, v); }},
      {"sync.endpoint", [](AppConfig& c, auto, auto v) { c.sync_endpoint = v; }},
      {"sync.token", [](AppConfig& c, auto, auto v) { c.sync_token = v; }},
      {"sync.batch_size",
       [](AppConfig& c, auto k, auto v) {
         const auto n = to_int(k, v);
         if (n < 1) bad(k, v, "must be positive");
         c.sync_batch_size = static_cast<std::size_t>(n);
       }},
      {"sync.parallelism", [](AppConfig& c, auto k, auto v) { c.sync_parallelism = static_cast<int>(to_int(k, v)); }},
      {"sync.timeout_ms", [](AppConfig& c, auto k, auto v) { c.sync_timeout_ms = static_cast<int>(to_int(k, v)); }},
      {"camera.kind", [](AppConfig& c, auto, auto v) { c.camera_kind = v; }},
      {"camera.path", [](AppConfig& c, auto, auto v) { c.camera_path = v; }},
      {"server.host", [](AppConfig& c, auto, auto v) { c.server_host = v; }},
      {"server.port", [](AppConfig& c, auto k, auto v) { c.server_port = static_cast<int>(to_int(k, v)); }},
      {"server.static_dir", [](AppConfig& c, auto, auto v) { c.server_static_dir = v; }},
  };
  return table;
}

std::string unquote(std::string_view raw, std::size_t line_no) {
  std::string out;
  for (std::size_t i = 1; i < raw.size(); ++i) {
    const char ch = raw[i];
    if (ch == '"') {
      const std::string rest = trim(raw.substr(i + 1));
      if (!rest.empty() && rest[0] != '#') {
        throw Error(ErrorCode::kBadConfig, "line " + std::to_string(line_no) + ": text after closing quote");
      }
      return out;
    }
    if (ch == '\\' && i + 1 < raw.size()) {
      const char next = raw[++i];
      if (next != '"' && next != '\\') {
        throw Error(ErrorCode::kBadConfig, "line " + std::to_string(line_no) + ": unknown escape");
      }
      out.push_back(next);
      continue;
    }
    out.push_back(ch);
  }
  throw Error(ErrorCode::kBadConfig, "line " + std::to_string(line_no) + ": unterminated string");
}

bool valid_name(std::string_view s) {
  if (s.empty()) return false;
  for (char c : s) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-')) return false;
  }
  return true;
}

}  // namespace

void AppConfig::validate() const {
  for (const auto& [name, backend] : {std::pair{"detector.backend", detector_backend},
                                      std::pair{"classifier.backend", classifier_backend}}) {
    if (backend != "oracle" && backend != "heuristic" && backend != "external") {
      bad(name, backend, "expected oracle, heuristic or external");
    }
  }
  if (detector_backend == "external" && detector_command.empty()) {
    bad("detector.command", "", "required by the external detector");
  }
  if (classifier_backend == "external" && classifier_command.empty()) {
    bad("classifier.command", "", "required by the external classifier");
  }
  if (camera_kind != "directory" && camera_kind != "file" && camera_kind != "live") {
    bad("camera.kind", camera_kind, "expected directory, file or live");
  }
  if (server_port < 0 || server_port > 65535) bad("server.port", std::to_string(server_port), "out of range");
  if (sync_timeout_ms < 1) bad("sync.timeout_ms", std::to_string(sync_timeout_ms), "must be positive");
  if (store_path.empty()) bad("store.path", "", "must not be empty");
  pipeline().validate();
  sync_options().validate();
}

PipelineConfig AppConfig::pipeline() const {
  PipelineConfig p;
  p.malaria_threshold = malaria_threshold;
  p.postprocess.score_floor = score_floor;
  p.postprocess.nms_iou = nms_iou;
  p.classify_parallelism = classify_parallelism;
  p.overlay.draw_labels = draw_labels;
  return p;
}

SyncOptions AppConfig::sync_options() const {
  SyncOptions s;
  s.batch_size = sync_batch_size;
  s.parallelism = sync_parallelism;
  return s;
}

std::vector<std::pair<std::string, std::string>> parse_config_text(std::string_view text) {
  std::vector<std::pair<std::string, std::string>> out;
  std::istringstream in{std::string(text)};
  std::string line;
  std::string section;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    if (t[0] == '[') {
      const auto close = t.find(']');
      if (close == std::string::npos) {
        throw Error(ErrorCode::kBadConfig, "line " + std::to_string(line_no) + ": unterminated section header");
      }
      section = trim(std::string_view(t).substr(1, close - 1));
      const std::string rest = trim(std::string_view(t).substr(close + 1));
      if (!valid_name(section) || (!rest.empty() && rest[0] != '#')) {
        throw Error(ErrorCode::kBadConfig, "line " + std::to_string(line_no) + ": bad section header");
      }
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorCode::kBadConfig, "line " + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key = trim(std::string_view(t).substr(0, eq));
    if (!valid_name(key)) throw Error(ErrorCode::kBadConfig, "line " + std::to_string(line_no) + ": bad key");
    const std::string raw = trim(std::string_view(t).substr(eq + 1));
    std::string value;
    if (!raw.empty() && raw[0] == '"') {
      value = unquote(raw, line_no);
    } else {
      value = trim(std::string_view(raw).substr(0, raw.find('#')));
    }
    out.emplace_back(section.empty() ? key : section + "." + key, value);
  }
  return out;
}

void apply_setting(AppConfig& config, std::string_view key, std::string_view value) {
  for (const auto& [name, setter] : setters()) {
    if (name == key) {
      setter(config, key, value);
      return;
    }
  }
  throw Error(ErrorCode::kBadConfig, "unknown key '" + std::string(key) + "'");
}

void apply_config_text(AppConfig& config, std::string_view text) {
  for (const auto& [k, v] : parse_config_text(text)) apply_setting(config, k, v);
}

void apply_config_file(AppConfig& config, const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kBadConfig, "cannot read config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  apply_config_text(config, ss.str());
}

void apply_environment(AppConfig& config) {
  if (const char* token = std::getenv("MAISCOPE_SYNC_TOKEN"); token && *token) config.sync_token = token;
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& [name, setter] : setters()) keys.push_back(name);
  return keys;
}

nlohmann::json to_json(const AppConfig& c) {
  return {{"store.path", c.store_path},
          {"device.id", c.device_id},
          {"detector.backend", c.detector_backend},
          {"detector.command", c.detector_command},
          {"detector.score_floor", c.score_floor},
          {"detector.nms_iou", c.nms_iou},
          {"classifier.backend", c.classifier_backend},
          {"classifier.command", c.classifier_command},
          {"oracle.fixtures", c.fixtures_dir},
          {"pipeline.malaria_threshold", c.malaria_threshold},
          {"pipeline.classify_parallelism", c.classify_parallelism},
          {"pipeline.draw_labels", c.draw_labels},
          {"sync.endpoint", c.sync_endpoint},
          {"sync.token", c.sync_token.empty() ? "" : "***"},
          {"sync.batch_size", c.sync_batch_size},
          {"sync.parallelism", c.sync_parallelism},
          {"sync.timeout_ms", c.sync_timeout_ms},
          {"camera.kind", c.camera_kind},
          {"camera.path", c.camera_path},
          {"server.host", c.server_host},
          {"server.port", c.server_port},
          {"server.static_dir", c.server_static_dir}};
}

namespace {

AnnotatedImage load_truth(const AppConfig& config, const std::string& stem) {
  namespace fs = std::filesystem;
  if (config.fixtures_dir.empty()) throw Error(ErrorCode::kBadConfig, "oracle backends need a fixtures directory");
  const fs::path xml = fs::path(config.fixtures_dir) / (stem + ".xml");
  if (!fs::exists(xml)) throw Error(ErrorCode::kNotFound, "no oracle fixture " + xml.string());
  return load_voc_file(xml);
}

}  // namespace

std::unique_ptr<DetectorBackend> make_detector(const AppConfig& config, const std::string& slide_stem) {
  if (config.detector_backend == "oracle") {
    return std::make_unique<OracleDetector>(oracle_detections(load_truth(config, slide_stem)));
  }
  if (config.detector_backend == "heuristic") return std::make_unique<HeuristicDetector>();
  if (config.detector_backend == "external") return std::make_unique<ExternalDetector>(config.detector_command);
  bad("detector.backend", config.detector_backend, "expected oracle, heuristic or external");
}

std::unique_ptr<ClassifierBackend> make_classifier(const AppConfig& config, const std::string& slide_stem,
                                                   const RasterImage& slide) {
  if (config.classifier_backend == "oracle") {
    const auto sidecar = std::filesystem::path(config.fixtures_dir) / (slide_stem + ".json");
    const AnnotatedImage truth = load_truth(config, slide_stem);
    if (!std::filesystem::exists(sidecar)) throw Error(ErrorCode::kNotFound, "no oracle fixture " + sidecar.string());
    return std::make_unique<OracleClassifier>(oracle_classifier_for_slide(slide, truth, load_infection_sidecar(sidecar)));
  }
  if (config.classifier_backend == "heuristic") return std::make_unique<HeuristicClassifier>();
  if (config.classifier_backend == "external") return std::make_unique<ExternalClassifier>(config.classifier_command);
  bad("classifier.backend", config.classifier_backend, "expected oracle, heuristic or external");
}

}  // namespace maiscope
