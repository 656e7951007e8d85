#pragma once

// Device configuration. File grammar (one setting per line):
//
//   # comment
//   [section]
//   key = value        -> "section.key"
//   key = "quoted # not a comment"
//
// Values are bare tokens or double-quoted strings (\" and \\ escapes).
// Unknown keys are rejected so typos surface as BadConfig.

#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "maiscope/classify.hpp"
#include "maiscope/detect.hpp"
#include "maiscope/pipeline.hpp"
#include "maiscope/sync.hpp"

namespace maiscope {

struct AppConfig {
  std::string store_path = "store";
  std::string device_id = "maiscope-device";

  std::string detector_backend = "heuristic";  // oracle | heuristic | external
  std::string detector_command;
  std::string classifier_backend = "heuristic";
  std::string classifier_command;
  // Oracle fixtures: <stem>.xml (boxes) and <stem>.json (infection labels).
  std::string fixtures_dir;

  double malaria_threshold = 0.80;
  double score_floor = 0.25;
  double nms_iou = 0.45;
  int classify_parallelism = 1;
  bool draw_labels = false;

  std::string sync_endpoint;
  std::string sync_token;
  std::size_t sync_batch_size = 16;
  int sync_parallelism = 2;
  int sync_timeout_ms = 5000;

  std::string camera_kind = "directory";  // directory | file | live
  std::string camera_path;

  std::string server_host = "127.0.0.1";
  int server_port = 8080;
  std::string server_static_dir;

  void validate() const;
  PipelineConfig pipeline() const;
  SyncOptions sync_options() const;
};

// Flattened "section.key" -> raw value, in file order.
std::vector<std::pair<std::string, std::string>> parse_config_text(std::string_view text);

// Throws BadConfig for unknown keys or unparsable values.
void apply_setting(AppConfig& config, std::string_view key, std::string_view value);
void apply_config_text(AppConfig& config, std::string_view text);
void apply_config_file(AppConfig& config, const std::filesystem::path& path);
// MAISCOPE_SYNC_TOKEN, when set, replaces sync.token.
void apply_environment(AppConfig& config);

std::vector<std::string> config_keys();

// Every setting by key; the sync token is masked.
nlohmann::json to_json(const AppConfig& config);

// Oracle backends read <fixtures_dir>/<stem>.xml (boxes) and <stem>.json
// (infection labels) for the slide being screened.
std::unique_ptr<DetectorBackend> make_detector(const AppConfig& config, const std::string& slide_stem);
std::unique_ptr<ClassifierBackend> make_classifier(const AppConfig& config, const std::string& slide_stem,
                                                   const RasterImage& slide);

}  // namespace maiscope
