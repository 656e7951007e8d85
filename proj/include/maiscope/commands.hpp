#pragma once

// Whole-workflow operations shared by the service, the C API and the CLI.

#include <filesystem>
#include <optional>
#include <string>

#include "json.hpp"
#include "maiscope/config.hpp"
#include "maiscope/metrics.hpp"
#include "maiscope/store.hpp"
#include "maiscope/synthetic.hpp"
#include "maiscope/sync.hpp"

namespace maiscope {

// Builds the configured backends for this slide and runs the pipeline.
ScreeningRun screen_image(const AppConfig& config, const RasterImage& slide, const std::string& stem);

struct ScreenOutput {
  ScreeningRun run;
  std::optional<SlideRecord> record;
};

// Screens one file. With a non-empty out_dir writes result.json (canonical),
// overlay.png and crops/<crop_ref>.png. With save, persists into the store.
ScreenOutput screen_file(const AppConfig& config, const std::filesystem::path& input,
                         const std::filesystem::path& out_dir, bool save, StoreOptions store_options = {});

// Metric report for a prediction dump against a VOC directory.
nlohmann::json evaluate_dump(const std::filesystem::path& preds, const std::filesystem::path& gt_dir,
                             const EvaluationOptions& options = {}, const std::string& frame = "original");

// Runs the configured detector (score floor 0, so nothing is thresholded away)
// over every annotated image. Images are looked up in images_dir (defaults to
// gt_dir) by annotated filename, then <stem>.ppm / <stem>.png. When dump_path
// is non-empty the predictions are written there as JSON lines.
nlohmann::json evaluate_detector(const AppConfig& config, const std::filesystem::path& gt_dir,
                                 const std::filesystem::path& images_dir, const std::filesystem::path& dump_path,
                                 const EvaluationOptions& options = {});

// Classifier accuracy over a Parasitized/ Uninfected/ tree.
nlohmann::json evaluate_classifier(const AppConfig& config, const std::filesystem::path& root,
                                   double decision_threshold = 0.5);

nlohmann::json list_records(const std::filesystem::path& store_path, const std::string& state_filter);
nlohmann::json show_record(const std::filesystem::path& store_path, const std::string& record_id);

SyncReport run_sync(const AppConfig& config, StoreOptions store_options = {});

}  // namespace maiscope
