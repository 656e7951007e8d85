#include "maiscope/commands.hpp"

#include <fstream>

#include "maiscope/datasets.hpp"
#include "maiscope/error.hpp"
#include "maiscope/hashing.hpp"

namespace maiscope {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) throw Error(ErrorCode::kIoFailure, "cannot write " + path.string());
}

fs::path find_image(const fs::path& dir, const NamedAnnotation& a) {
  if (!a.annotation.image_path.empty()) {
    const fs::path named = dir / fs::path(a.annotation.image_path).filename();
    if (fs::exists(named)) return named;
  }
  for (const char* ext : {".ppm", ".png"}) {
    const fs::path p = dir / (a.id + ext);
    if (fs::exists(p)) return p;
  }
  throw Error(ErrorCode::kNotFound, "no image for annotation " + a.id + " in " + dir.string());
}

}  // namespace

ScreeningRun screen_image(const AppConfig& config, const RasterImage& slide, const std::string& stem) {
  config.validate();
  const auto detector = make_detector(config, stem);
  const auto classifier = make_classifier(config, stem, slide);
  return run_pipeline(slide, config.pipeline(), *detector, *classifier);
}

ScreenOutput screen_file(const AppConfig& config, const fs::path& input, const fs::path& out_dir, bool save,
                         StoreOptions store_options) {
  const RasterImage slide = load_image(input);
  ScreenOutput out{screen_image(config, slide, input.stem().string()), std::nullopt};

  if (!out_dir.empty()) {
    fs::create_directories(out_dir / "crops");
    write_text(out_dir / "result.json", canonical_json(out.run.result) + "\n");
    save_image(out.run.overlay, out_dir / "overlay.png");
    std::size_t k = 0;
    for (const auto& cell : out.run.result.cells) {
      if (!cell.crop_ref) continue;
      save_image(out.run.crops.at(k++), out_dir / "crops" / (*cell.crop_ref + ".png"));
    }
  }
  if (save) {
    store_options.device_id = config.device_id;
    Store store(config.store_path, std::move(store_options));
    out.record = store.save_run(slide, out.run);
  }
  return out;
}

json evaluate_dump(const fs::path& preds, const fs::path& gt_dir, const EvaluationOptions& options,
                   const std::string& frame) {
  PredictionDump dump{load_prediction_dump(preds), load_voc_directory(gt_dir)};
  json report = to_json(coco_ap_suite(dump, options), frame, options);
  report["images"] = dump.ground_truth.size();
  return report;
}

json evaluate_detector(const AppConfig& config, const fs::path& gt_dir, const fs::path& images_dir,
                       const fs::path& dump_path, const EvaluationOptions& options) {
  AppConfig cfg = config;
  if (cfg.fixtures_dir.empty()) cfg.fixtures_dir = gt_dir.string();
  PostprocessParams params = cfg.pipeline().postprocess;
  params.score_floor = 0.0;

  PredictionDump dump;
  dump.ground_truth = load_voc_directory(gt_dir);
  const fs::path dir = images_dir.empty() ? gt_dir : images_dir;
  std::ofstream dump_out;
  if (!dump_path.empty()) {
    dump_out.open(dump_path, std::ios::binary | std::ios::trunc);
    if (!dump_out) throw Error(ErrorCode::kIoFailure, "cannot write " + dump_path.string());
  }
  for (const auto& named : dump.ground_truth) {
    const RasterImage img = load_image(find_image(dir, named));
    const auto detector = make_detector(cfg, named.id);
    const auto raw = detector->infer(resize(img, kDetectorInputSize, kDetectorInputSize));
    ImagePredictions preds{named.id, {}};
    for (const auto& d : postprocess(raw, params, img.width(), img.height())) {
      preds.detections.push_back({d.cls, d.score, d.box});
    }
    if (dump_out.is_open()) dump_out << format_prediction_line(preds) << "\n";
    dump.predictions.push_back(std::move(preds));
  }
  json report = to_json(coco_ap_suite(dump, options), "original", options);
  report["images"] = dump.ground_truth.size();
  report["detector"] = cfg.detector_backend;
  return report;
}

json evaluate_classifier(const AppConfig& config, const fs::path& root, double decision_threshold) {
  const ClassificationDataset dataset = load_classification_dataset(root);
  std::unique_ptr<ClassifierBackend> classifier;
  if (config.classifier_backend == "oracle") {
    classifier = std::make_unique<OracleClassifier>(oracle_classifier_for_dataset(dataset));
  } else {
    classifier = make_classifier(config, "", RasterImage(1, 1));
  }
  std::vector<CellVerdict> verdicts;
  std::vector<CropLabel> labels;
  for (const auto& item : dataset.items) {
    const RasterImage img = load_image(item.image_path);
    verdicts.push_back(classifier->infer(resize(img, kClassifierInputSize, kClassifierInputSize)));
    labels.push_back(item.label);
  }
  json report = to_json(classification_report(verdicts, labels, decision_threshold));
  report["classifier"] = config.classifier_backend;
  report["decision_threshold"] = decision_threshold;
  return report;
}

json list_records(const fs::path& store_path, const std::string& state_filter) {
  std::optional<SyncStatus> wanted;
  if (!state_filter.empty()) {
    wanted = sync_status_from_string(state_filter);
    if (!wanted) throw Error(ErrorCode::kInvalidArgument, "unknown sync state '" + state_filter + "'");
  }
  Store store(store_path);
  json out = json::array();
  for (const auto& r : store.records()) {
    if (wanted && r.sync.status != *wanted) continue;
    out.push_back(to_journal_json(r));
  }
  return out;
}

json show_record(const fs::path& store_path, const std::string& record_id) {
  Store store(store_path);
  const auto r = store.load(record_id);
  if (!r) throw Error(ErrorCode::kNotFound, "record " + record_id);
  return to_journal_json(*r);
}

SyncReport run_sync(const AppConfig& config, StoreOptions store_options) {
  store_options.device_id = config.device_id;
  Store store(config.store_path, std::move(store_options));
  HttpSyncTransport transport(config.sync_endpoint, config.sync_token,
                              std::chrono::milliseconds(config.sync_timeout_ms));
  return sync_once(store, transport, config.sync_options());
}

}  // namespace maiscope
