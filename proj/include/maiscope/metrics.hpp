#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "maiscope/classify.hpp"
#include "maiscope/datasets.hpp"

namespace maiscope {

struct ScoredBox {
  CellClass cls = CellClass::kRbc;
  double score = 0.0;
  PixelBox box;
};

struct ImagePredictions {
  std::string image;
  std::vector<ScoredBox> detections;
};

struct PredictionDump {
  std::vector<ImagePredictions> predictions;
  std::vector<NamedAnnotation> ground_truth;
};

struct MatchResult {
  std::vector<bool> pred_is_tp;  // indexed like the input predictions
  std::vector<bool> gt_matched;
};

// Single image, single class. Predictions are visited by descending score
// (ties in input order); each takes the unmatched GT of highest IoU, if that
// IoU reaches `iou_threshold`.
MatchResult match_detections(std::span<const ScoredBox> preds, std::span<const PixelBox> gts, double iou_threshold);

struct ScoredOutcome {
  double score = 0.0;
  bool true_positive = false;
};

// 101-point interpolated AP. Outcomes in dataset order; sorted here by score
// (stable). Throws NoGroundTruth when gt_count is zero.
double average_precision(std::span<const ScoredOutcome> outcomes, std::size_t gt_count);

enum class AreaRange { kAll, kSmall, kMedium, kLarge };

// S: area < 32^2, M: 32^2 <= area <= 96^2, L: area > 96^2.
bool in_area_range(long long area, AreaRange range) noexcept;

struct DetectionMetrics {
  // Empty when no class has ground truth in the relevant bucket.
  std::optional<double> ap;
  std::optional<double> ap50;
  std::optional<double> ap75;
  std::optional<double> ap_small;
  std::optional<double> ap_medium;
  std::optional<double> ap_large;
};

struct EvaluationOptions {
  std::size_t max_dets = 100;  // per image and class
};

// Threshold t_i = (50 + 5 i) / 100, i = 0..9.
double coco_iou_threshold(int index) noexcept;

// Mean AP over one threshold and one area bucket, averaged over classes that
// have ground truth there.
std::optional<double> dataset_ap(const PredictionDump& dump, double iou_threshold, AreaRange range,
                                 const EvaluationOptions& options = {});

// Throws KeyMismatch for predictions on images absent from the ground truth.
DetectionMetrics coco_ap_suite(const PredictionDump& dump, const EvaluationOptions& options = {});

nlohmann::json to_json(const DetectionMetrics& metrics, std::string_view frame, const EvaluationOptions& options = {});

// JSON lines, one {"image", "detections": [{"class","score","box"}]} per line.
std::vector<ImagePredictions> parse_prediction_dump(std::string_view jsonl);
std::vector<ImagePredictions> load_prediction_dump(const std::filesystem::path& path);
std::string format_prediction_line(const ImagePredictions& preds);

struct ConfusionMatrix {
  std::size_t true_positive = 0;   // infected predicted infected
  std::size_t false_positive = 0;  // uninfected predicted infected
  std::size_t true_negative = 0;
  std::size_t false_negative = 0;

  std::size_t total() const noexcept { return true_positive + false_positive + true_negative + false_negative; }
};

struct ClassificationMetrics {
  double accuracy = 0.0;
  ConfusionMatrix confusion;
};

// Predicts infected iff p_infected > decision_threshold.
ClassificationMetrics classification_report(std::span<const CellVerdict> verdicts, std::span<const CropLabel> labels,
                                            double decision_threshold = 0.5);

nlohmann::json to_json(const ClassificationMetrics& metrics);

}  // namespace maiscope
