#include "maiscope/metrics.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "maiscope/error.hpp"

namespace maiscope {

using nlohmann::json;

namespace {

constexpr long long kSmallLimit = 32LL * 32LL;
constexpr long long kLargeLimit = 96LL * 96LL;
constexpr int kRecallPoints = 101;

std::vector<std::size_t> order_by_score(std::span<const ScoredBox> preds) {
  std::vector<std::size_t> order(preds.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return preds[a].score > preds[b].score; });
  return order;
}

const AnnotatedImage* find_truth(const PredictionDump& dump, const std::string& image) {
  for (const auto& gt : dump.ground_truth) {
    if (gt.id == image) return &gt.annotation;
  }
  return nullptr;
}

void check_keys(const PredictionDump& dump) {
  std::map<std::string, int> seen;
  for (const auto& p : dump.predictions) {
    if (!find_truth(dump, p.image)) throw Error(ErrorCode::kKeyMismatch, "predictions for unknown image '" + p.image + "'");
    if (++seen[p.image] > 1) throw Error(ErrorCode::kKeyMismatch, "duplicate predictions for image '" + p.image + "'");
  }
}

std::optional<double> json_scaled(const std::optional<double>& v) {
  if (!v) return std::nullopt;
  return *v * 100.0;
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

MatchResult match_detections(std::span<const ScoredBox> preds, std::span<const PixelBox> gts, double iou_threshold) {
  MatchResult result{std::vector<bool>(preds.size(), false), std::vector<bool>(gts.size(), false)};
  for (std::size_t p : order_by_score(preds)) {
    double best = -1.0;
    std::size_t best_gt = gts.size();
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (result.gt_matched[g]) continue;
      const double overlap = iou(preds[p].box, gts[g]);
      if (overlap >= iou_threshold && overlap > best) {
        best = overlap;
        best_gt = g;
      }
    }
    if (best_gt < gts.size()) {
      result.gt_matched[best_gt] = true;
      result.pred_is_tp[p] = true;
    }
  }
  return result;
}

double average_precision(std::span<const ScoredOutcome> outcomes, std::size_t gt_count) {
  if (gt_count == 0) throw Error(ErrorCode::kNoGroundTruth, "class has no ground-truth instances");
  std::vector<std::size_t> order(outcomes.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return outcomes[a].score > outcomes[b].score; });

  std::vector<double> precision(order.size());
  std::vector<double> recall(order.size());
  std::size_t tp = 0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    if (outcomes[order[k]].true_positive) ++tp;
    precision[k] = static_cast<double>(tp) / static_cast<double>(k + 1);
    recall[k] = static_cast<double>(tp) / static_cast<double>(gt_count);
  }
  // Precision envelope: best precision achievable at this recall or beyond.
  for (std::size_t k = precision.size(); k-- > 1;) precision[k - 1] = std::max(precision[k - 1], precision[k]);

  double sum = 0.0;
  for (int i = 0; i < kRecallPoints; ++i) {
    const double r = static_cast<double>(i) / 100.0;
    const auto it = std::lower_bound(recall.begin(), recall.end(), r);
    if (it != recall.end()) sum += precision[static_cast<std::size_t>(it - recall.begin())];
  }
  return sum / kRecallPoints;
}

bool in_area_range(long long area, AreaRange range) noexcept {
  switch (range) {
    case AreaRange::kAll: return true;
    case AreaRange::kSmall: return area < kSmallLimit;
    case AreaRange::kMedium: return area >= kSmallLimit && area <= kLargeLimit;
    case AreaRange::kLarge: return area > kLargeLimit;
  }
  return false;
}

double coco_iou_threshold(int index) noexcept { return static_cast<double>(50 + 5 * index) / 100.0; }

std::optional<double> dataset_ap(const PredictionDump& dump, double iou_threshold, AreaRange range,
                                 const EvaluationOptions& options) {
  std::vector<double> per_class;
  for (int c = 0; c < kCellClassCount; ++c) {
    const auto cls = static_cast<CellClass>(c);
    std::vector<ScoredOutcome> outcomes;
    std::size_t gt_count = 0;
    for (const auto& named : dump.ground_truth) {
      std::vector<PixelBox> gts;
      for (const auto& o : named.annotation.objects) {
        if (o.cls == cls && in_area_range(o.box.area(), range)) gts.push_back(o.box);
      }
      gt_count += gts.size();

      std::vector<ScoredBox> preds;
      for (const auto& p : dump.predictions) {
        if (p.image != named.id) continue;
        for (const auto& d : p.detections) {
          if (d.cls == cls && in_area_range(d.box.area(), range)) preds.push_back(d);
        }
      }
      if (preds.size() > options.max_dets) {
        // Keep the top max_dets by score, preserving input order among them.
        auto keep = order_by_score(preds);
        keep.resize(options.max_dets);
        std::sort(keep.begin(), keep.end());
        std::vector<ScoredBox> top;
        for (std::size_t k : keep) top.push_back(preds[k]);
        preds = std::move(top);
      }
      const MatchResult m = match_detections(preds, gts, iou_threshold);
      for (std::size_t k = 0; k < preds.size(); ++k) outcomes.push_back({preds[k].score, m.pred_is_tp[k]});
    }
    if (gt_count == 0) continue;
    per_class.push_back(average_precision(outcomes, gt_count));
  }
  if (per_class.empty()) return std::nullopt;
  return std::accumulate(per_class.begin(), per_class.end(), 0.0) / static_cast<double>(per_class.size());
}

DetectionMetrics coco_ap_suite(const PredictionDump& dump, const EvaluationOptions& options) {
  check_keys(dump);
  const auto averaged = [&](AreaRange range) -> std::optional<double> {
    double sum = 0.0;
    for (int i = 0; i < 10; ++i) {
      const auto ap = dataset_ap(dump, coco_iou_threshold(i), range, options);
      if (!ap) return std::nullopt;
      sum += *ap;
    }
    return sum / 10.0;
  };
  DetectionMetrics m;
  m.ap = averaged(AreaRange::kAll);
  m.ap50 = dataset_ap(dump, coco_iou_threshold(0), AreaRange::kAll, options);
  m.ap75 = dataset_ap(dump, coco_iou_threshold(5), AreaRange::kAll, options);
  m.ap_small = averaged(AreaRange::kSmall);
  m.ap_medium = averaged(AreaRange::kMedium);
  m.ap_large = averaged(AreaRange::kLarge);
  return m;
}

json to_json(const DetectionMetrics& m, std::string_view frame, const EvaluationOptions& options) {
  return {
      {"frame", frame},
      {"max_dets", options.max_dets},
      {"AP", optional_json(json_scaled(m.ap))},
      {"AP50", optional_json(json_scaled(m.ap50))},
      {"AP75", optional_json(json_scaled(m.ap75))},
      {"AP_S", optional_json(json_scaled(m.ap_small))},
      {"AP_M", optional_json(json_scaled(m.ap_medium))},
      {"AP_L", optional_json(json_scaled(m.ap_large))},
      {"raw",
       {{"AP", optional_json(m.ap)},
        {"AP50", optional_json(m.ap50)},
        {"AP75", optional_json(m.ap75)},
        {"AP_S", optional_json(m.ap_small)},
        {"AP_M", optional_json(m.ap_medium)},
        {"AP_L", optional_json(m.ap_large)}}},
  };
}

std::vector<ImagePredictions> parse_prediction_dump(std::string_view jsonl) {
  std::vector<ImagePredictions> out;
  std::istringstream lines{std::string(jsonl)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(lines, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      ImagePredictions p;
      p.image = j.at("image").is_string() ? j["image"].get<std::string>() : j["image"].dump();
      for (const auto& d : j.at("detections")) {
        const auto cls = cell_class_from_code(d.at("class").get<int>());
        if (!cls) throw Error(ErrorCode::kSchemaError, "unknown class id");
        const auto& b = d.at("box");
        ScoredBox sb{*cls, d.at("score").get<double>(),
                     {b.at(0).get<int>(), b.at(1).get<int>(), b.at(2).get<int>(), b.at(3).get<int>()}};
        if (sb.box.area() == 0) throw Error(ErrorCode::kZeroAreaBox, "prediction box has no area");
        p.detections.push_back(sb);
      }
      out.push_back(std::move(p));
    } catch (const json::exception& e) {
      throw Error(ErrorCode::kSchemaError, "prediction dump line " + std::to_string(line_no) + ": " + e.what());
    } catch (const Error& e) {
      throw Error(e.code(), "prediction dump line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

std::vector<ImagePredictions> load_prediction_dump(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoFailure, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_prediction_dump(ss.str());
}

std::string format_prediction_line(const ImagePredictions& preds) {
  json dets = json::array();
  for (const auto& d : preds.detections) {
    dets.push_back({{"class", static_cast<int>(d.cls)},
                    {"score", d.score},
                    {"box", {d.box.top, d.box.left, d.box.bottom, d.box.right}}});
  }
  return json{{"image", preds.image}, {"detections", std::move(dets)}}.dump();
}

ClassificationMetrics classification_report(std::span<const CellVerdict> verdicts, std::span<const CropLabel> labels,
                                            double decision_threshold) {
  if (verdicts.size() != labels.size()) {
    throw Error(ErrorCode::kLengthMismatch, std::to_string(verdicts.size()) + " verdicts vs " +
                                                std::to_string(labels.size()) + " labels");
  }
  if (verdicts.empty()) throw Error(ErrorCode::kEmptySet, "no samples to evaluate");
  ClassificationMetrics m;
  for (std::size_t i = 0; i < verdicts.size(); ++i) {
    const bool predicted = verdicts[i].p_infected > decision_threshold;
    const bool actual = labels[i] == CropLabel::kParasitized;
    if (predicted && actual) ++m.confusion.true_positive;
    if (predicted && !actual) ++m.confusion.false_positive;
    if (!predicted && !actual) ++m.confusion.true_negative;
    if (!predicted && actual) ++m.confusion.false_negative;
  }
  m.accuracy = static_cast<double>(m.confusion.true_positive + m.confusion.true_negative) /
               static_cast<double>(m.confusion.total());
  return m;
}

json to_json(const ClassificationMetrics& m) {
  return {{"accuracy", m.accuracy},
          {"samples", m.confusion.total()},
          {"confusion",
           {{"true_positive", m.confusion.true_positive},
            {"false_positive", m.confusion.false_positive},
            {"true_negative", m.confusion.true_negative},
            {"false_negative", m.confusion.false_negative}}}};
}

}  // namespace maiscope
