#include "maiscope/pipeline.hpp"

#include <algorithm>
#include <future>

#include "maiscope/error.hpp"
#include "maiscope/hashing.hpp"

namespace maiscope {

using nlohmann::json;

void PipelineConfig::validate() const {
  if (!(malaria_threshold > 0.0 && malaria_threshold < 1.0)) {
    throw Error(ErrorCode::kBadConfig, "pipeline.malaria_threshold must be in (0,1)");
  }
  if (!(postprocess.score_floor >= 0.0 && postprocess.score_floor <= 1.0)) {
    throw Error(ErrorCode::kBadConfig, "detector.score_floor must be in [0,1]");
  }
  if (!(postprocess.nms_iou > 0.0 && postprocess.nms_iou <= 1.0)) {
    throw Error(ErrorCode::kBadConfig, "detector.nms_iou must be in (0,1]");
  }
  if (classify_parallelism < 1) throw Error(ErrorCode::kBadConfig, "classify parallelism must be >= 1");
}

FinalLabel relabel(CellClass cls, const std::optional<CellVerdict>& verdict, double malaria_threshold) noexcept {
  if (cls == CellClass::kRbc && verdict && verdict->p_infected > malaria_threshold) return FinalLabel::kMalaria;
  return to_final_label(cls);
}

Quantification quantify(std::span<const LabeledCell> cells) noexcept {
  Quantification q;
  for (const auto& cell : cells) {
    if (cell.final_label == FinalLabel::kMalaria) {
      ++q.infected;
    } else if (cell.det.cls == CellClass::kRbc) {
      ++q.uninfected;
    }
  }
  const std::size_t total = q.infected + q.uninfected;
  q.parasitemia_pct = total > 0 ? 100.0 * static_cast<double>(q.infected) / static_cast<double>(total) : 0.0;
  return q;
}

ScreeningRun run_pipeline(const RasterImage& slide, const PipelineConfig& config, const DetectorBackend& detector,
                          const ClassifierBackend& classifier) {
  config.validate();

  const RasterImage input = resize(slide, kDetectorInputSize, kDetectorInputSize);
  const std::vector<RawDetection> raw = detector.infer(input);
  const std::vector<Detection> detections = postprocess(raw, config.postprocess, slide.width(), slide.height());

  std::vector<LabeledCell> cells(detections.size());
  std::vector<std::size_t> rbc_indices;
  for (std::size_t i = 0; i < detections.size(); ++i) {
    cells[i].det = detections[i];
    if (detections[i].cls == CellClass::kRbc) rbc_indices.push_back(i);
  }

  std::vector<RasterImage> crops;
  crops.reserve(rbc_indices.size());
  for (std::size_t i : rbc_indices) {
    const PixelBox& box = cells[i].det.box;
    crops.push_back(resize(crop(slide, box), kClassifierInputSize, kClassifierInputSize));
    cells[i].low_confidence_crop = box.width() < config.low_confidence_side || box.height() < config.low_confidence_side;
  }

  std::vector<CellVerdict> verdicts(crops.size());
  const bool parallel = config.classify_parallelism > 1 && classifier.descriptor().reentrant && crops.size() > 1;
  if (!parallel) {
    for (std::size_t k = 0; k < crops.size(); ++k) verdicts[k] = classifier.infer(crops[k]);
  } else {
    const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(config.classify_parallelism), crops.size());
    std::vector<std::future<void>> jobs;
    for (std::size_t w = 0; w < workers; ++w) {
      jobs.push_back(std::async(std::launch::async, [&, w] {
        for (std::size_t k = w; k < crops.size(); k += workers) verdicts[k] = classifier.infer(crops[k]);
      }));
    }
    for (auto& job : jobs) job.get();
  }

  for (std::size_t k = 0; k < rbc_indices.size(); ++k) {
    LabeledCell& cell = cells[rbc_indices[k]];
    cell.verdict = verdicts[k];
    cell.crop_ref = sha256_hex(encode_image(crops[k], ImageFormat::kPng));
  }
  for (auto& cell : cells) cell.final_label = relabel(cell.det.cls, cell.verdict, config.malaria_threshold);

  ScreeningRun run{{}, slide, std::move(crops)};
  ScreeningResult& result = run.result;
  const Quantification q = quantify(cells);
  result.infected_count = q.infected;
  result.uninfected_count = q.uninfected;
  result.parasitemia_pct = q.parasitemia_pct;
  for (const auto& cell : cells) {
    if (cell.det.cls == CellClass::kWbc) ++result.wbc_count;
    if (cell.det.cls == CellClass::kPlatelet) ++result.platelet_count;
  }

  std::vector<OverlayBox> boxes;
  boxes.reserve(cells.size());
  for (const auto& cell : cells) boxes.push_back({cell.det.box, cell.final_label, cell.det.score});
  run.overlay = render_overlay(slide, boxes, config.overlay);
  result.overlay_ref = sha256_hex(encode_image(run.overlay, ImageFormat::kPng));
  result.cells = std::move(cells);
  return run;
}

json to_json(const ScreeningResult& result) {
  json cells = json::array();
  for (const auto& cell : result.cells) {
    json c;
    c["label"] = to_string(cell.final_label);
    c["class"] = static_cast<int>(cell.det.cls);
    c["score"] = cell.det.score;
    c["box"] = {cell.det.box.top, cell.det.box.left, cell.det.box.bottom, cell.det.box.right};
    if (cell.verdict) {
      c["verdict"] = {{"p_infected", cell.verdict->p_infected}, {"p_uninfected", cell.verdict->p_uninfected}};
    } else {
      c["verdict"] = nullptr;
    }
    c["crop_ref"] = cell.crop_ref ? json(*cell.crop_ref) : json(nullptr);
    c["low_confidence_crop"] = cell.low_confidence_crop;
    cells.push_back(std::move(c));
  }
  return {
      {"cells", std::move(cells)},
      {"infected_count", result.infected_count},
      {"uninfected_count", result.uninfected_count},
      {"parasitemia_pct", result.parasitemia_pct},
      {"wbc_count", result.wbc_count},
      {"platelet_count", result.platelet_count},
      {"overlay_ref", result.overlay_ref},
  };
}

ScreeningResult screening_result_from_json(const json& j) {
  try {
    ScreeningResult r;
    for (const auto& c : j.at("cells")) {
      LabeledCell cell;
      const auto label = final_label_from_string(c.at("label").get<std::string>());
      const auto cls = cell_class_from_code(c.at("class").get<int>());
      if (!label || !cls) throw Error(ErrorCode::kSchemaError, "bad cell label or class");
      cell.final_label = *label;
      cell.det.cls = *cls;
      cell.det.score = c.at("score").get<double>();
      const auto& b = c.at("box");
      cell.det.box = {b.at(0).get<int>(), b.at(1).get<int>(), b.at(2).get<int>(), b.at(3).get<int>()};
      if (!c.at("verdict").is_null()) {
        cell.verdict = CellVerdict{c["verdict"].at("p_infected").get<double>(),
                                   c["verdict"].at("p_uninfected").get<double>()};
      }
      if (!c.at("crop_ref").is_null()) cell.crop_ref = c["crop_ref"].get<std::string>();
      cell.low_confidence_crop = c.value("low_confidence_crop", false);
      r.cells.push_back(std::move(cell));
    }
    r.infected_count = j.at("infected_count").get<std::size_t>();
    r.uninfected_count = j.at("uninfected_count").get<std::size_t>();
    r.parasitemia_pct = j.at("parasitemia_pct").get<double>();
    r.wbc_count = j.at("wbc_count").get<std::size_t>();
    r.platelet_count = j.at("platelet_count").get<std::size_t>();
    r.overlay_ref = j.at("overlay_ref").get<std::string>();
    return r;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kSchemaError, std::string("screening result: ") + e.what());
  }
}

std::string canonical_json(const ScreeningResult& result) { return to_json(result).dump(); }

}  // namespace maiscope
