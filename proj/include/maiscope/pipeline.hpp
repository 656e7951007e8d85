#pragma once

#include "json.hpp"

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "maiscope/classify.hpp"
#include "maiscope/detect.hpp"
#include "maiscope/imaging.hpp"

namespace maiscope {

struct PipelineConfig {
  // An RBC becomes Malaria only when p_infected is strictly greater.
  double malaria_threshold = 0.80;
  PostprocessParams postprocess;
  OverlayStyle overlay;
  // Concurrent classifier calls; used only when the backend is reentrant.
  int classify_parallelism = 1;
  // Boxes narrower or shorter than this (original pixels) are flagged.
  int low_confidence_side = 4;

  void validate() const;
};

struct LabeledCell {
  FinalLabel final_label = FinalLabel::kRbc;
  Detection det;
  std::optional<CellVerdict> verdict;   // present iff det.cls == RBC
  std::optional<std::string> crop_ref;  // SHA-256 of the PNG-encoded 224x224 crop
  bool low_confidence_crop = false;

  friend bool operator==(const LabeledCell&, const LabeledCell&) = default;
};

struct Quantification {
  std::size_t infected = 0;
  std::size_t uninfected = 0;
  double parasitemia_pct = 0.0;
};

// Parasitemia is stored at full precision; rounding is a display concern.
Quantification quantify(std::span<const LabeledCell> cells) noexcept;

struct ScreeningResult {
  std::vector<LabeledCell> cells;
  std::size_t infected_count = 0;
  std::size_t uninfected_count = 0;
  double parasitemia_pct = 0.0;
  std::size_t wbc_count = 0;
  std::size_t platelet_count = 0;
  std::string overlay_ref;

  friend bool operator==(const ScreeningResult&, const ScreeningResult&) = default;
};

// Result plus the images its content references point at.
struct ScreeningRun {
  ScreeningResult result;
  RasterImage overlay;
  // One entry per cell carrying a crop_ref, in cell order.
  std::vector<RasterImage> crops;
};

ScreeningRun run_pipeline(const RasterImage& slide, const PipelineConfig& config, const DetectorBackend& detector,
                          const ClassifierBackend& classifier);

// Applies the threshold rule to a single verdict.
FinalLabel relabel(CellClass cls, const std::optional<CellVerdict>& verdict, double malaria_threshold) noexcept;

nlohmann::json to_json(const ScreeningResult& result);
ScreeningResult screening_result_from_json(const nlohmann::json& j);

// Sorted keys, no whitespace. Stable across runs for equal results.
std::string canonical_json(const ScreeningResult& result);

}  // namespace maiscope
