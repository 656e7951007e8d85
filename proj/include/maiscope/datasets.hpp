#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "maiscope/classify.hpp"
#include "maiscope/detect.hpp"
#include "maiscope/error.hpp"
#include "maiscope/imaging.hpp"

namespace maiscope {

struct AnnotatedObject {
  CellClass cls = CellClass::kRbc;
  PixelBox box;

  friend bool operator==(const AnnotatedObject&, const AnnotatedObject&) = default;
};

struct AnnotatedImage {
  std::string image_path;
  int width = 0;
  int height = 0;
  std::vector<AnnotatedObject> objects;  // document order

  friend bool operator==(const AnnotatedImage&, const AnnotatedImage&) = default;
};

// Pascal-VOC annotation. VOC boxes are 1-based inclusive; they come back as
// 0-based half-open: top=ymin-1, left=xmin-1, bottom=ymax, right=xmax.
AnnotatedImage parse_voc_xml(std::string_view xml);
AnnotatedImage load_voc_file(const std::filesystem::path& path);
std::string write_voc_xml(const AnnotatedImage& annotation);

// Accepts "RBC", "WBC", "Platelets" and "Platelet"; throws UnknownClassName.
CellClass parse_voc_class_name(std::string_view name);

struct NamedAnnotation {
  std::string id;  // file stem
  AnnotatedImage annotation;
};

// All *.xml files in `dir`, ordered by file name.
std::vector<NamedAnnotation> load_voc_directory(const std::filesystem::path& dir);

enum class CropLabel { kParasitized, kUninfected };

std::string_view to_string(CropLabel label) noexcept;

struct LabeledCrop {
  std::filesystem::path image_path;
  CropLabel label = CropLabel::kUninfected;
};

struct ClassificationDataset {
  std::vector<LabeledCrop> items;  // lexicographic by path
  std::size_t parasitized = 0;
  std::size_t uninfected = 0;
};

// Flat scan of root/Parasitized and root/Uninfected image files.
ClassificationDataset load_classification_dataset(const std::filesystem::path& root);

struct SplitFractions {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
};

// floor(n * fraction) for val and test; remainder goes to train.
std::array<std::size_t, 3> split_sizes(std::size_t n, const SplitFractions& fractions);

// Fisher-Yates over mt19937_64(seed) with unbiased bounded draws.
std::vector<std::size_t> seeded_permutation(std::size_t n, std::uint64_t seed);

template <typename T>
struct DatasetSplit {
  std::vector<T> train;
  std::vector<T> val;
  std::vector<T> test;
};

template <typename T>
DatasetSplit<T> split_dataset(std::span<const T> items, const SplitFractions& fractions, std::uint64_t seed) {
  const auto sizes = split_sizes(items.size(), fractions);
  const auto order = seeded_permutation(items.size(), seed);
  DatasetSplit<T> out;
  std::size_t k = 0;
  for (; k < sizes[0]; ++k) out.train.push_back(items[order[k]]);
  for (; k < sizes[0] + sizes[1]; ++k) out.val.push_back(items[order[k]]);
  for (; k < items.size(); ++k) out.test.push_back(items[order[k]]);
  return out;
}

// Oracle fixtures -----------------------------------------------------------

// Ground truth as detector output: normalized by the annotation size, score 1.
std::vector<RawDetection> oracle_detections(const AnnotatedImage& annotation);

struct InfectionLabel {
  std::size_t object_index = 0;  // index into AnnotatedImage::objects
  bool parasitized = false;
  // Overrides the 1.0 / 0.0 default the oracle reports.
  std::optional<double> p_infected;

  double probability() const noexcept { return p_infected.value_or(parasitized ? 1.0 : 0.0); }
};

struct InfectionSidecar {
  std::string image;
  std::vector<InfectionLabel> cells;
};

nlohmann::json to_json(const InfectionSidecar& sidecar);
InfectionSidecar infection_sidecar_from_json(const nlohmann::json& j);
InfectionSidecar load_infection_sidecar(const std::filesystem::path& path);

// Registers every labelled RBC crop the pipeline would produce for `slide`.
OracleClassifier oracle_classifier_for_slide(const RasterImage& slide, const AnnotatedImage& annotation,
                                             const InfectionSidecar& sidecar);

// Class-tree oracle: every image resized to 224x224, keyed by content.
OracleClassifier oracle_classifier_for_dataset(const ClassificationDataset& dataset);

}  // namespace maiscope
