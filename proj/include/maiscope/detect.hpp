#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "maiscope/imaging.hpp"
#include "maiscope/labels.hpp"

namespace maiscope {

inline constexpr int kDetectorInputSize = 320;

// Box in [0,1] coordinates relative to the detector input.
struct NormBox {
  double top = 0.0;
  double left = 0.0;
  double bottom = 0.0;
  double right = 0.0;

  double area() const noexcept {
    return bottom > top && right > left ? (bottom - top) * (right - left) : 0.0;
  }
  bool valid() const noexcept {
    return 0.0 <= top && top < bottom && bottom <= 1.0 && 0.0 <= left && left < right && right <= 1.0;
  }

  friend bool operator==(const NormBox&, const NormBox&) = default;
};

struct RawDetection {
  CellClass cls = CellClass::kRbc;
  double score = 0.0;
  NormBox box;

  bool valid() const noexcept { return score >= 0.0 && score <= 1.0 && box.valid(); }
  friend bool operator==(const RawDetection&, const RawDetection&) = default;
};

struct Detection {
  CellClass cls = CellClass::kRbc;
  double score = 0.0;
  PixelBox box;

  friend bool operator==(const Detection&, const Detection&) = default;
};

enum class BackendKind { kOracle, kHeuristic, kExternal };

std::string_view to_string(BackendKind kind) noexcept;

struct BackendDescriptor {
  std::string name;
  int input_width = 0;
  int input_height = 0;
  BackendKind kind = BackendKind::kOracle;
  bool reentrant = true;
};

class DetectorBackend {
 public:
  virtual ~DetectorBackend() = default;

  virtual BackendDescriptor descriptor() const = 0;

  // Throws WrongInputSize unless `img320` is exactly 320x320.
  std::vector<RawDetection> infer(const RasterImage& img320) const;

 protected:
  virtual std::vector<RawDetection> run(const RasterImage& img320) const = 0;
};

// Intersection over union with half-open semantics. Throws ZeroAreaBox.
double iou(const PixelBox& a, const PixelBox& b);
double iou(const NormBox& a, const NormBox& b);

struct PostprocessParams {
  double score_floor = 0.25;
  double nms_iou = 0.45;
};

// Score floor, class-wise greedy NMS, then mapping to original-image pixels
// (round half up, clamp). Output is sorted by score descending.
std::vector<Detection> postprocess(std::span<const RawDetection> raw, const PostprocessParams& params,
                                   int orig_width, int orig_height);

// Pixel box to detector-normalized coordinates of an image of the given size.
NormBox normalize_box(const PixelBox& box, int width, int height) noexcept;
PixelBox denormalize_box(const NormBox& box, int width, int height) noexcept;

// Replays a fixed detection list regardless of the image content.
class OracleDetector final : public DetectorBackend {
 public:
  explicit OracleDetector(std::vector<RawDetection> detections);

  BackendDescriptor descriptor() const override;

 protected:
  std::vector<RawDetection> run(const RasterImage& img320) const override;

 private:
  std::vector<RawDetection> detections_;
};

// Thresholds are in pixels of the 320x320 detector input.
struct HeuristicDetectorParams {
  int min_area = 40;
  int max_area = 3000;
  int wbc_min_area = 1200;
  int platelet_max_area = 120;
  // Purple specks below this are treated as stain debris.
  int platelet_min_area = 6;
  double purple_hue_low = 250.0;
  double purple_hue_high = 330.0;
  double purple_min_saturation = 0.25;
  // Otsu split is ignored when the foreground/background mean luma differ by less.
  double min_contrast = 12.0;
};

// Luma -> Otsu -> 8-connected components -> area/colour class rule.
std::vector<RawDetection> heuristic_detect(const RasterImage& img320, const HeuristicDetectorParams& params = {});

// Global Otsu threshold on an 8-bit histogram; pixels with value <= threshold
// form the dark class.
int otsu_threshold(std::span<const std::uint64_t, 256> histogram) noexcept;

class HeuristicDetector final : public DetectorBackend {
 public:
  explicit HeuristicDetector(HeuristicDetectorParams params = {}) : params_(params) {}

  BackendDescriptor descriptor() const override;
  const HeuristicDetectorParams& params() const noexcept { return params_; }

 protected:
  std::vector<RawDetection> run(const RasterImage& img320) const override;

 private:
  HeuristicDetectorParams params_;
};

// Subprocess adapter: runs `command <ppm path>` and reads
// `class_id score top left bottom right` lines from stdout.
class ExternalDetector final : public DetectorBackend {
 public:
  explicit ExternalDetector(std::string command);

  BackendDescriptor descriptor() const override;

 protected:
  std::vector<RawDetection> run(const RasterImage& img320) const override;

 private:
  std::string command_;
};

// Parses the external detector line protocol. Throws BackendUnavailable on bad lines.
std::vector<RawDetection> parse_detector_output(std::string_view text);
std::string format_detection_line(const RawDetection& d);

}  // namespace maiscope
