#include "maiscope/detect.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "maiscope/error.hpp"

namespace maiscope {

namespace {

template <typename Box>
double iou_impl(const Box& a, const Box& b) {
  const auto area_a = a.area();
  const auto area_b = b.area();
  if (area_a <= 0 || area_b <= 0) throw Error(ErrorCode::kZeroAreaBox, "IoU of a box without area");
  const auto ih = std::min(a.bottom, b.bottom) - std::max(a.top, b.top);
  const auto iw = std::min(a.right, b.right) - std::max(a.left, b.left);
  if (ih <= 0 || iw <= 0) return 0.0;
  const double inter = static_cast<double>(ih) * static_cast<double>(iw);
  const double uni = static_cast<double>(area_a) + static_cast<double>(area_b) - inter;
  return std::clamp(inter / uni, 0.0, 1.0);
}

int round_half_up(double v) noexcept { return static_cast<int>(std::floor(v + 0.5)); }

// Maps [lo, hi) in normalized units onto [0, extent], keeping at least one pixel.
std::pair<int, int> map_span(double lo, double hi, int extent) noexcept {
  int a = std::clamp(round_half_up(lo * extent), 0, extent);
  int b = std::clamp(round_half_up(hi * extent), 0, extent);
  if (b <= a) {
    b = a + 1;
    if (b > extent) {
      b = extent;
      a = extent - 1;
    }
  }
  return {a, b};
}

}  // namespace

std::string_view to_string(BackendKind kind) noexcept {
  switch (kind) {
    case BackendKind::kOracle: return "oracle";
    case BackendKind::kHeuristic: return "heuristic";
    case BackendKind::kExternal: return "external";
  }
  return "?";
}

std::vector<RawDetection> DetectorBackend::infer(const RasterImage& img320) const {
  if (img320.width() != kDetectorInputSize || img320.height() != kDetectorInputSize) {
    throw Error(ErrorCode::kWrongInputSize, "detector expects 320x320, got " + std::to_string(img320.width()) +
                                                "x" + std::to_string(img320.height()));
  }
  return run(img320);
}

double iou(const PixelBox& a, const PixelBox& b) { return iou_impl(a, b); }
double iou(const NormBox& a, const NormBox& b) { return iou_impl(a, b); }

NormBox normalize_box(const PixelBox& box, int width, int height) noexcept {
  return {static_cast<double>(box.top) / height, static_cast<double>(box.left) / width,
          static_cast<double>(box.bottom) / height, static_cast<double>(box.right) / width};
}

PixelBox denormalize_box(const NormBox& box, int width, int height) noexcept {
  const auto [top, bottom] = map_span(box.top, box.bottom, height);
  const auto [left, right] = map_span(box.left, box.right, width);
  return {top, left, bottom, right};
}

std::vector<Detection> postprocess(std::span<const RawDetection> raw, const PostprocessParams& params,
                                   int orig_width, int orig_height) {
  if (!(params.score_floor >= 0.0 && params.score_floor <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "score_floor must be in [0,1]");
  }
  if (!(params.nms_iou > 0.0 && params.nms_iou <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "nms_iou must be in (0,1]");
  }
  if (orig_width < 1 || orig_height < 1) throw Error(ErrorCode::kInvalidArgument, "bad original size");

  std::vector<RawDetection> kept;
  kept.reserve(raw.size());
  for (const auto& d : raw) {
    if (!d.valid()) throw Error(ErrorCode::kInvalidArgument, "raw detection violates its invariants");
    if (d.score >= params.score_floor) kept.push_back(d);
  }
  std::stable_sort(kept.begin(), kept.end(), [](const RawDetection& a, const RawDetection& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.box.top != b.box.top) return a.box.top < b.box.top;
    return a.box.left < b.box.left;
  });

  std::vector<bool> suppressed(kept.size(), false);
  std::vector<Detection> out;
  for (std::size_t i = 0; i < kept.size(); ++i) {
    if (suppressed[i]) continue;
    for (std::size_t j = i + 1; j < kept.size(); ++j) {
      if (!suppressed[j] && kept[j].cls == kept[i].cls && iou(kept[i].box, kept[j].box) > params.nms_iou) {
        suppressed[j] = true;
      }
    }
    out.push_back({kept[i].cls, kept[i].score, denormalize_box(kept[i].box, orig_width, orig_height)});
  }
  return out;
}

OracleDetector::OracleDetector(std::vector<RawDetection> detections) : detections_(std::move(detections)) {
  for (const auto& d : detections_) {
    if (!d.valid()) throw Error(ErrorCode::kInvalidArgument, "oracle fixture holds an invalid detection");
  }
}

BackendDescriptor OracleDetector::descriptor() const {
  return {"oracle", kDetectorInputSize, kDetectorInputSize, BackendKind::kOracle, true};
}

std::vector<RawDetection> OracleDetector::run(const RasterImage&) const { return detections_; }

}  // namespace maiscope
