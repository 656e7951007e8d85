#include "maiscope/classify.hpp"

#include <algorithm>
#include <cmath>

#include "maiscope/error.hpp"
#include "maiscope/hashing.hpp"

namespace maiscope {

CellVerdict CellVerdict::from_infected(double p) {
  if (!(p >= 0.0 && p <= 1.0)) throw Error(ErrorCode::kInvalidArgument, "probability outside [0,1]");
  return {p, 1.0 - p};
}

CellVerdict ClassifierBackend::infer(const RasterImage& crop224) const {
  if (crop224.width() != kClassifierInputSize || crop224.height() != kClassifierInputSize) {
    throw Error(ErrorCode::kWrongInputSize, "classifier expects 224x224, got " + std::to_string(crop224.width()) +
                                                "x" + std::to_string(crop224.height()));
  }
  return run(crop224);
}

double logistic(double x) noexcept {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double stain_fraction(const RasterImage& crop, const HeuristicClassifierParams& params) {
  const auto bytes = crop.bytes();
  std::size_t hits = 0;
  for (std::size_t i = 0; i < bytes.size(); i += 3) {
    const Hsv hsv = rgb_to_hsv({bytes[i], bytes[i + 1], bytes[i + 2]});
    if (hsv.h >= params.hue_low && hsv.h <= params.hue_high && hsv.s >= params.min_saturation &&
        hsv.v <= params.max_value) {
      ++hits;
    }
  }
  return static_cast<double>(hits) / static_cast<double>(bytes.size() / 3);
}

CellVerdict verdict_from_stain_fraction(double fraction, const HeuristicClassifierParams& params) {
  return CellVerdict::from_infected(logistic((fraction - params.tau) / params.scale));
}

CellVerdict heuristic_classify(const RasterImage& crop224, const HeuristicClassifierParams& params) {
  return verdict_from_stain_fraction(stain_fraction(crop224, params), params);
}

BackendDescriptor HeuristicClassifier::descriptor() const {
  return {"heuristic", kClassifierInputSize, kClassifierInputSize, BackendKind::kHeuristic, true};
}

CellVerdict HeuristicClassifier::run(const RasterImage& crop224) const { return heuristic_classify(crop224, params_); }

std::string crop_key(const RasterImage& img) {
  std::string buf = std::to_string(img.width()) + "x" + std::to_string(img.height()) + ":";
  buf.append(reinterpret_cast<const char*>(img.bytes().data()), img.bytes().size());
  return sha256_hex(buf);
}

void OracleClassifier::add(const RasterImage& crop224, double p_infected) {
  if (!(p_infected >= 0.0 && p_infected <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "oracle probability outside [0,1]");
  }
  table_[crop_key(crop224)] = p_infected;
}

BackendDescriptor OracleClassifier::descriptor() const {
  return {"oracle", kClassifierInputSize, kClassifierInputSize, BackendKind::kOracle, true};
}

CellVerdict OracleClassifier::run(const RasterImage& crop224) const {
  const auto it = table_.find(crop_key(crop224));
  if (it == table_.end()) throw Error(ErrorCode::kOracleMiss, "crop not present in oracle fixtures");
  return CellVerdict::from_infected(it->second);
}

}  // namespace maiscope
