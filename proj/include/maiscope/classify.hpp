#pragma once

#include <map>
#include <string>

#include "maiscope/detect.hpp"
#include "maiscope/imaging.hpp"

namespace maiscope {

inline constexpr int kClassifierInputSize = 224;

// Two-class distribution over {infected, uninfected}.
struct CellVerdict {
  double p_infected = 0.0;
  double p_uninfected = 1.0;

  static CellVerdict from_infected(double p);

  friend bool operator==(const CellVerdict&, const CellVerdict&) = default;
};

class ClassifierBackend {
 public:
  virtual ~ClassifierBackend() = default;

  virtual BackendDescriptor descriptor() const = 0;

  // Throws WrongInputSize unless `crop224` is exactly 224x224.
  CellVerdict infer(const RasterImage& crop224) const;

 protected:
  virtual CellVerdict run(const RasterImage& crop224) const = 0;
};

struct HeuristicClassifierParams {
  double hue_low = 250.0;
  double hue_high = 330.0;
  double min_saturation = 0.3;
  double max_value = 0.75;
  double tau = 0.01;
  double scale = 0.004;
};

double logistic(double x) noexcept;

// Fraction of dark-purple (chromatin-like) pixels.
double stain_fraction(const RasterImage& crop, const HeuristicClassifierParams& params = {});
CellVerdict verdict_from_stain_fraction(double fraction, const HeuristicClassifierParams& params = {});
CellVerdict heuristic_classify(const RasterImage& crop224, const HeuristicClassifierParams& params = {});

class HeuristicClassifier final : public ClassifierBackend {
 public:
  explicit HeuristicClassifier(HeuristicClassifierParams params = {}) : params_(params) {}

  BackendDescriptor descriptor() const override;

 protected:
  CellVerdict run(const RasterImage& crop224) const override;

 private:
  HeuristicClassifierParams params_;
};

// Key identifying a crop by content: SHA-256 over dimensions and raw pixels.
std::string crop_key(const RasterImage& img);

// Looks crops up by content. Unknown crops throw OracleMiss.
class OracleClassifier final : public ClassifierBackend {
 public:
  // Registers the 224x224 crop with the given infected probability.
  void add(const RasterImage& crop224, double p_infected);
  std::size_t size() const noexcept { return table_.size(); }

  BackendDescriptor descriptor() const override;

 protected:
  CellVerdict run(const RasterImage& crop224) const override;

 private:
  std::map<std::string, double> table_;
};

// Subprocess adapter: runs `command <ppm path>` and reads `p_infected p_uninfected`.
class ExternalClassifier final : public ClassifierBackend {
 public:
  explicit ExternalClassifier(std::string command);

  BackendDescriptor descriptor() const override;

 protected:
  CellVerdict run(const RasterImage& crop224) const override;

 private:
  std::string command_;
};

CellVerdict parse_classifier_output(std::string_view text);

}  // namespace maiscope
