#include "maiscope/detect.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

namespace maiscope {

namespace {

class DisjointSet {
 public:
  std::uint32_t make() {
    parent_.push_back(static_cast<std::uint32_t>(parent_.size()));
    return parent_.back();
  }
  std::uint32_t find(std::uint32_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }
  void unite(std::uint32_t a, std::uint32_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    if (a < b) std::swap(a, b);
    parent_[a] = b;  // smaller label is the root, keeps labels in raster order
  }

 private:
  std::vector<std::uint32_t> parent_;
};

struct Component {
  long long area = 0;
  int min_x = 0, min_y = 0, max_x = 0, max_y = 0;
  double sum_r = 0, sum_g = 0, sum_b = 0;
};

// Two-pass 8-connected labelling. Label 0 is background.
std::vector<Component> label_components(const std::vector<std::uint8_t>& mask, const RasterImage& img) {
  const int width = img.width();
  const int height = img.height();
  std::vector<std::uint32_t> labels(mask.size(), 0);
  DisjointSet sets;
  sets.make();  // background
  auto at = [&](int x, int y) -> std::uint32_t {
    if (x < 0 || y < 0 || x >= width) return 0;
    return labels[static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x)];
  };
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x);
      if (!mask[i]) continue;
      const std::array<std::uint32_t, 4> neighbours{at(x - 1, y), at(x - 1, y - 1), at(x, y - 1), at(x + 1, y - 1)};
      std::uint32_t label = 0;
      for (auto n : neighbours) {
        if (n != 0 && (label == 0 || n < label)) label = n;
      }
      if (label == 0) {
        label = sets.make();
      } else {
        for (auto n : neighbours) {
          if (n != 0) sets.unite(label, n);
        }
      }
      labels[i] = label;
    }
  }

  std::vector<std::int64_t> compact;
  std::vector<Component> components;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x);
      if (labels[i] == 0) continue;
      const std::uint32_t root = sets.find(labels[i]);
      if (compact.size() <= root) compact.resize(root + 1, -1);
      if (compact[root] < 0) {
        compact[root] = static_cast<std::int64_t>(components.size());
        components.push_back({0, x, y, x, y, 0, 0, 0});
      }
      Component& c = components[static_cast<std::size_t>(compact[root])];
      ++c.area;
      c.min_x = std::min(c.min_x, x);
      c.max_x = std::max(c.max_x, x);
      c.min_y = std::min(c.min_y, y);
      c.max_y = std::max(c.max_y, y);
      const Rgb p = img.at(x, y);
      c.sum_r += p.r;
      c.sum_g += p.g;
      c.sum_b += p.b;
    }
  }
  return components;
}

}  // namespace

int otsu_threshold(std::span<const std::uint64_t, 256> histogram) noexcept {
  const double total = static_cast<double>(std::accumulate(histogram.begin(), histogram.end(), std::uint64_t{0}));
  if (total == 0) return 0;
  double sum_all = 0.0;
  for (int i = 0; i < 256; ++i) sum_all += i * static_cast<double>(histogram[static_cast<std::size_t>(i)]);

  double weight_dark = 0.0;
  double sum_dark = 0.0;
  double best_variance = -1.0;
  int best = 0;
  for (int t = 0; t < 256; ++t) {
    weight_dark += static_cast<double>(histogram[static_cast<std::size_t>(t)]);
    sum_dark += t * static_cast<double>(histogram[static_cast<std::size_t>(t)]);
    const double weight_light = total - weight_dark;
    if (weight_dark == 0.0) continue;
    if (weight_light == 0.0) break;
    const double mean_dark = sum_dark / weight_dark;
    const double mean_light = (sum_all - sum_dark) / weight_light;
    const double between = weight_dark * weight_light * (mean_dark - mean_light) * (mean_dark - mean_light);
    if (between > best_variance) {
      best_variance = between;
      best = t;
    }
  }
  return best;
}

std::vector<RawDetection> heuristic_detect(const RasterImage& img, const HeuristicDetectorParams& params) {
  const int width = img.width();
  const int height = img.height();
  const std::size_t n = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);

  std::vector<std::uint8_t> luma(n);
  std::array<std::uint64_t, 256> histogram{};
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const auto v = static_cast<std::uint8_t>(std::lround(luminance(img.at(x, y))));
      luma[static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x)] = v;
      ++histogram[v];
    }
  }

  const int threshold = otsu_threshold(histogram);
  double dark_sum = 0, dark_count = 0, light_sum = 0, light_count = 0;
  for (int v = 0; v < 256; ++v) {
    const auto h = static_cast<double>(histogram[static_cast<std::size_t>(v)]);
    if (v <= threshold) {
      dark_sum += v * h;
      dark_count += h;
    } else {
      light_sum += v * h;
      light_count += h;
    }
  }
  if (dark_count == 0 || light_count == 0) return {};
  if (light_sum / light_count - dark_sum / dark_count < params.min_contrast) return {};

  std::vector<std::uint8_t> mask(n);
  for (std::size_t i = 0; i < n; ++i) mask[i] = luma[i] <= threshold ? 1 : 0;

  const std::vector<Component> components = label_components(mask, img);

  std::vector<RawDetection> out;
  for (const Component& c : components) {
    const auto mean = [&](double sum) {
      return static_cast<std::uint8_t>(std::clamp(std::lround(sum / static_cast<double>(c.area)), 0L, 255L));
    };
    const Hsv hsv = rgb_to_hsv({mean(c.sum_r), mean(c.sum_g), mean(c.sum_b)});
    const bool purple = hsv.h >= params.purple_hue_low && hsv.h <= params.purple_hue_high &&
                        hsv.s >= params.purple_min_saturation;

    CellClass cls;
    if (purple && c.area >= params.wbc_min_area) {
      cls = CellClass::kWbc;
    } else if (purple && c.area <= params.platelet_max_area && c.area >= params.platelet_min_area) {
      cls = CellClass::kPlatelet;
    } else if (c.area >= params.min_area && c.area <= params.max_area) {
      cls = CellClass::kRbc;
    } else {
      continue;
    }

    const double box_area = static_cast<double>(c.max_x - c.min_x + 1) * static_cast<double>(c.max_y - c.min_y + 1);
    RawDetection d;
    d.cls = cls;
    d.score = std::clamp(static_cast<double>(c.area) / box_area, 0.0, 1.0);
    d.box = {static_cast<double>(c.min_y) / height, static_cast<double>(c.min_x) / width,
             static_cast<double>(c.max_y + 1) / height, static_cast<double>(c.max_x + 1) / width};
    out.push_back(d);
  }
  return out;
}

BackendDescriptor HeuristicDetector::descriptor() const {
  return {"heuristic", kDetectorInputSize, kDetectorInputSize, BackendKind::kHeuristic, true};
}

std::vector<RawDetection> HeuristicDetector::run(const RasterImage& img320) const {
  return heuristic_detect(img320, params_);
}

}  // namespace maiscope
