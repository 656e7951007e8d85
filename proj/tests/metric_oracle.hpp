#pragma once

// Brute-force detection metrics, kept independent of src/metrics.cpp:
// exact rational IoU tests, explicit PR enumeration over every score cutoff.

#include <algorithm>
#include <array>
#include <optional>
#include <vector>

#include "maiscope/metrics.hpp"
#include "maiscope/random.hpp"

namespace oracle {

using maiscope::CellClass;
using maiscope::PixelBox;

struct Overlap {
  long long inter = 0;
  long long uni = 1;
};

inline Overlap overlap(const PixelBox& a, const PixelBox& b) {
  const long long w = std::max(0, std::min(a.right, b.right) - std::max(a.left, b.left));
  const long long h = std::max(0, std::min(a.bottom, b.bottom) - std::max(a.top, b.top));
  const long long inter = w * h;
  const long long area_a = 1LL * (a.right - a.left) * (a.bottom - a.top);
  const long long area_b = 1LL * (b.right - b.left) * (b.bottom - b.top);
  return {inter, area_a + area_b - inter};
}

// inter/uni >= pct/100, exactly.
inline bool reaches(const Overlap& o, int pct) { return 100 * o.inter >= pct * o.uni; }
inline bool greater(const Overlap& a, const Overlap& b) { return a.inter * b.uni > b.inter * a.uni; }

inline bool in_bucket(long long area, int bucket) {
  switch (bucket) {
    case 0: return true;
    case 1: return area < 32 * 32;
    case 2: return area >= 32 * 32 && area <= 96 * 96;
    default: return area > 96 * 96;
  }
}

struct Pred {
  double score;
  PixelBox box;
};

// AP for one class, one threshold, one bucket; nullopt when no GT.
inline std::optional<double> class_ap(const maiscope::PredictionDump& dump, CellClass cls, int pct, int bucket,
                                      std::size_t max_dets) {
  std::vector<std::pair<double, bool>> outcomes;  // score, tp
  std::size_t n_gt = 0;
  for (const auto& named : dump.ground_truth) {
    std::vector<PixelBox> gts;
    for (const auto& o : named.annotation.objects)
      if (o.cls == cls && in_bucket(o.box.area(), bucket)) gts.push_back(o.box);
    n_gt += gts.size();
    std::vector<Pred> preds;
    for (const auto& ip : dump.predictions) {
      if (ip.image != named.id) continue;
      for (const auto& d : ip.detections)
        if (d.cls == cls && in_bucket(d.box.area(), bucket)) preds.push_back({d.score, d.box});
    }
    std::stable_sort(preds.begin(), preds.end(), [](const Pred& a, const Pred& b) { return a.score > b.score; });
    if (preds.size() > max_dets) preds.resize(max_dets);
    std::vector<bool> used(gts.size(), false);
    for (const auto& p : preds) {
      int best = -1;
      for (std::size_t g = 0; g < gts.size(); ++g) {
        if (used[g]) continue;
        const auto o = overlap(p.box, gts[g]);
        if (!reaches(o, pct)) continue;
        if (best < 0 || greater(o, overlap(p.box, gts[static_cast<std::size_t>(best)]))) best = static_cast<int>(g);
      }
      if (best >= 0) used[static_cast<std::size_t>(best)] = true;
      outcomes.push_back({p.score, best >= 0});
    }
  }
  if (n_gt == 0) return std::nullopt;
  std::stable_sort(outcomes.begin(), outcomes.end(), [](const auto& a, const auto& b) { return a.first > b.first; });

  // Every prefix of the ranked list is one operating point.
  std::vector<std::pair<double, double>> points;  // recall, precision
  for (std::size_t k = 1; k <= outcomes.size(); ++k) {
    std::size_t tp = 0;
    for (std::size_t i = 0; i < k; ++i) tp += outcomes[i].second ? 1 : 0;
    points.push_back({double(tp) / double(n_gt), double(tp) / double(k)});
  }
  double sum = 0.0;
  for (int i = 0; i <= 100; ++i) {
    const double r = i / 100.0;
    double best = 0.0;
    for (const auto& [rec, prec] : points)
      if (rec >= r) best = std::max(best, prec);
    sum += best;
  }
  return sum / 101.0;
}

inline std::optional<double> mean_ap(const maiscope::PredictionDump& dump, int pct, int bucket, std::size_t max_dets) {
  double sum = 0.0;
  int n = 0;
  for (int c = 0; c < 3; ++c) {
    if (const auto ap = class_ap(dump, static_cast<CellClass>(c), pct, bucket, max_dets)) {
      sum += *ap;
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return sum / n;
}

inline std::optional<double> averaged(const maiscope::PredictionDump& dump, int bucket, std::size_t max_dets) {
  double sum = 0.0;
  for (int pct = 50; pct <= 95; pct += 5) {
    const auto ap = mean_ap(dump, pct, bucket, max_dets);
    if (!ap) return std::nullopt;
    sum += *ap;
  }
  return sum / 10.0;
}

// ap, ap50, ap75, small, medium, large
inline std::array<std::optional<double>, 6> suite(const maiscope::PredictionDump& dump, std::size_t max_dets = 100) {
  return {averaged(dump, 0, max_dets), mean_ap(dump, 50, 0, max_dets), mean_ap(dump, 75, 0, max_dets),
          averaged(dump, 1, max_dets), averaged(dump, 2, max_dets),   averaged(dump, 3, max_dets)};
}

inline std::array<std::optional<double>, 6> as_array(const maiscope::DetectionMetrics& m) {
  return {m.ap, m.ap50, m.ap75, m.ap_small, m.ap_medium, m.ap_large};
}

inline bool agree(const std::array<std::optional<double>, 6>& a, const std::array<std::optional<double>, 6>& b,
                  double tol) {
  for (std::size_t i = 0; i < 6; ++i) {
    if (a[i].has_value() != b[i].has_value()) return false;
    if (a[i] && std::abs(*a[i] - *b[i]) > tol) return false;
  }
  return true;
}

// Random micro-dataset: <= 5 images, <= 10 GT and <= 10 predicted boxes each,
// predictions jittered from GT so IoUs land across the threshold range.
// Scores are distinct.
inline maiscope::PredictionDump micro_dataset(maiscope::SeededRng& rng) {
  maiscope::PredictionDump dump;
  const int images = rng.between(1, 5);
  std::vector<double> scores;
  for (int i = 0; i < 60; ++i) scores.push_back((i + 1) / 61.0);
  for (std::size_t i = scores.size(); i > 1; --i) std::swap(scores[i - 1], scores[rng.below(i)]);
  std::size_t next_score = 0;
  for (int im = 0; im < images; ++im) {
    maiscope::NamedAnnotation named;
    named.id = "img" + std::to_string(im);
    named.annotation.width = 400;
    named.annotation.height = 400;
    const int n_gt = rng.between(0, 10);
    auto random_box = [&] {
      const int side_w = rng.between(3, 150), side_h = rng.between(3, 150);
      const int top = rng.between(0, 400 - side_h), left = rng.between(0, 400 - side_w);
      return PixelBox{top, left, top + side_h, left + side_w};
    };
    for (int g = 0; g < n_gt; ++g)
      named.annotation.objects.push_back({static_cast<CellClass>(rng.below(3)), random_box()});
    maiscope::ImagePredictions ip;
    ip.image = named.id;
    const int n_pred = rng.between(0, 10);
    for (int p = 0; p < n_pred; ++p) {
      maiscope::ScoredBox sb;
      sb.score = scores[next_score++];
      if (!named.annotation.objects.empty() && rng.below(4) != 0) {
        const auto& gt = named.annotation.objects[rng.below(named.annotation.objects.size())];
        sb.cls = rng.below(6) == 0 ? static_cast<CellClass>(rng.below(3)) : gt.cls;
        const int j = std::max(1, (gt.box.right - gt.box.left) / 4);
        PixelBox b{gt.box.top + rng.between(-j, j), gt.box.left + rng.between(-j, j),
                   gt.box.bottom + rng.between(-j, j), gt.box.right + rng.between(-j, j)};
        b.top = std::clamp(b.top, 0, 399);
        b.left = std::clamp(b.left, 0, 399);
        b.bottom = std::clamp(b.bottom, b.top + 1, 400);
        b.right = std::clamp(b.right, b.left + 1, 400);
        sb.box = b;
      } else {
        sb.cls = static_cast<CellClass>(rng.below(3));
        sb.box = random_box();
      }
      ip.detections.push_back(sb);
    }
    if (n_pred > 0 || rng.below(2) == 0) dump.predictions.push_back(std::move(ip));
    dump.ground_truth.push_back(std::move(named));
  }
  return dump;
}

}  // namespace oracle
