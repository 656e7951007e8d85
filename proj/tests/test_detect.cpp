#include <algorithm>
#include <cmath>
#include <fstream>

#include "doctest.h"
#include "maiscope/datasets.hpp"
#include "maiscope/detect.hpp"
#include "maiscope/error.hpp"
#include "maiscope/random.hpp"
#include "maiscope/synthetic.hpp"
#include "test_util.hpp"

using namespace maiscope;

namespace {

const Rgb kBackground{235, 225, 220};
const Rgb kPink{190, 110, 130};

void draw_disc(RasterImage& img, double cx, double cy, double r, Rgb c) {
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      if ((x + 0.5 - cx) * (x + 0.5 - cx) + (y + 0.5 - cy) * (y + 0.5 - cy) <= r * r) img.set(x, y, c);
}

NormBox random_norm_box(SeededRng& rng) {
  const double t = rng.uniform(0.0, 0.8), l = rng.uniform(0.0, 0.8);
  return {t, l, t + rng.uniform(0.02, 0.2), l + rng.uniform(0.02, 0.2)};
}

RawDetection random_raw(SeededRng& rng) {
  return {static_cast<CellClass>(rng.below(3)), rng.uniform(), random_norm_box(rng)};
}

}  // namespace

TEST_CASE("iou examples") {
  const PixelBox a{0, 0, 10, 10};
  CHECK(iou(a, a) == 1.0);
  CHECK(iou(a, PixelBox{20, 20, 30, 30}) == 0.0);
  CHECK(iou(a, PixelBox{0, 5, 10, 15}) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  CHECK(iou(NormBox{0, 0, 0.5, 0.5}, NormBox{0, 0.25, 0.5, 0.75}) == doctest::Approx(1.0 / 3.0));
  CHECK_THROWS_CODE(iou(a, PixelBox{3, 3, 3, 9}), ErrorCode::kZeroAreaBox);
  CHECK_THROWS_CODE(iou(NormBox{0.1, 0.1, 0.1, 0.2}, NormBox{0, 0, 1, 1}), ErrorCode::kZeroAreaBox);
}

TEST_CASE("iou is symmetric, bounded and 1 only for equal boxes") {
  SeededRng rng(21);
  for (int i = 0; i < 2000; ++i) {
    const int t1 = rng.between(0, 20), l1 = rng.between(0, 20), t2 = rng.between(0, 20), l2 = rng.between(0, 20);
    const PixelBox a{t1, l1, t1 + rng.between(1, 10), l1 + rng.between(1, 10)};
    const PixelBox b{t2, l2, t2 + rng.between(1, 10), l2 + rng.between(1, 10)};
    const double ab = iou(a, b);
    CHECK(ab == iou(b, a));
    CHECK(ab >= 0.0);
    CHECK(ab <= 1.0);
    CHECK((ab == 1.0) == (a == b));
  }
}

TEST_CASE("postprocess NMS drops the weaker duplicate") {
  const NormBox box{0.1, 0.1, 0.3, 0.3};
  const std::vector<RawDetection> raw{{CellClass::kRbc, 0.8, box}, {CellClass::kRbc, 0.9, box}};
  const auto out = postprocess(raw, {0.25, 0.5}, 320, 320);
  REQUIRE(out.size() == 1);
  CHECK(out[0].score == 0.9);
}

TEST_CASE("postprocess NMS is class-wise") {
  const NormBox box{0, 0, 0.5, 0.5};
  const std::vector<RawDetection> raw{{CellClass::kRbc, 0.9, box}, {CellClass::kWbc, 0.8, box}};
  const auto out = postprocess(raw, {0.25, 0.5}, 320, 320);
  REQUIRE(out.size() == 2);
  CHECK(out[0].cls == CellClass::kRbc);
  CHECK(out[1].cls == CellClass::kWbc);
}

TEST_CASE("postprocess applies the score floor") {
  const std::vector<RawDetection> raw{{CellClass::kRbc, 0.2, {0, 0, 0.1, 0.1}},
                                      {CellClass::kRbc, 0.25, {0.5, 0.5, 0.6, 0.6}}};
  const auto out = postprocess(raw, {}, 100, 100);
  REQUIRE(out.size() == 1);
  CHECK(out[0].score == 0.25);
}

TEST_CASE("postprocess maps to original pixels") {
  const std::vector<RawDetection> raw{{CellClass::kRbc, 0.9, {0.25, 0.25, 0.75, 0.75}}};
  const auto out = postprocess(raw, {}, 640, 480);
  REQUIRE(out.size() == 1);
  CHECK(out[0].box == PixelBox{120, 160, 360, 480});
  CHECK(denormalize_box({0.25, 0.25, 0.75, 0.75}, 640, 480) == PixelBox{120, 160, 360, 480});
}

TEST_CASE("denormalize rounds half up") {
  // 0.5 * 3 = 1.5 -> 2; 0.1 * 5 = 0.5 -> 1
  CHECK(denormalize_box({0.1, 0.5, 1.0, 1.0}, 3, 5) == PixelBox{1, 2, 5, 3});
}

TEST_CASE("postprocess rejects invalid raw detections") {
  const std::vector<RawDetection> bad{{CellClass::kRbc, 1.5, {0, 0, 0.5, 0.5}}};
  CHECK_THROWS(postprocess(bad, {}, 10, 10));
}

TEST_CASE("postprocess output is sorted and NMS-clean") {
  SeededRng rng(77);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<RawDetection> raw;
    const int n = rng.between(0, 30);
    for (int i = 0; i < n; ++i) raw.push_back(random_raw(rng));
    const PostprocessParams params{rng.uniform(0.0, 0.5), rng.uniform(0.2, 0.8)};
    const int w = rng.between(50, 800), h = rng.between(50, 800);
    const auto out = postprocess(raw, params, w, h);
    for (std::size_t i = 1; i < out.size(); ++i) CHECK(out[i - 1].score >= out[i].score);
    for (const auto& d : out) {
      CHECK(d.score >= params.score_floor);
      CHECK(d.box.fits(w, h));
      CHECK(d.box.area() > 0);
    }
    for (std::size_t i = 0; i < out.size(); ++i)
      for (std::size_t j = i + 1; j < out.size(); ++j)
        if (out[i].cls == out[j].cls) CHECK(iou(normalize_box(out[i].box, w, h), normalize_box(out[j].box, w, h)) <= params.nms_iou + 0.05);
  }
}

TEST_CASE("postprocess with floor 0 and nms 1 is a pure mapping") {
  SeededRng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<RawDetection> raw;
    const int n = rng.between(1, 25);
    for (int i = 0; i < n; ++i) raw.push_back(random_raw(rng));
    const auto out = postprocess(raw, {0.0, 1.0}, 640, 480);
    CHECK(out.size() == raw.size());
    std::vector<RawDetection> sorted = raw;
    std::stable_sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.score > b.score; });
    for (std::size_t i = 0; i < out.size(); ++i) {
      CHECK(out[i].cls == sorted[i].cls);
      CHECK(out[i].box == denormalize_box(sorted[i].box, 640, 480));
    }
  }
}

TEST_CASE("normalize and denormalize round-trip pixel boxes") {
  SeededRng rng(8);
  for (int i = 0; i < 1000; ++i) {
    const int w = rng.between(10, 2000), h = rng.between(10, 2000);
    const int t = rng.between(0, h - 2), l = rng.between(0, w - 2);
    const PixelBox b{t, l, rng.between(t + 1, h), rng.between(l + 1, w)};
    CHECK(denormalize_box(normalize_box(b, w, h), w, h) == b);
  }
}

TEST_CASE("heuristic detector finds a single disc") {
  RasterImage img(320, 320, kBackground);
  draw_disc(img, 160, 160, 20, kPink);
  const auto raw = HeuristicDetector().infer(img);
  REQUIRE(raw.size() == 1);
  CHECK(raw[0].cls == CellClass::kRbc);
  const PixelBox got = denormalize_box(raw[0].box, 320, 320);
  const PixelBox square{140, 140, 180, 180};
  CHECK(iou(got, square) >= 0.8);
}

TEST_CASE("heuristic detector separates two discs") {
  RasterImage img(320, 320, kBackground);
  draw_disc(img, 100, 160, 15, kPink);
  draw_disc(img, 132, 160, 15, kPink);  // 2 px gap
  CHECK(HeuristicDetector().infer(img).size() == 2);
}

TEST_CASE("heuristic detector ignores small discs and blank images") {
  RasterImage img(320, 320, kBackground);
  draw_disc(img, 100, 100, 2.5, kPink);  // about 20 px^2
  draw_disc(img, 200, 200, 20, kPink);
  const auto raw = HeuristicDetector().infer(img);
  CHECK(raw.size() == 1);
  CHECK(HeuristicDetector().infer(RasterImage(320, 320, Rgb{255, 255, 255})).empty());
}

TEST_CASE("heuristic detector classifies by area and colour") {
  RasterImage img(320, 320, kBackground);
  draw_disc(img, 80, 80, 25, Rgb{110, 50, 150});    // purple, about 1960 px^2: WBC
  draw_disc(img, 220, 220, 4.5, Rgb{110, 50, 150}); // purple, about 64 px^2: platelet
  draw_disc(img, 220, 80, 15, kPink);
  auto raw = HeuristicDetector().infer(img);
  REQUIRE(raw.size() == 3);
  std::sort(raw.begin(), raw.end(), [](const auto& a, const auto& b) { return a.cls < b.cls; });
  CHECK(raw[0].cls == CellClass::kRbc);
  CHECK(raw[1].cls == CellClass::kWbc);
  CHECK(raw[2].cls == CellClass::kPlatelet);
}

TEST_CASE("otsu threshold splits a bimodal histogram") {
  std::array<std::uint64_t, 256> hist{};
  hist[50] = 100;
  hist[200] = 100;
  const int t = otsu_threshold(hist);
  CHECK(t >= 50);
  CHECK(t < 200);
}

TEST_CASE("heuristic detector on a seeded synthetic slide") {
  SyntheticSlideSpec spec;
  spec.seed = 1;
  spec.n_rbc = 10;
  spec.n_wbc = 1;
  spec.n_platelet = 2;
  spec.parasitized_fraction = 0.2;
  const auto slide = generate_synthetic_slide(spec);
  const auto dets = postprocess(HeuristicDetector().infer(slide.image), {}, 320, 320);
  std::vector<bool> used(dets.size(), false);
  int matched = 0;
  for (const auto& gt : slide.truth.objects) {
    for (std::size_t i = 0; i < dets.size(); ++i) {
      if (used[i] || dets[i].cls != gt.cls || iou(dets[i].box, gt.box) < 0.5) continue;
      used[i] = true;
      ++matched;
      break;
    }
  }
  CHECK(matched >= 9);
}

TEST_CASE("heuristic detector is deterministic") {
  SyntheticSlideSpec spec;
  spec.seed = 99;
  const auto slide = generate_synthetic_slide(spec);
  const HeuristicDetector det;
  CHECK(det.infer(slide.image) == det.infer(slide.image));
}

TEST_CASE("oracle detector passes fixtures through") {
  const RawDetection d{CellClass::kRbc, 0.95, {0.1, 0.1, 0.3, 0.3}};
  const OracleDetector oracle({d});
  const auto out = oracle.infer(RasterImage(320, 320));
  REQUIRE(out.size() == 1);
  CHECK(out[0] == d);
  CHECK(oracle.descriptor().kind == BackendKind::kOracle);
}

TEST_CASE("oracle detections reproduce annotations within a pixel") {
  SyntheticSlideSpec spec;
  spec.seed = 4;
  spec.width = 640;
  spec.height = 480;
  const auto slide = generate_synthetic_slide(spec);
  const auto raw = oracle_detections(slide.truth);
  const auto out = postprocess(raw, {0.0, 1.0}, 640, 480);
  REQUIRE(out.size() == slide.truth.objects.size());
  for (const auto& obj : slide.truth.objects) {
    const bool found = std::any_of(out.begin(), out.end(), [&](const Detection& d) {
      return d.cls == obj.cls && std::abs(d.box.top - obj.box.top) <= 1 && std::abs(d.box.left - obj.box.left) <= 1 &&
             std::abs(d.box.bottom - obj.box.bottom) <= 1 && std::abs(d.box.right - obj.box.right) <= 1;
    });
    CHECK(found);
  }
}

TEST_CASE("backends reject wrong input size") {
  CHECK_THROWS_CODE(HeuristicDetector().infer(RasterImage(100, 100)), ErrorCode::kWrongInputSize);
  CHECK_THROWS_CODE(OracleDetector({}).infer(RasterImage(320, 321)), ErrorCode::kWrongInputSize);
}

TEST_CASE("external detector line protocol") {
  const auto dets = parse_detector_output("0 0.900000 0.100000 0.100000 0.300000 0.300000\n\n2 0.5 0 0 1 1\n");
  REQUIRE(dets.size() == 2);
  CHECK(dets[0].cls == CellClass::kRbc);
  CHECK(dets[1].cls == CellClass::kPlatelet);
  CHECK(dets[1].box == NormBox{0, 0, 1, 1});
  CHECK(format_detection_line(dets[0]) == "0 0.900000 0.100000 0.100000 0.300000 0.300000");
  CHECK_THROWS_CODE(parse_detector_output("7 0.5 0 0 1 1"), ErrorCode::kBackendUnavailable);
  CHECK_THROWS_CODE(parse_detector_output("0 0.5 0 0 1"), ErrorCode::kBackendUnavailable);
  CHECK_THROWS_CODE(parse_detector_output("0 0.5 0.5 0 0.2 1"), ErrorCode::kBackendUnavailable);
}

TEST_CASE("external detector runs a subprocess") {
  TempDir dir;
  const auto script = dir / "det.sh";
  {
    std::ofstream f(script);
    f << "#!/bin/sh\nhead -c 2 \"$1\" | grep -q P6 || exit 3\necho '1 0.750000 0.2 0.2 0.4 0.4'\n";
  }
  std::filesystem::permissions(script, std::filesystem::perms::owner_all);
  const auto out = ExternalDetector(script.string()).infer(RasterImage(320, 320));
  REQUIRE(out.size() == 1);
  CHECK(out[0].cls == CellClass::kWbc);
  CHECK(out[0].score == 0.75);
  CHECK_THROWS_CODE(ExternalDetector((dir / "missing").string()).infer(RasterImage(320, 320)),
                    ErrorCode::kBackendUnavailable);
}
