#include <cmath>
#include <set>

#include "doctest.h"
#include "maiscope/error.hpp"
#include "maiscope/imaging.hpp"
#include "maiscope/random.hpp"
#include "test_util.hpp"

using namespace maiscope;

namespace {

std::vector<std::uint8_t> bytes_of(const std::string& s) { return {s.begin(), s.end()}; }

RasterImage random_image(SeededRng& rng, int w, int h) {
  RasterImage img(w, h);
  for (auto& b : img.bytes()) b = static_cast<std::uint8_t>(rng.below(256));
  return img;
}

// Numbered test pattern: pixel (x, y) = (x, y, 10*y + x).
RasterImage numbered(int w, int h) {
  RasterImage img(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) img.set(x, y, {std::uint8_t(x), std::uint8_t(y), std::uint8_t(10 * y + x)});
  return img;
}

// Textbook hexcone inverse, used only to check rgb_to_hsv.
Rgb hsv_to_rgb(Hsv hsv) {
  const double c = hsv.v * hsv.s;
  const double hp = hsv.h / 60.0;
  const double x = c * (1 - std::fabs(std::fmod(hp, 2.0) - 1));
  double r = 0, g = 0, b = 0;
  if (hp < 1) r = c, g = x;
  else if (hp < 2) r = x, g = c;
  else if (hp < 3) g = c, b = x;
  else if (hp < 4) g = x, b = c;
  else if (hp < 5) r = x, b = c;
  else r = c, b = x;
  const double m = hsv.v - c;
  auto to8 = [](double v) { return static_cast<std::uint8_t>(std::lround(v * 255.0)); };
  return {to8(r + m), to8(g + m), to8(b + m)};
}

}  // namespace

TEST_CASE("PPM decode of a 2x1 image") {
  std::string s = "P6 2 1 255\n";
  s += std::string("\xff\x00\x00\x00\xff\x00", 6);
  const auto img = decode_image(bytes_of(s), ImageFormat::kPpm);
  CHECK(img.width() == 2);
  CHECK(img.height() == 1);
  CHECK(img.at(0, 0) == Rgb{255, 0, 0});
  CHECK(img.at(1, 0) == Rgb{0, 255, 0});
}

TEST_CASE("PPM header comments are skipped") {
  std::string s = "P6\n# made by hand\n1 1 # width height\n255\n";
  s += std::string("\x01\x02\x03", 3);
  CHECK(decode_image(bytes_of(s), ImageFormat::kPpm).at(0, 0) == Rgb{1, 2, 3});
}

TEST_CASE("PPM decode errors") {
  CHECK_THROWS_CODE(decode_image({}, ImageFormat::kPpm), ErrorCode::kMalformedHeader);
  CHECK_THROWS_CODE(decode_image(bytes_of("P3 1 1 255\n0 0 0"), ImageFormat::kPpm), ErrorCode::kMalformedHeader);
  CHECK_THROWS_CODE(decode_image(bytes_of("P6 0 1 255\n"), ImageFormat::kPpm), ErrorCode::kMalformedHeader);
  CHECK_THROWS_CODE(decode_image(bytes_of("P6 1 1 65535\n123456"), ImageFormat::kPpm), ErrorCode::kUnsupportedBitDepth);
  std::string truncated = "P6 2 2 255\n" + std::string(6, '\0');
  CHECK_THROWS_CODE(decode_image(bytes_of(truncated), ImageFormat::kPpm), ErrorCode::kTruncatedPayload);
}

TEST_CASE("PPM encode of a black pixel") {
  const auto out = encode_image(RasterImage(1, 1), ImageFormat::kPpm);
  const std::string expected("P6\n1 1\n255\n\x00\x00\x00", 14);
  CHECK(std::string(out.begin(), out.end()) == expected);
}

TEST_CASE("PPM encode of the decoded 2x1 image ends with its payload") {
  std::string s = "P6 2 1 255\n" + std::string("\xff\x00\x00\x00\xff\x00", 6);
  const auto out = encode_image(decode_image(bytes_of(s), ImageFormat::kPpm), ImageFormat::kPpm);
  const std::vector<std::uint8_t> payload(out.end() - 6, out.end());
  CHECK(payload == std::vector<std::uint8_t>{255, 0, 0, 0, 255, 0});
}

TEST_CASE("PPM and PNG round-trip random images exactly") {
  SeededRng rng(42);
  for (int i = 0; i < 40; ++i) {
    const int w = i == 0 ? 3 : rng.between(1, 40);
    const int h = i == 0 ? 3 : rng.between(1, 40);
    const auto img = random_image(rng, w, h);
    CHECK(decode_image(encode_image(img, ImageFormat::kPpm), ImageFormat::kPpm) == img);
    CHECK(decode_image(encode_image(img, ImageFormat::kPng), ImageFormat::kPng) == img);
  }
}

TEST_CASE("PNG decode rejects garbage") {
  CHECK_THROWS_CODE(decode_image(bytes_of("not a png at all"), ImageFormat::kPng), ErrorCode::kMalformedHeader);
}

TEST_CASE("image files round-trip by extension") {
  TempDir dir;
  SeededRng rng(3);
  const auto img = random_image(rng, 7, 5);
  save_image(img, dir / "a.ppm");
  save_image(img, dir / "a.png");
  CHECK(load_image(dir / "a.ppm") == img);
  CHECK(load_image(dir / "a.png") == img);
  CHECK_THROWS_CODE(save_image(img, dir / "a.bmp"), ErrorCode::kInvalidArgument);
  CHECK_THROWS_CODE(load_image(dir / "missing.ppm"), ErrorCode::kIoFailure);
}

TEST_CASE("RasterImage rejects a buffer of the wrong length") {
  CHECK_THROWS_CODE(RasterImage(2, 2, std::vector<std::uint8_t>(11)), ErrorCode::kInvalidArgument);
  CHECK_THROWS_CODE(RasterImage(0, 2), ErrorCode::kInvalidArgument);
}

TEST_CASE("resize dimensions and identity") {
  SeededRng rng(5);
  const auto img = random_image(rng, 640, 480);
  const auto small = resize(img, 320, 320);
  CHECK(small.width() == 320);
  CHECK(small.height() == 320);
  CHECK(resize(img, 640, 480) == img);
}

TEST_CASE("resize keeps a constant image constant") {
  const RasterImage gray(100, 100, Rgb{128, 128, 128});
  const auto big = resize(gray, 320, 320);
  CHECK(big == RasterImage(320, 320, Rgb{128, 128, 128}));

  SeededRng rng(6);
  for (int i = 0; i < 20; ++i) {
    const Rgb c{std::uint8_t(rng.below(256)), std::uint8_t(rng.below(256)), std::uint8_t(rng.below(256))};
    const int w = rng.between(1, 50), h = rng.between(1, 50);
    const int ow = rng.between(1, 80), oh = rng.between(1, 80);
    CHECK(resize(RasterImage(w, h, c), ow, oh) == RasterImage(ow, oh, c));
  }
}

TEST_CASE("resize samples at half-pixel centres") {
  // 2x1 ramp [0, 255] to 4x1: source x = (dst + 0.5) / 2 - 0.5 = -0.25, 0.25, 0.75, 1.25,
  // clamped to [0, 1] -> 0, 63.75, 191.25, 255.
  RasterImage ramp(2, 1);
  ramp.set(0, 0, {0, 0, 0});
  ramp.set(1, 0, {255, 255, 255});
  const auto out = resize(ramp, 4, 1);
  CHECK(out.at(0, 0).r == 0);
  CHECK(out.at(1, 0).r == 64);
  CHECK(out.at(2, 0).r == 191);
  CHECK(out.at(3, 0).r == 255);
}

TEST_CASE("crop examples") {
  const auto img = numbered(4, 4);
  CHECK(crop(img, img.full_box()) == img);
  const auto sub = crop(img, {1, 1, 3, 3});
  REQUIRE(sub.width() == 2);
  REQUIRE(sub.height() == 2);
  CHECK(sub.at(0, 0) == Rgb{1, 1, 11});
  CHECK(sub.at(1, 0) == Rgb{2, 1, 12});
  CHECK(sub.at(0, 1) == Rgb{1, 2, 21});
  CHECK(sub.at(1, 1) == Rgb{2, 2, 22});
  CHECK_THROWS_CODE(crop(img, {10, 10, 20, 20}), ErrorCode::kEmptyCrop);
}

TEST_CASE("crop composes") {
  SeededRng rng(9);
  const auto img = random_image(rng, 30, 20);
  for (int i = 0; i < 50; ++i) {
    const int t = rng.between(0, 18), l = rng.between(0, 28);
    const PixelBox a{t, l, rng.between(t + 1, 20), rng.between(l + 1, 30)};
    const int bt = rng.between(0, a.height() - 1), bl = rng.between(0, a.width() - 1);
    const PixelBox b{bt, bl, rng.between(bt + 1, a.height()), rng.between(bl + 1, a.width())};
    const PixelBox shifted{b.top + a.top, b.left + a.left, b.bottom + a.top, b.right + a.left};
    CHECK(crop(crop(img, a), b) == crop(img, shifted));
  }
}

TEST_CASE("rgb_to_hsv examples") {
  auto red = rgb_to_hsv({255, 0, 0});
  CHECK(red.h == doctest::Approx(0.0));
  CHECK(red.s == doctest::Approx(1.0));
  CHECK(red.v == doctest::Approx(1.0));
  auto black = rgb_to_hsv({0, 0, 0});
  CHECK(black.h == 0.0);
  CHECK(black.s == 0.0);
  CHECK(black.v == 0.0);
  auto purple = rgb_to_hsv({128, 0, 128});
  CHECK(purple.h == doctest::Approx(300.0));
  CHECK(purple.s == doctest::Approx(1.0));
  CHECK(purple.v == doctest::Approx(128.0 / 255.0));
}

TEST_CASE("rgb_to_hsv inverts through the reference formula") {
  SeededRng rng(11);
  for (int i = 0; i < 5000; ++i) {
    const Rgb c{std::uint8_t(rng.below(256)), std::uint8_t(rng.below(256)), std::uint8_t(rng.below(256))};
    const Hsv hsv = rgb_to_hsv(c);
    CHECK(hsv.h >= 0.0);
    CHECK(hsv.h < 360.0);
    const Rgb back = hsv_to_rgb(hsv);
    CHECK(std::abs(back.r - c.r) <= 1);
    CHECK(std::abs(back.g - c.g) <= 1);
    CHECK(std::abs(back.b - c.b) <= 1);
  }
}

TEST_CASE("overlay with no boxes is a copy") {
  SeededRng rng(1);
  const auto img = random_image(rng, 20, 10);
  CHECK(render_overlay(img, {}, OverlayStyle{}) == img);
}

TEST_CASE("overlay outline touches only the ring") {
  const RasterImage white(50, 40, Rgb{255, 255, 255});
  const OverlayStyle style;
  const PixelBox box{5, 8, 25, 38};  // 30 wide, 20 tall
  const std::vector<OverlayBox> boxes{{box, FinalLabel::kMalaria, 0.9}};
  const auto out = render_overlay(white, boxes, style);

  const int t = style.thickness;
  const long long expected = 30LL * 20 - (30LL - 2 * t) * (20 - 2 * t);
  long long changed = 0;
  for (int y = 0; y < 40; ++y) {
    for (int x = 0; x < 50; ++x) {
      if (out.at(x, y) == white.at(x, y)) continue;
      ++changed;
      CHECK(out.at(x, y) == Rgb{128, 0, 128});
      const bool in_box = x >= box.left && x < box.right && y >= box.top && y < box.bottom;
      const bool inner = x >= box.left + t && x < box.right - t && y >= box.top + t && y < box.bottom - t;
      CHECK(in_box);
      CHECK_FALSE(inner);
    }
  }
  CHECK(changed == expected);
}

TEST_CASE("RBC and Malaria overlays differ only in outline colour") {
  const RasterImage white(30, 30, Rgb{255, 255, 255});
  const PixelBox box{3, 3, 20, 25};
  const std::vector<OverlayBox> rbc{{box, FinalLabel::kRbc, 0.5}};
  const std::vector<OverlayBox> mal{{box, FinalLabel::kMalaria, 0.5}};
  const auto a = render_overlay(white, rbc, {});
  const auto b = render_overlay(white, mal, {});
  const OverlayStyle style;
  for (int y = 0; y < 30; ++y) {
    for (int x = 0; x < 30; ++x) {
      if (a.at(x, y) == b.at(x, y)) continue;
      CHECK(a.at(x, y) == style.color_for(FinalLabel::kRbc));
      CHECK(b.at(x, y) == style.color_for(FinalLabel::kMalaria));
    }
  }
  CHECK(a != b);
}

TEST_CASE("label colours are distinct") {
  const OverlayStyle style;
  std::set<std::tuple<int, int, int>> seen;
  for (const auto& c : style.colors) seen.insert({c.r, c.g, c.b});
  CHECK(seen.size() == 4);
  CHECK(style.color_for(FinalLabel::kMalaria) != style.color_for(FinalLabel::kPlatelet));
}

TEST_CASE("overlay labels stay inside the image") {
  const RasterImage white(12, 12, Rgb{255, 255, 255});
  OverlayStyle style;
  style.draw_labels = true;
  const std::vector<OverlayBox> boxes{{{0, 0, 12, 12}, FinalLabel::kWbc, 1.0}, {{8, 8, 12, 12}, FinalLabel::kRbc, 0.2}};
  const auto out = render_overlay(white, boxes, style);
  CHECK(out.width() == 12);
  CHECK(out != white);
}
