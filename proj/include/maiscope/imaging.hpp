#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "maiscope/labels.hpp"

namespace maiscope {

struct Rgb {
  std::uint8_t r = 0;
  std::uint8_t g = 0;
  std::uint8_t b = 0;

  friend bool operator==(const Rgb&, const Rgb&) = default;
};

struct Hsv {
  double h = 0.0;  // degrees, [0, 360)
  double s = 0.0;  // [0, 1]
  double v = 0.0;  // [0, 1]
};

// Pixel-space box. top/left inclusive, bottom/right exclusive.
struct PixelBox {
  int top = 0;
  int left = 0;
  int bottom = 0;
  int right = 0;

  int width() const noexcept { return right - left; }
  int height() const noexcept { return bottom - top; }
  long long area() const noexcept {
    return width() > 0 && height() > 0 ? static_cast<long long>(width()) * height() : 0;
  }
  bool fits(int image_width, int image_height) const noexcept {
    return 0 <= left && left < right && right <= image_width && 0 <= top && top < bottom &&
           bottom <= image_height;
  }

  friend bool operator==(const PixelBox&, const PixelBox&) = default;
};

// Row-major, 3 channels, 8 bits per channel.
class RasterImage {
 public:
  // Filled with `fill`.
  RasterImage(int width, int height, Rgb fill = {});
  RasterImage(int width, int height, std::vector<std::uint8_t> pixels);

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  std::span<const std::uint8_t> bytes() const noexcept { return pixels_; }
  std::span<std::uint8_t> bytes() noexcept { return pixels_; }

  Rgb at(int x, int y) const noexcept {
    const std::size_t i = offset(x, y);
    return {pixels_[i], pixels_[i + 1], pixels_[i + 2]};
  }
  void set(int x, int y, Rgb c) noexcept {
    const std::size_t i = offset(x, y);
    pixels_[i] = c.r;
    pixels_[i + 1] = c.g;
    pixels_[i + 2] = c.b;
  }
  bool contains(int x, int y) const noexcept {
    return x >= 0 && y >= 0 && x < width_ && y < height_;
  }
  PixelBox full_box() const noexcept { return {0, 0, height_, width_}; }

  friend bool operator==(const RasterImage&, const RasterImage&) = default;

 private:
  std::size_t offset(int x, int y) const noexcept {
    return (static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
            static_cast<std::size_t>(x)) * 3;
  }

  int width_;
  int height_;
  std::vector<std::uint8_t> pixels_;
};

enum class ImageFormat { kPpm, kPng };

RasterImage decode_image(std::span<const std::uint8_t> bytes, ImageFormat format);
std::vector<std::uint8_t> encode_image(const RasterImage& img, ImageFormat format);

// Format chosen from the file extension (.ppm/.pnm or .png).
ImageFormat format_for_path(const std::filesystem::path& path);
RasterImage load_image(const std::filesystem::path& path);
void save_image(const RasterImage& img, const std::filesystem::path& path);

// Bilinear, half-pixel centers, no aspect preservation.
RasterImage resize(const RasterImage& img, int out_width, int out_height);

// Clamps `box` to the image first; throws EmptyCrop when nothing is left.
RasterImage crop(const RasterImage& img, const PixelBox& box);
PixelBox clamp_box(const PixelBox& box, int image_width, int image_height) noexcept;

Hsv rgb_to_hsv(Rgb pixel) noexcept;

// Rec. 601 luma, 0..255.
double luminance(Rgb pixel) noexcept;

struct OverlayStyle {
  std::array<Rgb, 4> colors{{
      {0, 200, 0},    // RBC
      {220, 0, 0},    // WBC
      {148, 0, 211},  // Platelet
      {128, 0, 128},  // Malaria
  }};
  int thickness = 2;
  bool draw_labels = false;

  Rgb color_for(FinalLabel label) const noexcept { return colors[static_cast<std::size_t>(label)]; }
};

struct OverlayBox {
  PixelBox box;
  FinalLabel label = FinalLabel::kRbc;
  double score = 0.0;
};

// Outlines are drawn inward from the box edge; boxes are painted in ascending
// score order so the strongest detection ends up on top.
RasterImage render_overlay(const RasterImage& img, std::span<const OverlayBox> boxes,
                           const OverlayStyle& style);

}  // namespace maiscope
