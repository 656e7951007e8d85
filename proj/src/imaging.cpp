#include "maiscope/imaging.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <memory>
#include <numeric>
#include <string_view>

#include "maiscope/error.hpp"

namespace maiscope {

namespace {

constexpr std::size_t kMaxPixelBytes = std::size_t{1} << 30;

std::size_t checked_byte_count(int width, int height) {
  if (width < 1 || height < 1) {
    throw Error(ErrorCode::kInvalidArgument, "image dimensions must be >= 1");
  }
  const auto n = static_cast<std::size_t>(width) * static_cast<std::size_t>(height) * 3;
  if (n > kMaxPixelBytes) throw Error(ErrorCode::kInvalidArgument, "image too large");
  return n;
}

// Netpbm header tokenizer: whitespace separated, '#' comments to end of line.
class PnmHeaderReader {
 public:
  explicit PnmHeaderReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::string_view magic() {
    if (bytes_.size() < 2) throw Error(ErrorCode::kMalformedHeader, "missing magic number");
    pos_ = 2;
    return {reinterpret_cast<const char*>(bytes_.data()), 2};
  }

  unsigned long number(const char* what) {
    skip_space_and_comments();
    unsigned long value = 0;
    std::size_t digits = 0;
    while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
      value = value * 10 + (bytes_[pos_] - '0');
      if (value > 0xFFFFFFUL) throw Error(ErrorCode::kMalformedHeader, std::string(what) + " too large");
      ++pos_;
      ++digits;
    }
    if (digits == 0) throw Error(ErrorCode::kMalformedHeader, std::string("expected ") + what);
    return value;
  }

  // Exactly one whitespace byte separates maxval from the raster.
  std::size_t raster_start() {
    if (pos_ >= bytes_.size() || !std::isspace(bytes_[pos_])) {
      throw Error(ErrorCode::kMalformedHeader, "missing whitespace before raster");
    }
    return pos_ + 1;
  }

 private:
  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      if (std::isspace(bytes_[pos_])) {
        ++pos_;
      } else if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n' && bytes_[pos_] != '\r') ++pos_;
      } else {
        break;
      }
    }
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

RasterImage decode_ppm(std::span<const std::uint8_t> bytes) {
  if (bytes.empty()) throw Error(ErrorCode::kMalformedHeader, "empty input");
  PnmHeaderReader reader(bytes);
  if (reader.magic() != "P6") throw Error(ErrorCode::kMalformedHeader, "not a binary PPM (P6)");
  const auto width = reader.number("width");
  const auto height = reader.number("height");
  const auto maxval = reader.number("maxval");
  if (width == 0 || height == 0) throw Error(ErrorCode::kMalformedHeader, "zero dimension");
  if (maxval == 0) throw Error(ErrorCode::kMalformedHeader, "maxval must be positive");
  if (maxval != 255) {
    throw Error(ErrorCode::kUnsupportedBitDepth, "only maxval 255 is supported, got " + std::to_string(maxval));
  }
  const std::size_t start = reader.raster_start();
  const std::size_t need = checked_byte_count(static_cast<int>(width), static_cast<int>(height));
  if (bytes.size() < start || bytes.size() - start < need) {
    throw Error(ErrorCode::kTruncatedPayload, "expected " + std::to_string(need) + " raster bytes, got " +
                                                  std::to_string(bytes.size() < start ? 0 : bytes.size() - start));
  }
  std::vector<std::uint8_t> pixels(bytes.begin() + static_cast<std::ptrdiff_t>(start),
                                   bytes.begin() + static_cast<std::ptrdiff_t>(start + need));
  return RasterImage(static_cast<int>(width), static_cast<int>(height), std::move(pixels));
}

std::vector<std::uint8_t> encode_ppm(const RasterImage& img) {
  const std::string header =
      "P6\n" + std::to_string(img.width()) + " " + std::to_string(img.height()) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), img.bytes().begin(), img.bytes().end());
  return out;
}

struct PngImageDeleter {
  void operator()(png_image* p) const noexcept { png_image_free(p); }
};

RasterImage decode_png(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0) {
    throw Error(ErrorCode::kMalformedHeader, "not a PNG stream");
  }
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
    throw Error(ErrorCode::kMalformedHeader, image.message);
  }
  std::unique_ptr<png_image, PngImageDeleter> guard(&image);
  if (image.format & PNG_FORMAT_FLAG_LINEAR) {
    throw Error(ErrorCode::kUnsupportedBitDepth, "16-bit PNG is not supported");
  }
  const int width = static_cast<int>(image.width);
  const int height = static_cast<int>(image.height);
  std::vector<std::uint8_t> pixels(checked_byte_count(width, height));
  image.format = PNG_FORMAT_RGB;
  // Alpha, if any, is composited onto the zeroed buffer (black).
  if (!png_image_finish_read(&image, nullptr, pixels.data(), 0, nullptr)) {
    throw Error(ErrorCode::kTruncatedPayload, image.message);
  }
  guard.release();
  return RasterImage(width, height, std::move(pixels));
}

std::vector<std::uint8_t> encode_png(const RasterImage& img) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width());
  image.height = static_cast<png_uint_32>(img.height());
  image.format = PNG_FORMAT_RGB;
  png_alloc_size_t size = 0;
  if (!png_image_write_get_memory_size(image, size, 0, img.bytes().data(), 0, nullptr)) {
    throw Error(ErrorCode::kInternal, image.message);
  }
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&image, out.data(), &size, 0, img.bytes().data(), 0, nullptr)) {
    throw Error(ErrorCode::kInternal, image.message);
  }
  out.resize(size);
  return out;
}

// 3x5 glyphs, one row per 3 low bits, top row first.
struct Glyph {
  char c;
  std::array<std::uint8_t, 5> rows;
};

constexpr std::array<Glyph, 24> kGlyphs{{
    {'A', {2, 5, 7, 5, 5}}, {'B', {6, 5, 6, 5, 6}}, {'C', {3, 4, 4, 4, 3}}, {'E', {7, 4, 6, 4, 7}},
    {'I', {7, 2, 2, 2, 7}}, {'L', {4, 4, 4, 4, 7}}, {'M', {5, 7, 7, 5, 5}}, {'P', {6, 5, 6, 4, 4}},
    {'R', {6, 5, 6, 5, 5}}, {'T', {7, 2, 2, 2, 2}}, {'W', {5, 5, 7, 7, 5}}, {'0', {7, 5, 5, 5, 7}},
    {'1', {2, 6, 2, 2, 7}}, {'2', {7, 1, 7, 4, 7}}, {'3', {7, 1, 7, 1, 7}}, {'4', {5, 5, 7, 1, 1}},
    {'5', {7, 4, 7, 1, 7}}, {'6', {7, 4, 7, 5, 7}}, {'7', {7, 1, 1, 1, 1}}, {'8', {7, 5, 7, 5, 7}},
    {'9', {7, 5, 7, 1, 7}}, {'.', {0, 0, 0, 0, 2}}, {'%', {5, 1, 2, 4, 5}}, {' ', {0, 0, 0, 0, 0}},
}};

constexpr int kGlyphHeight = 5;
constexpr int kGlyphAdvance = 4;

void draw_text(RasterImage& img, int x0, int y0, std::string_view text, Rgb color) {
  for (char ch : text) {
    const char upper = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
    const auto it = std::find_if(kGlyphs.begin(), kGlyphs.end(), [&](const Glyph& g) { return g.c == upper; });
    if (it != kGlyphs.end()) {
      for (int row = 0; row < kGlyphHeight; ++row) {
        for (int col = 0; col < 3; ++col) {
          if ((it->rows[static_cast<std::size_t>(row)] >> (2 - col)) & 1) {
            if (img.contains(x0 + col, y0 + row)) img.set(x0 + col, y0 + row, color);
          }
        }
      }
    }
    x0 += kGlyphAdvance;
  }
}

}  // namespace

RasterImage::RasterImage(int width, int height, Rgb fill)
    : width_(width), height_(height), pixels_(checked_byte_count(width, height)) {
  for (std::size_t i = 0; i < pixels_.size(); i += 3) {
    pixels_[i] = fill.r;
    pixels_[i + 1] = fill.g;
    pixels_[i + 2] = fill.b;
  }
}

RasterImage::RasterImage(int width, int height, std::vector<std::uint8_t> pixels)
    : width_(width), height_(height), pixels_(std::move(pixels)) {
  if (pixels_.size() != checked_byte_count(width, height)) {
    throw Error(ErrorCode::kInvalidArgument, "pixel buffer length must equal width*height*3");
  }
}

RasterImage decode_image(std::span<const std::uint8_t> bytes, ImageFormat format) {
  return format == ImageFormat::kPpm ? decode_ppm(bytes) : decode_png(bytes);
}

std::vector<std::uint8_t> encode_image(const RasterImage& img, ImageFormat format) {
  return format == ImageFormat::kPpm ? encode_ppm(img) : encode_png(img);
}

ImageFormat format_for_path(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  if (ext == ".ppm" || ext == ".pnm") return ImageFormat::kPpm;
  if (ext == ".png") return ImageFormat::kPng;
  throw Error(ErrorCode::kInvalidArgument, "unsupported image extension: " + path.string());
}

RasterImage load_image(const std::filesystem::path& path) {
  const ImageFormat format = format_for_path(path);
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoFailure, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_image(bytes, format);
}

void save_image(const RasterImage& img, const std::filesystem::path& path) {
  const auto bytes = encode_image(img, format_for_path(path));
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::kIoFailure, "cannot write " + path.string());
}

RasterImage resize(const RasterImage& img, int out_width, int out_height) {
  if (out_width < 1 || out_height < 1) throw Error(ErrorCode::kInvalidArgument, "resize target must be >= 1");
  if (out_width == img.width() && out_height == img.height()) return img;

  const double sx = static_cast<double>(img.width()) / out_width;
  const double sy = static_cast<double>(img.height()) / out_height;

  struct Tap {
    int i0, i1;
    double frac;
  };
  auto taps = [](int out_n, int in_n, double scale) {
    std::vector<Tap> result(static_cast<std::size_t>(out_n));
    for (int d = 0; d < out_n; ++d) {
      const double src = std::clamp((d + 0.5) * scale - 0.5, 0.0, static_cast<double>(in_n - 1));
      const int i0 = static_cast<int>(std::floor(src));
      const int i1 = std::min(i0 + 1, in_n - 1);
      result[static_cast<std::size_t>(d)] = {i0, i1, src - i0};
    }
    return result;
  };
  const auto xs = taps(out_width, img.width(), sx);
  const auto ys = taps(out_height, img.height(), sy);

  RasterImage out(out_width, out_height);
  const auto src = img.bytes();
  auto dst = out.bytes();
  const std::size_t stride = static_cast<std::size_t>(img.width()) * 3;
  for (int y = 0; y < out_height; ++y) {
    const Tap& ty = ys[static_cast<std::size_t>(y)];
    const std::uint8_t* row0 = src.data() + static_cast<std::size_t>(ty.i0) * stride;
    const std::uint8_t* row1 = src.data() + static_cast<std::size_t>(ty.i1) * stride;
    for (int x = 0; x < out_width; ++x) {
      const Tap& tx = xs[static_cast<std::size_t>(x)];
      const std::size_t a = static_cast<std::size_t>(tx.i0) * 3;
      const std::size_t b = static_cast<std::size_t>(tx.i1) * 3;
      for (std::size_t c = 0; c < 3; ++c) {
        const double top = row0[a + c] + (row0[b + c] - row0[a + c]) * tx.frac;
        const double bottom = row1[a + c] + (row1[b + c] - row1[a + c]) * tx.frac;
        const double v = top + (bottom - top) * ty.frac;
        dst[(static_cast<std::size_t>(y) * static_cast<std::size_t>(out_width) + static_cast<std::size_t>(x)) * 3 + c] =
            static_cast<std::uint8_t>(std::clamp(std::floor(v + 0.5), 0.0, 255.0));
      }
    }
  }
  return out;
}

PixelBox clamp_box(const PixelBox& box, int image_width, int image_height) noexcept {
  return {std::clamp(box.top, 0, image_height), std::clamp(box.left, 0, image_width),
          std::clamp(box.bottom, 0, image_height), std::clamp(box.right, 0, image_width)};
}

RasterImage crop(const RasterImage& img, const PixelBox& box) {
  const PixelBox b = clamp_box(box, img.width(), img.height());
  if (b.area() == 0) throw Error(ErrorCode::kEmptyCrop, "crop box has no area inside the image");
  RasterImage out(b.width(), b.height());
  const std::size_t src_stride = static_cast<std::size_t>(img.width()) * 3;
  const std::size_t row_bytes = static_cast<std::size_t>(b.width()) * 3;
  for (int y = 0; y < b.height(); ++y) {
    const auto* from = img.bytes().data() + static_cast<std::size_t>(b.top + y) * src_stride +
                       static_cast<std::size_t>(b.left) * 3;
    std::copy_n(from, row_bytes, out.bytes().data() + static_cast<std::size_t>(y) * row_bytes);
  }
  return out;
}

Hsv rgb_to_hsv(Rgb pixel) noexcept {
  const double r = pixel.r / 255.0;
  const double g = pixel.g / 255.0;
  const double b = pixel.b / 255.0;
  const double max = std::max({r, g, b});
  const double min = std::min({r, g, b});
  const double delta = max - min;
  Hsv out;
  out.v = max;
  out.s = max > 0.0 ? delta / max : 0.0;
  if (delta > 0.0) {
    if (max == r) {
      out.h = 60.0 * std::fmod((g - b) / delta, 6.0);
    } else if (max == g) {
      out.h = 60.0 * ((b - r) / delta + 2.0);
    } else {
      out.h = 60.0 * ((r - g) / delta + 4.0);
    }
    if (out.h < 0.0) out.h += 360.0;
  }
  return out;
}

double luminance(Rgb pixel) noexcept {
  return 0.299 * pixel.r + 0.587 * pixel.g + 0.114 * pixel.b;
}

RasterImage render_overlay(const RasterImage& img, std::span<const OverlayBox> boxes, const OverlayStyle& style) {
  RasterImage out = img;
  std::vector<std::size_t> order(boxes.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return boxes[a].score < boxes[b].score; });

  const int t = std::max(1, style.thickness);
  for (std::size_t idx : order) {
    const OverlayBox& ob = boxes[idx];
    const PixelBox b = clamp_box(ob.box, img.width(), img.height());
    if (b.area() == 0) continue;
    const Rgb color = style.color_for(ob.label);
    for (int y = b.top; y < b.bottom; ++y) {
      const bool edge_row = y < b.top + t || y >= b.bottom - t;
      for (int x = b.left; x < b.right; ++x) {
        if (edge_row || x < b.left + t || x >= b.right - t) out.set(x, y, color);
      }
    }
    if (style.draw_labels) {
      const std::string text =
          std::string(to_string(ob.label)) + " " + std::to_string(static_cast<int>(std::lround(ob.score * 100.0))) + "%";
      if (b.top >= kGlyphHeight + 1) {
        draw_text(out, b.left, b.top - kGlyphHeight - 1, text, color);
      } else if (b.bottom + kGlyphHeight + 1 <= img.height()) {
        draw_text(out, b.left, b.bottom + 1, text, color);
      }
    }
  }
  return out;
}

}  // namespace maiscope
