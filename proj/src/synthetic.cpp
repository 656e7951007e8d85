#include "maiscope/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <optional>
#include <sstream>

#include "maiscope/error.hpp"
#include "maiscope/random.hpp"

namespace maiscope {

namespace {

constexpr int kMaxPlacementAttempts = 10000;

struct Palette {
  Rgb background{236, 222, 226};
  Rgb rbc_rim{222, 148, 168};
  Rgb rbc_pallor{230, 172, 188};
  Rgb wbc_cytoplasm{190, 150, 215};
  Rgb wbc_nucleus{95, 45, 135};
  Rgb platelet{170, 115, 205};
  Rgb parasite{85, 30, 120};
  Rgb dirt{70, 70, 70};
};

Rgb hsv_to_rgb(double h, double s, double v) {
  h = std::fmod(std::fmod(h, 360.0) + 360.0, 360.0);
  const double c = v * s;
  const double x = c * (1.0 - std::abs(std::fmod(h / 60.0, 2.0) - 1.0));
  const double m = v - c;
  double r = 0, g = 0, b = 0;
  switch (static_cast<int>(h / 60.0)) {
    case 0: r = c; g = x; break;
    case 1: r = x; g = c; break;
    case 2: g = c; b = x; break;
    case 3: g = x; b = c; break;
    case 4: r = x; b = c; break;
    default: r = c; b = x; break;
  }
  const auto to8 = [](double u) { return static_cast<std::uint8_t>(std::clamp(std::lround(u * 255.0), 0L, 255L)); };
  return {to8(r + m), to8(g + m), to8(b + m)};
}

Rgb jitter(Rgb c, double hue_shift, double gain) {
  const Hsv hsv = rgb_to_hsv(c);
  const Rgb rotated = hsv_to_rgb(hsv.h + hue_shift, hsv.s, hsv.v);
  const auto scale = [gain](std::uint8_t u) {
    return static_cast<std::uint8_t>(std::clamp(std::lround(u * gain), 0L, 255L));
  };
  return {scale(rotated.r), scale(rotated.g), scale(rotated.b)};
}

struct PlacedCell {
  CellClass cls;
  double cx, cy, r;
};

// Paints pixels whose centres fall inside the disc (where `colour` yields a
// value) and returns the bounds of what was painted.
template <typename ColourFn>
PixelBox paint_disc(RasterImage& img, double cx, double cy, double r, ColourFn&& colour) {
  PixelBox bounds{img.height(), img.width(), 0, 0};
  const int y0 = std::max(0, static_cast<int>(std::floor(cy - r - 1)));
  const int y1 = std::min(img.height() - 1, static_cast<int>(std::ceil(cy + r + 1)));
  const int x0 = std::max(0, static_cast<int>(std::floor(cx - r - 1)));
  const int x1 = std::min(img.width() - 1, static_cast<int>(std::ceil(cx + r + 1)));
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      const double dx = x + 0.5 - cx;
      const double dy = y + 0.5 - cy;
      const double d = std::sqrt(dx * dx + dy * dy);
      if (d > r) continue;
      const std::optional<Rgb> c = colour(dx, dy, d);
      if (!c) continue;
      img.set(x, y, *c);
      bounds.top = std::min(bounds.top, y);
      bounds.left = std::min(bounds.left, x);
      bounds.bottom = std::max(bounds.bottom, y + 1);
      bounds.right = std::max(bounds.right, x + 1);
    }
  }
  return bounds;
}

}  // namespace

void SyntheticSlideSpec::validate() const {
  if (n_rbc < 0 || n_wbc < 0 || n_platelet < 0 || contamination < 0) {
    throw Error(ErrorCode::kInvalidArgument, "synthetic counts must be >= 0");
  }
  if (!(parasitized_fraction >= 0.0 && parasitized_fraction <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "parasitized_fraction must be in [0,1]");
  }
  if (width < 64 || height < 64) throw Error(ErrorCode::kInvalidArgument, "synthetic slides must be >= 64x64");
  if (hue_jitter_deg < 0 || brightness_jitter < 0 || brightness_jitter >= 1 || noise_amplitude < 0 || min_gap_px < 0) {
    throw Error(ErrorCode::kInvalidArgument, "bad jitter settings");
  }
}

SyntheticSlide generate_synthetic_slide(const SyntheticSlideSpec& spec) {
  spec.validate();
  SeededRng rng(spec.seed);

  const double hue_shift = rng.uniform(-spec.hue_jitter_deg, spec.hue_jitter_deg);
  const double gain = rng.uniform(1.0 - spec.brightness_jitter, 1.0 + spec.brightness_jitter);
  Palette p;
  for (Rgb* c : {&p.background, &p.rbc_rim, &p.rbc_pallor, &p.wbc_cytoplasm, &p.wbc_nucleus, &p.platelet,
                 &p.parasite}) {
    *c = jitter(*c, hue_shift, gain);
  }
  p.dirt = jitter(p.dirt, 0.0, gain);

  const double scale = std::min(spec.width, spec.height) / 320.0;
  std::vector<PlacedCell> cells;
  const auto place = [&](CellClass cls, double r_min, double r_max) {
    const double r = rng.uniform(r_min, r_max) * scale;
    for (int attempt = 0; attempt < kMaxPlacementAttempts; ++attempt) {
      const double cx = rng.uniform(r + 1.0, spec.width - r - 1.0);
      const double cy = rng.uniform(r + 1.0, spec.height - r - 1.0);
      const bool clear = std::all_of(cells.begin(), cells.end(), [&](const PlacedCell& o) {
        const double need = std::max(0.9 * (r + o.r), r + o.r + spec.min_gap_px);
        return std::hypot(cx - o.cx, cy - o.cy) >= need;
      });
      if (clear) {
        cells.push_back({cls, cx, cy, r});
        return;
      }
    }
    throw Error(ErrorCode::kPlacementOverflow, "could not place cell " + std::to_string(cells.size() + 1) +
                                                   " after " + std::to_string(kMaxPlacementAttempts) + " attempts");
  };
  for (int i = 0; i < spec.n_wbc; ++i) place(CellClass::kWbc, 21.0, 24.0);
  for (int i = 0; i < spec.n_rbc; ++i) place(CellClass::kRbc, 8.0, 14.0);
  for (int i = 0; i < spec.n_platelet; ++i) place(CellClass::kPlatelet, 3.0, 4.5);

  // Exactly round(fraction * n_rbc) infected RBCs.
  const auto n_infected = static_cast<std::size_t>(std::lround(spec.parasitized_fraction * spec.n_rbc));
  std::vector<std::size_t> rbc_order(static_cast<std::size_t>(spec.n_rbc));
  for (std::size_t i = 0; i < rbc_order.size(); ++i) rbc_order[i] = i;
  for (std::size_t i = rbc_order.size(); i > 1; --i) std::swap(rbc_order[i - 1], rbc_order[rng.below(i)]);
  std::vector<bool> rbc_infected(rbc_order.size(), false);
  for (std::size_t k = 0; k < n_infected; ++k) rbc_infected[rbc_order[k]] = true;

  SyntheticSlide out{RasterImage(spec.width, spec.height, p.background), {}, {}, {}};
  out.truth.width = spec.width;
  out.truth.height = spec.height;
  std::size_t rbc_index = 0;
  for (const PlacedCell& cell : cells) {
    PixelBox bounds;
    bool infected = false;
    switch (cell.cls) {
      case CellClass::kRbc: {
        infected = rbc_infected[rbc_index++];
        const double pallor = 0.55 * cell.r;
        bounds = paint_disc(out.image, cell.cx, cell.cy, cell.r,
                            [&](double, double, double d) -> std::optional<Rgb> { return d <= pallor ? p.rbc_pallor : p.rbc_rim; });
        if (infected) {
          // Ring form: a thin chromatin ring with one dense dot on it.
          const double ring_r = std::max(2.0, rng.uniform(0.28, 0.38) * cell.r);
          const double off_angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
          const double off = rng.uniform(0.0, 0.25) * cell.r;
          const double rx = cell.cx + off * std::cos(off_angle);
          const double ry = cell.cy + off * std::sin(off_angle);
          paint_disc(out.image, rx, ry, ring_r + 0.9, [&](double, double, double d) -> std::optional<Rgb> {
            if (std::abs(d - ring_r) <= 0.9) return p.parasite;
            return std::nullopt;
          });
          const double dot_angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
          paint_disc(out.image, rx + ring_r * std::cos(dot_angle), ry + ring_r * std::sin(dot_angle), 1.6,
                     [&](double, double, double) -> std::optional<Rgb> { return p.parasite; });
        }
        break;
      }
      case CellClass::kWbc: {
        bounds = paint_disc(out.image, cell.cx, cell.cy, cell.r, [&](double, double, double) -> std::optional<Rgb> { return p.wbc_cytoplasm; });
        const double base = rng.uniform(0.0, 2.0 * std::numbers::pi);
        for (int lobe = 0; lobe < 3; ++lobe) {
          const double a = base + lobe * 2.0 * std::numbers::pi / 3.0;
          paint_disc(out.image, cell.cx + 0.3 * cell.r * std::cos(a), cell.cy + 0.3 * cell.r * std::sin(a),
                     0.38 * cell.r, [&](double, double, double) -> std::optional<Rgb> { return p.wbc_nucleus; });
        }
        break;
      }
      case CellClass::kPlatelet:
        bounds = paint_disc(out.image, cell.cx, cell.cy, cell.r, [&](double, double, double) -> std::optional<Rgb> { return p.platelet; });
        break;
    }
    if (cell.cls == CellClass::kRbc) {
      out.sidecar.cells.push_back({out.truth.objects.size(), infected, std::nullopt});
    }
    out.truth.objects.push_back({cell.cls, bounds});
    out.parasitized.push_back(infected);
  }

  for (int i = 0; i < spec.contamination; ++i) {
    const double cx = rng.uniform(0.0, spec.width);
    const double cy = rng.uniform(0.0, spec.height);
    const double r = rng.uniform(0.8, 1.6) * scale;
    paint_disc(out.image, cx, cy, r, [&](double, double, double) -> std::optional<Rgb> { return p.dirt; });
  }

  if (spec.noise_amplitude > 0) {
    auto bytes = out.image.bytes();
    for (std::size_t i = 0; i < bytes.size(); i += 3) {
      const int n = rng.between(-spec.noise_amplitude, spec.noise_amplitude);
      for (std::size_t c = 0; c < 3; ++c) bytes[i + c] = static_cast<std::uint8_t>(std::clamp(bytes[i + c] + n, 0, 255));
    }
  }
  return out;
}

void write_synthetic_slide(const SyntheticSlide& slide, const std::filesystem::path& dir, const std::string& stem) {
  std::filesystem::create_directories(dir);
  save_image(slide.image, dir / (stem + ".ppm"));

  AnnotatedImage truth = slide.truth;
  truth.image_path = stem + ".ppm";
  std::ofstream xml(dir / (stem + ".xml"), std::ios::binary | std::ios::trunc);
  xml << write_voc_xml(truth);

  InfectionSidecar sidecar = slide.sidecar;
  sidecar.image = stem + ".ppm";
  std::ofstream json_out(dir / (stem + ".json"), std::ios::binary | std::ios::trunc);
  json_out << to_json(sidecar).dump(2) << "\n";
  if (!xml || !json_out) throw Error(ErrorCode::kIoFailure, "cannot write slide files into " + dir.string());
}

void generate_slide_set(const SyntheticSlideSpec& spec, int count, const std::filesystem::path& dir) {
  if (count < 0) throw Error(ErrorCode::kInvalidArgument, "count must be >= 0");
  for (int i = 0; i < count; ++i) {
    SyntheticSlideSpec s = spec;
    s.seed = spec.seed + static_cast<std::uint64_t>(i);
    std::ostringstream stem;
    stem << "slide_" << std::setw(4) << std::setfill('0') << i;
    write_synthetic_slide(generate_synthetic_slide(s), dir, stem.str());
  }
}

}  // namespace maiscope
