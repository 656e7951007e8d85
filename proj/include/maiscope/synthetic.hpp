#pragma once

// Synthetic thin-smear slides with exact ground truth.
//
// PRNG: std::mt19937_64 seeded with SyntheticSlideSpec::seed. Draw order is
// fixed (palette jitter, placement of WBCs, RBCs, platelets, infection
// assignment, parasite geometry, contamination, noise), so a seed pins every
// pixel on any conforming C++ implementation.

#include <cstdint>
#include <filesystem>
#include <vector>

#include "maiscope/datasets.hpp"
#include "maiscope/imaging.hpp"

namespace maiscope {

struct SyntheticSlideSpec {
  std::uint64_t seed = 1;
  int n_rbc = 30;
  int n_wbc = 1;
  int n_platelet = 3;
  double parasitized_fraction = 0.1;
  int width = 320;
  int height = 320;
  double hue_jitter_deg = 8.0;      // per-slide palette rotation, +/-
  double brightness_jitter = 0.06;  // per-slide gain, +/-
  int contamination = 4;            // dirt specks
  int noise_amplitude = 3;          // per-pixel luma noise, +/-
  // Cell centres are at least max(0.9 * (ri + rj), ri + rj + min_gap_px) apart.
  double min_gap_px = 3.0;

  void validate() const;
};

struct SyntheticSlide {
  RasterImage image;
  AnnotatedImage truth;
  // Parallel to truth.objects; only RBCs can be parasitized.
  std::vector<bool> parasitized;
  InfectionSidecar sidecar;
};

SyntheticSlide generate_synthetic_slide(const SyntheticSlideSpec& spec);

// Writes <stem>.ppm, <stem>.xml and <stem>.json into `dir`.
void write_synthetic_slide(const SyntheticSlide& slide, const std::filesystem::path& dir, const std::string& stem);

// `count` slides with seeds spec.seed, spec.seed + 1, ... named slide_0000...
void generate_slide_set(const SyntheticSlideSpec& spec, int count, const std::filesystem::path& dir);

}  // namespace maiscope
