#pragma once

#include <cstdint>
#include <vector>

#include "mimatch/homography.hpp"
#include "mimatch/image.hpp"

namespace mimatch {

// A rendered cross-modal pair: the same procedural scene (roads, buildings,
// water) drawn once in flat cartographic colors and once as a noisy
// photo-style rendering, related by a known homography. Road occupancy masks
// are rasterized alongside for geometry checks.
struct SynthPair {
  Image map_image;    // 512x512 RGB
  Image photo_image;  // 512x512 RGB
  Homography gt;      // photo -> map
  uint64_t seed = 0;
  FloatMap road_mask_map;    // 1 where a road covers the pixel, map frame
  FloatMap road_mask_photo;  // photo frame
};

inline constexpr int kSynthSize = 512;

SynthPair make_synth_pair(uint64_t seed);
std::vector<SynthPair> synth_pairs(int n, uint64_t seed);

// Chi-square distance between the grayscale intensity histograms of two
// images (used to check the modality gap).
double histogram_chi_square(const Image& a, const Image& b, int bins = 64);

}  // namespace mimatch
