#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mimatch/fmap.hpp"
#include "mimatch/image.hpp"

namespace mimatch {

// Normalized, gamma-boosted gradient magnitude: values in [0, 1], monotone in
// the raw gradient magnitude.
struct SaliencyMap {
  FloatMap values;
  double alpha = 4.0;
};

// Per-pixel suppression radii in [r_min, r_max], anti-monotone in saliency.
struct RadiusMap {
  FloatMap values;
  double r_min = 1.0;
  double r_max = 7.0;
};

struct Keypoint {
  float x = 0.0f;
  float y = 0.0f;
  float score = 0.0f;
};

struct KeypointSet {
  std::vector<Keypoint> points;  // sorted by score, non-increasing
  int image_width = 0;
  int image_height = 0;

  size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
};

// ((raw - min) / (max - min + eps))^alpha applied to a raw value; the shared
// kernel behind saliency_map.
double saliency_gain(double raw, double raw_min, double raw_max, double alpha);

inline constexpr double kSaliencyEps = 1e-8;

SaliencyMap saliency_map(const Image& gray, double alpha = 4.0);

RadiusMap radius_map(const SaliencyMap& sal, double r_min = 1.0, double r_max = 7.0);

// Adaptive NMS. Candidates are strict 8-neighborhood local maxima above
// score_floor (plateau ties keep only the lexicographically first pixel),
// visited in score order with (y, x) tie-break; a candidate is accepted iff
// every already accepted keypoint lies at distance >= the radius map value at
// the candidate's own pixel.
KeypointSet anms_detect(const FloatMap& score_map, const RadiusMap& radii, int max_keypoints = 2048,
                        double score_floor = 1e-3);

// Source of the dense detection score map and the structural / semantic
// descriptor grids: either imported FMAP files or the built-in classical
// fallback banks.
class FeatureProvider {
 public:
  enum class Mode { kImported, kFallback };

  // Fallback: score map = saliency values; the descriptor banks are fixed
  // filter responses (see build notes in the implementation), L2-normalized
  // per pixel. 24 channels each.
  static FeatureProvider fallback(const Image& image, double alpha = 4.0);

  // Imported maps are validated against the image dimensions.
  static FeatureProvider imported(const Image& image, DenseMap score, DenseMap structural,
                                  DenseMap semantic);
  static FeatureProvider imported_from_files(const Image& image, const std::string& score_path,
                                             const std::string& structural_path,
                                             const std::string& semantic_path);

  Mode mode() const { return mode_; }
  // Detection score map at full image resolution.
  const FloatMap& score_map() const { return score_full_; }
  const DenseMap& structural() const { return structural_; }
  const DenseMap& semantic() const { return semantic_; }

 private:
  FeatureProvider() = default;
  Mode mode_ = Mode::kFallback;
  FloatMap score_full_;
  DenseMap structural_;
  DenseMap semantic_;
};

inline constexpr int kFallbackChannels = 24;

}  // namespace mimatch
