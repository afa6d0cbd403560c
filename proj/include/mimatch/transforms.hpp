#pragma once

#include <cstdint>
#include <string>

#include "mimatch/homography.hpp"

namespace mimatch {

enum class Difficulty { kEasy, kNormal, kHard };

const char* difficulty_name(Difficulty d);
Difficulty difficulty_from_name(const std::string& name);

// Ranges for the simulated evaluation warps. Rotation is symmetric in
// degrees, translation is a fraction of width/height per axis, scale is a
// multiplicative interval.
struct TransformSpec {
  Difficulty difficulty = Difficulty::kEasy;
  double rotation_deg = 36.0;
  double translation_frac = 0.10;
  double scale_lo = 0.9;
  double scale_hi = 1.1;

  static TransformSpec easy();
  static TransformSpec normal();
  static TransformSpec hard();
  static TransformSpec for_difficulty(Difficulty d);
};

// Similarity warp about the image center, uniform in the spec ranges,
// deterministic per seed. Hard-mode rotation stays a center rotation on the
// fixed canvas so the common region keeps its size.
Homography sample_transform(const TransformSpec& spec, int width, int height, uint64_t seed);

struct AugmentationConfig {
  double rotation_deg = 180.0;
  double scale_lo = 0.5;
  double scale_hi = 1.5;
  double translation_frac = 0.5;
  bool perspective_jitter = true;
  double jitter_frac = 0.02;  // corner perturbation as a fraction of image size
};

// Training-time random perspective warp: similarity about the center plus a
// small jitter of the mapped corners. With jitter disabled the result is
// affine (bottom row [0,0,1]).
Homography sample_training_augmentation(const AugmentationConfig& cfg, int width, int height,
                                        uint64_t seed);

}  // namespace mimatch
