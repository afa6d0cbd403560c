#pragma once

#include <optional>
#include <vector>

#include "mimatch/homography.hpp"
#include "mimatch/matcher.hpp"
#include "mimatch/rng.hpp"

namespace mimatch {

struct RansacConfig {
  double threshold = 1.5;     // symmetric transfer error, px
  int max_iterations = 10000;
  double confidence = 0.9999;
};

struct RansacResult {
  Homography h;
  std::vector<uint8_t> inliers;
  int inlier_count = 0;
};

// Classic 4-point DLT hypotheses over normalized coordinates with an adaptive
// early exit; the final model is re-estimated by DLT on all inliers. Returns
// nullopt with < 4 matches or when no hypothesis gathers 4 inliers.
std::optional<RansacResult> ransac_homography(const std::vector<MatchedPoint>& matches,
                                              const RansacConfig& cfg, RngStream& rng);

// Mean of forward and backward transfer distances for one correspondence.
double symmetric_transfer_error(const Homography& h, const Homography& h_inv,
                                const MatchedPoint& m);

}  // namespace mimatch
