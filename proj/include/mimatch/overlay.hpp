#pragma once

#include <vector>

#include "mimatch/image.hpp"
#include "mimatch/matcher.hpp"

namespace mimatch {

// Side-by-side canvas with one line per match: green when the match's
// ground-truth reprojection error is within `threshold` px, red otherwise.
Image render_overlay(const Image& src, const Image& ref, const std::vector<MatchedPoint>& matches,
                     const Homography& h_gt, double threshold = 5.0);

}  // namespace mimatch
