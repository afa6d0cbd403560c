#pragma once

#include <functional>
#include <string>
#include <vector>

#include "mimatch/image.hpp"
#include "mimatch/matcher.hpp"
#include "mimatch/ransac.hpp"
#include "mimatch/rng.hpp"
#include "mimatch/transforms.hpp"

namespace mimatch {

// Mean Euclidean distance between the ground-truth and predicted projections
// of the source image corners (0,0), (w-1,0), (w-1,h-1), (0,h-1).
double corner_error(const Homography& h_gt, const Homography& h_pred, int width, int height);

// Normalized area under the empirical cumulative error curve up to t:
// mean over errors of max(0, 1 - e/t). +inf entries contribute 0. In [0, 1].
double auc(const std::vector<double>& errors, double threshold);

struct EvalPair {
  std::string id;
  Image src, ref;
  Homography gt;  // src -> ref; identity for pre-aligned pairs
};

// A matcher under evaluation: returns point correspondences in the given
// (already warped + resized) frames. The ground-truth homography is passed so
// oracle stubs can fabricate correspondences; the real matcher ignores it.
using MatcherFn = std::function<std::vector<MatchedPoint>(
    const Image& src, const Image& ref, const Homography& gt, RngStream& rng)>;

MatcherFn real_matcher(const MatcherWeights& weights);
// Ground-truth correspondences with Gaussian noise on the reference side.
MatcherFn oracle_matcher(double noise_sigma = 0.5, int count = 256);
// Uniformly random correspondences.
MatcherFn random_matcher(int count = 256);

struct EvalRecord {
  std::string pair_id;
  Difficulty difficulty = Difficulty::kEasy;
  int repeat = 0;
  uint64_t seed = 0;
  double error = 0.0;  // +inf encodes estimation failure
  int match_count = 0;
  int inlier_count = 0;
};

struct DifficultyReport {
  Difficulty difficulty = Difficulty::kEasy;
  double auc3 = 0.0, auc5 = 0.0, auc10 = 0.0;  // percent
  int pairs = 0;
  int failures = 0;  // failed records across repeats
};

struct Report {
  std::vector<DifficultyReport> per_difficulty;
  std::vector<EvalRecord> records;
};

struct EvalOptions {
  std::vector<Difficulty> difficulties{Difficulty::kEasy, Difficulty::kNormal, Difficulty::kHard};
  int repeats = 5;
  uint64_t seed = 0;
  int threads = 1;
  int resize_limit = 640;
  RansacConfig ransac;
};

// The full protocol: per pair x difficulty x repeat, warp the source by a
// sampled transform, resize both sides to the evaluation scale, match, fit a
// homography by RANSAC, and score the corner error against the composed
// ground truth. RNG streams derive from (seed, pair id, difficulty, repeat),
// so results are independent of manifest order and thread count.
Report evaluate(const std::vector<EvalPair>& pairs, const MatcherFn& matcher,
                const EvalOptions& opts);

// Report serialization: JSON (floats at 17 significant digits) and a
// fixed-width text table of AUC percentages per difficulty.
std::string report_to_json(const Report& report, const std::string& config_echo_json);
std::string report_to_table(const Report& report);

// "%.17g" formatting used for all floating-point JSON output.
std::string json_double(double v);

}  // namespace mimatch
