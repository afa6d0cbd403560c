#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "mimatch/adam.hpp"
#include "mimatch/homography.hpp"
#include "mimatch/image.hpp"
#include "mimatch/matcher.hpp"
#include "mimatch/tensor.hpp"

namespace mimatch {

// Pos / Neg / Ignore partition of the full src x ref candidate pair grid.
struct LabelSets {
  std::vector<std::pair<int, int>> pos, neg, ignore;
  double th_pos = 3.0;
  double th_neg = 6.0;
};

// Bidirectional reprojection labels. d_sym = max of forward and backward
// reprojection errors; a pair is positive only when d_sym < th_pos and the
// two keypoints are each other's minimum-d_sym partner (mutual one-to-one).
LabelSets make_labels(const std::vector<std::array<double, 2>>& kpts_src,
                      const std::vector<std::array<double, 2>>& kpts_ref, const Homography& h,
                      double th_pos = 3.0, double th_neg = 6.0);

struct LossBreakdown {
  double pos = 0.0, neg = 0.0, fp = 0.0, fn = 0.0, total = 0.0;
  int n_pos = 0, n_neg = 0, n_fp = 0, n_fn = 0;
};

struct QuadrupletLoss {
  Tensor total;  // scalar, differentiable through P
  LossBreakdown breakdown;
};

// total = L_pos + (L_neg + L_fp + L_fn) / 3, each term a mean of clamped
// cross-entropies over its pair set; empty sets contribute 0. FP = predicted
// matches whose pair is not positive; FN = positive pairs left unmatched.
QuadrupletLoss quadruplet_loss(const Tensor& p, const LabelSets& labels, const MatchSet& predicted);

struct TrainPair {
  std::string id;
  Image src, ref;
  Homography gt;  // src -> ref
};

struct TrainConfig {
  double lr = 1e-4;
  int batch_size = 4;
  int steps = 1000;
  int keypoint_cap = 512;
  double tau = 0.1;
  double th_pos = 3.0;
  double th_neg = 6.0;
  double eps_min = 64.0;
  double alpha = 4.0;
  double r_min = 1.0;
  double r_max = 7.0;
  uint64_t seed = 0;
  std::string manifest;  // dataset source: JSONL manifest ...
  int synthetic = 0;     // ... or this many generated pairs
  // model / run controls
  int layers = 6;
  int heads = 4;
  int width = 256;
  bool use_semantic = true;
  int checkpoint_every = 0;
  std::string out_dir;
  int threads = 1;
  std::string resume;
};

TrainConfig load_train_config(const std::string& path);

class Trainer {
 public:
  Trainer(TrainConfig cfg, std::vector<TrainPair> dataset);

  // One optimizer step over a round-robin batch with fresh augmentations.
  LossBreakdown step();

  int64_t steps_done() const { return step_index_; }
  const MatcherWeights& weights() const { return weights_; }
  const TrainConfig& config() const { return cfg_; }

  // Weights + optimizer state in one MGCK file; a resumed run continues
  // bit-identically.
  void save_checkpoint(const std::string& path) const;
  void restore_checkpoint(const std::string& path);

 private:
  struct PairLoss {
    Tensor scaled_total;
    LossBreakdown breakdown;
    bool skipped = false;
  };
  PairLoss forward_pair(int dataset_index, uint64_t aug_seed);

  TrainConfig cfg_;
  std::vector<TrainPair> dataset_;
  MatcherWeights weights_;
  AdamState adam_;
  int64_t step_index_ = 0;
  std::map<int, std::shared_ptr<FeatureProvider>> ref_provider_cache_;
};

// Reads a JSONL pair manifest (fields src, ref, optional H row-major src->ref;
// missing H means identity / pre-aligned). Paths resolve relative to the
// manifest location.
std::vector<TrainPair> load_pair_manifest(const std::string& path);

}  // namespace mimatch
