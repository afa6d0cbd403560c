#pragma once

#include <vector>

#include "mimatch/detector.hpp"
#include "mimatch/tensor.hpp"

namespace mimatch {

// Per-keypoint descriptors, all row-aligned with the keypoint set. d_str and
// d_sem are raw sampled features (the inter-image graph consumes raw d_sem);
// fused is the trainable saliency descriptor, L2-normalized per row.
struct DescriptorBundle {
  int count = 0;
  int c_str = 0;
  int c_sem = 0;
  std::vector<double> d_str;             // count x c_str, row-major
  std::vector<double> d_sem;             // count x c_sem
  Tensor fused;                          // count x fused_dim
  std::vector<std::array<double, 2>> positions;
};

// Bilinear sampling of a dense map at keypoint pixel coordinates (cell space
// = pixel / stride, clamped). Returns count x channels, row-major.
std::vector<double> sample_at_keypoints(const DenseMap& map, const KeypointSet& keypoints);

// Two-layer fusion MLP: L2normalize(W2 * relu(W1 * concat(d_str, d_sem) + b1) + b2).
struct FusionWeights {
  Tensor w1;  // (c_str + c_sem) x dim
  Tensor b1;  // dim
  Tensor w2;  // dim x dim
  Tensor b2;  // dim
};

Tensor fuse_descriptors(const Tensor& d_str, const Tensor& d_sem, const FusionWeights& w);

// Full sampling + fusion for a keypoint set.
DescriptorBundle describe_keypoints(const KeypointSet& keypoints, const FeatureProvider& provider,
                                    const FusionWeights& w);

}  // namespace mimatch
