#include "mimatch/descriptors.hpp"

#include <stdexcept>

namespace mimatch {

std::vector<double> sample_at_keypoints(const DenseMap& map, const KeypointSet& keypoints) {
  std::vector<double> out(keypoints.size() * static_cast<size_t>(map.channels));
  for (size_t i = 0; i < keypoints.size(); ++i) {
    const Keypoint& kp = keypoints.points[i];
    sample_bilinear(map, kp.x, kp.y, out.data() + i * static_cast<size_t>(map.channels));
  }
  return out;
}

Tensor fuse_descriptors(const Tensor& d_str, const Tensor& d_sem, const FusionWeights& w) {
  if (d_str.rows() != d_sem.rows()) {
    throw std::invalid_argument("fuse_descriptors: row counts differ, " + shape_str(d_str.shape()) +
                                " vs " + shape_str(d_sem.shape()));
  }
  Tensor x = concat_last(d_str, d_sem);
  Tensor hidden = relu(linear(x, w.w1, w.b1));
  return l2_normalize_rows(linear(hidden, w.w2, w.b2));
}

DescriptorBundle describe_keypoints(const KeypointSet& keypoints, const FeatureProvider& provider,
                                    const FusionWeights& w) {
  DescriptorBundle bundle;
  bundle.count = static_cast<int>(keypoints.size());
  bundle.c_str = provider.structural().channels;
  bundle.c_sem = provider.semantic().channels;
  bundle.d_str = sample_at_keypoints(provider.structural(), keypoints);
  bundle.d_sem = sample_at_keypoints(provider.semantic(), keypoints);
  bundle.positions.reserve(keypoints.size());
  for (const Keypoint& kp : keypoints.points) {
    bundle.positions.push_back({static_cast<double>(kp.x), static_cast<double>(kp.y)});
  }
  if (bundle.count > 0) {
    Tensor ts = Tensor::leaf({bundle.count, bundle.c_str}, bundle.d_str);
    Tensor te = Tensor::leaf({bundle.count, bundle.c_sem}, bundle.d_sem);
    bundle.fused = fuse_descriptors(ts, te, w);
  }
  return bundle;
}

}  // namespace mimatch
