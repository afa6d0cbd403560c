#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "mimatch/descriptors.hpp"
#include "mimatch/detector.hpp"
#include "mimatch/graphs.hpp"
#include "mimatch/rope.hpp"
#include "mimatch/tensor.hpp"

namespace mimatch {

struct MatcherConfig {
  int layers = 6;
  int heads = 4;
  int width = 256;  // model width D; must be divisible by 2 * heads
  double tau = 0.1;
  double eps_min = 64.0;
  double alpha = 4.0;
  double r_min = 1.0;
  double r_max = 7.0;
  int max_keypoints = 2048;
  double score_floor = 1e-3;
  int resize_limit = 640;
  bool use_semantic = true;   // off reuses the structural map for the semantic branch
  bool shared_head = false;   // one linear head for both sides of the score matrix
  bool graph_masks = true;    // off = complete intra/inter graphs (ablation)
  int c_str = kFallbackChannels;
  int c_sem = kFallbackChannels;

  void validate() const;
};

struct MlpWeights {
  Tensor w1, b1, ln_gain, ln_bias, w2, b2;
};

struct AttentionWeights {
  Tensor wq, wk, wx;
  MlpWeights mlp;
};

struct LayerWeights {
  AttentionWeights self_attn;
  AttentionWeights cross_attn;
};

struct MatcherWeights {
  MatcherConfig config;
  FusionWeights fuse;
  std::vector<LayerWeights> layers;
  Tensor head_src_w, head_src_b, head_ref_w, head_ref_b;

  static MatcherWeights init_random(const MatcherConfig& cfg, uint64_t seed, bool trainable = false);
  // Deterministic parameter order (fusion, layers, heads); names match the
  // checkpoint entries.
  std::vector<std::pair<std::string, Tensor>> named_params() const;
  void zero_grads() const;

  // Parameters plus a self-describing config manifest, keyed by name.
  std::map<std::string, Tensor> to_entries() const;
  void save(const std::string& path) const;
  static MatcherWeights load(const std::string& path, bool trainable = false);
};

// ---- building blocks -------------------------------------------------------

// Per-head graph-masked attention. mask is row-major [x_query rows, x_kv rows],
// nonzero = attend. Scores are scaled by 1/sqrt(head_dim); when a rope basis is
// given, q and k rows are rotated by their absolute position angles, which
// makes the score depend only on relative displacement. Returns the
// concatenated per-head messages [rows, width].
Tensor graph_attention(const Tensor& x_query, const Tensor& x_kv,
                       const std::vector<std::array<double, 2>>& pos_query,
                       const std::vector<std::array<double, 2>>& pos_kv,
                       const std::vector<uint8_t>& mask, const AttentionWeights& w, int heads,
                       const RopeBasis* rope);

// x + MLP(concat(x, m)); the MLP is linear -> layer norm -> ReLU -> linear.
Tensor residual_update(const Tensor& x, const Tensor& m, const MlpWeights& w);

// Pairwise inner products of the two linearly mapped feature sets.
Tensor score_matrix(const Tensor& x_src, const Tensor& x_ref, const MatcherWeights& w);

// P = row-softmax(S) * col-softmax(S), elementwise.
Tensor dual_softmax(const Tensor& s);

struct Match {
  int src_index = 0;
  int ref_index = 0;
  double confidence = 0.0;
};

struct MatchSet {
  std::vector<Match> matches;
  std::vector<uint8_t> src_matched, ref_matched;
};

// Mutual argmax above tau; argmax ties resolve to the lowest index.
MatchSet extract_matches(const Tensor& p, double tau = 0.1);

std::vector<uint8_t> intra_mask(const IntraGraph& g);
std::vector<uint8_t> inter_mask(const InterGraph& g);

// ---- full pipeline ---------------------------------------------------------

struct MatchDiagnostics {
  int keypoints_src = 0;
  int keypoints_ref = 0;
  bool empty_side = false;
  double scale_src = 1.0;
  double scale_ref = 1.0;
};

struct MatchOptions {
  // Imported feature maps; when set, the image is used at native resolution.
  const FeatureProvider* provider_src = nullptr;
  const FeatureProvider* provider_ref = nullptr;
  // Optional detection mask (same size as the image, nonzero = usable). Used
  // by the trainer to keep warped-in borders out of the keypoint set.
  const std::vector<uint8_t>* detect_mask_src = nullptr;
};

// Forward pass up to the soft matrix; keypoints are in the resized frame.
struct ForwardResult {
  Tensor p, s;
  KeypointSet kpts_src, kpts_ref;
  std::vector<double> d_sem_src, d_sem_ref;
  MatchDiagnostics diag;
  bool empty() const { return diag.empty_side; }
};

ForwardResult match_forward(const Image& src, const Image& ref, const MatcherWeights& weights,
                            const MatchOptions& opts = {});

struct MatchedPoint {
  double x_src, y_src, x_ref, y_ref, confidence;
};

struct PipelineResult {
  MatchSet set;
  std::vector<MatchedPoint> points;  // original-resolution coordinates
  KeypointSet kpts_src, kpts_ref;    // original-resolution coordinates
  MatchDiagnostics diag;
};

PipelineResult match_pipeline(const Image& src, const Image& ref, const MatcherWeights& weights,
                              const MatchOptions& opts = {});

}  // namespace mimatch
