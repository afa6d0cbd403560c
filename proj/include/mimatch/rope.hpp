#pragma once

#include <array>
#include <vector>

namespace mimatch {

// Rotary relative position encoding. The encoding matrix for a keypoint pair
// is block-diagonal in 2x2 rotations psi(theta_k) with theta_k = b_k . (p_j -
// p_i); the basis vectors b_k alternate between the x and y axes with
// geometric frequency magnitudes spanning wavelengths from 8 px up to twice
// the image diagonal (head_dim/4 frequencies per axis). Scores built from it
// depend only on the displacement p_j - p_i.
class RopeBasis {
 public:
  RopeBasis(int head_dim, double image_diagonal);

  int head_dim() const { return head_dim_; }
  int block_count() const { return head_dim_ / 2; }

  // theta for every block at a given displacement
  std::vector<double> block_angles(const std::array<double, 2>& displacement) const;

  // per-block projection of an absolute position onto the basis (the fast
  // attention path rotates q and k by these absolute angles)
  std::vector<double> absolute_angles(const std::array<double, 2>& position) const;

  // Explicit head_dim x head_dim rotation matrix for a keypoint pair
  // (row-major). Orthogonal; composes along paths: phi(a,b) phi(b,c) = phi(a,c).
  std::vector<double> pair_matrix(const std::array<double, 2>& p_i,
                                  const std::array<double, 2>& p_j) const;

 private:
  int head_dim_;
  std::vector<double> freq_;   // per block
  std::vector<int> axis_;      // per block, 0 = x, 1 = y
};

inline constexpr double kRopeMinWavelength = 8.0;

}  // namespace mimatch
