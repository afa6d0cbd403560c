#pragma once

#include <array>
#include <utility>
#include <vector>

namespace mimatch {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
};

// 3x3 planar projective transform, row-major, mapping source (x, y, 1) to
// reference homogeneous coordinates. Kept normalized so that the bottom-right
// entry is 1 whenever it is nonzero.
//
// Coordinate convention used throughout the library: pixel centers sit at
// integer coordinates, origin at the top-left pixel, x rightward, y downward.
class Homography {
 public:
  Homography() : h_{1, 0, 0, 0, 1, 0, 0, 0, 1} {}
  explicit Homography(const std::array<double, 9>& h);

  static Homography identity() { return Homography(); }
  static Homography translation(double tx, double ty);
  static Homography scaling(double s);
  // similarity about a center point: scale * rotation, then translate
  static Homography similarity_about(double cx, double cy, double angle_rad, double scale,
                                     double tx, double ty);
  // exact homography sending the 4 `from` points onto the 4 `to` points
  static Homography from_four_points(const std::array<Vec2, 4>& from, const std::array<Vec2, 4>& to);

  const std::array<double, 9>& coeffs() const { return h_; }
  double at(int r, int c) const { return h_[static_cast<size_t>(r) * 3 + c]; }

  Vec2 apply(const Vec2& p) const;
  Homography inverse() const;
  double determinant() const;
  bool is_affine(double tol = 0.0) const;

  // this ∘ other: apply `other` first, then this
  Homography compose(const Homography& other) const;

 private:
  void normalize();
  std::array<double, 9> h_;
};

// Least-squares DLT fit with Hartley normalization; needs >= 4 correspondences.
// Throws on degenerate input.
Homography fit_homography_dlt(const std::vector<Vec2>& from, const std::vector<Vec2>& to);

// Reads rotation angle / scale / translation off a similarity transform
// (upper-left 2x2 = s*R). Used to verify sampled transform ranges.
struct SimilarityParts {
  double angle_rad;
  double scale;
  double tx;
  double ty;
};
SimilarityParts decompose_similarity(const Homography& h);

}  // namespace mimatch
