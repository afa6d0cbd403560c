#include "mimatch/homography.hpp"

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <cmath>
#include <stdexcept>

namespace mimatch {

namespace {
constexpr double kDetFloor = 1e-12;
}

Homography::Homography(const std::array<double, 9>& h) : h_(h) {
  normalize();
  if (std::abs(determinant()) <= kDetFloor) {
    throw std::invalid_argument("homography is singular (|det| <= 1e-12)");
  }
}

void Homography::normalize() {
  const double w = h_[8];
  if (w != 0.0) {
    for (double& v : h_) v /= w;
  }
}

Homography Homography::translation(double tx, double ty) {
  return Homography({1, 0, tx, 0, 1, ty, 0, 0, 1});
}

Homography Homography::scaling(double s) {
  return Homography({s, 0, 0, 0, s, 0, 0, 0, 1});
}

Homography Homography::similarity_about(double cx, double cy, double angle_rad, double scale,
                                        double tx, double ty) {
  const double c = scale * std::cos(angle_rad);
  const double s = scale * std::sin(angle_rad);
  // p' = s*R*(p - center) + center + t
  return Homography({c, -s, cx + tx - c * cx + s * cy,  //
                     s, c, cy + ty - s * cx - c * cy,   //
                     0, 0, 1});
}

Vec2 Homography::apply(const Vec2& p) const {
  const double w = h_[6] * p.x + h_[7] * p.y + h_[8];
  if (std::abs(w) < 1e-300) {
    throw std::runtime_error("homography maps point to infinity");
  }
  return {(h_[0] * p.x + h_[1] * p.y + h_[2]) / w, (h_[3] * p.x + h_[4] * p.y + h_[5]) / w};
}

double Homography::determinant() const {
  return h_[0] * (h_[4] * h_[8] - h_[5] * h_[7]) - h_[1] * (h_[3] * h_[8] - h_[5] * h_[6]) +
         h_[2] * (h_[3] * h_[7] - h_[4] * h_[6]);
}

bool Homography::is_affine(double tol) const {
  return std::abs(h_[6]) <= tol && std::abs(h_[7]) <= tol && h_[8] == 1.0;
}

Homography Homography::inverse() const {
  const double det = determinant();
  if (std::abs(det) <= kDetFloor) throw std::runtime_error("homography not invertible");
  std::array<double, 9> a;
  a[0] = (h_[4] * h_[8] - h_[5] * h_[7]) / det;
  a[1] = (h_[2] * h_[7] - h_[1] * h_[8]) / det;
  a[2] = (h_[1] * h_[5] - h_[2] * h_[4]) / det;
  a[3] = (h_[5] * h_[6] - h_[3] * h_[8]) / det;
  a[4] = (h_[0] * h_[8] - h_[2] * h_[6]) / det;
  a[5] = (h_[2] * h_[3] - h_[0] * h_[5]) / det;
  a[6] = (h_[3] * h_[7] - h_[4] * h_[6]) / det;
  a[7] = (h_[1] * h_[6] - h_[0] * h_[7]) / det;
  a[8] = (h_[0] * h_[4] - h_[1] * h_[3]) / det;
  return Homography(a);
}

Homography Homography::compose(const Homography& other) const {
  const auto& a = h_;
  const auto& b = other.h_;
  std::array<double, 9> c{};
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      for (int k = 0; k < 3; ++k) {
        c[static_cast<size_t>(i) * 3 + j] += a[static_cast<size_t>(i) * 3 + k] * b[static_cast<size_t>(k) * 3 + j];
      }
    }
  }
  return Homography(c);
}

Homography Homography::from_four_points(const std::array<Vec2, 4>& from, const std::array<Vec2, 4>& to) {
  return fit_homography_dlt(std::vector<Vec2>(from.begin(), from.end()),
                            std::vector<Vec2>(to.begin(), to.end()));
}

namespace {

struct NormXf {
  double cx, cy, s;
};

// similarity that moves the centroid to the origin with mean distance sqrt(2)
NormXf normalizer(const std::vector<Vec2>& pts) {
  double cx = 0, cy = 0;
  for (const auto& p : pts) {
    cx += p.x;
    cy += p.y;
  }
  cx /= static_cast<double>(pts.size());
  cy /= static_cast<double>(pts.size());
  double dist = 0;
  for (const auto& p : pts) dist += std::hypot(p.x - cx, p.y - cy);
  dist /= static_cast<double>(pts.size());
  const double s = dist > 1e-12 ? std::sqrt(2.0) / dist : 1.0;
  return {cx, cy, s};
}

}  // namespace

Homography fit_homography_dlt(const std::vector<Vec2>& from, const std::vector<Vec2>& to) {
  if (from.size() != to.size() || from.size() < 4) {
    throw std::invalid_argument("fit_homography_dlt: need >= 4 correspondences");
  }
  const NormXf nf = normalizer(from);
  const NormXf nt = normalizer(to);
  const int n = static_cast<int>(from.size());
  Eigen::MatrixXd a(2 * n, 9);
  for (int i = 0; i < n; ++i) {
    const double x = (from[i].x - nf.cx) * nf.s;
    const double y = (from[i].y - nf.cy) * nf.s;
    const double u = (to[i].x - nt.cx) * nt.s;
    const double v = (to[i].y - nt.cy) * nt.s;
    a.row(2 * i) << -x, -y, -1, 0, 0, 0, u * x, u * y, u;
    a.row(2 * i + 1) << 0, 0, 0, -x, -y, -1, v * x, v * y, v;
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  const Eigen::VectorXd h = svd.matrixV().col(8);
  // denormalize: H = T_to^-1 * Hn * T_from
  const std::array<double, 9> hn{h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), h(8)};
  // T_from: p -> (p - c) * s ; T_to^-1: q -> q / s + c
  std::array<double, 9> tf{nf.s, 0, -nf.s * nf.cx, 0, nf.s, -nf.s * nf.cy, 0, 0, 1};
  std::array<double, 9> ti{1.0 / nt.s, 0, nt.cx, 0, 1.0 / nt.s, nt.cy, 0, 0, 1};
  auto mul3 = [](const std::array<double, 9>& a3, const std::array<double, 9>& b3) {
    std::array<double, 9> c3{};
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        for (int k = 0; k < 3; ++k)
          c3[static_cast<size_t>(i) * 3 + j] += a3[static_cast<size_t>(i) * 3 + k] * b3[static_cast<size_t>(k) * 3 + j];
    return c3;
  };
  std::array<double, 9> full = mul3(ti, mul3(hn, tf));
  // Homography's constructor rejects singular results (degenerate input)
  return Homography(full);
}

SimilarityParts decompose_similarity(const Homography& h) {
  const double a = h.at(0, 0), b = h.at(1, 0);
  SimilarityParts parts{};
  parts.angle_rad = std::atan2(b, a);
  parts.scale = std::hypot(a, b);
  parts.tx = h.at(0, 2);
  parts.ty = h.at(1, 2);
  return parts;
}

}  // namespace mimatch
