#include "mimatch/rope.hpp"

#include <cmath>
#include <stdexcept>

namespace mimatch {

namespace {
constexpr double kTwoPi = 6.283185307179586476925286766559;
}

RopeBasis::RopeBasis(int head_dim, double image_diagonal) : head_dim_(head_dim) {
  if (head_dim <= 0 || head_dim % 2 != 0) {
    throw std::invalid_argument("rope: head_dim must be positive and even, got " +
                                std::to_string(head_dim));
  }
  if (image_diagonal <= 0.0) throw std::invalid_argument("rope: image diagonal must be positive");
  const int blocks = head_dim / 2;
  const int per_axis = std::max(1, blocks / 2);
  const double lambda_min = kRopeMinWavelength;
  const double lambda_max = std::max(lambda_min, 2.0 * image_diagonal);
  freq_.resize(static_cast<size_t>(blocks));
  axis_.resize(static_cast<size_t>(blocks));
  for (int k = 0; k < blocks; ++k) {
    axis_[static_cast<size_t>(k)] = k % 2;
    const int fi = k / 2;
    const double t = per_axis > 1 ? static_cast<double>(fi) / (per_axis - 1) : 0.0;
    const double lambda = lambda_min * std::pow(lambda_max / lambda_min, t);
    freq_[static_cast<size_t>(k)] = kTwoPi / lambda;
  }
}

std::vector<double> RopeBasis::block_angles(const std::array<double, 2>& displacement) const {
  std::vector<double> out(freq_.size());
  for (size_t k = 0; k < freq_.size(); ++k) {
    out[k] = freq_[k] * displacement[static_cast<size_t>(axis_[k])];
  }
  return out;
}

std::vector<double> RopeBasis::absolute_angles(const std::array<double, 2>& position) const {
  return block_angles(position);
}

std::vector<double> RopeBasis::pair_matrix(const std::array<double, 2>& p_i,
                                           const std::array<double, 2>& p_j) const {
  const std::array<double, 2> d{p_j[0] - p_i[0], p_j[1] - p_i[1]};
  const std::vector<double> theta = block_angles(d);
  std::vector<double> m(static_cast<size_t>(head_dim_) * head_dim_, 0.0);
  for (size_t k = 0; k < theta.size(); ++k) {
    const double c = std::cos(theta[k]);
    const double s = std::sin(theta[k]);
    const size_t r = 2 * k;
    m[r * head_dim_ + r] = c;
    m[r * head_dim_ + r + 1] = -s;
    m[(r + 1) * head_dim_ + r] = s;
    m[(r + 1) * head_dim_ + r + 1] = c;
  }
  return m;
}

}  // namespace mimatch
