#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "mimatch/rng.hpp"
#include "mimatch/tensor.hpp"

namespace mimatch::testing {

// Central finite differences against the analytic gradient for a scalar loss
// built from one leaf. relative error <= tol with an absolute floor for
// near-zero entries.
struct GradCheck {
  double max_rel_err = 0.0;
  bool ok = true;
};

inline GradCheck check_gradient(const std::function<Tensor(const Tensor&)>& loss_fn, Shape shape,
                                RngStream& rng, double lo = -1.0, double hi = 1.0,
                                double step = 1e-5, double tol = 1e-4) {
  std::vector<double> base(static_cast<size_t>(shape_numel(shape)));
  for (double& v : base) v = rng.uniform(lo, hi);

  Tensor leaf = Tensor::leaf(shape, base, /*requires_grad=*/true);
  Tensor loss = loss_fn(leaf);
  backward(loss);
  const std::vector<double> analytic = leaf.grad();

  GradCheck result;
  for (size_t i = 0; i < base.size(); ++i) {
    std::vector<double> plus = base, minus = base;
    plus[i] += step;
    minus[i] -= step;
    const double lp = loss_fn(Tensor::leaf(shape, plus)).scalar_value();
    const double lm = loss_fn(Tensor::leaf(shape, minus)).scalar_value();
    const double fd = (lp - lm) / (2.0 * step);
    const double diff = std::abs(fd - analytic[i]);
    const double denom = std::max(std::abs(fd), std::abs(analytic[i]));
    if (diff > 1e-8 && diff > tol * denom) {
      result.ok = false;
    }
    if (denom > 1e-8) result.max_rel_err = std::max(result.max_rel_err, diff / denom);
  }
  return result;
}

}  // namespace mimatch::testing
