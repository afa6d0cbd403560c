#include "mimatch/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace mimatch {

namespace {
inline double snap_f32(double v) { return static_cast<double>(static_cast<float>(v)); }
}

AdamState::AdamState(AdamConfig cfg) : cfg_(cfg) {
  if (cfg_.lr < 0.0 || cfg_.eps <= 0.0) throw std::invalid_argument("adam: lr must be >= 0 and eps > 0");
}

void AdamState::step(const std::vector<std::pair<std::string, Tensor>>& params) {
  const int64_t t = step_ + 1;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t));
  for (const auto& [name, p] : params) {
    const std::vector<double>& g = p.grad();
    for (double gi : g) {
      if (!std::isfinite(gi)) throw std::runtime_error("adam: non-finite gradient for '" + name + "'");
    }
    auto& m = m_[name];
    auto& v = v_[name];
    if (m.empty()) m.assign(g.size(), 0.0);
    if (v.empty()) v.assign(g.size(), 0.0);
    if (m.size() != g.size()) {
      throw std::invalid_argument("adam: moment size mismatch for '" + name + "'");
    }
    std::vector<double> x = p.values();
    for (size_t i = 0; i < g.size(); ++i) {
      m[i] = snap_f32(cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i]);
      v[i] = snap_f32(cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i]);
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      x[i] = snap_f32(x[i] - cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps));
    }
    p.set_values(x);
  }
  step_ = t;
}

void AdamState::restore(int64_t step, std::map<std::string, std::vector<double>> m,
                        std::map<std::string, std::vector<double>> v) {
  if (step < 0) throw std::invalid_argument("adam: negative step count");
  step_ = step;
  m_ = std::move(m);
  v_ = std::move(v);
}

}  // namespace mimatch
