#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "mimatch/tensor.hpp"

namespace mimatch {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam with bias correction. Updated parameters and moment accumulators are
// snapped to float32-representable values after every step so that MGCK
// checkpoints (float32 payload) round-trip losslessly and a resumed run is
// bit-identical to an uninterrupted one.
class AdamState {
 public:
  explicit AdamState(AdamConfig cfg = {});

  // One optimizer step over named parameters; reads each tensor's accumulated
  // grad and rewrites its values. Throws on non-finite gradients.
  void step(const std::vector<std::pair<std::string, Tensor>>& params);

  int64_t step_count() const { return step_; }
  const AdamConfig& config() const { return cfg_; }

  // Serialization access (moment maps are keyed by parameter name).
  const std::map<std::string, std::vector<double>>& first_moments() const { return m_; }
  const std::map<std::string, std::vector<double>>& second_moments() const { return v_; }
  void restore(int64_t step, std::map<std::string, std::vector<double>> m,
               std::map<std::string, std::vector<double>> v);

 private:
  AdamConfig cfg_;
  int64_t step_ = 0;
  std::map<std::string, std::vector<double>> m_, v_;
};

}  // namespace mimatch
