#pragma once

#include <vector>

#include "lsanet/tensor.hpp"

namespace lsanet {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // plain L2 added to the gradient
};

/// Standard Adam with bias correction. Parameters keep their identity; the
/// optimizer reads each parameter's grad slot and updates data in place.
class Adam {
 public:
  Adam(std::vector<Tensor> params, AdamConfig cfg);

  /// One update from the current grad slots.
  void step();
  void zero_grad();

  std::size_t step_count() const { return step_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> m_, v_;
  AdamConfig cfg_;
  std::size_t step_ = 0;
};

}  // namespace lsanet
