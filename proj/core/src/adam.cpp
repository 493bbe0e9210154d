#include "lsanet/adam.hpp"

#include <cmath>

namespace lsanet {

Adam::Adam(std::vector<Tensor> params, AdamConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
  for (const auto& p : params_) {
    m_.emplace_back(p.size(), 0.0);
    v_.emplace_back(p.size(), 0.0);
  }
}

void Adam::step() {
  ++step_;
  double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
  double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
  for (std::size_t pi = 0; pi < params_.size(); ++pi) {
    auto& p = params_[pi];
    auto& g = p.grad();
    auto& m = m_[pi];
    auto& v = v_[pi];
    for (std::size_t i = 0; i < g.size(); ++i) {
      double grad = g[i] + cfg_.weight_decay * p.data()[i];
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * grad;
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * grad * grad;
      double mhat = m[i] / bc1;
      double vhat = v[i] / bc2;
      p.data()[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

}  // namespace lsanet
