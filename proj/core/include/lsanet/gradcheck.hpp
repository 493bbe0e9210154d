#pragma once

#include <functional>
#include <string>
#include <vector>

#include "lsanet/tensor.hpp"

namespace lsanet {

/// Forward evaluation used by the checker. A fresh Graph is supplied per
/// call; the function must rebuild the loss from the current parameter
/// values and return the scalar loss tensor.
using LossFn = std::function<Tensor(Graph&)>;

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t checked_elements = 0;
};

/// Central finite differences (h = 1e-5) of loss_fn with respect to every
/// element of every parameter, compared against the analytic gradients from
/// one backward pass.
GradCheckResult gradcheck(const LossFn& loss_fn, std::vector<Tensor> params,
                          double h = 1e-5);

struct SuiteEntry {
  std::string name;
  double max_rel_error;
  bool passed;
};

/// Named gradcheck suites over randomized small shapes. `seeds` independent
/// trials per entry; tolerance 1e-4 relative.
std::vector<SuiteEntry> gradcheck_tensor_ops(std::size_t seeds);
std::vector<SuiteEntry> gradcheck_lsa(std::size_t seeds);
std::vector<SuiteEntry> gradcheck_supervision(std::size_t seeds);

constexpr double kGradTolerance = 1e-4;

}  // namespace lsanet
