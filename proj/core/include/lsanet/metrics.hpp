#pragma once

#include <vector>

#include "lsanet/tensor.hpp"

namespace lsanet {

/// Percent correct; argmax ties go to the lowest class index.
double accuracy(const Tensor& probs, const std::vector<std::size_t>& labels);

/// Macro one-vs-rest rank AUC in percent, ties counted half. Classes absent
/// from labels are skipped (reported via skipped_classes when non-null).
/// Throws when labels contain a single class.
double auc_macro_ovr(const Tensor& probs, const std::vector<std::size_t>& labels,
                     std::vector<std::size_t>* skipped_classes = nullptr);

}  // namespace lsanet
