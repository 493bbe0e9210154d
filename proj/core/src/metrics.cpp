#include "lsanet/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace lsanet {

double accuracy(const Tensor& probs, const std::vector<std::size_t>& labels) {
  if (probs.ndim() != 2 || probs.shape()[0] != labels.size()) {
    throw std::invalid_argument("accuracy: probs " + shape_str(probs.shape()) +
                                " vs " + std::to_string(labels.size()) +
                                " labels");
  }
  std::size_t n = probs.shape()[0], c = probs.shape()[1];
  std::size_t correct = 0;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < c; ++j) {
      if (probs.data()[i * c + j] > probs.data()[i * c + best]) best = j;
    }
    if (best == labels[i]) ++correct;
  }
  return 100.0 * static_cast<double>(correct) / static_cast<double>(n);
}

double auc_macro_ovr(const Tensor& probs, const std::vector<std::size_t>& labels,
                     std::vector<std::size_t>* skipped_classes) {
  if (probs.ndim() != 2 || probs.shape()[0] != labels.size()) {
    throw std::invalid_argument("auc_macro_ovr: probs " +
                                shape_str(probs.shape()) + " vs " +
                                std::to_string(labels.size()) + " labels");
  }
  std::size_t n = probs.shape()[0], c = probs.shape()[1];
  std::vector<std::size_t> class_count(c, 0);
  for (auto l : labels) {
    if (l >= c) throw std::invalid_argument("auc_macro_ovr: label out of range");
    ++class_count[l];
  }
  std::size_t present = 0;
  for (auto cc : class_count)
    if (cc > 0) ++present;
  if (present < 2) {
    throw std::invalid_argument(
        "auc_macro_ovr: AUC undefined with a single class present");
  }

  double total = 0.0;
  std::size_t used = 0;
  std::vector<std::size_t> order(n);
  std::vector<double> ranks(n);
  for (std::size_t cls = 0; cls < c; ++cls) {
    std::size_t pos = class_count[cls];
    if (pos == 0 || pos == n) {
      if (skipped_classes) skipped_classes->push_back(cls);
      continue;
    }
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return probs.data()[a * c + cls] < probs.data()[b * c + cls];
    });
    // average ranks over tie groups (1-based)
    std::size_t i = 0;
    while (i < n) {
      std::size_t j = i;
      double score = probs.data()[order[i] * c + cls];
      while (j < n && probs.data()[order[j] * c + cls] == score) ++j;
      double avg = 0.5 * static_cast<double>(i + 1 + j);  // mean of i+1..j
      for (std::size_t k = i; k < j; ++k) ranks[order[k]] = avg;
      i = j;
    }
    double rank_sum = 0.0;
    for (std::size_t k = 0; k < n; ++k)
      if (labels[k] == cls) rank_sum += ranks[k];
    double np = static_cast<double>(pos);
    double nn = static_cast<double>(n - pos);
    total += (rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
    ++used;
  }
  return 100.0 * total / static_cast<double>(used);
}

}  // namespace lsanet
