#pragma once

#include <string>
#include <vector>

#include "lsanet/lsa.hpp"
#include "lsanet/tensor.hpp"

namespace lsanet {

/// Per-classifier probability outputs, auxiliary stages ascending, final
/// classifier last.
struct ClassifierOutputs {
  std::vector<Tensor> probs;  // each [N, C], rows sum to 1
};

struct LossWeights {
  std::vector<double> alpha;            // per-auxiliary weights, size L-1
  std::vector<std::vector<double>> mu;  // pairwise [L][L]; diagonal unused

  static LossWeights uniform(std::size_t branches, double alpha_value = 1.0,
                             double mu_value = 1.0);
};

enum class Mode { kBaseline, kDsn, kDsnKs, kDsnLsa, kLsanet };

Mode parse_mode(const std::string& name);
std::string mode_name(Mode mode);

/// -(1/N) sum_i log probs[i, y_i]; probabilities clamped at 1e-12.
Tensor cross_entropy(Graph& g, const Tensor& probs,
                     const std::vector<std::size_t>& labels);

/// ce(final) + sum_l alpha_l * ce(aux_l)
Tensor dsn_loss(Graph& g, const ClassifierOutputs& outputs,
                const std::vector<std::size_t>& labels,
                const LossWeights& weights);

/// -(1/N) sum_i sum_l beta_l log f^l[i, y_i]; beta stays in the graph.
Tensor lsa_weighted_loss(Graph& g, const ClassifierOutputs& outputs,
                         const std::vector<std::size_t>& labels,
                         const BranchWeights& beta);

/// (1/N) sum_i sum_{p != q} mu_pq KL(f_p[i] || f_q[i]), targets held
/// constant in backward; always >= 0.
Tensor knowledge_synergy_loss(Graph& g, const ClassifierOutputs& outputs,
                              const LossWeights& weights);

/// Same loss with explicitly pinned target distributions (one value array
/// per classifier). This is the function the backward pass differentiates;
/// finite-difference checks evaluate it with targets frozen at the
/// linearization point.
Tensor knowledge_synergy_loss(Graph& g, const ClassifierOutputs& outputs,
                              const std::vector<std::vector<double>>& targets,
                              const LossWeights& weights);

struct ObjectiveInputs {
  const ClassifierOutputs* outputs = nullptr;
  const std::vector<std::size_t>* labels = nullptr;
  const LossWeights* weights = nullptr;
  const BranchWeights* beta = nullptr;  // required for dsn+lsa / lsanet
};

Tensor total_objective(Graph& g, Mode mode, const ObjectiveInputs& in);

}  // namespace lsanet
