#include "lsanet/supervision.hpp"

#include <cmath>
#include <stdexcept>

namespace lsanet {

namespace {

constexpr double kClamp = 1e-12;

void check_rows_normalized(const Tensor& probs, const char* op) {
  std::size_t n = probs.shape()[0], c = probs.shape()[1];
  for (std::size_t i = 0; i < n; ++i) {
    double sum = 0.0;
    for (std::size_t j = 0; j < c; ++j) sum += probs.data()[i * c + j];
    if (std::abs(sum - 1.0) > 1e-6) {
      throw std::invalid_argument(std::string(op) + ": row " +
                                  std::to_string(i) + " sums to " +
                                  std::to_string(sum) + ", not normalized");
    }
  }
}

}  // namespace

LossWeights LossWeights::uniform(std::size_t branches, double alpha_value,
                                 double mu_value) {
  LossWeights w;
  w.alpha.assign(branches > 0 ? branches - 1 : 0, alpha_value);
  w.mu.assign(branches, std::vector<double>(branches, mu_value));
  return w;
}

Mode parse_mode(const std::string& name) {
  if (name == "baseline") return Mode::kBaseline;
  if (name == "dsn") return Mode::kDsn;
  if (name == "dsn+ks") return Mode::kDsnKs;
  if (name == "dsn+lsa") return Mode::kDsnLsa;
  if (name == "lsanet") return Mode::kLsanet;
  throw std::invalid_argument("unknown mode '" + name +
                              "' (baseline|dsn|dsn+ks|dsn+lsa|lsanet)");
}

std::string mode_name(Mode mode) {
  switch (mode) {
    case Mode::kBaseline: return "baseline";
    case Mode::kDsn: return "dsn";
    case Mode::kDsnKs: return "dsn+ks";
    case Mode::kDsnLsa: return "dsn+lsa";
    case Mode::kLsanet: return "lsanet";
  }
  return "?";
}

Tensor cross_entropy(Graph& g, const Tensor& probs,
                     const std::vector<std::size_t>& labels) {
  if (probs.ndim() != 2 || probs.shape()[0] != labels.size()) {
    throw std::invalid_argument("cross_entropy: probs " +
                                shape_str(probs.shape()) + " vs " +
                                std::to_string(labels.size()) + " labels");
  }
  std::size_t n = probs.shape()[0], c = probs.shape()[1];
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] >= c) {
      throw std::invalid_argument("cross_entropy: label " +
                                  std::to_string(labels[i]) + " at row " +
                                  std::to_string(i) + " out of range [0," +
                                  std::to_string(c) + ")");
    }
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    acc -= std::log(std::max(probs.data()[i * c + labels[i]], kClamp));
  }
  bool rg = probs.requires_grad();
  Tensor y = g.make({}, {acc / static_cast<double>(n)}, rg);
  if (rg) {
    auto lbl = labels;
    g.record([probs, y, lbl, n, c]() mutable {
      Tensor p = probs;
      auto& gp = p.grad();
      double gy = y.grad()[0] / static_cast<double>(n);
      for (std::size_t i = 0; i < n; ++i) {
        double v = p.data()[i * c + lbl[i]];
        if (v > kClamp) gp[i * c + lbl[i]] -= gy / v;
      }
    });
  }
  return y;
}

Tensor dsn_loss(Graph& g, const ClassifierOutputs& outputs,
                const std::vector<std::size_t>& labels,
                const LossWeights& weights) {
  std::size_t l = outputs.probs.size();
  if (l < 2) throw std::invalid_argument("dsn_loss: needs at least 2 classifiers");
  if (weights.alpha.size() != l - 1) {
    throw std::invalid_argument("dsn_loss: " + std::to_string(weights.alpha.size()) +
                                " alpha weights for " + std::to_string(l - 1) +
                                " auxiliary classifiers");
  }
  Tensor total = cross_entropy(g, outputs.probs.back(), labels);
  for (std::size_t i = 0; i + 1 < l; ++i) {
    Tensor aux = g.scale(cross_entropy(g, outputs.probs[i], labels),
                         weights.alpha[i]);
    total = g.add(total, aux);
  }
  return total;
}

Tensor lsa_weighted_loss(Graph& g, const ClassifierOutputs& outputs,
                         const std::vector<std::size_t>& labels,
                         const BranchWeights& beta) {
  std::size_t l = outputs.probs.size();
  if (beta.beta.shape()[0] != l) {
    throw std::invalid_argument("lsa_weighted_loss: " + std::to_string(l) +
                                " classifiers but beta has " +
                                std::to_string(beta.beta.shape()[0]) + " entries");
  }
  Tensor total;
  for (std::size_t i = 0; i < l; ++i) {
    Tensor term = g.mul(g.index(beta.beta, i),
                        cross_entropy(g, outputs.probs[i], labels));
    total = total.defined() ? g.add(total, term) : term;
  }
  return total;
}

Tensor knowledge_synergy_loss(Graph& g, const ClassifierOutputs& outputs,
                              const LossWeights& weights) {
  std::vector<std::vector<double>> targets;
  targets.reserve(outputs.probs.size());
  for (const auto& p : outputs.probs) targets.push_back(p.data());
  return knowledge_synergy_loss(g, outputs, targets, weights);
}

Tensor knowledge_synergy_loss(Graph& g, const ClassifierOutputs& outputs,
                              const std::vector<std::vector<double>>& targets,
                              const LossWeights& weights) {
  std::size_t l = outputs.probs.size();
  if (l < 2) {
    throw std::invalid_argument(
        "knowledge_synergy_loss: needs at least 2 classifiers");
  }
  if (weights.mu.size() != l) {
    throw std::invalid_argument("knowledge_synergy_loss: mu is " +
                                std::to_string(weights.mu.size()) + "x, need " +
                                std::to_string(l));
  }
  if (targets.size() != l) {
    throw std::invalid_argument("knowledge_synergy_loss: " +
                                std::to_string(targets.size()) +
                                " target arrays for " + std::to_string(l) +
                                " classifiers");
  }
  for (const auto& p : outputs.probs) check_rows_normalized(p, "knowledge_synergy_loss");

  std::size_t n = outputs.probs[0].shape()[0], c = outputs.probs[0].shape()[1];
  double acc = 0.0;
  bool rg = false;
  for (std::size_t p = 0; p < l; ++p) {
    rg = rg || outputs.probs[p].requires_grad();
    for (std::size_t q = 0; q < l; ++q) {
      if (q == p) continue;
      double mu = weights.mu[p][q];
      if (mu == 0.0) continue;
      const auto& fp = outputs.probs[p].data();
      const auto& fq = targets[q];
      for (std::size_t i = 0; i < n * c; ++i) {
        double a = std::max(fp[i], kClamp);
        double b = std::max(fq[i], kClamp);
        acc += mu * a * std::log(a / b);
      }
    }
  }
  Tensor y = g.make({}, {acc / static_cast<double>(n)}, rg);
  if (rg) {
    auto probs = outputs.probs;
    auto tgt = targets;
    auto mu = weights.mu;
    g.record([probs, tgt, mu, y, n, c, l]() mutable {
      // target side (q) is a constant; gradient flows into p only
      double gy = y.grad()[0] / static_cast<double>(n);
      for (std::size_t p = 0; p < l; ++p) {
        if (!probs[p].requires_grad()) continue;
        auto& gp = probs[p].grad();
        const auto& fp = probs[p].data();
        for (std::size_t q = 0; q < l; ++q) {
          if (q == p || mu[p][q] == 0.0) continue;
          const auto& fq = tgt[q];
          for (std::size_t i = 0; i < n * c; ++i) {
            if (fp[i] <= kClamp) continue;
            double a = fp[i];
            double b = std::max(fq[i], kClamp);
            gp[i] += gy * mu[p][q] * (std::log(a / b) + 1.0);
          }
        }
      }
    });
  }
  return y;
}

Tensor total_objective(Graph& g, Mode mode, const ObjectiveInputs& in) {
  if (!in.outputs) throw std::invalid_argument("total_objective: missing outputs");
  switch (mode) {
    case Mode::kBaseline:
      if (!in.labels) throw std::invalid_argument("total_objective: missing labels");
      return cross_entropy(g, in.outputs->probs.back(), *in.labels);
    case Mode::kDsn:
      if (!in.labels || !in.weights) {
        throw std::invalid_argument("total_objective: dsn needs labels and weights");
      }
      return dsn_loss(g, *in.outputs, *in.labels, *in.weights);
    case Mode::kDsnKs: {
      if (!in.labels || !in.weights) {
        throw std::invalid_argument("total_objective: dsn+ks needs labels and weights");
      }
      Tensor lb = dsn_loss(g, *in.outputs, *in.labels, *in.weights);
      return g.add(lb, knowledge_synergy_loss(g, *in.outputs, *in.weights));
    }
    case Mode::kDsnLsa:
      if (!in.labels || !in.beta) {
        throw std::invalid_argument("total_objective: dsn+lsa needs labels and beta");
      }
      return lsa_weighted_loss(g, *in.outputs, *in.labels, *in.beta);
    case Mode::kLsanet: {
      if (!in.labels || !in.beta || !in.weights) {
        throw std::invalid_argument(
            "total_objective: lsanet needs labels, beta and weights");
      }
      Tensor lb = lsa_weighted_loss(g, *in.outputs, *in.labels, *in.beta);
      return g.add(lb, knowledge_synergy_loss(g, *in.outputs, *in.weights));
    }
  }
  throw std::invalid_argument("total_objective: bad mode");
}

}  // namespace lsanet
