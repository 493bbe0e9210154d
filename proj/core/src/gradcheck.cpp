#include "lsanet/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "lsanet/lsa.hpp"
#include "lsanet/nn.hpp"
#include "lsanet/rng.hpp"
#include "lsanet/supervision.hpp"

namespace lsanet {

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<double> data(numel(shape));
  for (auto& v : data) v = rng.uniform(lo, hi);
  return Tensor::from_data(std::move(shape), std::move(data), true);
}

/// Uniform magnitudes in [0.1, 1.1) with random sign; keeps relu/maxpool
/// inputs away from their kinks so central differences stay valid.
Tensor random_tensor_off_kink(Shape shape, Rng& rng) {
  std::vector<double> data(numel(shape));
  for (auto& v : data) {
    double mag = 0.1 + rng.uniform();
    v = rng.uniform() < 0.5 ? -mag : mag;
  }
  return Tensor::from_data(std::move(shape), std::move(data), true);
}

std::vector<std::size_t> random_labels(std::size_t n, std::size_t c, Rng& rng) {
  std::vector<std::size_t> out(n);
  for (auto& l : out) l = rng.below(c);
  return out;
}

SuiteEntry run_entry(const std::string& name, const LossFn& fn,
                     std::vector<Tensor> params) {
  auto res = gradcheck(fn, std::move(params));
  return {name, res.max_rel_error, res.max_rel_error < kGradTolerance};
}

void merge(std::vector<SuiteEntry>& all, const SuiteEntry& e) {
  for (auto& prev : all) {
    if (prev.name == e.name) {
      prev.max_rel_error = std::max(prev.max_rel_error, e.max_rel_error);
      prev.passed = prev.passed && e.passed;
      return;
    }
  }
  all.push_back(e);
}

}  // namespace

GradCheckResult gradcheck(const LossFn& loss_fn, std::vector<Tensor> params,
                          double h) {
  for (auto& p : params) p.zero_grad();
  std::vector<std::vector<double>> analytic;
  {
    Graph g;
    Tensor loss = loss_fn(g);
    g.backward(loss);
  }
  for (auto& p : params) analytic.push_back(p.grad());

  GradCheckResult result;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto& data = params[pi].data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      double saved = data[i];
      data[i] = saved + h;
      double fp;
      {
        Graph g;
        fp = loss_fn(g).item();
      }
      data[i] = saved - h;
      double fm;
      {
        Graph g;
        fm = loss_fn(g).item();
      }
      data[i] = saved;
      double fd = (fp - fm) / (2.0 * h);
      double a = analytic[pi][i];
      double rel = std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), 1e-6});
      result.max_rel_error = std::max(result.max_rel_error, rel);
      ++result.checked_elements;
    }
  }
  return result;
}

std::vector<SuiteEntry> gradcheck_tensor_ops(std::size_t seeds) {
  std::vector<SuiteEntry> all;
  for (std::size_t s = 0; s < seeds; ++s) {
    Rng rng(mix_seed(7001, s));

    {
      Tensor x = random_tensor({2, 3, 6, 6}, rng);
      Tensor k = random_tensor({4, 3, 3, 3}, rng);
      Tensor b = random_tensor({4}, rng);
      merge(all, run_entry("conv2d", [x, k, b](Graph& g) {
        return g.sum_all(g.mul(g.conv2d(x, k, b, 2, 1),
                               g.conv2d(x, k, b, 2, 1)));
      }, {x, k, b}));
    }
    {
      Tensor x = random_tensor({3, 5}, rng);
      Tensor w = random_tensor({5, 4}, rng);
      Tensor b = random_tensor({4}, rng);
      merge(all, run_entry("dense", [x, w, b](Graph& g) {
        Tensor y = g.dense(x, w, b);
        return g.sum_all(g.mul(y, y));
      }, {x, w, b}));
    }
    {
      Tensor x = random_tensor_off_kink({2, 3, 4, 4}, rng);
      merge(all, run_entry("relu", [x](Graph& g) {
        Tensor y = g.relu(x);
        return g.sum_all(g.mul(y, y));
      }, {x}));
      merge(all, run_entry("sigmoid", [x](Graph& g) {
        Tensor y = g.sigmoid(x);
        return g.sum_all(g.mul(y, y));
      }, {x}));
      merge(all, run_entry("maxpool2d", [x](Graph& g) {
        Tensor y = g.maxpool2d(x, 2, 2);
        return g.sum_all(g.mul(y, y));
      }, {x}));
      merge(all, run_entry("global_avg_pool", [x](Graph& g) {
        Tensor y = g.global_avg_pool(x);
        return g.sum_all(g.mul(y, y));
      }, {x}));
    }
    {
      Tensor x = random_tensor({3, 5}, rng);
      Tensor w = random_tensor({3, 5}, rng);  // weights the softmax entries
      merge(all, run_entry("softmax", [x, w](Graph& g) {
        return g.sum_all(g.mul(g.softmax(x, 1), w));
      }, {x}));
    }
    {
      Tensor a = random_tensor({2, 4}, rng);
      Tensor b = random_tensor({2, 4}, rng);
      merge(all, run_entry("add_mul_scale", [a, b](Graph& g) {
        return g.mean_all(g.scale(g.mul(g.add(a, b), b), 1.7));
      }, {a, b}));
    }
  }
  return all;
}

std::vector<SuiteEntry> gradcheck_lsa(std::size_t seeds) {
  std::vector<SuiteEntry> all;
  BackboneSpec spec;
  spec.channels = {2, 2, 3, 3};
  spec.in_channels = 1;
  spec.input_h = 8;
  spec.input_w = 8;
  EmbedConfig ecfg;
  ecfg.channels = 2;
  EmbedPlan plan = validate_embed_config(ecfg, spec);
  auto eh = spec.stage_extents_h();
  auto ew = spec.stage_extents_w();

  for (std::size_t s = 0; s < seeds; ++s) {
    Rng rng(mix_seed(7100, s));
    EmbedParams eparams = init_embed_params(plan, spec, mix_seed(7200, s));
    LsaParams lparams = init_lsa_params(4, ecfg.channels, 2, mix_seed(7300, s));

    std::array<Tensor, 4> feats;
    for (int st = 0; st < 4; ++st) {
      feats[st] = random_tensor({2, spec.channels[st], eh[st], ew[st]}, rng, 0.0, 1.0);
    }
    // weight the four betas differently so every branch matters
    std::array<double, 4> coeff{0.3, 1.1, -0.7, 0.5};

    auto fn = [&, feats, coeff](Graph& g) {
      std::vector<Tensor> embedded;
      for (std::size_t st = 1; st <= 4; ++st) {
        embedded.push_back(embed_stage(g, feats[st - 1], st, plan, eparams));
      }
      BranchWeights bw = lsa_weights(g, embedded, lparams);
      Tensor loss = g.scale(g.index(bw.beta, 0), coeff[0]);
      for (std::size_t i = 1; i < 4; ++i) {
        loss = g.add(loss, g.scale(g.index(bw.beta, i), coeff[i]));
      }
      return loss;
    };

    std::vector<Tensor> params;
    for (auto& f : feats) params.push_back(f);
    for (auto& p : eparams.parameters()) params.push_back(p);
    params.push_back(lparams.w1);
    params.push_back(lparams.w2);
    merge(all, run_entry("embed_and_lsa_weights", fn, params));
  }
  return all;
}

std::vector<SuiteEntry> gradcheck_supervision(std::size_t seeds) {
  std::vector<SuiteEntry> all;
  for (std::size_t s = 0; s < seeds; ++s) {
    Rng rng(mix_seed(7400, s));
    std::size_t n = 3, c = 4, branches = 4;
    std::vector<Tensor> logits;
    for (std::size_t b = 0; b < branches; ++b) {
      logits.push_back(random_tensor({n, c}, rng));
    }
    auto labels = random_labels(n, c, rng);
    LossWeights weights = LossWeights::uniform(branches, 0.7);

    auto outputs_of = [logits, branches](Graph& g) {
      ClassifierOutputs outputs;
      for (std::size_t b = 0; b < branches; ++b) {
        outputs.probs.push_back(g.softmax(logits[b], 1));
      }
      return outputs;
    };

    merge(all, run_entry("cross_entropy", [&, labels](Graph& g) {
      return cross_entropy(g, g.softmax(logits[0], 1), labels);
    }, {logits[0]}));

    merge(all, run_entry("dsn_loss", [&, labels, weights](Graph& g) {
      return dsn_loss(g, outputs_of(g), labels, weights);
    }, logits));

    {
      Tensor beta_logits = random_tensor({branches}, rng);
      auto fn = [&, labels, beta_logits](Graph& g) {
        BranchWeights bw;
        bw.beta = g.softmax(beta_logits, 0);
        return lsa_weighted_loss(g, outputs_of(g), labels, bw);
      };
      std::vector<Tensor> params = logits;
      params.push_back(beta_logits);
      merge(all, run_entry("lsa_weighted_loss", fn, params));
    }

    {
      // freeze KL targets at the linearization point; the backward pass
      // differentiates exactly this function
      std::vector<std::vector<double>> frozen;
      {
        Graph g;
        for (auto& out : outputs_of(g).probs) frozen.push_back(out.data());
      }
      merge(all, run_entry("knowledge_synergy_loss", [&, frozen, weights](Graph& g) {
        return knowledge_synergy_loss(g, outputs_of(g), frozen, weights);
      }, logits));
    }
  }

  // full objective through backbone, heads, embedding and LSA parameters
  BackboneSpec spec;
  spec.channels = {2, 2, 3, 3};
  spec.in_channels = 1;
  spec.input_h = 8;
  spec.input_w = 8;
  EmbedConfig ecfg;
  ecfg.channels = 2;
  EmbedPlan plan = validate_embed_config(ecfg, spec);
  std::size_t num_classes = 3;
  std::vector<std::size_t> head_stages{1, 2, 3, 4};

  for (std::size_t s = 0; s < seeds; ++s) {
    Rng rng(mix_seed(7501, s));
    auto [net, heads] = build_backbone(spec, num_classes, head_stages,
                                       mix_seed(7600, s));
    EmbedParams eparams = init_embed_params(plan, spec, mix_seed(7700, s));
    LsaParams lparams = init_lsa_params(4, ecfg.channels, 2, mix_seed(7800, s));
    // Zero-initialized biases leave entire preactivation maps exactly on the
    // relu kink (dead channels with zero analytic gradient but a one-sided
    // finite difference). Jitter every parameter so preactivations have no
    // atom at zero and central differences stay valid.
    {
      std::vector<Tensor> jitter = net.parameters();
      for (const auto& head : heads)
        for (auto& p : head.parameters()) jitter.push_back(p);
      for (auto& p : eparams.parameters()) jitter.push_back(p);
      jitter.push_back(lparams.w1);
      jitter.push_back(lparams.w2);
      for (auto& p : jitter)
        for (auto& v : p.data()) v += rng.uniform(-0.1, 0.1);
    }
    Tensor batch = random_tensor({2, 1, 8, 8}, rng, 0.0, 1.0);
    batch.set_requires_grad(false);
    auto labels = random_labels(2, num_classes, rng);
    LossWeights weights = LossWeights::uniform(4);

    auto forward = [&, labels, weights](Graph& g,
                                        const std::vector<std::vector<double>>*
                                            frozen) {
      StageFeatures feats = forward_with_taps(g, net, batch);
      ClassifierOutputs outputs;
      for (const auto& head : heads) {
        outputs.probs.push_back(classify(g, head, feats.maps[head.stage - 1]));
      }
      std::vector<Tensor> embedded;
      for (std::size_t st = 1; st <= 4; ++st) {
        embedded.push_back(embed_stage(g, feats.maps[st - 1], st, plan, eparams));
      }
      BranchWeights bw = lsa_weights(g, embedded, lparams);
      Tensor lb = lsa_weighted_loss(g, outputs, labels, bw);
      Tensor lk = frozen ? knowledge_synergy_loss(g, outputs, *frozen, weights)
                         : knowledge_synergy_loss(g, outputs, weights);
      return g.add(lb, lk);
    };

    std::vector<std::vector<double>> frozen;
    {
      Graph g;
      StageFeatures feats = forward_with_taps(g, net, batch);
      for (const auto& head : heads) {
        frozen.push_back(classify(g, head, feats.maps[head.stage - 1]).data());
      }
    }

    std::vector<Tensor> params = net.parameters();
    for (const auto& head : heads)
      for (auto& p : head.parameters()) params.push_back(p);
    for (auto& p : eparams.parameters()) params.push_back(p);
    params.push_back(lparams.w1);
    params.push_back(lparams.w2);

    merge(all, run_entry("lsanet_objective_full",
                         [&, frozen](Graph& g) { return forward(g, &frozen); },
                         params));
  }
  return all;
}

}  // namespace lsanet
