#include "lsanet/lsa.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

#include "lsanet/rng.hpp"

namespace lsanet {

namespace {

Tensor init_uniform(Shape shape, std::size_t fan_in, Rng& rng) {
  // relu-gain fan-in scaling; keeps activation variance stable through the
  // unnormalized conv stack
  double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  std::vector<double> data(numel(shape));
  for (auto& v : data) v = rng.uniform(-bound, bound);
  return Tensor::from_data(std::move(shape), std::move(data), true);
}

}  // namespace

EmbedPlan validate_embed_config(const EmbedConfig& cfg,
                                const BackboneSpec& spec) {
  for (int s = 0; s < 4; ++s) {
    if (cfg.kernels[s] % 2 == 0 || cfg.kernels[s] == 0) {
      throw std::invalid_argument("EmbedConfig: kernel for stage " +
                                  std::to_string(s + 1) + " must be odd, got " +
                                  std::to_string(cfg.kernels[s]));
    }
    if (s > 0 && cfg.kernels[s] > cfg.kernels[s - 1]) {
      throw std::invalid_argument(
          "EmbedConfig: kernel sizes must be non-increasing with depth");
    }
  }
  auto eh = spec.stage_extents_h();
  auto ew = spec.stage_extents_w();
  EmbedPlan plan;
  plan.channels = cfg.channels;
  plan.out_h = cfg.out_h ? cfg.out_h : eh[3];
  plan.out_w = cfg.out_w ? cfg.out_w : ew[3];

  for (int s = 0; s < 4; ++s) {
    std::size_t k = cfg.kernels[s];
    bool found = false;
    for (std::size_t p = 0; p <= k && !found; ++p) {
      for (std::size_t st = 1; st <= eh[s] + 2 * p && !found; ++st) {
        if (k > eh[s] + 2 * p || k > ew[s] + 2 * p) continue;
        std::size_t oh = (eh[s] + 2 * p - k) / st + 1;
        std::size_t ow = (ew[s] + 2 * p - k) / st + 1;
        if (oh == plan.out_h && ow == plan.out_w) {
          plan.stages[s] = {k, st, p};
          found = true;
        }
      }
    }
    if (!found) {
      throw std::invalid_argument(
          "EmbedConfig: stage " + std::to_string(s + 1) + " extent " +
          std::to_string(eh[s]) + "x" + std::to_string(ew[s]) + " with kernel " +
          std::to_string(k) + " cannot reach " + std::to_string(plan.out_h) +
          "x" + std::to_string(plan.out_w));
    }
  }
  return plan;
}

std::vector<Tensor> EmbedParams::parameters(
    std::span<const std::size_t> stage_subset) const {
  std::vector<Tensor> out;
  for (auto s : stage_subset) {
    const auto& sp = stages[s - 1];
    out.push_back(sp.k_kernel);
    out.push_back(sp.k_bias);
    out.push_back(sp.one_kernel);
    out.push_back(sp.one_bias);
  }
  return out;
}

std::vector<Tensor> EmbedParams::parameters() const {
  static const std::size_t all[] = {1, 2, 3, 4};
  return parameters(all);
}

EmbedParams init_embed_params(const EmbedPlan& plan, const BackboneSpec& spec,
                              std::uint64_t seed) {
  Rng rng(seed);
  EmbedParams params;
  for (int s = 0; s < 4; ++s) {
    std::size_t cs = spec.channels[s];
    std::size_t k = plan.stages[s].kernel;
    params.stages[s].k_kernel = init_uniform({cs, cs, k, k}, cs * k * k, rng);
    params.stages[s].k_bias = Tensor::zeros({cs}, true);
    params.stages[s].one_kernel = init_uniform({plan.channels, cs, 1, 1}, cs, rng);
    params.stages[s].one_bias = Tensor::zeros({plan.channels}, true);
  }
  return params;
}

LsaParams init_lsa_params(std::size_t branches, std::size_t embed_channels,
                          std::size_t reduction, std::uint64_t seed) {
  std::size_t c = branches * embed_channels;
  if (reduction == 0 || c % reduction != 0) {
    throw std::invalid_argument("init_lsa_params: reduction " +
                                std::to_string(reduction) + " does not divide " +
                                std::to_string(c));
  }
  Rng rng(seed);
  LsaParams params;
  params.reduction = reduction;
  params.w1 = init_uniform({c / reduction, c}, c, rng);
  params.w2 = init_uniform({c, c / reduction}, c / reduction, rng);
  return params;
}

Tensor embed_stage(Graph& g, const Tensor& feature, std::size_t stage_index,
                   const EmbedPlan& plan, const EmbedParams& params) {
  if (stage_index < 1 || stage_index > 4) {
    throw std::invalid_argument("embed_stage: stage index " +
                                std::to_string(stage_index) + " out of 1..4");
  }
  const auto& sp = params.stages[stage_index - 1];
  const auto& geo = plan.stages[stage_index - 1];
  Tensor mid = g.conv2d(feature, sp.k_kernel, sp.k_bias, geo.stride, geo.padding);
  return g.conv2d(mid, sp.one_kernel, sp.one_bias, 1, 0);
}

BranchWeights lsa_weights(Graph& g, std::span<const Tensor> embedded,
                          const LsaParams& params) {
  if (embedded.empty()) {
    throw std::invalid_argument("lsa_weights: no embedded inputs");
  }
  std::size_t l = embedded.size();
  const Shape& s0 = embedded[0].shape();
  for (const auto& e : embedded) {
    if (e.shape() != s0) {
      throw std::invalid_argument("lsa_weights: embedded shapes differ: " +
                                  shape_str(e.shape()) + " vs " + shape_str(s0));
    }
  }
  std::size_t ce = s0[1];
  if ((l * ce) % params.reduction != 0) {
    throw std::invalid_argument("lsa_weights: reduction " +
                                std::to_string(params.reduction) +
                                " does not divide " + std::to_string(l * ce));
  }
  Tensor cat = g.concat_channels(embedded);       // [N, L*C_e, H, W]
  Tensor pooled = g.global_avg_pool(cat);         // [N, L*C_e]
  Tensor hidden = g.relu(g.linear_nt(pooled, params.w1));
  Tensor gate = g.sigmoid(g.linear_nt(hidden, params.w2));  // [N, L*C_e]

  std::vector<Tensor> means;
  for (std::size_t i = 0; i < l; ++i) {
    Tensor chunk = g.slice_cols(gate, i * ce, (i + 1) * ce);
    means.push_back(g.mean_all(chunk));  // channel mean then batch mean
  }
  Tensor stacked = g.stack_scalars(means);
  BranchWeights bw;
  bw.beta = g.softmax(stacked, 0);
  return bw;
}

}  // namespace lsanet
