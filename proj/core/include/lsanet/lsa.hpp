#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "lsanet/nn.hpp"
#include "lsanet/tensor.hpp"

namespace lsanet {

/// Per-stage embedding geometry: one k x k conv to reach the common spatial
/// extent, then a 1x1 conv to reach the common channel count.
struct EmbedConfig {
  std::array<std::size_t, 4> kernels{7, 5, 3, 1};  // non-increasing, odd
  std::size_t channels = 64;                       // C_e
  std::size_t out_h = 0;  // 0 = use the smallest stage extent
  std::size_t out_w = 0;
};

struct EmbedPlan {
  struct StagePlan {
    std::size_t kernel, stride, padding;
  };
  std::array<StagePlan, 4> stages;
  std::size_t channels, out_h, out_w;
};

/// Resolves strides/paddings so each stage lands exactly on the common
/// extent. Throws when a stage cannot reach it.
EmbedPlan validate_embed_config(const EmbedConfig& cfg, const BackboneSpec& spec);

struct EmbedParams {
  struct StageParams {
    Tensor k_kernel, k_bias;    // [C_s, C_s, k, k], [C_s]
    Tensor one_kernel, one_bias;  // [C_e, C_s, 1, 1], [C_e]
  };
  std::array<StageParams, 4> stages;

  std::vector<Tensor> parameters(std::span<const std::size_t> stage_subset) const;
  std::vector<Tensor> parameters() const;
};

EmbedParams init_embed_params(const EmbedPlan& plan, const BackboneSpec& spec,
                              std::uint64_t seed);

/// Two-FC attention MLP over the concatenated embedded stages. With L
/// branches: W1 [(L*C_e)/r, L*C_e], W2 [L*C_e, (L*C_e)/r].
struct LsaParams {
  Tensor w1, w2;
  std::size_t reduction = 8;

  std::vector<Tensor> parameters() const { return {w1, w2}; }
};

LsaParams init_lsa_params(std::size_t branches, std::size_t embed_channels,
                          std::size_t reduction, std::uint64_t seed);

struct BranchWeights {
  Tensor beta;  // [L], in-graph; simplexed
  std::vector<double> values() const { return beta.data(); }
};

/// Embeds one stage feature to [N, C_e, H_e, W_e].
Tensor embed_stage(Graph& g, const Tensor& feature, std::size_t stage_index,
                   const EmbedPlan& plan, const EmbedParams& params);

/// concat -> global avg pool -> W1, ReLU, W2, sigmoid -> split -> per-chunk
/// mean -> batch mean -> softmax.
BranchWeights lsa_weights(Graph& g, std::span<const Tensor> embedded,
                          const LsaParams& params);

}  // namespace lsanet
