#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "lsanet/tensor.hpp"

namespace lsanet {

/// Four-stage conv-relu-pool backbone description. Stage 1 keeps the input
/// extent; stages 2..4 halve it with a 2x2 stride-2 max pool at entry.
struct BackboneSpec {
  std::array<std::size_t, 4> channels{8, 16, 32, 64};
  std::size_t in_channels = 1;
  std::size_t input_h = 28;
  std::size_t input_w = 28;
  bool shortcut = false;  // within-stage identity shortcut around the 2nd conv

  void validate() const;  // throws on channel monotonicity violation
  std::array<std::size_t, 4> stage_extents_h() const;
  std::array<std::size_t, 4> stage_extents_w() const;
  /// Closed-form parameter count (backbone only, excluding heads).
  std::size_t param_count() const;
};

struct ConvLayer {
  Tensor kernel;  // [C_out, C_in, 3, 3]
  Tensor bias;    // [C_out]
};

struct Backbone {
  BackboneSpec spec;
  std::array<ConvLayer, 4> conv_a;
  std::array<ConvLayer, 4> conv_b;

  std::vector<Tensor> parameters() const;
};

/// Global-average-pool + fully-connected classifier on one tap.
struct ClassifierHead {
  std::size_t stage = 4;  // 1..4
  Tensor weight;          // [C_s, num_classes]
  Tensor bias;            // [num_classes]

  std::vector<Tensor> parameters() const { return {weight, bias}; }
};

struct StageFeatures {
  std::array<Tensor, 4> maps;  // stage order, [N, C_s, H_s, W_s]
};

/// Builds the backbone plus one head per entry of head_stages (ascending,
/// must contain 4). Deterministic for a fixed seed.
std::pair<Backbone, std::vector<ClassifierHead>> build_backbone(
    const BackboneSpec& spec, std::size_t num_classes,
    const std::vector<std::size_t>& head_stages, std::uint64_t seed);

/// One shared forward pass returning all four stage outputs.
StageFeatures forward_with_taps(Graph& g, const Backbone& net,
                                const Tensor& batch);

/// avg-pool -> dense -> row softmax; rows sum to 1.
Tensor classify(Graph& g, const ClassifierHead& head, const Tensor& feature);

/// Checkpoint container: magic, JSON header, raw little-endian doubles in
/// declaration order.
struct Checkpoint {
  BackboneSpec spec;
  std::vector<std::size_t> head_stages;
  std::size_t num_classes = 0;
  std::uint64_t seed = 0;
  std::size_t epoch = 0;
  std::vector<Tensor> params;  // declaration order
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace lsanet
