#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lsanet/tensor.hpp"

namespace lsanet {

enum class Split { kTrain, kVal, kTest };

struct Dataset {
  Tensor images;  // [N, C, H, W], values in [0,1]
  std::vector<std::size_t> labels;
  std::size_t num_classes = 0;
  Split split = Split::kTrain;

  std::size_t size() const { return labels.size(); }
};

struct DatasetBundle {
  Dataset train, val, test;
};

/// Loads a MedMNIST-style .npz: train/val/test images and labels as NPY
/// members. uint8 pixels scaled to [0,1]; HWC transposed to CHW; grayscale
/// gains an explicit channel.
DatasetBundle load_medmnist(const std::string& path);

struct SyntheticParams {
  std::size_t num_classes = 4;
  std::size_t n_per_class = 100;
  std::size_t height = 28;
  std::size_t width = 28;
  double noise_sigma = 0.1;
  std::uint64_t seed = 0;
};

struct SyntheticBundle {
  Dataset train, test;
};

/// Deterministic texture-template classes: each class stamps its own
/// zero-mean oriented micro-pattern at scattered positions on a mid-grey
/// background. Linearly separable at noise_sigma = 0.
SyntheticBundle synthetic_dataset(const SyntheticParams& params);

struct BatchPlan {
  std::size_t batch_size = 64;
  std::uint64_t seed = 0;
  bool drop_last = false;
};

struct Batch {
  Tensor images;
  std::vector<std::size_t> labels;
  std::vector<std::size_t> indices;
};

/// One epoch of batches: a seeded permutation of all indices, partial final
/// batch kept unless drop_last.
std::vector<Batch> batches(const Dataset& dataset, const BatchPlan& plan,
                           std::size_t epoch);

/// Writes a Dataset bundle back to the archive format (tests and tooling).
void write_medmnist(const std::string& path, const DatasetBundle& bundle);

}  // namespace lsanet
