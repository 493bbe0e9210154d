#pragma once

#include <array>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "lsanet/config.hpp"

namespace lsanet {

/// Thrown when a run hits a non-finite loss; carries the diagnostic dump.
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Backbone, heads and (when the mode needs them) embedding + LSA
/// parameters, built deterministically from one seed.
struct Model {
  Backbone net;
  std::vector<ClassifierHead> heads;
  bool has_lsa = false;
  EmbedPlan plan{};
  EmbedParams eparams;
  LsaParams lparams;

  std::vector<Tensor> parameters() const;  // declaration order
};

Model build_model(const ExperimentConfig& cfg, std::size_t num_classes);

struct EpochMetrics {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_acc = 0.0, val_auc = 0.0;
  double test_acc = 0.0, test_auc = 0.0;
  std::vector<double> per_classifier_test_acc;  // selected heads, stage order
};

struct TrainResult {
  std::vector<EpochMetrics> history;
  double final_test_acc = 0.0, final_test_auc = 0.0;
  double best_val_acc = 0.0;
  std::size_t best_epoch = 0;
  double best_test_acc = 0.0, best_test_auc = 0.0;
  std::string checkpoint_path;
  std::string result_json_path;
};

/// Full training run; writes metrics.csv, losses.csv, beta.csv (LSA modes),
/// result.json and the checkpoint under cfg.out_dir.
TrainResult train(const ExperimentConfig& cfg);

/// Evaluation of a checkpoint on the test split of an archive.
struct EvalReport {
  double acc = 0.0, auc = 0.0;
  std::vector<double> per_classifier_acc;
};
EvalReport evaluate_checkpoint(const std::string& checkpoint_path,
                               const std::string& data_path);

struct BranchAccRow {
  std::size_t epoch = 0;
  std::string scheme;  // "conventional" or "dsl"
  std::array<double, 4> train_acc{};
};

/// Figure-style probe study: conventional scheme trains the backbone from
/// the final loss only, with gradient-blocked probe heads on stages 1..3;
/// the dsl scheme trains all branches jointly. Writes branch_acc.csv.
std::vector<BranchAccRow> branch_accuracy_experiment(const ExperimentConfig& cfg);

struct SweepRow {
  std::string variant;
  std::vector<double> test_acc;  // one per seed
  std::vector<double> test_auc;
  double mean_acc = 0.0, mean_auc = 0.0;
  double gain_acc = 0.0, gain_auc = 0.0;  // vs the baseline row
};

/// axis "mode": baseline/dsn/dsn+ks/dsn+lsa/lsanet. axis "heads": every
/// head subset containing the final classifier. Writes sweep.csv.
std::vector<SweepRow> ablation_sweep(const ExperimentConfig& cfg,
                                     const std::string& axis,
                                     const std::vector<std::uint64_t>& seeds);

}  // namespace lsanet
