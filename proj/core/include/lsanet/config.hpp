#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "lsanet/adam.hpp"
#include "lsanet/data.hpp"
#include "lsanet/lsa.hpp"
#include "lsanet/nn.hpp"
#include "lsanet/supervision.hpp"

namespace lsanet {

/// Thrown for malformed configs; the CLI maps it to exit code 1.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class DataSource { kSynthetic, kMedmnist };

struct ExperimentConfig {
  Mode mode = Mode::kLsanet;
  BackboneSpec backbone;
  std::vector<std::size_t> head_stages{1, 2, 3, 4};
  EmbedConfig embed;
  std::size_t reduction = 8;
  double alpha = 1.0;  // shared DSN auxiliary weight
  double mu = 1.0;     // shared pairwise KS weight
  AdamConfig optimizer;
  std::size_t epochs = 30;
  BatchPlan batch;
  DataSource source = DataSource::kSynthetic;
  std::string data_path;
  SyntheticParams synthetic;
  std::uint64_t seed = 1;
  std::string out_dir = "runs/out";

  /// The parsed key=value pairs, serialized verbatim into results files.
  std::map<std::string, std::string> raw;

  void validate() const;
};

/// Flat UTF-8 `key = value` file with dotted keys; '#' comments; unknown
/// keys rejected.
ExperimentConfig parse_config_file(const std::string& path);
ExperimentConfig parse_config_text(const std::string& text);

}  // namespace lsanet
