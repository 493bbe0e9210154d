#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "lsanet/config.hpp"
#include "lsanet/gradcheck.hpp"
#include "lsanet/rng.hpp"
#include "lsanet/train.hpp"

namespace {

int run_gradcheck(const std::string& module, std::size_t seeds) {
  using lsanet::SuiteEntry;
  std::vector<SuiteEntry> entries;
  auto append = [&](std::vector<SuiteEntry> more) {
    entries.insert(entries.end(), more.begin(), more.end());
  };
  if (module == "all" || module == "tensor") {
    append(lsanet::gradcheck_tensor_ops(seeds));
  }
  if (module == "all" || module == "lsa") {
    append(lsanet::gradcheck_lsa(seeds));
  }
  if (module == "all" || module == "supervision") {
    append(lsanet::gradcheck_supervision(seeds));
  }
  if (entries.empty()) {
    std::cerr << "gradcheck: unknown module '" << module
              << "' (all|tensor|lsa|supervision)\n";
    return 1;
  }
  bool ok = true;
  for (const auto& e : entries) {
    std::cout << (e.passed ? "PASS" : "FAIL") << "  " << e.name
              << "  max_rel_error=" << e.max_rel_error << "\n";
    ok = ok && e.passed;
  }
  return ok ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Deeply supervised training with layer selective attention"};
  app.require_subcommand(1);

  std::string config_path, out_dir, checkpoint_path, data_path;
  std::string module = "all", axis;
  std::int64_t seed_override = -1;
  std::size_t gradcheck_seeds = 20;
  std::vector<std::uint64_t> sweep_seeds;

  auto* train_cmd = app.add_subcommand("train", "Run one training experiment");
  train_cmd->add_option("--config", config_path, "Config file")->required();
  train_cmd->add_option("--seed", seed_override, "Seed override");
  train_cmd->add_option("--out", out_dir, "Output directory override");

  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint");
  eval_cmd->add_option("--checkpoint", checkpoint_path, "Checkpoint file")
      ->required();
  eval_cmd->add_option("--data", data_path, "MedMNIST-style .npz archive")
      ->required();

  auto* gz = app.add_subcommand("gradcheck", "Finite-difference gradient checks");
  gz->add_option("--module", module, "all|tensor|lsa|supervision");
  gz->add_option("--seeds", gradcheck_seeds, "Trials per check");

  auto* sweep_cmd = app.add_subcommand("sweep", "Ablation sweep");
  sweep_cmd->add_option("--config", config_path, "Config file")->required();
  sweep_cmd->add_option("--axis", axis, "mode|heads")->required();
  sweep_cmd->add_option("--seeds", sweep_seeds, "Seed list (default: config seed)")
      ->delimiter(',');
  sweep_cmd->add_option("--out", out_dir, "Output directory override");

  auto* branch_cmd =
      app.add_subcommand("branch-acc", "Per-branch accuracy probe study");
  branch_cmd->add_option("--config", config_path, "Config file")->required();
  branch_cmd->add_option("--seed", seed_override, "Seed override");
  branch_cmd->add_option("--out", out_dir, "Output directory override");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train_cmd->parsed() || sweep_cmd->parsed() || branch_cmd->parsed()) {
      lsanet::ExperimentConfig cfg = lsanet::parse_config_file(config_path);
      if (seed_override >= 0) {
        cfg.seed = static_cast<std::uint64_t>(seed_override);
        cfg.synthetic.seed = cfg.seed;
        cfg.batch.seed = lsanet::mix_seed(cfg.seed, 100);
      }
      if (!out_dir.empty()) cfg.out_dir = out_dir;

      if (train_cmd->parsed()) {
        lsanet::TrainResult r = lsanet::train(cfg);
        std::cout << "final test acc " << r.final_test_acc << "  auc "
                  << r.final_test_auc << "\nbest-val epoch " << r.best_epoch
                  << "  test acc " << r.best_test_acc << "\nresults: "
                  << r.result_json_path << "\n";
      } else if (sweep_cmd->parsed()) {
        if (sweep_seeds.empty()) sweep_seeds = {cfg.seed};
        auto rows = lsanet::ablation_sweep(cfg, axis, sweep_seeds);
        for (const auto& r : rows) {
          std::cout << r.variant << "  acc " << r.mean_acc << "  auc "
                    << r.mean_auc << "  gain " << r.gain_acc << "/" << r.gain_auc
                    << "\n";
        }
      } else {
        auto rows = lsanet::branch_accuracy_experiment(cfg);
        std::cout << "wrote " << rows.size() << " rows to " << cfg.out_dir
                  << "/branch_acc.csv\n";
      }
      return 0;
    }
    if (eval_cmd->parsed()) {
      lsanet::EvalReport r =
          lsanet::evaluate_checkpoint(checkpoint_path, data_path);
      nlohmann::json j{{"test_acc", r.acc},
                       {"test_auc", r.auc},
                       {"per_classifier_acc", r.per_classifier_acc}};
      std::cout << j.dump(2) << "\n";
      return 0;
    }
    if (gz->parsed()) {
      return run_gradcheck(module, gradcheck_seeds);
    }
  } catch (const lsanet::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const lsanet::NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
