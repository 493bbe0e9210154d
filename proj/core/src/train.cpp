#include "lsanet/train.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "lsanet/metrics.hpp"
#include "lsanet/rng.hpp"

namespace lsanet {

namespace {

namespace fs = std::filesystem;

bool uses_lsa(Mode mode) {
  return mode == Mode::kDsnLsa || mode == Mode::kLsanet;
}
bool uses_ks(Mode mode) {
  return mode == Mode::kDsnKs || mode == Mode::kLsanet;
}

struct LoadedData {
  Dataset train, val, test;
  std::size_t num_classes = 0;
};

LoadedData load_data(const ExperimentConfig& cfg) {
  LoadedData out;
  if (cfg.source == DataSource::kSynthetic) {
    SyntheticBundle b = synthetic_dataset(cfg.synthetic);
    out.train = b.train;
    out.val = b.test;  // synthetic runs use the test split for selection
    out.test = b.test;
  } else {
    DatasetBundle b = load_medmnist(cfg.data_path);
    out.train = b.train;
    out.val = b.val;
    out.test = b.test;
  }
  out.num_classes = out.train.num_classes;
  return out;
}

ClassifierOutputs forward_outputs(Graph& g, const Model& model,
                                  const StageFeatures& feats) {
  ClassifierOutputs outputs;
  for (const auto& head : model.heads) {
    outputs.probs.push_back(classify(g, head, feats.maps[head.stage - 1]));
  }
  return outputs;
}

BranchWeights forward_beta(Graph& g, const Model& model,
                           const StageFeatures& feats) {
  std::vector<Tensor> embedded;
  for (const auto& head : model.heads) {
    embedded.push_back(
        embed_stage(g, feats.maps[head.stage - 1], head.stage, model.plan,
                    model.eparams));
  }
  return lsa_weights(g, embedded, model.lparams);
}

/// Probabilities of every head over a full dataset, evaluated in chunks.
std::vector<Tensor> predict_all(const Model& model, const Dataset& ds,
                                std::size_t chunk = 256) {
  std::size_t n = ds.size();
  std::size_t heads = model.heads.size();
  std::size_t classes = model.heads[0].weight.shape()[1];
  std::vector<std::vector<double>> probs(heads);
  for (auto& p : probs) p.reserve(n * classes);

  const Shape& is = ds.images.shape();
  std::size_t sample = is[1] * is[2] * is[3];
  for (std::size_t start = 0; start < n; start += chunk) {
    std::size_t end = std::min(n, start + chunk);
    std::vector<double> data(ds.images.data().begin() + start * sample,
                             ds.images.data().begin() + end * sample);
    Tensor batch =
        Tensor::from_data({end - start, is[1], is[2], is[3]}, std::move(data));
    Graph g;
    StageFeatures feats = forward_with_taps(g, model.net, batch);
    ClassifierOutputs outputs = forward_outputs(g, model, feats);
    for (std::size_t h = 0; h < heads; ++h) {
      const auto& d = outputs.probs[h].data();
      probs[h].insert(probs[h].end(), d.begin(), d.end());
    }
  }
  std::vector<Tensor> out;
  for (auto& p : probs) out.push_back(Tensor::from_data({n, classes}, std::move(p)));
  return out;
}

std::string csv_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

double max_abs_grad(const std::vector<Tensor>& params) {
  double mx = 0.0;
  for (const auto& p : params) {
    if (!p.has_grad()) continue;
    Tensor t = p;
    for (double g : t.grad()) mx = std::max(mx, std::abs(g));
  }
  return mx;
}

}  // namespace

std::vector<Tensor> Model::parameters() const {
  std::vector<Tensor> out = net.parameters();
  for (const auto& head : heads) {
    out.push_back(head.weight);
    out.push_back(head.bias);
  }
  if (has_lsa) {
    for (const auto& head : heads) {
      const auto& sp = eparams.stages[head.stage - 1];
      out.push_back(sp.k_kernel);
      out.push_back(sp.k_bias);
      out.push_back(sp.one_kernel);
      out.push_back(sp.one_bias);
    }
    out.push_back(lparams.w1);
    out.push_back(lparams.w2);
  }
  return out;
}

Model build_model(const ExperimentConfig& cfg, std::size_t num_classes) {
  Model model;
  auto [net, heads] = build_backbone(cfg.backbone, num_classes, cfg.head_stages,
                                     cfg.seed);
  model.net = net;
  model.heads = heads;
  if (uses_lsa(cfg.mode)) {
    model.has_lsa = true;
    model.plan = validate_embed_config(cfg.embed, cfg.backbone);
    model.eparams =
        init_embed_params(model.plan, cfg.backbone, mix_seed(cfg.seed, 200));
    model.lparams = init_lsa_params(cfg.head_stages.size(), cfg.embed.channels,
                                    cfg.reduction, mix_seed(cfg.seed, 300));
  }
  return model;
}

TrainResult train(const ExperimentConfig& cfg) {
  cfg.validate();
  LoadedData data = load_data(cfg);
  Model model = build_model(cfg, data.num_classes);
  std::size_t branches = model.heads.size();
  LossWeights weights = LossWeights::uniform(branches, cfg.alpha, cfg.mu);

  fs::create_directories(cfg.out_dir);
  std::ofstream metrics_csv(fs::path(cfg.out_dir) / "metrics.csv");
  metrics_csv << "epoch,train_loss,val_acc,val_auc,test_acc,test_auc";
  for (const auto& head : model.heads) metrics_csv << ",test_acc_c" << head.stage;
  metrics_csv << "\n";
  std::ofstream losses_csv(fs::path(cfg.out_dir) / "losses.csv");
  losses_csv << "step,total,l_b,l_k";
  for (const auto& head : model.heads) losses_csv << ",ce_c" << head.stage;
  for (std::size_t i = 1; i <= branches; ++i) losses_csv << ",beta" << i;
  losses_csv << "\n";
  std::ofstream beta_csv;
  if (model.has_lsa) {
    beta_csv.open(fs::path(cfg.out_dir) / "beta.csv");
    beta_csv << "step";
    for (std::size_t i = 1; i <= branches; ++i) beta_csv << ",beta" << i;
    beta_csv << "\n";
  }

  Adam adam(model.parameters(), cfg.optimizer);
  TrainResult result;
  std::size_t step = 0;
  bool have_best = false;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    double loss_sum = 0.0;
    std::size_t loss_count = 0;
    for (const Batch& batch : batches(data.train, cfg.batch, epoch)) {
      Graph g;
      StageFeatures feats = forward_with_taps(g, model.net, batch.images);
      ClassifierOutputs outputs = forward_outputs(g, model, feats);
      BranchWeights bw;
      if (model.has_lsa) bw = forward_beta(g, model, feats);

      ObjectiveInputs in;
      in.outputs = &outputs;
      in.labels = &batch.labels;
      in.weights = &weights;
      in.beta = model.has_lsa ? &bw : nullptr;
      Tensor loss = total_objective(g, cfg.mode, in);

      double lb = 0.0, lk = 0.0;
      if (uses_ks(cfg.mode)) {
        Graph probe;
        lk = knowledge_synergy_loss(probe, outputs, weights).item();
      }
      lb = loss.item() - lk;

      if (!std::isfinite(loss.item())) {
        std::ostringstream os;
        os << "non-finite loss at step " << step << ": total=" << loss.item()
           << " l_b=" << lb << " l_k=" << lk
           << " max|grad|=" << max_abs_grad(model.parameters());
        throw NumericalError(os.str());
      }

      adam.zero_grad();
      g.backward(loss);
      adam.step();
      ++step;

      loss_sum += loss.item();
      ++loss_count;
      losses_csv << step << ',' << csv_double(loss.item()) << ','
                 << csv_double(lb) << ',' << csv_double(lk);
      for (std::size_t h = 0; h < branches; ++h) {
        Graph probe;
        losses_csv << ','
                   << csv_double(
                          cross_entropy(probe, outputs.probs[h], batch.labels)
                              .item());
      }
      if (model.has_lsa) {
        auto bvals = bw.values();
        beta_csv << step;
        for (std::size_t i = 0; i < branches; ++i) {
          losses_csv << ',' << csv_double(bvals[i]);
          beta_csv << ',' << csv_double(bvals[i]);
          if (!std::isfinite(bvals[i])) {
            throw NumericalError("non-finite beta at step " +
                                 std::to_string(step));
          }
        }
        beta_csv << "\n";
      } else {
        for (std::size_t i = 0; i < branches; ++i) losses_csv << ",";
      }
      losses_csv << "\n";
    }

    EpochMetrics em;
    em.epoch = epoch;
    em.train_loss = loss_count ? loss_sum / static_cast<double>(loss_count) : 0.0;
    {
      auto val_probs = predict_all(model, data.val);
      em.val_acc = accuracy(val_probs.back(), data.val.labels);
      em.val_auc = auc_macro_ovr(val_probs.back(), data.val.labels);
      auto test_probs = predict_all(model, data.test);
      em.test_acc = accuracy(test_probs.back(), data.test.labels);
      em.test_auc = auc_macro_ovr(test_probs.back(), data.test.labels);
      for (const auto& p : test_probs) {
        em.per_classifier_test_acc.push_back(accuracy(p, data.test.labels));
      }
    }
    metrics_csv << em.epoch << ',' << csv_double(em.train_loss) << ','
                << csv_double(em.val_acc) << ',' << csv_double(em.val_auc) << ','
                << csv_double(em.test_acc) << ',' << csv_double(em.test_auc);
    for (double a : em.per_classifier_test_acc) metrics_csv << ',' << csv_double(a);
    metrics_csv << "\n";

    if (!have_best || em.val_acc > result.best_val_acc) {
      have_best = true;
      result.best_val_acc = em.val_acc;
      result.best_epoch = epoch;
      result.best_test_acc = em.test_acc;
      result.best_test_auc = em.test_auc;
    }
    result.history.push_back(std::move(em));
  }

  // epochs == 0: evaluation-only on initialized weights
  if (cfg.epochs == 0) {
    auto test_probs = predict_all(model, data.test);
    result.final_test_acc = accuracy(test_probs.back(), data.test.labels);
    result.final_test_auc = auc_macro_ovr(test_probs.back(), data.test.labels);
    result.best_test_acc = result.final_test_acc;
    result.best_test_auc = result.final_test_auc;
  } else {
    result.final_test_acc = result.history.back().test_acc;
    result.final_test_auc = result.history.back().test_auc;
  }

  Checkpoint ckpt;
  ckpt.spec = cfg.backbone;
  ckpt.head_stages = cfg.head_stages;
  ckpt.num_classes = data.num_classes;
  ckpt.seed = cfg.seed;
  ckpt.epoch = cfg.epochs;
  ckpt.params = model.parameters();
  result.checkpoint_path = (fs::path(cfg.out_dir) / "checkpoint.bin").string();
  save_checkpoint(result.checkpoint_path, ckpt);

  nlohmann::json rj;
  rj["config"] = cfg.raw;
  rj["mode"] = mode_name(cfg.mode);
  rj["seed"] = cfg.seed;
  rj["epochs"] = cfg.epochs;
  rj["num_classes"] = data.num_classes;
  rj["final"] = {{"test_acc", result.final_test_acc},
                 {"test_auc", result.final_test_auc}};
  rj["best_val"] = {{"epoch", result.best_epoch},
                    {"val_acc", result.best_val_acc},
                    {"test_acc", result.best_test_acc},
                    {"test_auc", result.best_test_auc}};
  if (!result.history.empty()) {
    rj["per_classifier_test_acc"] = result.history.back().per_classifier_test_acc;
  }
  result.result_json_path = (fs::path(cfg.out_dir) / "result.json").string();
  std::ofstream rf(result.result_json_path);
  rf << rj.dump(2) << "\n";
  return result;
}

EvalReport evaluate_checkpoint(const std::string& checkpoint_path,
                               const std::string& data_path) {
  Checkpoint ckpt = load_checkpoint(checkpoint_path);
  auto [net, heads] =
      build_backbone(ckpt.spec, ckpt.num_classes, ckpt.head_stages, ckpt.seed);
  Model model;
  model.net = net;
  model.heads = heads;
  std::vector<Tensor> params = model.parameters();
  if (ckpt.params.size() < params.size()) {
    throw std::runtime_error("evaluate_checkpoint: checkpoint holds " +
                             std::to_string(ckpt.params.size()) +
                             " tensors, model needs " +
                             std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].shape() != ckpt.params[i].shape()) {
      throw std::runtime_error("evaluate_checkpoint: tensor " +
                               std::to_string(i) + " shape mismatch");
    }
    params[i].data() = ckpt.params[i].data();
  }

  DatasetBundle bundle = load_medmnist(data_path);
  auto probs = predict_all(model, bundle.test);
  EvalReport report;
  report.acc = accuracy(probs.back(), bundle.test.labels);
  report.auc = auc_macro_ovr(probs.back(), bundle.test.labels);
  for (const auto& p : probs) {
    report.per_classifier_acc.push_back(accuracy(p, bundle.test.labels));
  }
  return report;
}

std::vector<BranchAccRow> branch_accuracy_experiment(
    const ExperimentConfig& cfg) {
  if (cfg.head_stages != std::vector<std::size_t>{1, 2, 3, 4}) {
    throw ConfigError("branch_accuracy_experiment: requires heads = 1,2,3,4");
  }
  LoadedData data = load_data(cfg);
  std::vector<BranchAccRow> rows;

  for (const std::string scheme : {"conventional", "dsl"}) {
    ExperimentConfig run_cfg = cfg;
    run_cfg.mode = scheme == "dsl" ? Mode::kDsn : Mode::kBaseline;
    Model model = build_model(run_cfg, data.num_classes);
    LossWeights weights = LossWeights::uniform(4, cfg.alpha, cfg.mu);
    Adam adam(model.parameters(), cfg.optimizer);

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
      for (const Batch& batch : batches(data.train, cfg.batch, epoch)) {
        Graph g;
        StageFeatures feats = forward_with_taps(g, model.net, batch.images);
        Tensor loss;
        if (scheme == "dsl") {
          ClassifierOutputs outputs = forward_outputs(g, model, feats);
          loss = dsn_loss(g, outputs, batch.labels, weights);
        } else {
          // probe heads learn from their own loss; the backbone sees only
          // the final classifier's gradient
          loss = cross_entropy(
              g, classify(g, model.heads.back(), feats.maps[3]), batch.labels);
          for (std::size_t h = 0; h + 1 < model.heads.size(); ++h) {
            Tensor blocked = g.detach(feats.maps[model.heads[h].stage - 1]);
            Tensor probe_loss = cross_entropy(
                g, classify(g, model.heads[h], blocked), batch.labels);
            loss = g.add(loss, probe_loss);
          }
        }
        if (!std::isfinite(loss.item())) {
          throw NumericalError("branch_accuracy_experiment: non-finite loss");
        }
        adam.zero_grad();
        g.backward(loss);
        adam.step();
      }
      auto train_probs = predict_all(model, data.train);
      BranchAccRow row;
      row.epoch = epoch;
      row.scheme = scheme;
      for (std::size_t h = 0; h < 4; ++h) {
        row.train_acc[h] = accuracy(train_probs[h], data.train.labels);
      }
      rows.push_back(row);
    }

    // per-scheme checkpoint so the blocked-probe contract (probe heads never
    // touch the final classifier) can be verified bit-for-bit
    Checkpoint ckpt;
    ckpt.spec = cfg.backbone;
    ckpt.head_stages = run_cfg.head_stages;
    ckpt.num_classes = data.num_classes;
    ckpt.seed = cfg.seed;
    ckpt.epoch = cfg.epochs;
    ckpt.params = model.parameters();
    fs::create_directories(fs::path(cfg.out_dir) / scheme);
    save_checkpoint((fs::path(cfg.out_dir) / scheme / "checkpoint.bin").string(),
                    ckpt);
  }

  fs::create_directories(cfg.out_dir);
  std::ofstream csv(fs::path(cfg.out_dir) / "branch_acc.csv");
  csv << "epoch,scheme,acc_c1,acc_c2,acc_c3,acc_c4\n";
  for (const auto& r : rows) {
    csv << r.epoch << ',' << r.scheme;
    for (double a : r.train_acc) csv << ',' << csv_double(a);
    csv << "\n";
  }
  return rows;
}

std::vector<SweepRow> ablation_sweep(const ExperimentConfig& cfg,
                                     const std::string& axis,
                                     const std::vector<std::uint64_t>& seeds) {
  struct Variant {
    std::string name;
    Mode mode;
    std::vector<std::size_t> heads;
  };
  std::vector<Variant> variants;
  if (axis == "mode") {
    for (Mode m : {Mode::kBaseline, Mode::kDsn, Mode::kDsnKs, Mode::kDsnLsa,
                   Mode::kLsanet}) {
      variants.push_back({mode_name(m), m,
                          m == Mode::kBaseline ? std::vector<std::size_t>{4}
                                               : cfg.head_stages});
    }
  } else if (axis == "heads") {
    variants.push_back({"C4", Mode::kBaseline, {4}});
    const std::vector<std::vector<std::size_t>> subsets = {
        {1, 4}, {2, 4}, {3, 4}, {1, 2, 4}, {1, 3, 4}, {2, 3, 4}, {1, 2, 3, 4}};
    for (const auto& s : subsets) {
      std::string name;
      for (auto st : s) name += "C" + std::to_string(st);
      variants.push_back({name, cfg.mode == Mode::kBaseline ? Mode::kLsanet
                                                            : cfg.mode,
                          s});
    }
  } else {
    throw ConfigError("ablation_sweep: axis must be 'mode' or 'heads'");
  }

  std::vector<SweepRow> rows;
  for (const auto& v : variants) {
    SweepRow row;
    row.variant = v.name;
    for (auto seed : seeds) {
      ExperimentConfig run_cfg = cfg;
      run_cfg.mode = v.mode;
      run_cfg.head_stages = v.heads;
      run_cfg.seed = seed;
      run_cfg.synthetic.seed = seed;
      run_cfg.batch.seed = mix_seed(seed, 100);
      run_cfg.out_dir = (fs::path(cfg.out_dir) / (v.name + "_" + mode_name(v.mode) +
                                                  "_s" + std::to_string(seed)))
                            .string();
      TrainResult r = train(run_cfg);
      row.test_acc.push_back(r.best_test_acc);
      row.test_auc.push_back(r.best_test_auc);
    }
    for (double a : row.test_acc) row.mean_acc += a;
    for (double a : row.test_auc) row.mean_auc += a;
    row.mean_acc /= static_cast<double>(row.test_acc.size());
    row.mean_auc /= static_cast<double>(row.test_auc.size());
    rows.push_back(row);
  }
  for (auto& row : rows) {
    row.gain_acc = row.mean_acc - rows.front().mean_acc;
    row.gain_auc = row.mean_auc - rows.front().mean_auc;
  }

  fs::create_directories(cfg.out_dir);
  std::ofstream csv(fs::path(cfg.out_dir) / "sweep.csv");
  csv << "variant,mean_acc,mean_auc,gain_acc,gain_auc\n";
  for (const auto& r : rows) {
    csv << r.variant << ',' << csv_double(r.mean_acc) << ','
        << csv_double(r.mean_auc) << ',' << csv_double(r.gain_acc) << ','
        << csv_double(r.gain_auc) << "\n";
  }
  return rows;
}

}  // namespace lsanet
