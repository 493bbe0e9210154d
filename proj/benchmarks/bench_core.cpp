#include <benchmark/benchmark.h>

#include "lsanet/adam.hpp"
#include "lsanet/lsa.hpp"
#include "lsanet/nn.hpp"
#include "lsanet/rng.hpp"
#include "lsanet/supervision.hpp"

using namespace lsanet;

namespace {

Tensor rand_tensor(Shape shape, Rng& rng, bool rg = false) {
  std::vector<double> d(numel(shape));
  for (auto& v : d) v = rng.uniform(-1.0, 1.0);
  return Tensor::from_data(std::move(shape), std::move(d), rg);
}

void BM_Conv2dForward(benchmark::State& state) {
  Rng rng(1);
  Tensor x = rand_tensor({8, 8, 28, 28}, rng);
  Tensor k = rand_tensor({16, 8, 3, 3}, rng);
  Tensor b = rand_tensor({16}, rng);
  for (auto _ : state) {
    Graph g;
    benchmark::DoNotOptimize(g.conv2d(x, k, b, 1, 1));
  }
}
BENCHMARK(BM_Conv2dForward);

void BM_Conv2dBackward(benchmark::State& state) {
  Rng rng(2);
  Tensor x = rand_tensor({8, 8, 28, 28}, rng, true);
  Tensor k = rand_tensor({16, 8, 3, 3}, rng, true);
  Tensor b = rand_tensor({16}, rng, true);
  for (auto _ : state) {
    x.zero_grad();
    k.zero_grad();
    b.zero_grad();
    Graph g;
    Tensor loss = g.sum_all(g.conv2d(x, k, b, 1, 1));
    g.backward(loss);
  }
}
BENCHMARK(BM_Conv2dBackward);

void BM_BranchWeights(benchmark::State& state) {
  Rng rng(3);
  LsaParams lp = init_lsa_params(4, 64, 8, 4);
  std::vector<Tensor> embedded;
  for (int l = 0; l < 4; ++l) embedded.push_back(rand_tensor({16, 64, 3, 3}, rng));
  for (auto _ : state) {
    Graph g;
    benchmark::DoNotOptimize(lsa_weights(g, embedded, lp));
  }
}
BENCHMARK(BM_BranchWeights);

void BM_TrainStep(benchmark::State& state) {
  BackboneSpec spec;
  spec.channels = {4, 8, 8, 16};
  auto [net, heads] = build_backbone(spec, 4, {1, 2, 3, 4}, 5);
  EmbedConfig ecfg;
  ecfg.channels = 8;
  EmbedPlan plan = validate_embed_config(ecfg, spec);
  EmbedParams eparams = init_embed_params(plan, spec, 6);
  LsaParams lparams = init_lsa_params(4, 8, 4, 7);

  std::vector<Tensor> params = net.parameters();
  for (const auto& h : heads)
    for (auto& p : h.parameters()) params.push_back(p);
  for (auto& p : eparams.parameters()) params.push_back(p);
  params.push_back(lparams.w1);
  params.push_back(lparams.w2);
  Adam adam(params, AdamConfig{});

  Rng rng(8);
  Tensor batch = rand_tensor({16, 1, 28, 28}, rng);
  std::vector<std::size_t> labels(16);
  for (auto& l : labels) l = rng.below(4);
  LossWeights weights = LossWeights::uniform(4);

  for (auto _ : state) {
    Graph g;
    StageFeatures feats = forward_with_taps(g, net, batch);
    ClassifierOutputs outputs;
    std::vector<Tensor> embedded;
    for (std::size_t s = 1; s <= 4; ++s) {
      outputs.probs.push_back(classify(g, heads[s - 1], feats.maps[s - 1]));
      embedded.push_back(embed_stage(g, feats.maps[s - 1], s, plan, eparams));
    }
    BranchWeights bw = lsa_weights(g, embedded, lparams);
    ObjectiveInputs in;
    in.outputs = &outputs;
    in.labels = &labels;
    in.weights = &weights;
    in.beta = &bw;
    Tensor loss = total_objective(g, Mode::kLsanet, in);
    adam.zero_grad();
    g.backward(loss);
    adam.step();
  }
}
BENCHMARK(BM_TrainStep);

}  // namespace

BENCHMARK_MAIN();
