// Copyright 2026 The ECBM Authors
// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include "ecbm/data.hpp"
#include "ecbm/inference.hpp"
#include "ecbm/interpret.hpp"
#include "ecbm/training.hpp"

namespace {

using namespace ecbm;

data::GeneratorSpec spec(std::size_t k, std::size_t n) {
  data::GeneratorSpec s;
  s.num_concepts = k;
  s.num_classes = 4;
  s.feature_dim = 16;
  s.num_examples = n;
  return s;
}

Theta model(std::size_t k) {
  ModelConfig c;
  c.num_concepts = k;
  c.num_classes = 4;
  c.feature_dim = 16;
  return Theta::initialize(c, 0);
}

void BM_LossGradient(benchmark::State& state) {
  const std::size_t batch = state.range(0);
  const Theta t = model(6);
  const auto ds = data::generate(spec(6, batch), 0);
  std::vector<std::size_t> rows(batch);
  std::vector<ConceptBits> cg;
  for (std::size_t i = 0; i < batch; ++i) {
    rows[i] = i;
    cg.push_back(ds.examples[i].concepts);
  }
  std::mt19937_64 rng(0);
  const auto negs = train::sample_negatives(cg, 20, 6, rng);
  const diff::Graph g = train::build_loss_graph(t.config(), batch, negs.size(), 0.3, 0.3);
  const auto in = train::make_batch(ds, rows, cg, negs);
  diff::Bindings b;
  t.bind(b);
  b.bind("x", in.x).bind("y", in.y).bind("c", in.c).bind("c_global", in.c_global);
  b.bind("negatives", in.negatives);
  for (auto _ : state) {
    benchmark::DoNotOptimize(diff::gradient(g, b, "l_total", {true, 0}));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(batch));
}
BENCHMARK(BM_LossGradient)->Arg(16)->Arg(64);

void BM_Predict(benchmark::State& state) {
  const Theta t = model(6);
  const auto ds = data::generate(spec(6, 1), 0);
  for (auto _ : state) {
    benchmark::DoNotOptimize(infer::predict(t, ds.examples[0].features));
  }
}
BENCHMARK(BM_Predict);

void BM_InterveneExact(benchmark::State& state) {
  const std::size_t k = state.range(0);
  const Theta t = model(k);
  const auto ds = data::generate(spec(k, 1), 0);
  for (auto _ : state) {
    benchmark::DoNotOptimize(infer::intervene_exact(t, ds.examples[0].features, {{0, 1}}));
  }
}
BENCHMARK(BM_InterveneExact)->Arg(6)->Arg(10);

void BM_MarginalImportance(benchmark::State& state) {
  const Theta t = model(8);
  const auto ds = data::generate(spec(8, 200), 0);
  for (auto _ : state) {
    benchmark::DoNotOptimize(interpret::marginal_concept_importance(t, ds, 0));
  }
}
BENCHMARK(BM_MarginalImportance);

void BM_TrainEpoch(benchmark::State& state) {
  const auto ds = data::generate(spec(6, 2000), 0);
  const Theta init = model(6);
  train::TrainConfig c;
  c.epochs = 1;
  for (auto _ : state) {
    benchmark::DoNotOptimize(train::train(init, ds, c));
  }
}
BENCHMARK(BM_TrainEpoch)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
