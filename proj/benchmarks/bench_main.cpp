// SPDX-License-Identifier: Apache-2.0
#include <benchmark/benchmark.h>

#include "softtopic/corpus.hpp"
#include "softtopic/evalsuite.hpp"
#include "softtopic/synth.hpp"
#include "softtopic/targets.hpp"
#include "softtopic/topicmodel.hpp"

namespace softtopic {
namespace {

Matrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  Rng rng(seed);
  Matrix m(rows, cols);
  for (double& v : m.values()) v = 3.0 * rng.normal();
  return m;
}

Matrix random_simplex(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  Rng rng(seed);
  Matrix m(rows, cols);
  const std::vector<double> alpha(cols, 0.3);
  for (std::size_t r = 0; r < rows; ++r) {
    const auto p = rng.dirichlet(alpha);
    std::copy(p.begin(), p.end(), m.row(r).begin());
  }
  return m;
}

void BM_SoftTargets(benchmark::State& state) {
  const Matrix logits = random_matrix(64, static_cast<std::size_t>(state.range(0)), 1);
  for (auto _ : state) benchmark::DoNotOptimize(soft_targets(logits, 3.0));
  state.SetItemsProcessed(state.iterations() * 64);
}
BENCHMARK(BM_SoftTargets)->Arg(200)->Arg(2000);

void BM_Tokenize(benchmark::State& state) {
  SynthSpec spec;
  spec.doc_length = 200;
  const SynthCorpus corpus = generate(spec);
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(tokenize(corpus.documents[i].text));
    i = (i + 1) % corpus.documents.size();
  }
}
BENCHMARK(BM_Tokenize);

// One mini-batch forward and backward pass at the default architecture.
void BM_Gradients(benchmark::State& state) {
  ModelConfig config;
  config.num_topics = 20;
  config.input_dim = 64;
  config.vocab_size = static_cast<std::size_t>(state.range(0));
  Rng rng(2);
  const ModelParams params = init_params(config, rng);
  const Batch batch{random_matrix(64, config.input_dim, 3),
                    soft_targets(random_matrix(64, config.vocab_size, 4), 3.0)};
  for (auto _ : state) benchmark::DoNotOptimize(gradients(batch, params, config, rng));
  state.SetItemsProcessed(state.iterations() * 64);
}
BENCHMARK(BM_Gradients)->Arg(500)->Arg(2000)->Unit(benchmark::kMillisecond);

void BM_InferTheta(benchmark::State& state) {
  ModelConfig config;
  config.num_topics = 20;
  config.input_dim = 64;
  config.vocab_size = 500;
  Rng rng(5);
  const ModelParams params = init_params(config, rng);
  const Matrix inputs = random_matrix(256, 64, 6);
  for (auto _ : state) benchmark::DoNotOptimize(infer_theta_matrix(inputs, params, config, rng));
  state.SetItemsProcessed(state.iterations() * 256);
}
BENCHMARK(BM_InferTheta)->Unit(benchmark::kMillisecond);

void BM_Rbo(benchmark::State& state) {
  std::vector<std::string> a, b;
  for (int i = 0; i < 15; ++i) {
    a.push_back("w" + std::to_string(i));
    b.push_back("w" + std::to_string((i * 7) % 23));
  }
  for (auto _ : state) benchmark::DoNotOptimize(rbo(a, b));
}
BENCHMARK(BM_Rbo);

void BM_Npmi(benchmark::State& state) {
  SynthSpec spec;
  const SynthCorpus corpus = generate(spec);
  const DocWordIncidence incidence(corpus.bow);
  std::vector<std::vector<std::size_t>> topics(20);
  for (std::size_t k = 0; k < topics.size(); ++k)
    for (std::size_t i = 0; i < 15; ++i) topics[k].push_back((k * 15 + i * 3) % spec.vocab_size);
  for (auto _ : state) benchmark::DoNotOptimize(npmi_coherence(topics, incidence));
}
BENCHMARK(BM_Npmi);

void BM_RetrievalPrecision(benchmark::State& state) {
  const std::size_t docs = static_cast<std::size_t>(state.range(0));
  const Matrix theta = random_simplex(docs, 20, 7);
  std::vector<std::string> labels(docs);
  for (std::size_t i = 0; i < docs; ++i) labels[i] = std::to_string(i % 5);
  for (auto _ : state) benchmark::DoNotOptimize(retrieval_precision(theta, labels, 10));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_RetrievalPrecision)->Arg(250)->Arg(500)->Arg(1000)->Unit(benchmark::kMillisecond)->Complexity();

}  // namespace
}  // namespace softtopic

BENCHMARK_MAIN();
