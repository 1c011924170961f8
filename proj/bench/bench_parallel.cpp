// Serial reference vs OpenMP kernel for corpus generation, greedy
// evaluation and baseline enumeration.

#include <benchmark/benchmark.h>

#include "detsel/agent.hpp"
#include "detsel/baselines.hpp"
#include "detsel/corpus.hpp"

using namespace detsel;

namespace {

CalibrationSpec sized_spec(std::size_t n) {
  auto spec = CalibrationSpec::defaults();
  spec.n_files = n;
  return spec;
}

const Corpus& full_corpus() {
  static const Corpus corpus = generate_corpus(CalibrationSpec::defaults(), 7);
  return corpus;
}

void BM_GenerateSerial(benchmark::State& state) {
  const auto spec = sized_spec(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(generate_corpus_serial(spec, 7));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_GenerateParallel(benchmark::State& state) {
  const auto spec = sized_spec(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(generate_corpus(spec, 7));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

template <bool Parallel>
void BM_Evaluate(benchmark::State& state) {
  const auto& corpus = full_corpus();
  Rng rng(1);
  const Mlp actor = Mlp::random(4, 20, 6, OutputHead::kSoftmax, rng);
  const auto policy = actor_policy(actor);
  const auto means = CalibrationSpec::defaults().mean_times();
  const auto scheme = RewardScheme::builtin(4);
  for (auto _ : state) {
    if constexpr (Parallel) {
      benchmark::DoNotOptimize(evaluate(policy, corpus.records, corpus.detector_names, means, scheme));
    } else {
      benchmark::DoNotOptimize(evaluate_serial(policy, corpus.records, corpus.detector_names, means, scheme));
    }
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(corpus.size()));
}

template <bool Parallel>
void BM_Baselines(benchmark::State& state) {
  const auto& corpus = full_corpus();
  const auto folds = stratified_folds(corpus.records, 10, 1);
  for (auto _ : state) {
    if constexpr (Parallel) {
      benchmark::DoNotOptimize(enumerate_baselines(corpus, folds, 1));
    } else {
      benchmark::DoNotOptimize(enumerate_baselines_serial(corpus, folds, 1));
    }
  }
}

}  // namespace

BENCHMARK(BM_GenerateSerial)->Arg(24737)->Arg(100000)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_GenerateParallel)->Arg(24737)->Arg(100000)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_Evaluate<false>)->Name("BM_EvaluateSerial")->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_Evaluate<true>)->Name("BM_EvaluateParallel")->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_Baselines<false>)->Name("BM_BaselinesSerial")->Unit(benchmark::kMillisecond)->UseRealTime()->Iterations(1);
BENCHMARK(BM_Baselines<true>)->Name("BM_BaselinesParallel")->Unit(benchmark::kMillisecond)->UseRealTime()->Iterations(1);

BENCHMARK_MAIN();
