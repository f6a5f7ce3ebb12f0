#include <benchmark/benchmark.h>

#include <sstream>
#include <string>
#include <vector>

#include "kgprobe/experiment.hpp"
#include "kgprobe/extraction.hpp"
#include "kgprobe/probe.hpp"
#include "kgprobe/random.hpp"
#include "kgprobe/sampling.hpp"
#include "kgprobe/store.hpp"

using namespace kgprobe;

namespace {

std::vector<std::string> bench_texts(std::size_t n) {
  std::vector<std::string> t;
  for (std::size_t i = 0; i < n; ++i) t.push_back("Is it true that e" + std::to_string(i) + " r0 e1?");
  return t;
}

HiddenStateStore planted_store(std::size_t n, std::size_t dim) {
  const auto texts = bench_texts(n);
  std::vector<std::int32_t> labels(n);
  std::unordered_map<std::string, std::int32_t> table;
  for (std::size_t i = 0; i < n; ++i) {
    labels[i] = static_cast<std::int32_t>(i % 2);
    table[texts[i]] = labels[i];
  }
  MockLmConfig cfg;
  cfg.dim = dim;
  cfg.planted_layers = {3};
  MockLM lm(cfg, table_oracle(table));
  const std::vector<int> layers{3};
  return extract_dataset(lm, texts, labels, layers, {});
}

void BM_MockExtract(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto texts = bench_texts(n);
  MockLmConfig cfg;
  MockLM lm(cfg, [](std::string_view) { return 0; });
  const std::vector<int> layers{1, 2, 3, 4, 5, 6, 7};
  for (auto _ : state) benchmark::DoNotOptimize(lm.extract(texts, layers));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_MockExtract)->Arg(64)->Arg(512);

void BM_TrainProbe(benchmark::State& state) {
  const auto store = planted_store(2000, 64);
  const auto data = layer_data(store, 3);
  TrainConfig cfg;
  cfg.kind = state.range(0) == 0 ? ProbeKind::logreg : ProbeKind::mlp;
  cfg.epochs = 5;
  for (auto _ : state) benchmark::DoNotOptimize(train_probe(data, 3, cfg));
}
BENCHMARK(BM_TrainProbe)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_CorruptTriple(benchmark::State& state) {
  const auto g = make_synthetic_graph({2000, 20, 50000, 1, 0.1, 0.1});
  const auto train = g.split(Split::train);
  Rng rng(3);
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(corrupt_triple(g, train[i++ % train.size()].triple, rng, {}));
  }
}
BENCHMARK(BM_CorruptTriple);

void BM_StoreRoundTrip(benchmark::State& state) {
  const auto store = planted_store(1000, 256);
  for (auto _ : state) {
    std::stringstream buf;
    write_store(store, buf);
    benchmark::DoNotOptimize(read_store(buf));
  }
  state.SetBytesProcessed(state.iterations() * static_cast<std::int64_t>(store.size() * store.header().record_stride()));
}
BENCHMARK(BM_StoreRoundTrip)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
