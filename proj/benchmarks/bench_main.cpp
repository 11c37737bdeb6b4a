#include <benchmark/benchmark.h>

#include <random>

#include "hndh/codes.hpp"
#include "hndh/eval.hpp"
#include "hndh/loss.hpp"
#include "hndh/trainer.hpp"

namespace {

hndh::PackedCode random_code(std::size_t r, std::mt19937_64& rng) {
  std::vector<std::int8_t> bits(r);
  for (auto& b : bits) b = (rng() & 1U) ? 1 : -1;
  return hndh::pack(bits);
}

hndh::CodeDatabase random_db(std::size_t r, std::size_t n, std::mt19937_64& rng) {
  hndh::CodeDatabase db(r);
  for (std::size_t i = 0; i < n; ++i) db.add(random_code(r, rng), i);
  return db;
}

void BM_Rank(benchmark::State& state) {
  std::mt19937_64 rng(1);
  const auto r = static_cast<std::size_t>(state.range(0));
  const auto db = random_db(r, static_cast<std::size_t>(state.range(1)), rng);
  const auto q = random_code(r, rng);
  for (auto _ : state) benchmark::DoNotOptimize(hndh::rank(q, db));
  state.SetItemsProcessed(state.iterations() * state.range(1));
}
BENCHMARK(BM_Rank)->Args({48, 100000})->Args({128, 100000});

void BM_SearchTopK(benchmark::State& state) {
  std::mt19937_64 rng(2);
  const auto db = random_db(48, 100000, rng);
  const auto q = random_code(48, rng);
  for (auto _ : state) benchmark::DoNotOptimize(hndh::search_topk(q, db, static_cast<std::size_t>(state.range(0))));
  state.SetItemsProcessed(state.iterations() * 100000);
}
BENCHMARK(BM_SearchTopK)->Arg(10)->Arg(5000);

void BM_MeanAveragePrecision(benchmark::State& state) {
  std::mt19937_64 rng(3);
  const auto db = random_db(48, 20000, rng);
  std::vector<hndh::PackedCode> queries;
  std::vector<std::size_t> qc;
  std::vector<std::size_t> dc;
  for (int i = 0; i < 100; ++i) {
    queries.push_back(random_code(48, rng));
    qc.push_back(rng() % 10);
  }
  for (std::size_t i = 0; i < db.size(); ++i) dc.push_back(rng() % 10);
  const hndh::RelevanceOracle oracle(hndh::LabelMatrix::from_classes(10, qc), hndh::LabelMatrix::from_classes(10, dc));
  for (auto _ : state) {
    benchmark::DoNotOptimize(hndh::mean_average_precision(queries, db, oracle, std::nullopt,
                                                          static_cast<unsigned>(state.range(0))));
  }
}
BENCHMARK(BM_MeanAveragePrecision)->Arg(1)->Arg(4)->Unit(benchmark::kMillisecond);

struct StepFixture {
  hndh::Dataset data;
  hndh::HashHeadParams params;
  hndh::EmbeddingStore store;
  hndh::ClassCenters centers;
  std::vector<std::size_t> batch;

  StepFixture() {
    hndh::SyntheticSpec spec;
    spec.n_per_class = 200;
    spec.classes = 8;
    spec.dim = 32;
    data = hndh::generate_synthetic(spec);
    hndh::HashHeadConfig head;
    head.input_dim = 32;
    head.code_length = 48;
    params = hndh::init_params(head);
    store = hndh::refresh_store(params, data.features());
    centers = hndh::compute_centers(store, data.labels());
    for (std::size_t i = 0; i < 128; ++i) batch.push_back(i * 11 % data.size());
  }
};

void BM_TrainStep(benchmark::State& state) {
  const StepFixture f;
  const hndh::LossConfig cfg{1.0, static_cast<double>(f.data.size())};
  std::vector<std::span<const double>> xs;
  for (auto i : f.batch) xs.push_back(f.data.features().row(i));
  const auto threads = static_cast<unsigned>(state.range(0));
  for (auto _ : state) {
    const auto g = hndh::grad_embedding(f.centers, f.store, f.data.labels(), f.batch, cfg, nullptr, threads);
    benchmark::DoNotOptimize(hndh::grad_params(f.params, xs, g, threads));
  }
}
BENCHMARK(BM_TrainStep)->Arg(1)->Arg(4)->Unit(benchmark::kMicrosecond);

void BM_TrainEpoch(benchmark::State& state) {
  const StepFixture f;
  hndh::TrainConfig cfg;
  cfg.head.input_dim = 32;
  for (auto _ : state) {
    auto params = f.params;
    std::mt19937_64 rng(0);
    benchmark::DoNotOptimize(hndh::run_epoch(f.data, cfg, params, 0, 1e-2, rng));
  }
}
BENCHMARK(BM_TrainEpoch)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
