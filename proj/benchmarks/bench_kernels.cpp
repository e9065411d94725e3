#include <benchmark/benchmark.h>

#include <vector>

#include "rewardlab/diffusion.hpp"
#include "rewardlab/penalties.hpp"
#include "rewardlab/tensorcore.hpp"
#include "rewardlab/worldmodel.hpp"

namespace rewardlab {
namespace {

std::vector<double> gaussian(std::size_t n, std::uint64_t seed) {
  Rng rng = make_stream(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = 0.3 * standard_normal(rng);
  return v;
}

// Noise-predictor shape: 1 + 2d + 16 -> h -> h -> 1 with d = 32.
void BM_Forward(benchmark::State& state) {
  const auto h = static_cast<std::size_t>(state.range(0));
  const DenseNet net({81, h, h, 1}, Activation::tanh, 1);
  const auto x = gaussian(81, 2);
  ForwardTrace trace;
  for (auto _ : state) {
    forward(net, x, trace);
    benchmark::DoNotOptimize(trace.output().data());
  }
}
BENCHMARK(BM_Forward)->Arg(32)->Arg(64)->Arg(128);

void BM_Backward(benchmark::State& state) {
  const auto h = static_cast<std::size_t>(state.range(0));
  const DenseNet net({81, h, h, 1}, Activation::tanh, 1);
  const auto x = gaussian(81, 2);
  const std::vector<double> up{1.0};
  ForwardTrace trace;
  std::vector<double> grad(net.parameter_count());
  for (auto _ : state) {
    forward(net, x, trace);
    accumulate_gradients(net, trace, up, grad);
    benchmark::DoNotOptimize(grad.data());
  }
}
BENCHMARK(BM_Backward)->Arg(32)->Arg(64)->Arg(128);

void BM_ReverseSample(benchmark::State& state) {
  DiffusionConfig cfg;
  cfg.steps = static_cast<int>(state.range(0));
  const auto model = make_diffusion_model(64, cfg);
  const auto condition = gaussian(64, 3);
  Rng rng = make_stream(4);
  for (auto _ : state) benchmark::DoNotOptimize(reverse_sample(model, condition, rng).raw);
}
BENCHMARK(BM_ReverseSample)->Arg(10)->Arg(50);

void BM_ConditionedSampler(benchmark::State& state) {
  DiffusionConfig cfg;
  cfg.steps = static_cast<int>(state.range(0));
  const auto model = make_diffusion_model(64, cfg);
  const ConditionedSampler sampler(model, gaussian(64, 3));
  Rng rng = make_stream(4);
  for (auto _ : state) benchmark::DoNotOptimize(sampler.sample(rng).raw);
}
BENCHMARK(BM_ConditionedSampler)->Arg(10)->Arg(50);

void BM_BeliefTable(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  DiffusionConfig cfg;
  const auto model = make_diffusion_model(64, cfg);
  auto emb = EmbeddingTable::zeros(n, n, 32);
  emb.user_vectors = gaussian(n * 32, 5);
  emb.item_vectors = gaussian(n * 32, 6);
  BeliefBuildOptions opts;
  opts.threads = 1;
  for (auto _ : state) {
    const auto table = build_belief_table(model, emb, opts);
    benchmark::DoNotOptimize(table.at(0, 0).mean);
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * n * n));
}
BENCHMARK(BM_BeliefTable)->Arg(10)->Arg(20)->Unit(benchmark::kMillisecond);

void BM_BehaviorDist(benchmark::State& state) {
  const auto items = static_cast<std::size_t>(state.range(0));
  Rng rng = make_stream(7);
  std::vector<InteractionEvent> events;
  for (UserId u = 0; u < 100; ++u) {
    for (std::uint32_t p = 0; p < 30; ++p) {
      events.push_back({u, static_cast<ItemId>(uniform_index(rng, 0, items - 1)), 0.0, 0.5, p});
    }
  }
  const auto store = build_kgram_store(events, 3, items, 0.01);
  std::vector<ItemId> history;
  for (int k = 0; k < 10; ++k) history.push_back(static_cast<ItemId>(uniform_index(rng, 0, items - 1)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(window_entropy_penalty(store, history, 3));
    benchmark::DoNotOptimize(interactive_penalty(store, history, 3, rng));
  }
}
BENCHMARK(BM_BehaviorDist)->Arg(100)->Arg(1000);

}  // namespace
}  // namespace rewardlab

BENCHMARK_MAIN();
