#include <random>

#include <benchmark/benchmark.h>

#include "flowcast/layers.hpp"
#include "flowcast/training.hpp"

using namespace flowcast;

namespace {

ModelConfig config_for(const benchmark::State& state) {
    return {3, 1, static_cast<std::size_t>(state.range(0)), 10, 10};
}

TensorF random_tensor(std::size_t rows, std::size_t cols, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<float> normal;
    TensorF t({rows, cols});
    for (float& v : t.data()) v = normal(rng);
    return t;
}

void BM_SurrogateForward(benchmark::State& state) {
    const auto cfg = config_for(state);
    const auto model = init_surrogate<float>(cfg, 1);
    const auto window = random_tensor(cfg.n_timesteps, cfg.n_features, 2);
    for (auto _ : state) benchmark::DoNotOptimize(surrogate_predict(model, window));
    state.SetItemsProcessed(state.iterations());
}

void BM_SurrogateForwardBackward(benchmark::State& state) {
    const auto cfg = config_for(state);
    const auto model = init_surrogate<float>(cfg, 1);
    const auto window = random_tensor(cfg.n_timesteps, cfg.n_features, 2);
    const auto target = random_tensor(cfg.n_outputs, cfg.n_features, 3);
    for (auto _ : state) {
        const auto fwd = surrogate_forward(model, window);
        const auto loss = mae_loss(fwd.prediction, target);
        benchmark::DoNotOptimize(surrogate_backward(model, fwd.cache, loss.grad));
    }
    state.SetItemsProcessed(state.iterations());
}

void BM_AdamStep(benchmark::State& state) {
    const auto cfg = config_for(state);
    auto model = init_surrogate<float>(cfg, 1);
    auto grads = init_surrogate<float>(cfg, 4);
    AdamState<float> adam;
    adam.hyper.learning_rate = 1e-6;
    for (auto _ : state) adam_step(adam, model, grads);
}

}  // namespace

BENCHMARK(BM_SurrogateForward)->Arg(32)->Arg(768)->Arg(12288);
BENCHMARK(BM_SurrogateForwardBackward)->Arg(32)->Arg(768)->Arg(12288);
BENCHMARK(BM_AdamStep)->Arg(768)->Arg(12288);
BENCHMARK_MAIN();
