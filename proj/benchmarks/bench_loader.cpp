#include <numeric>
#include <vector>

#include <benchmark/benchmark.h>

#include "flowcast/loader.hpp"

using namespace flowcast;

namespace {

void BM_SampleStreamDrain(benchmark::State& state) {
    std::vector<int> shard(4096);
    std::iota(shard.begin(), shard.end(), 0);
    LoaderConfig cfg;
    cfg.workers = static_cast<std::size_t>(state.range(0));
    cfg.queue_capacity = 64;
    for (auto _ : state) {
        SampleStream<int> stream(std::span<const int>(shard), cfg);
        long sum = 0;
        while (auto d = stream.next()) sum += d->value;
        benchmark::DoNotOptimize(sum);
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(shard.size()));
}

void BM_OrderedReaderShuffled(benchmark::State& state) {
    std::vector<int> shard(4096);
    std::iota(shard.begin(), shard.end(), 0);
    LoaderConfig cfg;
    cfg.workers = static_cast<std::size_t>(state.range(0));
    cfg.shuffle = true;
    for (auto _ : state) {
        SampleStream<int> stream(std::span<const int>(shard), cfg);
        OrderedReader<int> reader(stream);
        long sum = 0;
        while (auto v = reader.next()) sum += *v;
        benchmark::DoNotOptimize(sum);
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(shard.size()));
}

}  // namespace

BENCHMARK(BM_SampleStreamDrain)->Arg(1)->Arg(4)->UseRealTime();
BENCHMARK(BM_OrderedReaderShuffled)->Arg(1)->Arg(4)->UseRealTime();
