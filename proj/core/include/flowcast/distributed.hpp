#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "flowcast/errors.hpp"
#include "flowcast/loader.hpp"
#include "flowcast/training.hpp"

namespace flowcast {

struct ShardSpec {
    std::size_t num_instances = 1;
    std::size_t instance_index = 0;

    void validate() const {
        if (num_instances < 1) throw ConfigError("shard spec: num_instances must be >= 1");
        if (instance_index >= num_instances) {
            throw ConfigError("shard spec: instance_index " + std::to_string(instance_index) +
                              " out of range for " + std::to_string(num_instances) + " instances");
        }
    }
};

/// Positions i in [0, n) with i mod num_instances == instance_index.
std::vector<std::size_t> shard_indices(std::size_t n, const ShardSpec& spec);

/// Round-robin subset; order within the shard is preserved.
template <typename T>
std::vector<T> shard_dataset(std::span<const T> samples, const ShardSpec& spec) {
    std::vector<T> out;
    for (std::size_t i : shard_indices(samples.size(), spec)) out.push_back(samples[i]);
    return out;
}

/// Coordinate-wise mean, summed in replica-index order then divided by R.
template <typename T>
SurrogateGrads<T> allreduce_mean(std::span<const SurrogateGrads<T>> per_replica);

/// Gradient exchange seam; a networked implementation would plug in here.
template <typename T>
class Collective {
public:
    virtual ~Collective() = default;
    virtual SurrogateGrads<T> allreduce_mean(std::span<const SurrogateGrads<T>> per_replica) = 0;
};

template <typename T>
class InProcessCollective final : public Collective<T> {
public:
    SurrogateGrads<T> allreduce_mean(std::span<const SurrogateGrads<T>> per_replica) override {
        return flowcast::allreduce_mean<T>(per_replica);
    }
};

/// R replicas sharing one parameter set. Each replica owns a gradient
/// buffer; gradients may be computed on separate threads.
template <typename T>
struct ReplicaGroup {
    std::size_t replicas = 1;
    bool concurrent = false;
    std::vector<SurrogateGrads<T>> grad_buffers;
    std::shared_ptr<Collective<T>> collective;

    static ReplicaGroup make(std::size_t replicas, bool concurrent = false);
};

struct StepResult {
    double loss = 0.0;        ///< mean loss over all consumed samples
    std::size_t samples = 0;  ///< R * microbatch size
};

/// Per-replica gradients against the shared pre-step parameters, averaged
/// through the group's collective, then one Adam step.
template <typename T>
StepResult data_parallel_step(ReplicaGroup<T>& group, SurrogateModel<T>& model, AdamState<T>& adam,
                              std::span<const std::vector<const SampleWindow<T>*>> microbatches,
                              std::optional<double> clip_norm = std::nullopt);

enum class LoaderVariant { single_loader, sharded_loaders };

std::string to_string(LoaderVariant v);
LoaderVariant loader_variant_from_string(const std::string& s);

struct DataParallelConfig {
    std::size_t replicas = 1;
    LoaderConfig loader;
    LoaderVariant variant = LoaderVariant::single_loader;
    bool concurrent_replicas = false;
};

struct EpochStats {
    double loss = 0.0;        ///< mean per-sample training loss
    std::size_t samples = 0;  ///< samples consumed by optimizer steps
    std::size_t steps = 0;
};

/// One epoch through loaders and replicas; see make_data_parallel_runner.
template <typename T>
EpochStats run_data_parallel_epoch(ReplicaGroup<T>& group, const DataParallelConfig& cfg, SurrogateModel<T>& model,
                                   AdamState<T>& adam, std::span<const SampleWindow<T>> samples,
                                   const TrainConfig& tcfg, std::size_t epoch);

/// Epoch runner that streams the epoch's samples through prefetching
/// loaders and trains with R replicas. single_loader feeds every replica
/// from one stream; sharded_loaders gives replica r its own round-robin
/// shard and loader. Samples are consumed in a fixed sequence regardless of
/// worker scheduling, so results are deterministic. With R > 1 the samples
/// that do not fill a last global batch of R * batch_size are dropped.
template <typename T>
EpochRunner<T> make_data_parallel_runner(const DataParallelConfig& cfg);

}  // namespace flowcast
