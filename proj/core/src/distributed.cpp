#include "flowcast/distributed.hpp"

#include <algorithm>
#include <exception>
#include <thread>

#include "flowcast/seed.hpp"

namespace flowcast {

std::vector<std::size_t> shard_indices(std::size_t n, const ShardSpec& spec) {
    spec.validate();
    std::vector<std::size_t> out;
    out.reserve(n / spec.num_instances + 1);
    for (std::size_t i = spec.instance_index; i < n; i += spec.num_instances) out.push_back(i);
    return out;
}

template <typename T>
SurrogateGrads<T> allreduce_mean(std::span<const SurrogateGrads<T>> per_replica) {
    if (per_replica.empty()) throw EmptyInputError("allreduce_mean: no replicas");
    SurrogateGrads<T> out = per_replica[0];
    auto dst = out.parameters();
    for (std::size_t r = 1; r < per_replica.size(); ++r) {
        if (!(per_replica[r].config == out.config)) {
            throw DimensionError("allreduce_mean: replica " + std::to_string(r) + " has a different model shape");
        }
        const auto src = per_replica[r].parameters();
        for (std::size_t k = 0; k < dst.size(); ++k) {
            if (src[k].tensor->shape() != dst[k].tensor->shape()) {
                throw DimensionError("allreduce_mean: replica " + std::to_string(r) + " block " +
                                     std::string(src[k].name) + " has shape " +
                                     shape_string(src[k].tensor->shape()) + ", expected " +
                                     shape_string(dst[k].tensor->shape()));
            }
            auto d = dst[k].tensor->data();
            const auto s = src[k].tensor->data();
            for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
        }
    }
    const T r = static_cast<T>(per_replica.size());
    for (auto& p : dst) {
        for (T& v : p.tensor->data()) v /= r;
    }
    return out;
}

template <typename T>
ReplicaGroup<T> ReplicaGroup<T>::make(std::size_t replicas, bool concurrent) {
    if (replicas < 1) throw ConfigError("replica group: replicas must be >= 1");
    ReplicaGroup<T> g;
    g.replicas = replicas;
    g.concurrent = concurrent;
    g.grad_buffers.resize(replicas);
    g.collective = std::make_shared<InProcessCollective<T>>();
    return g;
}

template <typename T>
StepResult data_parallel_step(ReplicaGroup<T>& group, SurrogateModel<T>& model, AdamState<T>& adam,
                              std::span<const std::vector<const SampleWindow<T>*>> microbatches,
                              std::optional<double> clip_norm) {
    const std::size_t r_count = group.replicas;
    if (microbatches.size() != r_count) {
        throw DimensionError("data_parallel_step: " + std::to_string(microbatches.size()) + " microbatches for " +
                             std::to_string(r_count) + " replicas");
    }
    const std::size_t b = microbatches[0].size();
    for (std::size_t r = 0; r < r_count; ++r) {
        if (microbatches[r].size() != b || b == 0) {
            throw DimensionError("data_parallel_step: microbatch " + std::to_string(r) + " has " +
                                 std::to_string(microbatches[r].size()) + " samples, expected " +
                                 std::to_string(b) + " (non-zero, equal sizes)");
        }
    }
    if (group.grad_buffers.size() != r_count) group.grad_buffers.resize(r_count);
    if (!group.collective) group.collective = std::make_shared<InProcessCollective<T>>();

    std::vector<double> losses(r_count, 0.0);
    const SurrogateModel<T>& shared = model;
    auto compute = [&](std::size_t r) {
        auto bg = batch_gradient<T>(shared, std::span<const SampleWindow<T>* const>(microbatches[r]));
        group.grad_buffers[r] = std::move(bg.grads);
        losses[r] = bg.loss;
    };
    if (group.concurrent && r_count > 1) {
        std::vector<std::exception_ptr> errors(r_count);
        {
            std::vector<std::jthread> threads;
            threads.reserve(r_count);
            for (std::size_t r = 0; r < r_count; ++r) {
                threads.emplace_back([&, r] {
                    try {
                        compute(r);
                    } catch (...) {
                        errors[r] = std::current_exception();
                    }
                });
            }
        }
        for (auto& e : errors) {
            if (e) std::rethrow_exception(e);
        }
    } else {
        for (std::size_t r = 0; r < r_count; ++r) compute(r);
    }

    auto averaged = group.collective->allreduce_mean(std::span<const SurrogateGrads<T>>(group.grad_buffers));
    if (clip_norm) clip_by_global_norm(averaged, *clip_norm);
    adam_step(adam, model, averaged);

    StepResult res;
    res.samples = r_count * b;
    for (double l : losses) res.loss += l;
    res.loss /= static_cast<double>(r_count);
    return res;
}

std::string to_string(LoaderVariant v) {
    return v == LoaderVariant::single_loader ? "single_loader" : "sharded_loaders";
}

LoaderVariant loader_variant_from_string(const std::string& s) {
    if (s == "single_loader" || s == "single") return LoaderVariant::single_loader;
    if (s == "sharded_loaders" || s == "sharded") return LoaderVariant::sharded_loaders;
    throw ConfigError("unknown loader variant '" + s + "' (expected single_loader or sharded_loaders)");
}

template <typename T>
EpochStats run_data_parallel_epoch(ReplicaGroup<T>& group, const DataParallelConfig& cfg, SurrogateModel<T>& model,
                                   AdamState<T>& adam, std::span<const SampleWindow<T>> samples,
                                   const TrainConfig& tcfg, std::size_t epoch) {
    using Ptr = const SampleWindow<T>*;
    if (samples.empty()) throw EmptyInputError("data-parallel epoch: empty sample set");
    tcfg.validate();
    cfg.loader.validate();
    const std::size_t r_count = cfg.replicas;
    if (r_count < 1) throw ConfigError("data-parallel epoch: replicas must be >= 1");
    if (group.replicas != r_count) throw ConfigError("data-parallel epoch: replica group size mismatch");
    const std::size_t b = tcfg.batch_size;
    const std::size_t global = r_count * b;
    const std::size_t n = samples.size();
    if (n < r_count) {
        throw ConfigError("data-parallel epoch: " + std::to_string(n) + " samples cannot feed " +
                          std::to_string(r_count) + " replicas");
    }

    std::vector<Ptr> sequence;
    sequence.reserve(n);
    for (std::size_t idx : epoch_order(n, tcfg.shuffle_seed, epoch)) sequence.push_back(&samples[idx]);

    // R == 1 keeps a short final batch, like train_epoch.
    const std::size_t full_steps = n / global;
    const std::size_t tail = r_count == 1 ? n % global : 0;

    std::vector<std::vector<Ptr>> microbatches(r_count);
    EpochStats stats;
    double loss_sum = 0.0;
    auto run_step = [&] {
        auto res = data_parallel_step<T>(group, model, adam, std::span<const std::vector<Ptr>>(microbatches),
                                         tcfg.clip_norm);
        loss_sum += res.loss * static_cast<double>(res.samples);
        stats.samples += res.samples;
        stats.steps += 1;
    };
    auto take = [](OrderedReader<Ptr>& reader, std::vector<Ptr>& into, std::size_t count) {
        into.clear();
        for (std::size_t k = 0; k < count; ++k) {
            auto p = reader.next();
            if (!p) throw StreamError("data loader ran dry before the epoch's last step");
            into.push_back(*p);
        }
    };

    if (cfg.variant == LoaderVariant::single_loader || r_count == 1) {
        SampleStream<Ptr> stream(std::span<const Ptr>(sequence), cfg.loader, {}, epoch);
        OrderedReader<Ptr> reader(stream);
        for (std::size_t s = 0; s < full_steps; ++s) {
            for (std::size_t r = 0; r < r_count; ++r) take(reader, microbatches[r], b);
            run_step();
        }
        if (tail > 0) {
            take(reader, microbatches[0], tail);
            run_step();
        }
    } else {
        std::vector<std::vector<Ptr>> shards;
        std::vector<std::unique_ptr<SampleStream<Ptr>>> streams;
        std::vector<std::unique_ptr<OrderedReader<Ptr>>> readers;
        for (std::size_t r = 0; r < r_count; ++r) {
            shards.push_back(shard_dataset<Ptr>(std::span<const Ptr>(sequence), ShardSpec{r_count, r}));
        }
        for (std::size_t r = 0; r < r_count; ++r) {
            LoaderConfig lc = cfg.loader;
            lc.seed = derive_seed(cfg.loader.seed, r);
            streams.push_back(std::make_unique<SampleStream<Ptr>>(std::span<const Ptr>(shards[r]), lc,
                                                                  typename SampleStream<Ptr>::Preprocess{}, epoch));
            readers.push_back(std::make_unique<OrderedReader<Ptr>>(*streams.back()));
        }
        for (std::size_t s = 0; s < full_steps; ++s) {
            for (std::size_t r = 0; r < r_count; ++r) take(*readers[r], microbatches[r], b);
            run_step();
        }
    }
    stats.loss = stats.samples > 0 ? loss_sum / static_cast<double>(stats.samples) : 0.0;
    return stats;
}

template <typename T>
EpochRunner<T> make_data_parallel_runner(const DataParallelConfig& cfg) {
    cfg.loader.validate();
    auto group = std::make_shared<ReplicaGroup<T>>(ReplicaGroup<T>::make(cfg.replicas, cfg.concurrent_replicas));
    return [cfg, group](SurrogateModel<T>& model, AdamState<T>& adam, std::span<const SampleWindow<T>> samples,
                        const TrainConfig& tcfg, std::size_t epoch) {
        return run_data_parallel_epoch<T>(*group, cfg, model, adam, samples, tcfg, epoch).loss;
    };
}

#define FLOWCAST_INSTANTIATE(T)                                                                                   \
    template SurrogateGrads<T> allreduce_mean<T>(std::span<const SurrogateGrads<T>>);                           \
    template struct ReplicaGroup<T>;                                                                              \
    template StepResult data_parallel_step<T>(ReplicaGroup<T>&, SurrogateModel<T>&, AdamState<T>&,               \
                                              std::span<const std::vector<const SampleWindow<T>*>>,              \
                                              std::optional<double>);                                             \
    template EpochStats run_data_parallel_epoch<T>(ReplicaGroup<T>&, const DataParallelConfig&,                  \
                                                   SurrogateModel<T>&, AdamState<T>&,                             \
                                                   std::span<const SampleWindow<T>>, const TrainConfig&,          \
                                                   std::size_t);                                                  \
    template EpochRunner<T> make_data_parallel_runner<T>(const DataParallelConfig&);

FLOWCAST_INSTANTIATE(float)
FLOWCAST_INSTANTIATE(double)

}  // namespace flowcast
