#pragma once

#include <atomic>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "flowcast/bounded_queue.hpp"
#include "flowcast/errors.hpp"

namespace flowcast {

struct LoaderConfig {
    std::size_t workers = 1;
    std::size_t queue_capacity = 16;
    /// Simulated host-side preprocessing cost per sample.
    std::chrono::microseconds per_sample_delay{0};
    std::uint64_t seed = 0;
    /// Deliver in a seeded per-epoch permutation instead of shard order.
    bool shuffle = false;

    void validate() const {
        if (workers < 1) throw ConfigError("loader workers must be >= 1");
        if (queue_capacity < 1) throw ConfigError("loader queue_capacity must be >= 1");
        if (per_sample_delay.count() < 0) throw ConfigError("loader per_sample_delay must be non-negative");
    }
};

template <typename T>
struct Delivered {
    std::size_t index = 0;  ///< position in this epoch's visiting order
    T value;
};

/// One epoch of concurrently prefetched samples.
///
/// `workers` producer threads claim shard positions in order, spend
/// per_sample_delay on each, and push the result into a bounded queue. The
/// consumer drains it with next(). Each position is delivered exactly once;
/// with one worker and no shuffle the order equals shard order. A throwing
/// preprocess step closes the stream and next() raises StreamError.
template <typename T>
class SampleStream {
public:
    using Preprocess = std::function<T(const T&)>;

    SampleStream(std::span<const T> shard, LoaderConfig cfg, Preprocess preprocess = {}, std::size_t epoch = 0)
        : state_(std::make_unique<State>(shard, cfg, std::move(preprocess))) {
        cfg.validate();
        if (shard.empty()) throw EmptyInputError("start_loader: empty shard");
        auto& s = *state_;
        s.order.resize(shard.size());
        std::iota(s.order.begin(), s.order.end(), std::size_t{0});
        if (cfg.shuffle) {
            std::mt19937_64 rng(cfg.seed ^ (0x9E3779B97F4A7C15ull * (epoch + 1)));
            std::shuffle(s.order.begin(), s.order.end(), rng);
        }
        s.live_workers = cfg.workers;
        for (std::size_t w = 0; w < cfg.workers; ++w) {
            workers_.emplace_back([st = state_.get()] { st->work(); });
        }
    }

    SampleStream(SampleStream&&) noexcept = default;
    SampleStream& operator=(SampleStream&&) noexcept = default;

    ~SampleStream() { stop(); }

    /// Next delivered sample, or nullopt once the epoch is exhausted.
    std::optional<Delivered<T>> next() {
        auto item = state_->queue.pop();
        if (item) {
            ++delivered_;
            return item;
        }
        {
            std::lock_guard lock(state_->error_mu);
            if (state_->error) throw StreamError("data loader worker failed: " + state_->error_message);
        }
        if (delivered_ != state_->order.size()) {
            throw StreamError("data loader ended after " + std::to_string(delivered_) + " of " +
                              std::to_string(state_->order.size()) + " samples");
        }
        return std::nullopt;
    }

    std::size_t size() const noexcept { return state_->order.size(); }
    std::size_t delivered() const noexcept { return delivered_; }
    std::size_t max_occupancy() const { return state_->queue.max_occupancy(); }
    std::size_t capacity() const noexcept { return state_->queue.capacity(); }

    void stop() {
        if (!state_) return;
        state_->stopping = true;
        state_->queue.close();
        workers_.clear();
    }

private:
    struct State {
        State(std::span<const T> s, LoaderConfig c, Preprocess p)
            : shard(s), cfg(c), preprocess(std::move(p)), queue(c.queue_capacity) {}

        void work() {
            try {
                for (;;) {
                    if (stopping) break;
                    const std::size_t pos = next_pos.fetch_add(1);
                    if (pos >= order.size()) break;
                    const std::size_t idx = order[pos];
                    if (cfg.per_sample_delay.count() > 0) std::this_thread::sleep_for(cfg.per_sample_delay);
                    T value = preprocess ? preprocess(shard[idx]) : shard[idx];
                    if (!queue.push(Delivered<T>{pos, std::move(value)})) break;
                }
            } catch (const std::exception& e) {
                fail(e.what());
            } catch (...) {
                fail("unknown error");
            }
            if (live_workers.fetch_sub(1) == 1) queue.close();
        }

        void fail(const std::string& msg) {
            {
                std::lock_guard lock(error_mu);
                if (!error) {
                    error = true;
                    error_message = msg;
                }
            }
            stopping = true;
            queue.close();
        }

        std::span<const T> shard;
        LoaderConfig cfg;
        Preprocess preprocess;
        BoundedQueue<Delivered<T>> queue;
        std::vector<std::size_t> order;
        std::atomic<std::size_t> next_pos{0};
        std::atomic<std::size_t> live_workers{0};
        std::atomic<bool> stopping{false};
        std::mutex error_mu;
        bool error = false;
        std::string error_message;
    };

    std::unique_ptr<State> state_;
    std::vector<std::jthread> workers_;
    std::size_t delivered_ = 0;
};

template <typename T>
SampleStream<T> start_loader(std::span<const T> shard, const LoaderConfig& cfg,
                             typename SampleStream<T>::Preprocess preprocess = {}, std::size_t epoch = 0) {
    return SampleStream<T>(shard, cfg, std::move(preprocess), epoch);
}

/// Re-sequences a stream so items come out in shard-position order no
/// matter which worker produced them first.
template <typename T>
class OrderedReader {
public:
    explicit OrderedReader(SampleStream<T>& stream) : stream_(stream) {}

    std::optional<T> next() {
        for (;;) {
            auto it = pending_.find(expected_);
            if (it != pending_.end()) {
                T v = std::move(it->second);
                pending_.erase(it);
                ++expected_;
                return v;
            }
            auto item = stream_.next();
            if (!item) {
                if (!pending_.empty()) throw StreamError("ordered reader: gap in delivered positions");
                return std::nullopt;
            }
            pending_.emplace(item->index, std::move(item->value));
        }
    }

private:
    SampleStream<T>& stream_;
    std::map<std::size_t, T> pending_;
    std::size_t expected_ = 0;
};

}  // namespace flowcast
