#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "flowcast/distributed.hpp"
#include "flowcast/layers.hpp"

namespace flowcast {

/// Monotonic time source in seconds.
class Clock {
public:
    virtual ~Clock() = default;
    virtual double now() = 0;
};

class SteadyClock final : public Clock {
public:
    double now() override {
        return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
    }
};

/// Time moves only when advanced; for deterministic timing tests.
class VirtualClock final : public Clock {
public:
    double now() override { return t_; }
    void advance(double seconds) { t_ += seconds; }

private:
    double t_ = 0.0;
};

struct BenchConfig {
    std::size_t runs = 5;
    std::size_t epochs = 4;  ///< the first is a warm-up and is not measured
    std::size_t replicas = 1;
    std::size_t workers = 1;
    std::chrono::microseconds per_sample_delay{0};
    std::size_t batch_size = 1;
    std::size_t queue_capacity = 16;
    std::size_t samples = 960;  ///< synthetic samples per epoch
    LoaderVariant variant = LoaderVariant::single_loader;
    ModelConfig model{3, 1, 32, 10, 10};
    std::uint64_t seed = 0;

    void validate() const;
};

struct ThroughputReport {
    std::vector<double> per_run;  ///< samples/s of each run
    double mean = 0.0;
    double std = 0.0;  ///< sample (n - 1) standard deviation
    std::size_t samples_measured = 0;  ///< per run, over the measured epochs
    BenchConfig config;

    /// "mean ± std" with one and two decimals.
    std::string cell() const;
    std::string to_json() const;
    std::string to_table() const;
};

std::string format_mean_std(double mean, double std);

/// Arithmetic mean and sample standard deviation (0 for a single value).
std::pair<double, double> mean_and_sample_std(std::span<const double> values);

/// Executes one epoch of one run and returns the number of samples consumed.
using EpochFn = std::function<std::size_t(std::size_t run, std::size_t epoch)>;

/// Produces the epoch function for a fresh run.
using RunFactory = std::function<EpochFn(const BenchConfig&, std::size_t run)>;

/// For each run, executes cfg.epochs epochs and divides the samples of
/// epochs 2..E by their elapsed time on `clock`.
ThroughputReport run_benchmark(const BenchConfig& cfg, const RunFactory& factory, Clock& clock);

/// Training throughput of the surrogate on standard-normal synthetic
/// samples, fed through cfg.workers loader threads into cfg.replicas
/// replicas, timed with a steady clock.
ThroughputReport run_benchmark(const BenchConfig& cfg);

/// Real training runs: synthetic data, fresh model per run.
RunFactory training_run_factory();

/// A trainer that spends `per_sample` of wall time on each of `samples`
/// samples per epoch, pacing against absolute deadlines so sleep overshoot
/// does not accumulate.
RunFactory fixed_cost_run_factory(std::size_t samples, std::chrono::microseconds per_sample);

struct SweepCell {
    std::size_t replicas = 1;
    LoaderVariant variant = LoaderVariant::single_loader;
    ThroughputReport report;
};

struct SweepResult {
    std::vector<std::size_t> replicas;
    std::vector<LoaderVariant> variants;
    std::vector<SweepCell> cells;  ///< replica-major

    const SweepCell& at(std::size_t replicas, LoaderVariant variant) const;
    /// One row per replica count, one "mean ± std" column per variant.
    std::string to_table() const;
    std::string to_json() const;
};

SweepResult scaling_sweep(const BenchConfig& base, std::span<const std::size_t> replicas,
                          std::span<const LoaderVariant> variants, const RunFactory& factory, Clock& clock);

SweepResult scaling_sweep(const BenchConfig& base, std::span<const std::size_t> replicas = {},
                          std::span<const LoaderVariant> variants = {});

/// Throughput model: min(host_rate * W, R * compute_rate / (1 + o(R))) with
/// o(1) = 0 and o(R) = step_overhead + overhead_growth * (1 - 2 / R) for
/// R >= 2.
struct ScalingModelParams {
    double host_rate = 1e9;     ///< samples/s one loader worker produces
    double compute_rate = 1.0;  ///< samples/s of a single replica
    double step_overhead = 0.0;
    double overhead_growth = 0.0;

    void validate() const;
    double overhead(std::size_t replicas) const;
};

double predict_scaling(const ScalingModelParams& p, std::size_t replicas, std::size_t workers);

struct ScalingFit {
    ScalingModelParams params;
    std::vector<double> predicted;
    std::vector<double> relative_errors;
    double max_relative_error = 0.0;
};

/// Levenberg-Marquardt fit of all four parameters on relative residuals.
ScalingFit fit_scaling_model(std::span<const std::size_t> replicas, std::span<const double> observed,
                             std::size_t workers = 1);

}  // namespace flowcast
