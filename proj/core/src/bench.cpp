#include "flowcast/bench.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <numeric>
#include <random>
#include <thread>

#include <Eigen/Core>
#include <unsupported/Eigen/NonLinearOptimization>
#include <unsupported/Eigen/NumericalDiff>
#include <json.hpp>

#include "flowcast/errors.hpp"
#include "flowcast/seed.hpp"

namespace flowcast {

void BenchConfig::validate() const {
    if (runs < 1) throw ConfigError("benchmark: runs must be >= 1");
    if (epochs < 2) throw ConfigError("benchmark: epochs must be >= 2 (the first is a warm-up)");
    if (replicas < 1) throw ConfigError("benchmark: replicas must be >= 1");
    if (workers < 1) throw ConfigError("benchmark: workers must be >= 1");
    if (batch_size < 1) throw ConfigError("benchmark: batch_size must be >= 1");
    if (queue_capacity < 1) throw ConfigError("benchmark: queue_capacity must be >= 1");
    if (per_sample_delay.count() < 0) throw ConfigError("benchmark: per_sample_delay must be non-negative");
    if (samples < replicas * batch_size) {
        throw ConfigError("benchmark: " + std::to_string(samples) + " samples cannot fill one step of " +
                          std::to_string(replicas) + " x " + std::to_string(batch_size));
    }
    model.validate();
}

std::string format_mean_std(double mean, double std) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.1f \xC2\xB1 %.2f", mean, std);
    return buf;
}

std::pair<double, double> mean_and_sample_std(std::span<const double> values) {
    if (values.empty()) throw EmptyInputError("mean_and_sample_std: no values");
    const double n = static_cast<double>(values.size());
    const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
    if (values.size() == 1) return {mean, 0.0};
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    return {mean, std::sqrt(ss / (n - 1.0))};
}

std::string ThroughputReport::cell() const { return format_mean_std(mean, std); }

namespace {

nlohmann::json config_json(const BenchConfig& c) {
    return {{"runs", c.runs},
            {"epochs", c.epochs},
            {"replicas", c.replicas},
            {"workers", c.workers},
            {"per_sample_delay_us", c.per_sample_delay.count()},
            {"batch_size", c.batch_size},
            {"queue_capacity", c.queue_capacity},
            {"samples", c.samples},
            {"variant", to_string(c.variant)},
            {"seed", c.seed}};
}

nlohmann::json report_json(const ThroughputReport& r) {
    return {{"per_run", r.per_run},
            {"mean", r.mean},
            {"std", r.std},
            {"samples_measured", r.samples_measured},
            {"config", config_json(r.config)}};
}

}  // namespace

std::string ThroughputReport::to_json() const { return report_json(*this).dump(2); }

std::string ThroughputReport::to_table() const {
    std::string out;
    char line[160];
    std::snprintf(line, sizeof line, "%8s  %7s  %9s  %5s  %-16s  %s\n", "Replicas", "Workers", "Delay(us)", "Batch",
                  "Variant", "Throughput (samples/s)");
    out += line;
    std::snprintf(line, sizeof line, "%8zu  %7zu  %9lld  %5zu  %-16s  %s\n", config.replicas, config.workers,
                  static_cast<long long>(config.per_sample_delay.count()), config.batch_size,
                  to_string(config.variant).c_str(), cell().c_str());
    out += line;
    return out;
}

ThroughputReport run_benchmark(const BenchConfig& cfg, const RunFactory& factory, Clock& clock) {
    cfg.validate();
    if (!factory) throw ConfigError("benchmark: no run factory");
    ThroughputReport report;
    report.config = cfg;
    for (std::size_t run = 0; run < cfg.runs; ++run) {
        const EpochFn epoch_fn = factory(cfg, run);
        epoch_fn(run, 0);
        const double t0 = clock.now();
        std::size_t samples = 0;
        for (std::size_t e = 1; e < cfg.epochs; ++e) samples += epoch_fn(run, e);
        const double elapsed = clock.now() - t0;
        if (!(elapsed > 0.0)) throw NumericError("benchmark: measured epochs took no time on the clock");
        report.per_run.push_back(static_cast<double>(samples) / elapsed);
        report.samples_measured = samples;
    }
    std::tie(report.mean, report.std) = mean_and_sample_std(report.per_run);
    return report;
}

RunFactory training_run_factory() {
    return [](const BenchConfig& cfg, std::size_t run) -> EpochFn {
        struct RunState {
            std::vector<SampleWindow<float>> samples;
            SurrogateModel<float> model;
            AdamState<float> adam;
            DataParallelConfig dp;
            ReplicaGroup<float> group;
            TrainConfig train;
        };
        auto st = std::make_shared<RunState>();
        const auto& m = cfg.model;
        std::mt19937_64 rng(derive_seed(cfg.seed, 2 * run));
        std::normal_distribution<float> normal(0.0f, 1.0f);
        auto random_tensor = [&](std::size_t rows) {
            std::vector<float> v(rows * m.n_features);
            for (float& x : v) x = normal(rng);
            return Tensor<float>({rows, m.n_features}, std::move(v));
        };
        st->samples.reserve(cfg.samples);
        for (std::size_t i = 0; i < cfg.samples; ++i) {
            auto input = random_tensor(m.n_timesteps);
            auto target = random_tensor(m.n_outputs);
            st->samples.push_back({std::move(input), std::move(target), 0, i});
        }
        st->model = init_surrogate<float>(m, derive_seed(cfg.seed, 2 * run + 1));
        st->train.batch_size = cfg.batch_size;
        st->train.shuffle_seed = derive_seed(cfg.seed, run);
        st->adam.hyper.learning_rate = st->train.learning_rate;
        st->dp.replicas = cfg.replicas;
        st->dp.variant = cfg.variant;
        st->dp.loader.workers = cfg.workers;
        st->dp.loader.queue_capacity = cfg.queue_capacity;
        st->dp.loader.per_sample_delay = cfg.per_sample_delay;
        st->dp.loader.seed = cfg.seed;
        st->group = ReplicaGroup<float>::make(cfg.replicas);
        return [st](std::size_t, std::size_t epoch) {
            return run_data_parallel_epoch<float>(st->group, st->dp, st->model, st->adam,
                                                  std::span<const SampleWindow<float>>(st->samples), st->train, epoch)
                .samples;
        };
    };
}

RunFactory fixed_cost_run_factory(std::size_t samples, std::chrono::microseconds per_sample) {
    return [samples, per_sample](const BenchConfig&, std::size_t) -> EpochFn {
        return [samples, per_sample](std::size_t, std::size_t) {
            const auto start = std::chrono::steady_clock::now();
            for (std::size_t i = 0; i < samples; ++i) {
                std::this_thread::sleep_until(start + per_sample * static_cast<long long>(i + 1));
            }
            return samples;
        };
    };
}

ThroughputReport run_benchmark(const BenchConfig& cfg) {
    SteadyClock clock;
    return run_benchmark(cfg, training_run_factory(), clock);
}

const SweepCell& SweepResult::at(std::size_t r, LoaderVariant v) const {
    for (const auto& c : cells) {
        if (c.replicas == r && c.variant == v) return c;
    }
    throw ConfigError("sweep result: no cell for " + std::to_string(r) + " replicas, " + to_string(v));
}

std::string SweepResult::to_table() const {
    std::vector<std::string> header{"Replicas"};
    for (auto v : variants) header.push_back(to_string(v));
    std::vector<std::vector<std::string>> rows;
    for (std::size_t r : replicas) {
        std::vector<std::string> row{std::to_string(r)};
        for (auto v : variants) row.push_back(at(r, v).report.cell());
        rows.push_back(std::move(row));
    }
    // Display width counts the two-byte plus-minus sign as one column.
    auto width = [](const std::string& s) {
        std::size_t w = 0;
        for (unsigned char ch : s) w += (ch & 0xC0) != 0x80;
        return w;
    };
    std::vector<std::size_t> widths(header.size());
    for (std::size_t c = 0; c < header.size(); ++c) {
        widths[c] = width(header[c]);
        for (const auto& row : rows) widths[c] = std::max(widths[c], width(row[c]));
    }
    auto emit = [&](const std::vector<std::string>& cols) {
        std::string line;
        for (std::size_t c = 0; c < cols.size(); ++c) {
            if (c > 0) line += "  ";
            const std::string pad(widths[c] - width(cols[c]), ' ');
            line += c == 0 ? pad + cols[c] : cols[c] + pad;
        }
        while (!line.empty() && line.back() == ' ') line.pop_back();
        return line + "\n";
    };
    std::string out = emit(header);
    for (const auto& row : rows) out += emit(row);
    return out;
}

std::string SweepResult::to_json() const {
    auto arr = nlohmann::json::array();
    for (const auto& c : cells) {
        arr.push_back({{"replicas", c.replicas}, {"variant", to_string(c.variant)}, {"report", report_json(c.report)}});
    }
    return nlohmann::json{{"cells", arr}}.dump(2);
}

SweepResult scaling_sweep(const BenchConfig& base, std::span<const std::size_t> replicas,
                          std::span<const LoaderVariant> variants, const RunFactory& factory, Clock& clock) {
    static constexpr std::size_t kDefaultReplicas[] = {1, 2, 4, 8, 16};
    static constexpr LoaderVariant kDefaultVariants[] = {LoaderVariant::single_loader, LoaderVariant::sharded_loaders};
    SweepResult out;
    if (replicas.empty()) replicas = kDefaultReplicas;
    if (variants.empty()) variants = kDefaultVariants;
    out.replicas.assign(replicas.begin(), replicas.end());
    out.variants.assign(variants.begin(), variants.end());
    for (std::size_t r : replicas) {
        for (auto v : variants) {
            BenchConfig cfg = base;
            cfg.replicas = r;
            cfg.variant = v;
            out.cells.push_back({r, v, run_benchmark(cfg, factory, clock)});
        }
    }
    return out;
}

SweepResult scaling_sweep(const BenchConfig& base, std::span<const std::size_t> replicas,
                          std::span<const LoaderVariant> variants) {
    SteadyClock clock;
    return scaling_sweep(base, replicas, variants, training_run_factory(), clock);
}

void ScalingModelParams::validate() const {
    if (!(host_rate > 0.0) || !(compute_rate > 0.0)) throw ConfigError("scaling model: rates must be positive");
    if (!(step_overhead >= 0.0) || !(overhead_growth >= 0.0)) {
        throw ConfigError("scaling model: overhead terms must be non-negative");
    }
}

double ScalingModelParams::overhead(std::size_t replicas) const {
    if (replicas <= 1) return 0.0;
    return step_overhead + overhead_growth * (1.0 - 2.0 / static_cast<double>(replicas));
}

double predict_scaling(const ScalingModelParams& p, std::size_t replicas, std::size_t workers) {
    p.validate();
    if (replicas < 1 || workers < 1) throw ConfigError("predict_scaling: replicas and workers must be >= 1");
    const double host = p.host_rate * static_cast<double>(workers);
    const double compute = static_cast<double>(replicas) * p.compute_rate / (1.0 + p.overhead(replicas));
    return std::min(host, compute);
}

namespace {

// Parameters are optimized in log space so they stay positive.
ScalingModelParams from_log(const Eigen::VectorXd& x) {
    return {std::exp(x[0]), std::exp(x[1]), std::exp(x[2]), std::exp(x[3])};
}

struct ScalingResiduals {
    using Scalar = double;
    using InputType = Eigen::VectorXd;
    using ValueType = Eigen::VectorXd;
    using JacobianType = Eigen::MatrixXd;
    enum { InputsAtCompileTime = Eigen::Dynamic, ValuesAtCompileTime = Eigen::Dynamic };

    std::vector<std::size_t> replicas;
    std::vector<double> observed;
    std::size_t workers = 1;

    int inputs() const { return 4; }
    int values() const { return static_cast<int>(observed.size()); }

    int operator()(const Eigen::VectorXd& x, Eigen::VectorXd& f) const {
        const auto p = from_log(x);
        for (std::size_t i = 0; i < observed.size(); ++i) {
            f[static_cast<Eigen::Index>(i)] = (predict_scaling(p, replicas[i], workers) - observed[i]) / observed[i];
        }
        return 0;
    }
};

}  // namespace

ScalingFit fit_scaling_model(std::span<const std::size_t> replicas, std::span<const double> observed,
                             std::size_t workers) {
    if (replicas.size() != observed.size()) throw DimensionError("fit_scaling_model: length mismatch");
    if (observed.size() < 4) throw EmptyInputError("fit_scaling_model: need at least 4 observations");
    for (double v : observed) {
        if (!(v > 0.0)) throw ConfigError("fit_scaling_model: observations must be positive");
    }
    ScalingResiduals fn;
    fn.replicas.assign(replicas.begin(), replicas.end());
    fn.observed.assign(observed.begin(), observed.end());
    fn.workers = workers;

    const auto r1 = std::min_element(replicas.begin(), replicas.end()) - replicas.begin();
    const double peak = *std::max_element(observed.begin(), observed.end());
    Eigen::VectorXd x(4);
    x << std::log(10.0 * peak), std::log(observed[static_cast<std::size_t>(r1)]), std::log(1.0), std::log(1.0);

    Eigen::NumericalDiff<ScalingResiduals> numeric(fn);
    Eigen::LevenbergMarquardt<Eigen::NumericalDiff<ScalingResiduals>> lm(numeric);
    lm.parameters.maxfev = 2000;
    lm.parameters.xtol = 1e-12;
    lm.parameters.ftol = 1e-12;
    lm.minimize(x);

    ScalingFit fit;
    fit.params = from_log(x);
    for (std::size_t i = 0; i < observed.size(); ++i) {
        const double pred = predict_scaling(fit.params, replicas[i], workers);
        fit.predicted.push_back(pred);
        fit.relative_errors.push_back(std::abs(pred - observed[i]) / observed[i]);
    }
    fit.max_relative_error = *std::max_element(fit.relative_errors.begin(), fit.relative_errors.end());
    return fit;
}

}  // namespace flowcast
