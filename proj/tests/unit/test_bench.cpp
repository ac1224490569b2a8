#include <algorithm>
#include <cmath>
#include <random>

#include <gtest/gtest.h>
#include <json.hpp>

#include "flowcast/bench.hpp"
#include "flowcast/errors.hpp"

using namespace flowcast;

namespace {

/// Epoch 0 costs `warmup` seconds; later epochs process `samples` at `rate`.
RunFactory virtual_factory(VirtualClock& clock, std::size_t samples, double warmup, std::vector<double> rates) {
    return [&clock, samples, warmup, rates](const BenchConfig&, std::size_t run) -> EpochFn {
        return [&clock, samples, warmup, rate = rates[run % rates.size()]](std::size_t, std::size_t epoch) {
            clock.advance(epoch == 0 ? warmup : static_cast<double>(samples) / rate);
            return samples;
        };
    };
}

BenchConfig small_config() {
    BenchConfig c;
    c.runs = 3;
    c.epochs = 3;
    c.samples = 40;
    c.model = {3, 1, 8, 4, 4};
    return c;
}

}  // namespace

TEST(Bench, WarmupEpochIsExcluded) {
    VirtualClock clock;
    auto cfg = small_config();
    const auto r = run_benchmark(cfg, virtual_factory(clock, 500, 1000.0, {250.0}), clock);
    ASSERT_EQ(r.per_run.size(), 3u);
    for (double v : r.per_run) EXPECT_DOUBLE_EQ(v, 250.0);
    EXPECT_EQ(r.samples_measured, 1000u);
    EXPECT_DOUBLE_EQ(r.mean, 250.0);
    EXPECT_EQ(r.std, 0.0);
}

TEST(Bench, MeanAndSampleStdAcrossRuns) {
    VirtualClock clock;
    auto cfg = small_config();
    const auto r = run_benchmark(cfg, virtual_factory(clock, 100, 5.0, {100.0, 200.0, 400.0}), clock);
    EXPECT_NEAR(r.per_run[2], 400.0, 1e-9);
    EXPECT_NEAR(r.mean, 700.0 / 3.0, 1e-9);
    const double m = 700.0 / 3.0;
    const double s = std::sqrt(((100 - m) * (100 - m) + (200 - m) * (200 - m) + (400 - m) * (400 - m)) / 2.0);
    EXPECT_NEAR(r.std, s, 1e-9);
    EXPECT_EQ(r.cell(), format_mean_std(r.mean, r.std));
}

TEST(Bench, ZeroElapsedIsNumericError) {
    VirtualClock clock;
    EXPECT_THROW(run_benchmark(small_config(), virtual_factory(clock, 10, 1.0, {1e300}), clock), NumericError);
}

TEST(Bench, FormatAndStatistics) {
    EXPECT_EQ(format_mean_std(2805.8, 1.17), "2805.8 \xC2\xB1 1.17");
    EXPECT_EQ(format_mean_std(574.44, 0.005), "574.4 \xC2\xB1 0.01");
    const std::vector<double> one{7.0};
    EXPECT_EQ(mean_and_sample_std(one), (std::pair{7.0, 0.0}));
    const std::vector<double> v{2, 4, 4, 4, 5, 5, 7, 9};
    const auto [m, s] = mean_and_sample_std(v);
    EXPECT_DOUBLE_EQ(m, 5.0);
    EXPECT_NEAR(s, std::sqrt(32.0 / 7.0), 1e-12);
    EXPECT_THROW(mean_and_sample_std(std::vector<double>{}), EmptyInputError);
}

TEST(Bench, ConfigValidation) {
    auto c = small_config();
    EXPECT_NO_THROW(c.validate());
    c.epochs = 1;
    EXPECT_THROW(c.validate(), ConfigError);
    c = small_config();
    c.replicas = 8;
    c.batch_size = 8;
    EXPECT_THROW(c.validate(), ConfigError);
    c = small_config();
    c.workers = 0;
    EXPECT_THROW(c.validate(), ConfigError);
    VirtualClock clock;
    EXPECT_THROW(run_benchmark(small_config(), RunFactory{}, clock), ConfigError);
}

TEST(Bench, ReportJsonAndTable) {
    VirtualClock clock;
    auto cfg = small_config();
    cfg.replicas = 2;
    cfg.variant = LoaderVariant::sharded_loaders;
    const auto r = run_benchmark(cfg, virtual_factory(clock, 100, 1.0, {50.0}), clock);
    const auto j = nlohmann::json::parse(r.to_json());
    EXPECT_EQ(j.at("per_run").size(), 3u);
    EXPECT_DOUBLE_EQ(j.at("mean").get<double>(), 50.0);
    EXPECT_EQ(j.at("samples_measured"), 200);
    EXPECT_EQ(j.at("config").at("replicas"), 2);
    EXPECT_EQ(j.at("config").at("variant"), "sharded_loaders");
    const auto table = r.to_table();
    EXPECT_NE(table.find("Throughput (samples/s)"), std::string::npos);
    EXPECT_NE(table.find("50.0 \xC2\xB1 0.00"), std::string::npos);
}

TEST(Bench, RealTrainingRunProducesThroughput) {
    auto cfg = small_config();
    cfg.runs = 2;
    cfg.replicas = 2;
    cfg.workers = 2;
    const auto r = run_benchmark(cfg);
    EXPECT_EQ(r.samples_measured, 80u);
    for (double v : r.per_run) EXPECT_GT(v, 0.0);
}

TEST(Sweep, CellsTableAndJson) {
    VirtualClock clock;
    const std::vector<std::size_t> replicas{1, 4};
    const std::vector<LoaderVariant> variants{LoaderVariant::single_loader, LoaderVariant::sharded_loaders};
    const RunFactory factory = [&clock](const BenchConfig& cfg, std::size_t) -> EpochFn {
        const double rate = 100.0 * static_cast<double>(cfg.replicas) *
                            (cfg.variant == LoaderVariant::sharded_loaders ? 2.0 : 1.0);
        return [&clock, rate](std::size_t, std::size_t) {
            clock.advance(100.0 / rate);
            return std::size_t{100};
        };
    };
    const auto s = scaling_sweep(small_config(), replicas, variants, factory, clock);
    ASSERT_EQ(s.cells.size(), 4u);
    EXPECT_NEAR(s.at(4, LoaderVariant::sharded_loaders).report.mean, 800.0, 1e-9);
    EXPECT_NEAR(s.at(1, LoaderVariant::single_loader).report.mean, 100.0, 1e-9);
    EXPECT_THROW(s.at(2, LoaderVariant::single_loader), ConfigError);
    const auto table = s.to_table();
    EXPECT_NE(table.find("single_loader"), std::string::npos);
    EXPECT_NE(table.find("800.0 \xC2\xB1 0.00"), std::string::npos);
    EXPECT_EQ(std::count(table.begin(), table.end(), '\n'), 3);
    const auto j = nlohmann::json::parse(s.to_json());
    EXPECT_EQ(j.at("cells").size(), 4u);
    EXPECT_EQ(j["cells"][3]["replicas"], 4);
}

TEST(ScalingModel, PredictionShape) {
    ScalingModelParams p{1e9, 500.0, 0.1, 1.0};
    EXPECT_DOUBLE_EQ(p.overhead(1), 0.0);
    EXPECT_DOUBLE_EQ(p.overhead(2), 0.1);
    EXPECT_DOUBLE_EQ(p.overhead(4), 0.6);
    EXPECT_DOUBLE_EQ(predict_scaling(p, 1, 1), 500.0);
    EXPECT_DOUBLE_EQ(predict_scaling(p, 4, 1), 2000.0 / 1.6);
    p.host_rate = 300.0;
    EXPECT_DOUBLE_EQ(predict_scaling(p, 4, 2), 600.0);
    EXPECT_THROW(predict_scaling(p, 0, 1), ConfigError);
    p.compute_rate = -1.0;
    EXPECT_THROW(predict_scaling(p, 1, 1), ConfigError);
}

TEST(ScalingModel, FitRecoversSyntheticParameters) {
    const ScalingModelParams truth{1e9, 400.0, 0.3, 2.0};
    const std::vector<std::size_t> replicas{1, 2, 3, 4, 6, 8, 16};
    std::vector<double> observed;
    for (auto r : replicas) observed.push_back(predict_scaling(truth, r, 1));
    const auto fit = fit_scaling_model(replicas, observed);
    EXPECT_LT(fit.max_relative_error, 1e-6);
    EXPECT_NEAR(fit.params.compute_rate, 400.0, 1e-3);
    ASSERT_EQ(fit.predicted.size(), replicas.size());
    EXPECT_THROW(fit_scaling_model(replicas, std::vector<double>{1.0}), DimensionError);
}

TEST(ScalingModel, MonotoneInWorkersAndHostRate) {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.1, 1000.0);
    for (int trial = 0; trial < 500; ++trial) {
        ScalingModelParams p{u(rng), u(rng), u(rng) / 1000.0, u(rng) / 100.0};
        const std::size_t r = 1 + rng() % 16, w = 1 + rng() % 8;
        const double base = predict_scaling(p, r, w);
        ASSERT_GE(predict_scaling(p, r, w + 1), base);
        p.host_rate *= 1.5;
        ASSERT_GE(predict_scaling(p, r, w), base);
    }
}

TEST(Bench, SampleAccountingIndependentOfReplicasAndWorkers) {
    for (std::size_t replicas : {1, 2, 4}) {
        for (std::size_t workers : {1, 3}) {
            auto cfg = small_config();
            cfg.runs = 1;
            cfg.samples = 48;
            cfg.replicas = replicas;
            cfg.workers = workers;
            EXPECT_EQ(run_benchmark(cfg).samples_measured, 96u) << replicas << " replicas, " << workers << " workers";
        }
    }
}
