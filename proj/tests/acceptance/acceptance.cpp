#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "cli.hpp"
#include "flowcast/bench.hpp"
#include "flowcast/distributed.hpp"
#include "flowcast/evaluation.hpp"
#include "flowcast/layers.hpp"
#include "flowcast/loader.hpp"
#include "flowcast/pipeline.hpp"
#include "flowcast/training.hpp"
#include "support/oracles.hpp"

namespace fs = std::filesystem;
using namespace flowcast;

namespace {

/// Pinned tolerances and budgets.
constexpr double kGradRelTol = 1e-5;
constexpr double kGradSeconds = 60.0;
constexpr double kStepRelTol = 1e-10;
constexpr double kTrajectoryRelTol = 1e-8;
constexpr double kParallelSeconds = 30.0;
constexpr double kShardSeconds = 5.0;
constexpr double kMetricTol = 1e-12;
constexpr double kEndToEndSeconds = 900.0;
constexpr double kStep10Pearson = 0.9;
constexpr double kRmseRatio = 0.2;
constexpr std::size_t kEndToEndEpochCap = 50;
constexpr double kLoaderSpeedup = 3.0;
constexpr double kWorkerInsensitivity = 0.10;
constexpr double kDummyRate = 1000.0;
constexpr double kDummyRateTol = 150.0;
constexpr double kScalingTol = 0.15;

struct Outcome {
    bool pass = false;
    std::string detail;
};

class Stopwatch {
public:
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

TensorD random_tensor(Shape shape, std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    TensorD t(std::move(shape));
    for (double& v : t.data()) v = normal(rng);
    return t;
}

double max_rel_diff(const SurrogateModel<double>& a, const SurrogateModel<double>& b) {
    double worst = 0.0;
    const auto pa = a.parameters();
    const auto pb = b.parameters();
    for (std::size_t i = 0; i < pa.size(); ++i) {
        const auto x = pa[i].tensor->data();
        const auto y = pb[i].tensor->data();
        for (std::size_t k = 0; k < x.size(); ++k) {
            const double scale = std::max(std::abs(x[k]), std::abs(y[k]));
            if (scale > 0.0) worst = std::max(worst, std::abs(x[k] - y[k]) / scale);
        }
    }
    return worst;
}

Outcome gradient_correctness() {
    const Stopwatch sw;
    const ModelConfig cfg{3, 1, 5, 3, 10};
    double worst = 0.0;
    double worst_forward = 0.0;
    std::size_t checked = 0, excluded = 0;
    std::string where;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        const auto model = init_surrogate<double>(cfg, seed);
        std::mt19937_64 rng(seed * 7919);
        const auto window = random_tensor({3, 5}, rng);
        const auto target = random_tensor({1, 5}, rng);
        const auto fwd = surrogate_forward(model, window);
        const auto loss = mae_loss(fwd.prediction, target);
        const auto grads = surrogate_backward(model, fwd.cache, loss.grad);

        const auto w = oracle::to_mat(window, 3, 5);
        const auto t = oracle::to_mat(target, 1, 5);
        const auto ref = oracle::surrogate(model, w);
        for (std::size_t k = 0; k < 5; ++k) {
            worst_forward = std::max(worst_forward, std::abs(ref[0][k] - fwd.prediction.data()[k]));
        }
        const auto fd = oracle::finite_difference_check(model, grads, w, t);
        checked += fd.checked;
        excluded += fd.excluded;
        if (fd.worst_rel > worst) {
            worst = fd.worst_rel;
            where = "seed " + std::to_string(seed) + " " + fd.worst_name;
        }
    }
    const double secs = sw.seconds();
    const bool pass = worst <= kGradRelTol && worst_forward <= 1e-12 && checked > excluded && secs < kGradSeconds;
    return {pass, fmt("worst rel %.3g at %s; %zu coords checked, %zu at kinks; forward diff %.2g; %.1f s", worst,
                      where.c_str(), checked, excluded, worst_forward, secs)};
}

Outcome data_parallel_equivalence() {
    const Stopwatch sw;
    const ModelConfig cfg{3, 1, 5, 3, 10};
    double worst_step = 0.0, worst_traj = 0.0;
    for (std::size_t r : {2, 4, 8}) {
        std::mt19937_64 rng(1000 + r);
        std::vector<SampleWindow<double>> samples;
        for (std::size_t i = 0; i < 10 * r; ++i) {
            samples.push_back({random_tensor({3, 5}, rng), random_tensor({1, 5}, rng), 0, i});
        }
        auto parallel = init_surrogate<double>(cfg, 42 + r);
        auto single = parallel;
        AdamState<double> adam_p, adam_s;
        adam_p.hyper.learning_rate = adam_s.hyper.learning_rate = 1e-3;
        auto group = ReplicaGroup<double>::make(r);
        for (std::size_t step = 0; step < 10; ++step) {
            std::vector<std::vector<const SampleWindow<double>*>> micro(r);
            std::vector<const SampleWindow<double>*> batch;
            for (std::size_t k = 0; k < r; ++k) {
                micro[k].push_back(&samples[step * r + k]);
                batch.push_back(&samples[step * r + k]);
            }
            data_parallel_step<double>(group, parallel, adam_p, micro);
            const auto g = batch_gradient<double>(single, std::span<const SampleWindow<double>* const>(batch));
            adam_step(adam_s, single, g.grads);
            const double d = max_rel_diff(parallel, single);
            if (step == 0) worst_step = std::max(worst_step, d);
            worst_traj = std::max(worst_traj, d);
        }
    }
    const double secs = sw.seconds();
    const bool pass = worst_step <= kStepRelTol && worst_traj <= kTrajectoryRelTol && secs < kParallelSeconds;
    return {pass, fmt("R in {2,4,8}: one-step rel %.3g, 10-step rel %.3g; %.2f s", worst_step, worst_traj, secs)};
}

Outcome sharding_laws() {
    const Stopwatch sw;
    std::mt19937_64 rng(3);
    std::uniform_int_distribution<std::size_t> n_dist(0, 5000), k_dist(1, 64);
    std::size_t violations = 0;
    for (int trial = 0; trial < 500; ++trial) {
        const std::size_t n = n_dist(rng), k = k_dist(rng);
        std::vector<int> seen(n, 0);
        std::size_t lo = n, hi = 0;
        for (std::size_t i = 0; i < k; ++i) {
            const auto shard = shard_indices(n, {k, i});
            lo = std::min(lo, shard.size());
            hi = std::max(hi, shard.size());
            for (std::size_t idx : shard) {
                if (idx >= n) {
                    ++violations;
                    continue;
                }
                ++seen[idx];
            }
        }
        const bool partition = std::all_of(seen.begin(), seen.end(), [](int c) { return c == 1; });
        if (!partition || hi - lo > 1) ++violations;
    }
    const double secs = sw.seconds();
    return {violations == 0 && secs < kShardSeconds,
            fmt("500 (n, k) pairs, %zu violations; %.2f s", violations, secs)};
}

Outcome metric_oracles() {
    std::mt19937_64 rng(4);
    std::uniform_int_distribution<std::size_t> len(2, 200);
    std::uniform_int_distribution<int> small(0, 5);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> scale(0.1, 10.0), shift(-10.0, 10.0);
    double worst_oracle = 0.0, worst_invariance = 0.0;
    std::size_t pairs = 0, with_ties = 0;
    while (pairs < 1000) {
        const std::size_t n = len(rng);
        const bool ties = pairs % 2 == 0;
        std::vector<double> a(n), b(n);
        for (std::size_t i = 0; i < n; ++i) {
            a[i] = ties ? small(rng) : normal(rng);
            b[i] = ties && pairs % 4 == 0 ? small(rng) : normal(rng) + 0.5 * a[i];
        }
        const auto constant = [](const std::vector<double>& v) {
            return std::all_of(v.begin(), v.end(), [&](double x) { return x == v.front(); });
        };
        if (constant(a) || constant(b)) continue;
        ++pairs;
        with_ties += std::set<double>(a.begin(), a.end()).size() < n;

        worst_oracle = std::max(worst_oracle, std::abs(pearson(a, b) - oracle::pearson(a, b)));
        worst_oracle = std::max(worst_oracle, std::abs(spearman(a, b) - oracle::spearman(a, b)));
        worst_oracle = std::max(worst_oracle, std::abs(rmse(a, b) - oracle::rmse(a, b)));

        const double s = scale(rng), t = shift(rng);
        std::vector<double> affine(n), monotone(n);
        for (std::size_t i = 0; i < n; ++i) {
            affine[i] = s * a[i] + t;
            monotone[i] = std::exp(0.5 * a[i]) + a[i] * a[i] * a[i];
        }
        worst_invariance = std::max(worst_invariance, std::abs(pearson(affine, b) - pearson(a, b)));
        worst_invariance = std::max(worst_invariance, std::abs(spearman(monotone, b) - spearman(a, b)));
    }
    const bool pass = worst_oracle <= kMetricTol && worst_invariance <= kMetricTol && with_ties > 0;
    return {pass, fmt("1000 pairs (%zu with ties): oracle diff %.3g, invariance diff %.3g", with_ties, worst_oracle,
                      worst_invariance)};
}

Outcome split_counts() {
    const auto split = split_cases(131, 0);
    const bool counts = split.train.size() == 84 && split.validation.size() == 20 && split.test.size() == 27;
    const bool windows = window_count(420, 3, 1) == 417;

    constexpr std::size_t cells = 125565, dims = 3, features = cells * dims;
    TensorF states({4, cells, dims});
    const auto full = make_windows<float>(states.reshaped({4, features}), 0, 3, 1);
    const bool sample = full.size() == 1 && full[0].input.size() == 1130085 &&
                        full[0].input.shape() == Shape{3, features};

    const auto model = SurrogateModel<float>::zeros(ModelConfig{3, 1, features, 10, 10});
    const auto pred = surrogate_predict(model, full[0].input);
    const bool forward = pred.shape() == Shape{1, features};

    return {counts && windows && sample && forward,
            fmt("split 131 -> %zu/%zu/%zu; windows(420) = %zu; full-scale input %zu scalars -> output [%zu x %zu]",
                split.train.size(), split.validation.size(), split.test.size(), window_count(420, 3, 1),
                full.empty() ? 0 : full[0].input.size(), pred.extent(0), pred.extent(1))};
}

Outcome end_to_end() {
    const Stopwatch sw;
    const fs::path dir = fs::temp_directory_path() / ("flowcast_acceptance_" + std::to_string(std::random_device{}()));
    fs::create_directories(dir);
    std::ostringstream out, err;
    auto run = [&](std::vector<std::string> args) { return cli::run_cli(args, out, err); };
    const std::string data = (dir / "data.bin").string();
    const std::string run_dir = (dir / "search").string();
    const std::string metrics = (dir / "metrics.json").string();
    int rc = run({"gen-data", "--seed", "0", "--out", data, "--cases", "40", "--states", "120", "--grid", "16"});
    if (rc == 0) {
        rc = run({"lr-search", "--seed", "0", "--data", data, "--out-dir", run_dir, "--sessions", "10", "--lr-low",
                  "1e-7", "--lr-high", "1e-5", "--min-delta", "0.0001", "--patience", "10", "--epochs",
                  std::to_string(kEndToEndEpochCap)});
    }
    if (rc == 0) {
        rc = run({"evaluate", "--seed", "0", "--data", data, "--model", run_dir + "/model.fcm", "--norm",
                  run_dir + "/norm_stats.json", "--split", run_dir + "/split.json", "--steps", "10", "20", "100",
                  "--out", metrics});
    }
    const double secs = sw.seconds();
    if (rc != 0) {
        fs::remove_all(dir);
        return {false, "cli exited with " + std::to_string(rc) + ": " + err.str()};
    }
    std::ifstream in(metrics);
    const auto j = nlohmann::json::parse(in);
    fs::remove_all(dir);
    std::vector<double> p, s, e;
    for (const auto& row : j.at("rows")) {
        p.push_back(row.at("pearson"));
        s.push_back(row.at("spearman"));
        e.push_back(row.at("rmse"));
    }
    const bool step10 = p[0] >= kStep10Pearson;
    const bool monotone = p[0] <= p[1] && p[1] <= p[2] && s[0] <= s[1] && s[1] <= s[2] && e[0] >= e[1] && e[1] >= e[2];
    const bool ratio = e[2] <= kRmseRatio * e[0];
    const bool fast = secs < kEndToEndSeconds;
    return {step10 && monotone && ratio && fast,
            fmt("pearson %.3f/%.3f/%.3f, spearman %.3f/%.3f/%.3f, rmse %.4f/%.4f/%.4f at steps 10/20/100; "
                "step-10 pearson %s, monotone %s, rmse ratio %.2f %s; %.0f s",
                p[0], p[1], p[2], s[0], s[1], s[2], e[0], e[1], e[2], step10 ? "ok" : "low", monotone ? "yes" : "no",
                e[2] / e[0], ratio ? "ok" : "too high", secs)};
}

double stream_rate(std::size_t workers, std::chrono::microseconds delay, std::size_t n) {
    std::vector<int> shard(n);
    std::iota(shard.begin(), shard.end(), 0);
    LoaderConfig cfg;
    cfg.workers = workers;
    cfg.per_sample_delay = delay;
    const Stopwatch sw;
    SampleStream<int> stream(std::span<const int>(shard), cfg);
    std::size_t got = 0;
    while (stream.next()) ++got;
    return static_cast<double>(got) / sw.seconds();
}

Outcome loader_bottleneck() {
    const double one = stream_rate(1, std::chrono::milliseconds(2), 300);
    const double four = stream_rate(4, std::chrono::milliseconds(2), 300);
    const double speedup = four / one;

    BenchConfig cfg;
    cfg.runs = 3;
    cfg.epochs = 3;
    cfg.samples = 480;
    cfg.model = ModelConfig{3, 1, 256, 10, 10};
    cfg.workers = 1;
    const double t1 = run_benchmark(cfg).mean;
    cfg.workers = 4;
    const double t4 = run_benchmark(cfg).mean;
    const double change = std::abs(t4 - t1) / t1;
    return {speedup >= kLoaderSpeedup && change < kWorkerInsensitivity,
            fmt("2 ms/sample: 4 workers %.0f/s vs 1 worker %.0f/s (%.2fx); no delay, compute-bound: %.1f vs %.1f "
                "samples/s (%.1f%% change)",
                four, one, speedup, t4, t1, 100.0 * change)};
}

Outcome benchmark_protocol() {
    BenchConfig cfg;
    cfg.runs = 5;
    cfg.epochs = 4;
    cfg.samples = 1000;

    VirtualClock clock;
    const RunFactory delayed = [&clock](const BenchConfig&, std::size_t) -> EpochFn {
        return [&clock](std::size_t, std::size_t epoch) -> std::size_t {
            clock.advance(epoch == 0 ? 50.0 : 1.0);
            return 1000;
        };
    };
    const auto virt = run_benchmark(cfg, delayed, clock);
    const bool warmup = std::all_of(virt.per_run.begin(), virt.per_run.end(), [](double v) { return v == 1000.0; }) &&
                        virt.samples_measured == 3000;

    const bool format = format_mean_std(2805.8, 1.17) == "2805.8 \xC2\xB1 1.17";
    const std::vector<double> table{571.8, 574.4, 560.8, 558.8, 571.0};
    const auto [m, s] = mean_and_sample_std(table);
    double ss = 0.0;
    for (double v : table) ss += (v - m) * (v - m);
    const bool sample_std = std::abs(s - std::sqrt(ss / 4.0)) < 1e-12;

    cfg.samples = 200;
    const auto base = fixed_cost_run_factory(200, std::chrono::milliseconds(1));
    const RunFactory slow_first = [&base](const BenchConfig& c, std::size_t run) -> EpochFn {
        auto inner = base(c, run);
        return [inner](std::size_t r, std::size_t epoch) {
            if (epoch == 0) std::this_thread::sleep_for(std::chrono::milliseconds(300));
            return inner(r, epoch);
        };
    };
    SteadyClock steady;
    const auto real = run_benchmark(cfg, slow_first, steady);
    const bool dummy = std::abs(real.mean - kDummyRate) <= kDummyRateTol && real.per_run.size() == 5;

    return {warmup && format && sample_std && dummy,
            fmt("virtual-clock warm-up excluded: %s; format \"%s\"; sample std %s; 1 ms/sample dummy with 300 ms "
                "first-epoch delay: %s samples/s",
                warmup ? "yes" : "no", format_mean_std(2805.8, 1.17).c_str(), sample_std ? "ok" : "wrong",
                real.cell().c_str())};
}

Outcome scaling_fit() {
    const std::vector<std::size_t> replicas{1, 2, 4, 8, 16};
    const std::vector<double> observed{574.4, 560.8, 871.4, 1566.4, 2805.8};
    const auto fit = fit_scaling_model(replicas, observed);
    const bool flat = fit.predicted[1] <= fit.predicted[0] * (1.0 + kScalingTol);
    std::string preds;
    for (double v : fit.predicted) preds += fmt(" %.1f", v);
    return {fit.max_relative_error <= kScalingTol && flat,
            fmt("predicted%s; max rel error %.3f; 1->2 ratio %.3f", preds.c_str(), fit.max_relative_error,
                fit.predicted[1] / fit.predicted[0])};
}

Outcome early_stopping() {
    const ModelConfig cfg{3, 1, 2, 2, 2};
    const auto model = SurrogateModel<float>::zeros(cfg);
    std::vector<SampleWindow<float>> samples{
        {TensorF({3, 2}), TensorF({1, 2}), 0, 0},
    };
    TrainConfig tcfg;
    tcfg.epochs = 100;
    std::size_t calls = 0;
    const EpochRunner<float> noop = [&calls](SurrogateModel<float>&, AdamState<float>&,
                                             std::span<const SampleWindow<float>>, const TrainConfig&,
                                             std::size_t) {
        ++calls;
        return 0.0;
    };
    const auto constant = fit_with_early_stopping<float>(model, samples, samples, tcfg, noop);
    const bool eleven = constant.history.size() == 11 && calls == 11 && constant.history.back().stopped;

    EarlyStopState stop;
    stop.observe(1.0);
    std::size_t resets = 0;
    for (int k = 0; k < 10; ++k) resets += stop.observe(1.0 - 0.0001);
    const bool exact_delta = resets == 0 && stop.should_stop();
    return {eleven && exact_delta,
            fmt("constant validation loss stops after %zu epochs; exact 0.0001 improvements reset patience %zu times",
                constant.history.size(), resets)};
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"gradient correctness", gradient_correctness},
        {"data-parallel equivalence", data_parallel_equivalence},
        {"sharding laws", sharding_laws},
        {"metric oracles", metric_oracles},
        {"split counts", split_counts},
        {"end-to-end surrogate accuracy", end_to_end},
        {"loader bottleneck", loader_bottleneck},
        {"benchmark protocol", benchmark_protocol},
        {"scaling model fit", scaling_fit},
        {"early stopping", early_stopping},
    };
    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("threw: ") + e.what()};
        }
        failures += !o.pass;
        std::printf("[%s] %zu %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(), o.detail.c_str());
        std::fflush(stdout);
    }
    return failures == 0 ? 0 : 1;
}
