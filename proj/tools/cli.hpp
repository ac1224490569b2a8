#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace flowcast::cli {

struct DataSection {
    std::size_t cases = 40;
    std::size_t states = 120;
    std::size_t grid = 16;
    double dt = 0.01;
    double nu = 0.05;
    std::size_t write_interval = 10;
    double inlet_min = 0.2;
    double inlet_max = 1.0;
    double recirc_min = 0.0;
    double recirc_max = 0.5;
    std::size_t threads = 1;
};

struct ModelSection {
    std::size_t n_timesteps = 3;
    std::size_t hidden = 10;
    std::size_t dense_hidden = 10;
};

struct TrainSection {
    std::size_t epochs = 100;
    std::size_t batch_size = 1;
    double learning_rate = 0.00025;
    double min_delta = 0.0001;
    std::size_t patience = 10;
    double clip_norm = 0.0;  ///< 0 disables clipping
};

struct SearchSection {
    std::size_t sessions = 10;
    double lr_low = 1e-7;
    double lr_high = 1e-5;
};

struct ParallelSection {
    std::size_t replicas = 1;
    std::size_t workers = 1;
    std::size_t queue_capacity = 16;
    std::int64_t sample_delay_us = 0;
    std::string variant = "single_loader";
};

struct EvalSection {
    std::vector<std::size_t> steps{10, 20, 100};
    bool per_case = false;
};

struct BenchSection {
    std::size_t runs = 5;
    std::size_t epochs = 4;
    std::size_t samples = 960;
    std::size_t features = 32;
    bool sweep = false;
    std::vector<std::size_t> replica_list{1, 2, 4, 8, 16};
};

/// Every setting of every subcommand. Loaded from a JSON file whose
/// top-level keys mirror the sections; command-line flags override it.
struct RunConfig {
    std::optional<std::uint64_t> seed;
    std::string data;
    std::string out;
    std::string out_dir = ".";
    std::string model;
    std::string norm;
    std::string split;
    DataSection gen;
    ModelSection net;
    TrainSection train;
    SearchSection search;
    ParallelSection parallel;
    EvalSection eval;
    BenchSection bench;

    /// Throws ConfigError on unknown keys or mistyped values.
    static RunConfig from_json(const std::string& text);
    std::string to_json() const;
};

RunConfig load_run_config(const std::filesystem::path& path);

/// Resolves the seed: explicit setting, then FLOWCAST_SEED, then 0.
std::uint64_t resolve_seed(const std::optional<std::uint64_t>& seed);

/// Entry point; `args` excludes the program name. Returns the exit status:
/// 0 on success, 2 on usage or configuration errors, 1 on file or runtime
/// errors.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace flowcast::cli
