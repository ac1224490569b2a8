#include "cli.hpp"

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <initializer_list>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "flowcast/bench.hpp"
#include "flowcast/binary_io.hpp"
#include "flowcast/checkpoint.hpp"
#include "flowcast/datagen.hpp"
#include "flowcast/distributed.hpp"
#include "flowcast/errors.hpp"
#include "flowcast/evaluation.hpp"
#include "flowcast/pipeline.hpp"
#include "flowcast/seed.hpp"
#include "flowcast/training.hpp"

namespace flowcast::cli {

using nlohmann::json;

namespace {

void reject_unknown(const json& obj, std::initializer_list<const char*> allowed, const std::string& where) {
    if (!obj.is_object()) throw ConfigError("config: '" + where + "' must be an object");
    std::set<std::string> names(allowed.begin(), allowed.end());
    for (const auto& [key, _] : obj.items()) {
        if (!names.count(key)) throw ConfigError("config: unknown key '" + (where.empty() ? key : where + "." + key) + "'");
    }
}

void read(const json& obj, const char* key, std::size_t& into) {
    auto it = obj.find(key);
    if (it == obj.end()) return;
    if (!it->is_number_unsigned()) throw ConfigError(std::string("config: '") + key + "' must be a non-negative integer");
    into = it->get<std::size_t>();
}

void read(const json& obj, const char* key, std::int64_t& into) {
    auto it = obj.find(key);
    if (it == obj.end()) return;
    if (!it->is_number_integer()) throw ConfigError(std::string("config: '") + key + "' must be an integer");
    into = it->get<std::int64_t>();
}

void read(const json& obj, const char* key, double& into) {
    auto it = obj.find(key);
    if (it == obj.end()) return;
    if (!it->is_number()) throw ConfigError(std::string("config: '") + key + "' must be a number");
    into = it->get<double>();
}

void read(const json& obj, const char* key, bool& into) {
    auto it = obj.find(key);
    if (it == obj.end()) return;
    if (!it->is_boolean()) throw ConfigError(std::string("config: '") + key + "' must be a boolean");
    into = it->get<bool>();
}

void read(const json& obj, const char* key, std::string& into) {
    auto it = obj.find(key);
    if (it == obj.end()) return;
    if (!it->is_string()) throw ConfigError(std::string("config: '") + key + "' must be a string");
    into = it->get<std::string>();
}

void read(const json& obj, const char* key, std::vector<std::size_t>& into) {
    auto it = obj.find(key);
    if (it == obj.end()) return;
    if (!it->is_array()) throw ConfigError(std::string("config: '") + key + "' must be an array");
    into.clear();
    for (const auto& v : *it) {
        if (!v.is_number_unsigned()) throw ConfigError(std::string("config: '") + key + "' entries must be non-negative integers");
        into.push_back(v.get<std::size_t>());
    }
}

const json& section(const json& root, const char* name) {
    static const json empty = json::object();
    auto it = root.find(name);
    return it == root.end() ? empty : *it;
}

}  // namespace

RunConfig RunConfig::from_json(const std::string& text) {
    json root;
    try {
        root = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config: invalid JSON: ") + e.what());
    }
    reject_unknown(root,
                   {"seed", "data", "out", "out_dir", "model", "norm", "split", "gen", "net", "train", "search",
                    "parallel", "eval", "bench"},
                   "");
    RunConfig c;
    if (auto it = root.find("seed"); it != root.end()) {
        if (!it->is_number_unsigned()) throw ConfigError("config: 'seed' must be a non-negative integer");
        c.seed = it->get<std::uint64_t>();
    }
    read(root, "data", c.data);
    read(root, "out", c.out);
    read(root, "out_dir", c.out_dir);
    read(root, "model", c.model);
    read(root, "norm", c.norm);
    read(root, "split", c.split);

    const auto& g = section(root, "gen");
    reject_unknown(g, {"cases", "states", "grid", "dt", "nu", "write_interval", "inlet_min", "inlet_max", "recirc_min",
                       "recirc_max", "threads"},
                   "gen");
    read(g, "cases", c.gen.cases);
    read(g, "states", c.gen.states);
    read(g, "grid", c.gen.grid);
    read(g, "dt", c.gen.dt);
    read(g, "nu", c.gen.nu);
    read(g, "write_interval", c.gen.write_interval);
    read(g, "inlet_min", c.gen.inlet_min);
    read(g, "inlet_max", c.gen.inlet_max);
    read(g, "recirc_min", c.gen.recirc_min);
    read(g, "recirc_max", c.gen.recirc_max);
    read(g, "threads", c.gen.threads);

    const auto& n = section(root, "net");
    reject_unknown(n, {"n_timesteps", "hidden", "dense_hidden"}, "net");
    read(n, "n_timesteps", c.net.n_timesteps);
    read(n, "hidden", c.net.hidden);
    read(n, "dense_hidden", c.net.dense_hidden);

    const auto& t = section(root, "train");
    reject_unknown(t, {"epochs", "batch_size", "learning_rate", "min_delta", "patience", "clip_norm"}, "train");
    read(t, "epochs", c.train.epochs);
    read(t, "batch_size", c.train.batch_size);
    read(t, "learning_rate", c.train.learning_rate);
    read(t, "min_delta", c.train.min_delta);
    read(t, "patience", c.train.patience);
    read(t, "clip_norm", c.train.clip_norm);

    const auto& s = section(root, "search");
    reject_unknown(s, {"sessions", "lr_low", "lr_high"}, "search");
    read(s, "sessions", c.search.sessions);
    read(s, "lr_low", c.search.lr_low);
    read(s, "lr_high", c.search.lr_high);

    const auto& p = section(root, "parallel");
    reject_unknown(p, {"replicas", "workers", "queue_capacity", "sample_delay_us", "variant"}, "parallel");
    read(p, "replicas", c.parallel.replicas);
    read(p, "workers", c.parallel.workers);
    read(p, "queue_capacity", c.parallel.queue_capacity);
    read(p, "sample_delay_us", c.parallel.sample_delay_us);
    read(p, "variant", c.parallel.variant);

    const auto& e = section(root, "eval");
    reject_unknown(e, {"steps", "per_case"}, "eval");
    read(e, "steps", c.eval.steps);
    read(e, "per_case", c.eval.per_case);

    const auto& b = section(root, "bench");
    reject_unknown(b, {"runs", "epochs", "samples", "features", "sweep", "replica_list"}, "bench");
    read(b, "runs", c.bench.runs);
    read(b, "epochs", c.bench.epochs);
    read(b, "samples", c.bench.samples);
    read(b, "features", c.bench.features);
    read(b, "sweep", c.bench.sweep);
    read(b, "replica_list", c.bench.replica_list);
    return c;
}

std::string RunConfig::to_json() const {
    json j;
    if (seed) j["seed"] = *seed;
    j["data"] = data;
    j["out"] = out;
    j["out_dir"] = out_dir;
    j["model"] = model;
    j["norm"] = norm;
    j["split"] = split;
    j["gen"] = {{"cases", gen.cases},         {"states", gen.states},       {"grid", gen.grid},
                {"dt", gen.dt},               {"nu", gen.nu},               {"write_interval", gen.write_interval},
                {"inlet_min", gen.inlet_min}, {"inlet_max", gen.inlet_max}, {"recirc_min", gen.recirc_min},
                {"recirc_max", gen.recirc_max}, {"threads", gen.threads}};
    j["net"] = {{"n_timesteps", net.n_timesteps}, {"hidden", net.hidden}, {"dense_hidden", net.dense_hidden}};
    j["train"] = {{"epochs", train.epochs},       {"batch_size", train.batch_size}, {"learning_rate", train.learning_rate},
                  {"min_delta", train.min_delta}, {"patience", train.patience},     {"clip_norm", train.clip_norm}};
    j["search"] = {{"sessions", search.sessions}, {"lr_low", search.lr_low}, {"lr_high", search.lr_high}};
    j["parallel"] = {{"replicas", parallel.replicas},
                     {"workers", parallel.workers},
                     {"queue_capacity", parallel.queue_capacity},
                     {"sample_delay_us", parallel.sample_delay_us},
                     {"variant", parallel.variant}};
    j["eval"] = {{"steps", eval.steps}, {"per_case", eval.per_case}};
    j["bench"] = {{"runs", bench.runs},         {"epochs", bench.epochs}, {"samples", bench.samples},
                  {"features", bench.features}, {"sweep", bench.sweep},   {"replica_list", bench.replica_list}};
    return j.dump(2);
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config '" + path.string() + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return RunConfig::from_json(ss.str());
}

std::uint64_t resolve_seed(const std::optional<std::uint64_t>& seed) {
    if (seed) return *seed;
    if (const char* env = std::getenv("FLOWCAST_SEED"); env != nullptr && *env != '\0') {
        std::size_t used = 0;
        std::uint64_t v = 0;
        try {
            v = std::stoull(env, &used, 10);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != std::string(env).size() || std::string(env).front() == '-') {
            throw ConfigError(std::string("FLOWCAST_SEED must be a non-negative integer, got '") + env + "'");
        }
        return v;
    }
    return 0;
}

namespace {

/// Seed offsets so one global seed drives independent streams.
enum SeedStream : std::uint64_t { kInitStream = 1, kShuffleStream = 2, kSearchStream = 3, kBenchStream = 4 };

std::string find_config_path(const std::vector<std::string>& args) {
    for (std::size_t i = 0; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size()) return args[i + 1];
        if (args[i].rfind("--config=", 0) == 0) return args[i].substr(9);
    }
    return {};
}

void add_seed_option(CLI::App* cmd, std::optional<std::uint64_t>& seed) {
    cmd->add_option("--seed", seed, "Global seed (falls back to FLOWCAST_SEED, then 0)");
}

void add_config_option(CLI::App* cmd) {
    cmd->add_option("--config", "JSON run configuration; flags override its values");
}

void add_model_options(CLI::App* cmd, RunConfig& c) {
    cmd->add_option("--timesteps", c.net.n_timesteps, "Input window length")->capture_default_str();
    cmd->add_option("--hidden", c.net.hidden, "LSTM hidden units")->capture_default_str();
    cmd->add_option("--dense-hidden", c.net.dense_hidden, "Hidden dense units")->capture_default_str();
}

void add_train_options(CLI::App* cmd, RunConfig& c) {
    cmd->add_option("--data", c.data, "Dataset file");
    cmd->add_option("--out-dir", c.out_dir, "Directory for checkpoint, norm stats, history and split")
        ->capture_default_str();
    cmd->add_option("--epochs", c.train.epochs, "Maximum epochs")->capture_default_str();
    cmd->add_option("--batch-size", c.train.batch_size, "Per-replica batch size")->capture_default_str();
    cmd->add_option("--min-delta", c.train.min_delta, "Early-stopping minimum improvement")->capture_default_str();
    cmd->add_option("--patience", c.train.patience, "Early-stopping patience")->capture_default_str();
    cmd->add_option("--clip-norm", c.train.clip_norm, "Global gradient-norm clip (0 = off)")->capture_default_str();
    cmd->add_option("--replicas", c.parallel.replicas, "Data-parallel replicas")->capture_default_str();
    cmd->add_option("--workers", c.parallel.workers, "Loader worker threads")->capture_default_str();
    cmd->add_option("--queue-capacity", c.parallel.queue_capacity, "Loader queue capacity")->capture_default_str();
    cmd->add_option("--sample-delay-us", c.parallel.sample_delay_us, "Simulated preprocessing cost per sample")
        ->capture_default_str();
    cmd->add_option("--variant", c.parallel.variant, "single_loader or sharded_loaders")->capture_default_str();
    add_model_options(cmd, c);
}

void require_path(const std::string& value, const char* flag) {
    if (value.empty()) throw ConfigError(std::string("missing required ") + flag);
}

TankConfig tank_config(const RunConfig& c) {
    TankConfig t;
    t.grid_height = c.gen.grid;
    t.grid_width = c.gen.grid;
    t.dt = c.gen.dt;
    t.nu = c.gen.nu;
    t.write_interval = c.gen.write_interval;
    t.n_states = c.gen.states;
    t.inlet_velocity = std::max(std::abs(c.gen.inlet_min), std::abs(c.gen.inlet_max));
    t.recirculation_rate = c.gen.recirc_max;
    return t;
}

TrainConfig train_config(const RunConfig& c, std::uint64_t seed) {
    TrainConfig t;
    t.epochs = c.train.epochs;
    t.batch_size = c.train.batch_size;
    t.learning_rate = c.train.learning_rate;
    t.min_delta = c.train.min_delta;
    t.patience = c.train.patience;
    if (c.train.clip_norm > 0.0) t.clip_norm = c.train.clip_norm;
    t.shuffle_seed = derive_seed(seed, kShuffleStream);
    t.validate();
    return t;
}

DataParallelConfig parallel_config(const RunConfig& c) {
    if (c.parallel.sample_delay_us < 0) throw ConfigError("--sample-delay-us must be non-negative");
    DataParallelConfig dp;
    dp.replicas = c.parallel.replicas;
    dp.variant = loader_variant_from_string(c.parallel.variant);
    dp.loader.workers = c.parallel.workers;
    dp.loader.queue_capacity = c.parallel.queue_capacity;
    dp.loader.per_sample_delay = std::chrono::microseconds(c.parallel.sample_delay_us);
    if (dp.replicas < 1) throw ConfigError("--replicas must be >= 1");
    dp.loader.validate();
    return dp;
}

bool needs_parallel_runner(const DataParallelConfig& dp) {
    return dp.replicas > 1 || dp.loader.workers > 1 || dp.loader.per_sample_delay.count() > 0;
}

std::string split_json(const SplitSpec& s) {
    return json{{"seed", s.seed}, {"train", s.train}, {"validation", s.validation}, {"test", s.test}}.dump(2);
}

SplitSpec read_split(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open split file '" + path.string() + "'");
    try {
        const auto j = json::parse(in);
        SplitSpec s;
        s.seed = j.at("seed").get<std::uint64_t>();
        s.train = j.at("train").get<std::vector<std::size_t>>();
        s.validation = j.at("validation").get<std::vector<std::size_t>>();
        s.test = j.at("test").get<std::vector<std::size_t>>();
        return s;
    } catch (const json::exception& e) {
        throw FormatError("split file '" + path.string() + "': " + e.what());
    }
}

struct Prepared {
    Dataset data;
    SplitSpec split;
    NormStats stats;
    ModelConfig model;
    std::vector<SampleWindow<float>> train;
    std::vector<SampleWindow<float>> val;
};

Prepared prepare(const RunConfig& c, std::uint64_t seed) {
    require_path(c.data, "--data");
    Prepared p;
    p.data = read_dataset(c.data);
    p.split = split_cases(p.data.n_cases(), seed);
    p.stats = compute_norm_stats(p.data, p.split.train);
    p.model.n_timesteps = c.net.n_timesteps;
    p.model.n_outputs = 1;
    p.model.n_features = p.data.n_cells * p.data.n_dims;
    p.model.hidden = c.net.hidden;
    p.model.dense_hidden = c.net.dense_hidden;
    p.model.validate();
    p.train = make_normalized_windows(p.data, p.split.train, p.stats, p.model.n_timesteps, 1);
    p.val = make_normalized_windows(p.data, p.split.validation, p.stats, p.model.n_timesteps, 1);
    return p;
}

void write_common_artifacts(const std::filesystem::path& dir, const Prepared& p, const SurrogateModel<float>& model) {
    std::filesystem::create_directories(dir);
    write_checkpoint(dir / "model.fcm", model);
    write_norm_stats(dir / "norm_stats.json", p.stats);
    write_file_atomic(dir / "split.json", split_json(p.split));
}

int cmd_gen_data(const RunConfig& c, std::ostream& out) {
    require_path(c.out, "--out");
    const auto seed = resolve_seed(c.seed);
    const TankConfig tank = tank_config(c);
    tank.validate();
    if (c.gen.inlet_min > c.gen.inlet_max || c.gen.recirc_min > c.gen.recirc_max) {
        throw ConfigError("gen-data: range minimum exceeds maximum");
    }
    const auto d = generate_dataset(c.gen.cases, {c.gen.inlet_min, c.gen.inlet_max},
                                    {c.gen.recirc_min, c.gen.recirc_max}, tank, seed, c.gen.threads);
    write_dataset(c.out, d);
    out << "wrote " << c.out << ": " << d.n_cases() << " cases x " << d.n_states << " states x " << d.n_cells
        << " cells x " << d.n_dims << " dims\n";
    return 0;
}

int cmd_train(const RunConfig& c, std::ostream& out) {
    const auto seed = resolve_seed(c.seed);
    auto tcfg = train_config(c, seed);
    const auto dp = parallel_config(c);
    const auto p = prepare(c, seed);
    EpochRunner<float> runner;
    if (needs_parallel_runner(dp)) runner = make_data_parallel_runner<float>(dp);
    auto model = init_surrogate<float>(p.model, derive_seed(seed, kInitStream));
    const auto fit = fit_with_early_stopping<float>(
        std::move(model), p.train, p.val, tcfg, runner, [&](const EpochRecord& r) {
            out << "epoch " << r.epoch << " train_loss " << r.train_loss << " val_loss " << r.val_loss
                << (r.stopped ? " (early stop)" : "") << "\n";
        });
    const std::filesystem::path dir = c.out_dir;
    write_common_artifacts(dir, p, fit.best_model);
    write_file_atomic(dir / "history.jsonl", history_to_jsonl(fit.history));
    out << "best epoch " << fit.best_epoch << " val_loss " << fit.best_val_loss << "; wrote " << (dir / "model.fcm").string()
        << "\n";
    return 0;
}

int cmd_lr_search(const RunConfig& c, std::ostream& out) {
    const auto seed = resolve_seed(c.seed);
    auto tcfg = train_config(c, seed);
    const auto dp = parallel_config(c);
    const auto p = prepare(c, seed);
    LrSearchConfig search{c.search.sessions, c.search.lr_low, c.search.lr_high, derive_seed(seed, kSearchStream)};
    search.validate();
    EpochRunner<float> runner;
    if (needs_parallel_runner(dp)) runner = make_data_parallel_runner<float>(dp);
    const auto result = lr_search<float>(p.model, p.train, p.val, tcfg, search, runner, [&](const SessionRecord& s) {
        out << "session " << s.index << " lr " << s.learning_rate << " best_val_loss " << s.best_val_loss
            << " at epoch " << s.best_epoch << " (" << s.epochs_run << " epochs)\n";
    });
    const std::filesystem::path dir = c.out_dir;
    write_common_artifacts(dir, p, result.best_model);
    write_file_atomic(dir / "sessions.json", sessions_to_json(result.sessions, result.best_session));
    write_file_atomic(dir / "history.jsonl", history_to_jsonl(result.sessions[result.best_session].history));
    out << "best session " << result.best_session << " lr " << result.sessions[result.best_session].learning_rate
        << "; wrote " << (dir / "model.fcm").string() << "\n";
    return 0;
}

int cmd_evaluate(const RunConfig& c, std::ostream& out) {
    require_path(c.data, "--data");
    require_path(c.model, "--model");
    require_path(c.norm, "--norm");
    const auto data = read_dataset(c.data);
    const auto model = read_checkpoint(c.model);
    const auto stats = read_norm_stats(c.norm);
    const SplitSpec split = c.split.empty() ? split_cases(data.n_cases(), resolve_seed(c.seed)) : read_split(c.split);
    EvalOptions opts;
    opts.steps = c.eval.steps;
    opts.n_timesteps = model.config.n_timesteps;
    opts.per_case = c.eval.per_case;
    const auto report = evaluate_at_steps(model, data, split.test, stats, opts);
    const std::string out_path = c.out.empty() ? "metrics.json" : c.out;
    write_metrics_report(out_path, report);
    out << report.to_table();
    return 0;
}

int cmd_benchmark(const RunConfig& c, std::ostream& out) {
    BenchConfig b;
    b.runs = c.bench.runs;
    b.epochs = c.bench.epochs;
    b.samples = c.bench.samples;
    b.replicas = c.parallel.replicas;
    b.workers = c.parallel.workers;
    b.queue_capacity = c.parallel.queue_capacity;
    if (c.parallel.sample_delay_us < 0) throw ConfigError("--sample-delay-us must be non-negative");
    b.per_sample_delay = std::chrono::microseconds(c.parallel.sample_delay_us);
    b.batch_size = c.train.batch_size;
    b.variant = loader_variant_from_string(c.parallel.variant);
    b.model = ModelConfig{c.net.n_timesteps, 1, c.bench.features, c.net.hidden, c.net.dense_hidden};
    b.seed = derive_seed(resolve_seed(c.seed), kBenchStream);
    const std::string out_path = c.out.empty() ? "throughput.json" : c.out;
    if (c.bench.sweep) {
        const auto sweep = scaling_sweep(b, c.bench.replica_list);
        write_file_atomic(out_path, sweep.to_json());
        out << sweep.to_table();
    } else {
        const auto report = run_benchmark(b);
        write_file_atomic(out_path, report.to_json());
        out << report.to_table();
    }
    return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    RunConfig c;
    CLI::App app{"flowcast: LSTM surrogate for 2-D tank flow"};
    app.name("flowcast");
    app.require_subcommand(1);

    try {
        if (const auto path = find_config_path(args); !path.empty()) c = load_run_config(path);
    } catch (const ConfigError& e) {
        err << "flowcast: error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        err << "flowcast: error: " << e.what() << "\n";
        return 1;
    }

    auto* gen = app.add_subcommand("gen-data", "Generate a synthetic tank-flow dataset");
    add_config_option(gen);
    add_seed_option(gen, c.seed);
    gen->add_option("--out", c.out, "Output dataset file");
    gen->add_option("--cases", c.gen.cases, "Number of cases")->capture_default_str();
    gen->add_option("--states", c.gen.states, "Stored states per case")->capture_default_str();
    gen->add_option("--grid", c.gen.grid, "Grid cells per side")->capture_default_str();
    gen->add_option("--dt", c.gen.dt, "Solver timestep")->capture_default_str();
    gen->add_option("--nu", c.gen.nu, "Diffusion coefficient")->capture_default_str();
    gen->add_option("--write-interval", c.gen.write_interval, "Solver steps per stored state")->capture_default_str();
    gen->add_option("--inlet-min", c.gen.inlet_min, "Lower inlet velocity")->capture_default_str();
    gen->add_option("--inlet-max", c.gen.inlet_max, "Upper inlet velocity")->capture_default_str();
    gen->add_option("--recirc-min", c.gen.recirc_min, "Lower recirculation rate")->capture_default_str();
    gen->add_option("--recirc-max", c.gen.recirc_max, "Upper recirculation rate")->capture_default_str();
    gen->add_option("--threads", c.gen.threads, "Solver threads")->capture_default_str();

    auto* train = app.add_subcommand("train", "Train one model with early stopping");
    add_config_option(train);
    add_seed_option(train, c.seed);
    add_train_options(train, c);
    train->add_option("--lr", c.train.learning_rate, "Learning rate")->capture_default_str();

    auto* search = app.add_subcommand("lr-search", "Learning-rate search over independent sessions");
    add_config_option(search);
    add_seed_option(search, c.seed);
    add_train_options(search, c);
    search->add_option("--sessions", c.search.sessions, "Number of sessions")->capture_default_str();
    search->add_option("--lr-low", c.search.lr_low, "Lowest learning rate")->capture_default_str();
    search->add_option("--lr-high", c.search.lr_high, "Highest learning rate")->capture_default_str();

    auto* eval = app.add_subcommand("evaluate", "Roll out on test cases and report metrics");
    add_config_option(eval);
    add_seed_option(eval, c.seed);
    eval->add_option("--data", c.data, "Dataset file");
    eval->add_option("--model", c.model, "Checkpoint file");
    eval->add_option("--norm", c.norm, "Norm stats JSON");
    eval->add_option("--split", c.split, "Split JSON written by train (default: recompute from the seed)");
    eval->add_option("--steps", c.eval.steps, "Rollout steps to report")->capture_default_str();
    eval->add_flag("--per-case", c.eval.per_case, "Include a per-case breakdown");
    eval->add_option("--out", c.out, "Metrics JSON output (default metrics.json)");

    auto* bench = app.add_subcommand("benchmark", "Training throughput benchmark");
    add_config_option(bench);
    add_seed_option(bench, c.seed);
    bench->add_option("--runs", c.bench.runs, "Repeated runs")->capture_default_str();
    bench->add_option("--epochs", c.bench.epochs, "Epochs per run, including the warm-up")->capture_default_str();
    bench->add_option("--samples", c.bench.samples, "Synthetic samples per epoch")->capture_default_str();
    bench->add_option("--features", c.bench.features, "Synthetic feature count")->capture_default_str();
    bench->add_option("--replicas", c.parallel.replicas, "Data-parallel replicas")->capture_default_str();
    bench->add_option("--workers", c.parallel.workers, "Loader worker threads")->capture_default_str();
    bench->add_option("--queue-capacity", c.parallel.queue_capacity, "Loader queue capacity")->capture_default_str();
    bench->add_option("--sample-delay-us", c.parallel.sample_delay_us, "Simulated preprocessing cost per sample")
        ->capture_default_str();
    bench->add_option("--batch-size", c.train.batch_size, "Per-replica batch size")->capture_default_str();
    bench->add_option("--variant", c.parallel.variant, "single_loader or sharded_loaders")->capture_default_str();
    bench->add_flag("--sweep", c.bench.sweep, "Sweep replica counts and both loader variants");
    bench->add_option("--replica-list", c.bench.replica_list, "Replica counts for --sweep")->capture_default_str();
    bench->add_option("--out", c.out, "Report JSON output (default throughput.json)");
    add_model_options(bench, c);

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "flowcast: error: " << e.what() << "\n" << app.help();
        return 2;
    }

    try {
        if (gen->parsed()) return cmd_gen_data(c, out);
        if (train->parsed()) return cmd_train(c, out);
        if (search->parsed()) return cmd_lr_search(c, out);
        if (eval->parsed()) return cmd_evaluate(c, out);
        if (bench->parsed()) return cmd_benchmark(c, out);
    } catch (const ConfigError& e) {
        err << "flowcast: error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        err << "flowcast: error: " << e.what() << "\n";
        return 1;
    }
    err << app.help();
    return 2;
}

}  // namespace flowcast::cli
