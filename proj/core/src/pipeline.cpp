#include "flowcast/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include <json.hpp>

#include "flowcast/binary_io.hpp"
#include "flowcast/errors.hpp"

namespace flowcast {

std::string NormStats::to_json() const {
    nlohmann::json j;
    j["means"] = means;
    j["stds"] = stds;
    return j.dump(2);
}

NormStats NormStats::from_json(const std::string& text) {
    NormStats s;
    try {
        const auto j = nlohmann::json::parse(text);
        s.means = j.at("means").get<std::vector<double>>();
        s.stds = j.at("stds").get<std::vector<double>>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("norm stats: ") + e.what());
    }
    if (s.means.size() != s.stds.size() || s.means.empty()) {
        throw FormatError("norm stats: means and stds must be non-empty and equally long");
    }
    for (double v : s.stds) {
        if (!(v >= kStdFloor)) throw FormatError("norm stats: std below floor");
    }
    return s;
}

NormStats compute_norm_stats(const Dataset& d, std::span<const std::size_t> case_indices) {
    if (case_indices.empty()) throw EmptyInputError("compute_norm_stats: no training cases");
    const std::size_t dims = d.n_dims;
    NormStats s{std::vector<double>(dims, 0.0), std::vector<double>(dims, 0.0)};
    std::size_t count = 0;
    for (std::size_t ci : case_indices) {
        const auto v = d.cases.at(ci).states.data();
        for (std::size_t i = 0; i < v.size(); ++i) s.means[i % dims] += v[i];
        count += v.size() / dims;
    }
    for (double& m : s.means) m /= static_cast<double>(count);
    for (std::size_t ci : case_indices) {
        const auto v = d.cases[ci].states.data();
        for (std::size_t i = 0; i < v.size(); ++i) {
            const double dev = v[i] - s.means[i % dims];
            s.stds[i % dims] += dev * dev;
        }
    }
    for (double& sd : s.stds) sd = std::max(std::sqrt(sd / static_cast<double>(count)), kStdFloor);
    return s;
}

namespace {

template <typename T, typename Fn>
Tensor<T> per_dim(const Tensor<T>& data, const NormStats& stats, Fn fn) {
    const std::size_t dims = stats.n_dims();
    if (data.shape().back() != dims) {
        throw DimensionError("normalization: last axis " + std::to_string(data.shape().back()) +
                             " does not match " + std::to_string(dims) + " stat dimensions");
    }
    Tensor<T> out(data.shape());
    auto in = data.data();
    auto o = out.data();
    for (std::size_t i = 0; i < in.size(); ++i) {
        const std::size_t d = i % dims;
        o[i] = static_cast<T>(fn(static_cast<double>(in[i]), stats.means[d], stats.stds[d]));
    }
    return out;
}

}  // namespace

template <typename T>
Tensor<T> apply_normalization(const Tensor<T>& data, const NormStats& stats) {
    return per_dim(data, stats, [](double x, double m, double s) { return (x - m) / s; });
}

template <typename T>
Tensor<T> inverse_normalization(const Tensor<T>& data, const NormStats& stats) {
    return per_dim(data, stats, [](double x, double m, double s) { return x * s + m; });
}

SplitSpec split_cases(std::size_t n_cases, std::uint64_t seed) {
    if (n_cases < 3) throw ConfigError("split_cases: need at least 3 cases, got " + std::to_string(n_cases));
    std::vector<std::size_t> perm(n_cases);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::mt19937_64 rng(seed);
    std::shuffle(perm.begin(), perm.end(), rng);

    const std::size_t trainval = n_cases * 8 / 10;
    const std::size_t val = std::max<std::size_t>(1, trainval * 2 / 10);
    SplitSpec s;
    s.seed = seed;
    s.validation.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(val));
    s.train.assign(perm.begin() + static_cast<std::ptrdiff_t>(val), perm.begin() + static_cast<std::ptrdiff_t>(trainval));
    s.test.assign(perm.begin() + static_cast<std::ptrdiff_t>(trainval), perm.end());
    return s;
}

template <typename T>
std::vector<SampleWindow<T>> make_windows(const Tensor<T>& states, std::size_t case_index, std::size_t n_timesteps,
                                          std::size_t n_outputs) {
    if (n_timesteps < 1 || n_outputs < 1) throw ConfigError("make_windows: window lengths must be >= 1");
    const std::size_t n_states = states.extent(0);
    const std::size_t features = states.size() / n_states;
    const auto flat = states.data();
    const std::size_t count = window_count(n_states, n_timesteps, n_outputs);
    std::vector<SampleWindow<T>> out;
    out.reserve(count);
    auto rows = [&](std::size_t first, std::size_t n) {
        auto src = flat.subspan(first * features, n * features);
        return Tensor<T>({n, features}, std::vector<T>(src.begin(), src.end()));
    };
    for (std::size_t start = 0; start < count; ++start) {
        out.push_back({rows(start, n_timesteps), rows(start + n_timesteps, n_outputs), case_index, start});
    }
    return out;
}

std::vector<SampleWindow<float>> make_windows(const CaseTrajectory& c, std::size_t case_index,
                                              std::size_t n_timesteps, std::size_t n_outputs) {
    return make_windows<float>(c.states, case_index, n_timesteps, n_outputs);
}

std::vector<SampleWindow<float>> make_normalized_windows(const Dataset& d, std::span<const std::size_t> cases,
                                                         const NormStats& stats, std::size_t n_timesteps,
                                                         std::size_t n_outputs) {
    std::vector<SampleWindow<float>> out;
    for (std::size_t ci : cases) {
        auto w = make_windows<float>(apply_normalization(d.cases.at(ci).states, stats), ci, n_timesteps, n_outputs);
        std::move(w.begin(), w.end(), std::back_inserter(out));
    }
    return out;
}

void write_norm_stats(const std::filesystem::path& path, const NormStats& stats) {
    write_file_atomic(path, stats.to_json());
}

NormStats read_norm_stats(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
    std::stringstream ss;
    ss << in.rdbuf();
    return NormStats::from_json(ss.str());
}

template Tensor<float> apply_normalization<float>(const Tensor<float>&, const NormStats&);
template Tensor<double> apply_normalization<double>(const Tensor<double>&, const NormStats&);
template Tensor<float> inverse_normalization<float>(const Tensor<float>&, const NormStats&);
template Tensor<double> inverse_normalization<double>(const Tensor<double>&, const NormStats&);
template std::vector<SampleWindow<float>> make_windows<float>(const Tensor<float>&, std::size_t, std::size_t,
                                                              std::size_t);
template std::vector<SampleWindow<double>> make_windows<double>(const Tensor<double>&, std::size_t, std::size_t,
                                                                std::size_t);

}  // namespace flowcast
