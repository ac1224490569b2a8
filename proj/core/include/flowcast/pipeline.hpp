#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "flowcast/datagen.hpp"
#include "flowcast/tensor.hpp"

namespace flowcast {

inline constexpr double kStdFloor = 1e-8;

/// Per velocity-dimension mean and (population) standard deviation.
struct NormStats {
    std::vector<double> means;
    std::vector<double> stds;

    std::size_t n_dims() const { return means.size(); }
    std::string to_json() const;
    static NormStats from_json(const std::string& text);
    friend bool operator==(const NormStats&, const NormStats&) = default;
};

/// Statistics over every state and cell of the listed cases only.
NormStats compute_norm_stats(const Dataset& d, std::span<const std::size_t> case_indices);

/// x' = (x - mean_d) / std_d, where d indexes the last axis.
template <typename T>
Tensor<T> apply_normalization(const Tensor<T>& data, const NormStats& stats);

template <typename T>
Tensor<T> inverse_normalization(const Tensor<T>& data, const NormStats& stats);

struct SplitSpec {
    std::uint64_t seed = 0;
    std::vector<std::size_t> train;
    std::vector<std::size_t> validation;
    std::vector<std::size_t> test;
};

/// Shuffles case indices, keeps floor(0.8 n) for train+validation (the
/// rest is test) and moves floor(0.2 * that) of them, at least one, to
/// validation.
SplitSpec split_cases(std::size_t n_cases, std::uint64_t seed);

template <typename T>
struct SampleWindow {
    Tensor<T> input;   ///< [n_timesteps x n_cells*n_dims]
    Tensor<T> target;  ///< [n_outputs x n_cells*n_dims]
    std::size_t case_index = 0;
    std::size_t start = 0;
};

inline std::size_t window_count(std::size_t n_states, std::size_t n_timesteps, std::size_t n_outputs) {
    const std::size_t span = n_timesteps + n_outputs;
    return n_states >= span ? n_states - span + 1 : 0;
}

/// Sliding windows over one case; targets immediately follow the inputs.
template <typename T>
std::vector<SampleWindow<T>> make_windows(const Tensor<T>& states, std::size_t case_index,
                                          std::size_t n_timesteps = 3, std::size_t n_outputs = 1);

std::vector<SampleWindow<float>> make_windows(const CaseTrajectory& c, std::size_t case_index,
                                              std::size_t n_timesteps = 3, std::size_t n_outputs = 1);

/// Normalized windows for every listed case, in case order.
std::vector<SampleWindow<float>> make_normalized_windows(const Dataset& d, std::span<const std::size_t> cases,
                                                         const NormStats& stats, std::size_t n_timesteps = 3,
                                                         std::size_t n_outputs = 1);

void write_norm_stats(const std::filesystem::path& path, const NormStats& stats);
NormStats read_norm_stats(const std::filesystem::path& path);

}  // namespace flowcast
