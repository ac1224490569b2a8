#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "flowcast/datagen.hpp"
#include "flowcast/layers.hpp"
#include "flowcast/pipeline.hpp"
#include "flowcast/tensor.hpp"

namespace flowcast {

/// sqrt(mean((a - b)^2)).
double rmse(std::span<const double> a, std::span<const double> b);

/// Sample Pearson correlation, clamped to [-1, 1]. Throws
/// UndefinedCorrelationError if either input is constant.
double pearson(std::span<const double> a, std::span<const double> b);

/// 1-based ranks; tied values share the mean of the ranks they span.
std::vector<double> average_ranks(std::span<const double> v);

/// Pearson correlation of average ranks.
double spearman(std::span<const double> a, std::span<const double> b);

/// Maps an input window [n_timesteps x F] to a prediction whose first row
/// is the next state.
template <typename T>
using Predictor = std::function<Tensor<T>(const Tensor<T>&)>;

/// Autoregressive prediction: each new row is appended to the window,
/// which then drops its oldest row. Returns [n_steps x F].
template <typename T>
Tensor<T> rollout(const Predictor<T>& predictor, const Tensor<T>& seed_window, std::size_t n_steps);

struct MetricsRow {
    std::size_t step = 0;
    double pearson = 0.0;
    double spearman = 0.0;
    double rmse = 0.0;
};

struct CaseMetrics {
    std::size_t case_index = 0;
    std::vector<MetricsRow> rows;
};

struct MetricsReport {
    std::vector<MetricsRow> rows;
    std::vector<CaseMetrics> per_case;  ///< filled only on request

    std::string to_json() const;
    /// Aligned columns: Step, Pearson's, Spearman's, RMSE.
    std::string to_table() const;
};

struct EvalOptions {
    std::vector<std::size_t> steps{10, 20, 100};
    std::size_t n_timesteps = 3;
    bool per_case = false;
};

/// Rolls every case out from its first n_timesteps normalized states and
/// compares the de-normalized prediction at each requested step k with
/// stored state n_timesteps - 1 + k. Metrics pool all cases, cells and
/// velocity components.
MetricsReport evaluate_at_steps(const Predictor<float>& predictor, const Dataset& data,
                                std::span<const std::size_t> cases, const NormStats& stats,
                                const EvalOptions& options = {});

MetricsReport evaluate_at_steps(const SurrogateModel<float>& model, const Dataset& data,
                                std::span<const std::size_t> cases, const NormStats& stats,
                                const EvalOptions& options = {});

void write_metrics_report(const std::filesystem::path& path, const MetricsReport& report);

}  // namespace flowcast
