#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "flowcast/layers.hpp"
#include "flowcast/pipeline.hpp"

namespace flowcast {

template <typename T>
struct MaeResult {
    double loss = 0.0;
    Tensor<T> grad;  ///< sign(pred - target) / N, with sign(0) = 0
};

/// Mean absolute error over all coordinates and its gradient w.r.t. `pred`.
template <typename T>
MaeResult<T> mae_loss(const Tensor<T>& pred, const Tensor<T>& target);

struct AdamHyper {
    double learning_rate = 0.00025;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-7;
};

template <typename T>
struct AdamState {
    AdamHyper hyper;
    std::uint64_t step = 0;
    std::vector<Tensor<T>> m;  ///< first moments, one per parameter tensor
    std::vector<Tensor<T>> v;  ///< second moments
};

/// Bias-corrected Adam:
///   m <- b1 m + (1-b1) g;  v <- b2 v + (1-b2) g^2
///   theta <- theta - lr * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps)
/// Moments are created on the first call. Throws NumericError naming the
/// parameter block if a gradient is not finite; nothing is updated then.
template <typename T>
void adam_step(AdamState<T>& state, std::span<const ParamRef<T>> params, std::span<const ConstParamRef<T>> grads);

template <typename T>
void adam_step(AdamState<T>& state, SurrogateModel<T>& model, const SurrogateGrads<T>& grads);

/// Scales `grads` in place so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
template <typename T>
double clip_by_global_norm(SurrogateGrads<T>& grads, double max_norm);

struct TrainConfig {
    std::size_t epochs = 100;
    std::size_t batch_size = 1;
    std::uint64_t shuffle_seed = 0;
    double learning_rate = 0.00025;
    double min_delta = 0.0001;
    std::size_t patience = 10;
    std::optional<double> clip_norm;

    void validate() const;
};

template <typename T>
struct BatchGradient {
    double loss = 0.0;  ///< mean MAE over the batch
    SurrogateGrads<T> grads;
    std::size_t samples = 0;
};

/// Mean loss and mean gradient over a mini-batch.
template <typename T>
BatchGradient<T> batch_gradient(const SurrogateModel<T>& model, std::span<const SampleWindow<T>* const> batch);

template <typename T>
BatchGradient<T> batch_gradient(const SurrogateModel<T>& model, std::span<const SampleWindow<T>> batch);

/// Mean per-sample MAE without gradients.
template <typename T>
double evaluate_loss(const SurrogateModel<T>& model, std::span<const SampleWindow<T>> samples);

/// Seeded per-epoch visiting order; a permutation of [0, n).
std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t shuffle_seed, std::size_t epoch);

/// One full pass in epoch_order(); one Adam step per mini-batch (the last
/// batch may be short). Returns the mean per-sample training loss.
template <typename T>
double train_epoch(SurrogateModel<T>& model, AdamState<T>& state, std::span<const SampleWindow<T>> samples,
                   const TrainConfig& cfg, std::size_t epoch = 0);

template <typename T>
using EpochRunner = std::function<double(SurrogateModel<T>&, AdamState<T>&, std::span<const SampleWindow<T>>,
                                         const TrainConfig&, std::size_t epoch)>;

/// Improvement means best - loss > min_delta, measured against the best
/// loss so far. Differences within 1e-12 relative of min_delta count as
/// equal, so a step of exactly min_delta is not an improvement.
struct EarlyStopState {
    double min_delta = 0.0001;
    std::size_t patience = 10;
    double best = std::numeric_limits<double>::infinity();
    std::size_t epochs_since = 0;

    /// Records one validation loss. Returns true if it improved.
    bool observe(double val_loss);
    bool should_stop() const { return epochs_since >= patience; }
};

struct EpochRecord {
    std::size_t epoch = 0;  ///< 1-based
    double train_loss = 0.0;
    double val_loss = 0.0;
    double lr = 0.0;
    bool stopped = false;
};

std::string history_to_jsonl(std::span<const EpochRecord> history);

template <typename T>
struct FitResult {
    SurrogateModel<T> best_model;
    std::vector<EpochRecord> history;
    std::size_t best_epoch = 0;
    double best_val_loss = std::numeric_limits<double>::infinity();
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Trains until `patience` consecutive non-improving epochs or cfg.epochs,
/// returning the parameters of the best validation epoch.
template <typename T>
FitResult<T> fit_with_early_stopping(SurrogateModel<T> model, std::span<const SampleWindow<T>> train,
                                     std::span<const SampleWindow<T>> val, const TrainConfig& cfg,
                                     const EpochRunner<T>& runner = {}, const EpochCallback& on_epoch = {});

struct LrSearchConfig {
    std::size_t n_sessions = 10;
    double lr_low = 1e-7;
    double lr_high = 1e-5;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Learning rates drawn log-uniformly from [lr_low, lr_high].
std::vector<double> sample_learning_rates(const LrSearchConfig& cfg);

struct SessionRecord {
    std::size_t index = 0;
    double learning_rate = 0.0;
    std::uint64_t init_seed = 0;
    double best_val_loss = 0.0;
    std::size_t best_epoch = 0;
    std::size_t epochs_run = 0;
    std::vector<EpochRecord> history;
};

template <typename T>
struct LrSearchResult {
    std::vector<SessionRecord> sessions;
    std::size_t best_session = 0;
    SurrogateModel<T> best_model;
};

std::string sessions_to_json(std::span<const SessionRecord> sessions, std::size_t best_session);

/// Independent early-stopped sessions with sampled learning rates; the
/// winner has the lowest best validation loss.
template <typename T>
LrSearchResult<T> lr_search(const ModelConfig& model_config, std::span<const SampleWindow<T>> train,
                            std::span<const SampleWindow<T>> val, const TrainConfig& train_cfg,
                            const LrSearchConfig& search, const EpochRunner<T>& runner = {},
                            const std::function<void(const SessionRecord&)>& on_session = {});

}  // namespace flowcast
