#include "flowcast/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include <json.hpp>

#include "flowcast/errors.hpp"
#include "flowcast/seed.hpp"

namespace flowcast {

template <typename T>
MaeResult<T> mae_loss(const Tensor<T>& pred, const Tensor<T>& target) {
    require_same_shape(pred.shape(), target.shape(), "mae_loss");
    const auto p = pred.data();
    const auto t = target.data();
    const std::size_t n = p.size();
    const T inv_n = T{1} / static_cast<T>(n);
    MaeResult<T> out{0.0, Tensor<T>(pred.shape())};
    auto g = out.grad.data();
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const T diff = p[i] - t[i];
        sum += std::abs(static_cast<double>(diff));
        g[i] = diff > T{0} ? inv_n : (diff < T{0} ? -inv_n : T{0});
    }
    out.loss = sum / static_cast<double>(n);
    if (!std::isfinite(out.loss)) throw NumericError("mae_loss: non-finite loss");
    return out;
}

template <typename T>
void adam_step(AdamState<T>& state, std::span<const ParamRef<T>> params, std::span<const ConstParamRef<T>> grads) {
    if (params.size() != grads.size()) throw DimensionError("adam_step: parameter and gradient counts differ");
    for (std::size_t i = 0; i < params.size(); ++i) {
        require_same_shape(params[i].tensor->shape(), grads[i].tensor->shape(), "adam_step");
        if (!all_finite_values<T>(grads[i].tensor->data())) {
            throw NumericError("adam_step: gradient of " + std::string(params[i].name) + ": non-finite value");
        }
    }
    if (state.m.empty()) {
        for (const auto& p : params) {
            state.m.emplace_back(p.tensor->shape());
            state.v.emplace_back(p.tensor->shape());
        }
    }
    if (state.m.size() != params.size()) throw DimensionError("adam_step: optimizer state does not mirror parameters");

    const auto& h = state.hyper;
    state.step += 1;
    const double t = static_cast<double>(state.step);
    const T b1 = static_cast<T>(h.beta1);
    const T b2 = static_cast<T>(h.beta2);
    const T c1 = static_cast<T>(1.0 - std::pow(h.beta1, t));
    const T c2 = static_cast<T>(1.0 - std::pow(h.beta2, t));
    const T lr = static_cast<T>(h.learning_rate);
    const T eps = static_cast<T>(h.epsilon);
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto theta = params[i].tensor->data();
        const auto g = grads[i].tensor->data();
        auto m = state.m[i].data();
        auto v = state.v[i].data();
        for (std::size_t k = 0; k < theta.size(); ++k) {
            m[k] = b1 * m[k] + (T{1} - b1) * g[k];
            v[k] = b2 * v[k] + (T{1} - b2) * g[k] * g[k];
            const T m_hat = m[k] / c1;
            const T v_hat = v[k] / c2;
            theta[k] -= lr * m_hat / (std::sqrt(v_hat) + eps);
        }
    }
}

template <typename T>
void adam_step(AdamState<T>& state, SurrogateModel<T>& model, const SurrogateGrads<T>& grads) {
    const auto p = model.parameters();
    const auto g = grads.parameters();
    adam_step<T>(state, std::span<const ParamRef<T>>(p), std::span<const ConstParamRef<T>>(g));
}

template <typename T>
double clip_by_global_norm(SurrogateGrads<T>& grads, double max_norm) {
    if (!(max_norm > 0.0)) throw ConfigError("clip_norm must be positive");
    double sq = 0.0;
    for (const auto& p : grads.parameters()) {
        for (T v : p.tensor->data()) sq += static_cast<double>(v) * static_cast<double>(v);
    }
    const double norm = std::sqrt(sq);
    if (norm > max_norm) {
        const T f = static_cast<T>(max_norm / norm);
        for (const auto& p : grads.parameters()) {
            for (T& v : p.tensor->data()) v *= f;
        }
    }
    return norm;
}

void TrainConfig::validate() const {
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (patience < 1) throw ConfigError("patience must be >= 1");
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
    if (!(min_delta >= 0.0)) throw ConfigError("min_delta must be non-negative");
    if (clip_norm && !(*clip_norm > 0.0)) throw ConfigError("clip_norm must be positive");
}

namespace {

template <typename T>
void accumulate(SurrogateGrads<T>& acc, const SurrogateGrads<T>& g) {
    auto a = acc.parameters();
    const auto b = g.parameters();
    for (std::size_t i = 0; i < a.size(); ++i) {
        auto dst = a[i].tensor->data();
        const auto src = b[i].tensor->data();
        for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
    }
}

template <typename T>
void scale_in_place(SurrogateGrads<T>& g, T factor) {
    for (const auto& p : g.parameters()) {
        for (T& v : p.tensor->data()) v *= factor;
    }
}

}  // namespace

template <typename T>
BatchGradient<T> batch_gradient(const SurrogateModel<T>& model, std::span<const SampleWindow<T>* const> batch) {
    if (batch.empty()) throw EmptyInputError("batch_gradient: empty batch");
    BatchGradient<T> out;
    out.grads = SurrogateGrads<T>::zeros(model.config);
    for (const auto* s : batch) {
        auto fwd = surrogate_forward(model, s->input);
        auto loss = mae_loss(fwd.prediction, s->target);
        auto g = surrogate_backward(model, fwd.cache, loss.grad);
        if (batch.size() == 1) {
            out.grads = std::move(g);
        } else {
            accumulate(out.grads, g);
        }
        out.loss += loss.loss;
    }
    out.samples = batch.size();
    out.loss /= static_cast<double>(batch.size());
    if (batch.size() > 1) scale_in_place(out.grads, T{1} / static_cast<T>(batch.size()));
    return out;
}

template <typename T>
BatchGradient<T> batch_gradient(const SurrogateModel<T>& model, std::span<const SampleWindow<T>> batch) {
    std::vector<const SampleWindow<T>*> ptrs;
    ptrs.reserve(batch.size());
    for (const auto& s : batch) ptrs.push_back(&s);
    return batch_gradient<T>(model, std::span<const SampleWindow<T>* const>(ptrs));
}

template <typename T>
double evaluate_loss(const SurrogateModel<T>& model, std::span<const SampleWindow<T>> samples) {
    if (samples.empty()) throw EmptyInputError("evaluate_loss: no samples");
    double sum = 0.0;
    for (const auto& s : samples) sum += mae_loss(surrogate_predict(model, s.input), s.target).loss;
    return sum / static_cast<double>(samples.size());
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t shuffle_seed, std::size_t epoch) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(derive_seed(shuffle_seed, epoch));
    std::shuffle(order.begin(), order.end(), rng);
    return order;
}

template <typename T>
double train_epoch(SurrogateModel<T>& model, AdamState<T>& state, std::span<const SampleWindow<T>> samples,
                   const TrainConfig& cfg, std::size_t epoch) {
    if (samples.empty()) throw EmptyInputError("train_epoch: empty sample set");
    cfg.validate();
    const auto order = epoch_order(samples.size(), cfg.shuffle_seed, epoch);
    std::vector<const SampleWindow<T>*> batch;
    batch.reserve(cfg.batch_size);
    double total = 0.0;
    for (std::size_t first = 0; first < order.size(); first += cfg.batch_size) {
        const std::size_t last = std::min(order.size(), first + cfg.batch_size);
        batch.clear();
        for (std::size_t k = first; k < last; ++k) batch.push_back(&samples[order[k]]);
        auto bg = batch_gradient<T>(model, std::span<const SampleWindow<T>* const>(batch));
        if (cfg.clip_norm) clip_by_global_norm(bg.grads, *cfg.clip_norm);
        adam_step(state, model, bg.grads);
        total += bg.loss * static_cast<double>(bg.samples);
    }
    return total / static_cast<double>(samples.size());
}

bool EarlyStopState::observe(double val_loss) {
    const double tol = 1e-12 * std::max(1.0, std::abs(min_delta));
    const bool improved = !std::isfinite(best) || (best - val_loss) - min_delta > tol;
    if (improved) {
        best = val_loss;
        epochs_since = 0;
    } else {
        epochs_since += 1;
    }
    return improved;
}

namespace {

nlohmann::json record_json(const EpochRecord& r) {
    return {{"epoch", r.epoch}, {"train_loss", r.train_loss}, {"val_loss", r.val_loss}, {"lr", r.lr},
            {"stopped", r.stopped}};
}

}  // namespace

std::string history_to_jsonl(std::span<const EpochRecord> history) {
    std::string out;
    for (const auto& r : history) {
        out += record_json(r).dump();
        out += '\n';
    }
    return out;
}

template <typename T>
FitResult<T> fit_with_early_stopping(SurrogateModel<T> model, std::span<const SampleWindow<T>> train,
                                     std::span<const SampleWindow<T>> val, const TrainConfig& cfg,
                                     const EpochRunner<T>& runner, const EpochCallback& on_epoch) {
    if (train.empty()) throw EmptyInputError("fit_with_early_stopping: empty training set");
    if (val.empty()) throw EmptyInputError("fit_with_early_stopping: empty validation set");
    cfg.validate();
    model.validate();

    AdamState<T> adam;
    adam.hyper.learning_rate = cfg.learning_rate;
    EarlyStopState stop{cfg.min_delta, cfg.patience};
    FitResult<T> result;
    result.best_model = model;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double train_loss = runner ? runner(model, adam, train, cfg, epoch)
                                         : train_epoch<T>(model, adam, train, cfg, epoch);
        const double val_loss = evaluate_loss<T>(model, val);
        if (stop.observe(val_loss)) {
            result.best_model = model;
            result.best_epoch = epoch + 1;
            result.best_val_loss = val_loss;
        }
        EpochRecord rec{epoch + 1, train_loss, val_loss, cfg.learning_rate, stop.should_stop()};
        result.history.push_back(rec);
        if (on_epoch) on_epoch(rec);
        if (stop.should_stop()) break;
    }
    return result;
}

void LrSearchConfig::validate() const {
    if (n_sessions < 1) throw ConfigError("lr_search: n_sessions must be >= 1");
    if (!(lr_low > 0.0) || !(lr_high > lr_low) || !std::isfinite(lr_high)) {
        throw ConfigError("lr_search: learning-rate range must satisfy 0 < low < high");
    }
}

std::vector<double> sample_learning_rates(const LrSearchConfig& cfg) {
    cfg.validate();
    std::mt19937_64 rng(cfg.seed);
    std::uniform_real_distribution<double> u(std::log(cfg.lr_low), std::log(cfg.lr_high));
    std::vector<double> out(cfg.n_sessions);
    for (double& lr : out) lr = std::clamp(std::exp(u(rng)), cfg.lr_low, cfg.lr_high);
    return out;
}

std::string sessions_to_json(std::span<const SessionRecord> sessions, std::size_t best_session) {
    nlohmann::json j;
    j["best_session"] = best_session;
    auto& arr = j["sessions"] = nlohmann::json::array();
    for (const auto& s : sessions) {
        nlohmann::json h = nlohmann::json::array();
        for (const auto& r : s.history) h.push_back(record_json(r));
        arr.push_back({{"index", s.index},
                       {"learning_rate", s.learning_rate},
                       {"init_seed", s.init_seed},
                       {"best_val_loss", s.best_val_loss},
                       {"best_epoch", s.best_epoch},
                       {"epochs_run", s.epochs_run},
                       {"history", std::move(h)}});
    }
    return j.dump(2);
}

template <typename T>
LrSearchResult<T> lr_search(const ModelConfig& model_config, std::span<const SampleWindow<T>> train,
                            std::span<const SampleWindow<T>> val, const TrainConfig& train_cfg,
                            const LrSearchConfig& search, const EpochRunner<T>& runner,
                            const std::function<void(const SessionRecord&)>& on_session) {
    const auto rates = sample_learning_rates(search);
    LrSearchResult<T> out;
    for (std::size_t k = 0; k < rates.size(); ++k) {
        TrainConfig cfg = train_cfg;
        cfg.learning_rate = rates[k];
        cfg.shuffle_seed = derive_seed(search.seed ^ 0x5EED5ull, k);
        const std::uint64_t init_seed = derive_seed(search.seed, k);
        auto fit = fit_with_early_stopping<T>(init_surrogate<T>(model_config, init_seed), train, val, cfg, runner);
        SessionRecord rec{k, rates[k], init_seed, fit.best_val_loss, fit.best_epoch, fit.history.size(),
                          std::move(fit.history)};
        if (k == 0 || rec.best_val_loss < out.sessions[out.best_session].best_val_loss) {
            out.best_session = k;
            out.best_model = std::move(fit.best_model);
        }
        if (on_session) on_session(rec);
        out.sessions.push_back(std::move(rec));
    }
    return out;
}

#define FLOWCAST_INSTANTIATE(T)                                                                                   \
    template MaeResult<T> mae_loss<T>(const Tensor<T>&, const Tensor<T>&);                                        \
    template void adam_step<T>(AdamState<T>&, std::span<const ParamRef<T>>, std::span<const ConstParamRef<T>>);   \
    template void adam_step<T>(AdamState<T>&, SurrogateModel<T>&, const SurrogateGrads<T>&);                       \
    template double clip_by_global_norm<T>(SurrogateGrads<T>&, double);                                            \
    template BatchGradient<T> batch_gradient<T>(const SurrogateModel<T>&, std::span<const SampleWindow<T>* const>); \
    template BatchGradient<T> batch_gradient<T>(const SurrogateModel<T>&, std::span<const SampleWindow<T>>);       \
    template double evaluate_loss<T>(const SurrogateModel<T>&, std::span<const SampleWindow<T>>);                 \
    template double train_epoch<T>(SurrogateModel<T>&, AdamState<T>&, std::span<const SampleWindow<T>>,            \
                                   const TrainConfig&, std::size_t);                                              \
    template FitResult<T> fit_with_early_stopping<T>(SurrogateModel<T>, std::span<const SampleWindow<T>>,          \
                                                     std::span<const SampleWindow<T>>, const TrainConfig&,         \
                                                     const EpochRunner<T>&, const EpochCallback&);                 \
    template LrSearchResult<T> lr_search<T>(const ModelConfig&, std::span<const SampleWindow<T>>,                  \
                                            std::span<const SampleWindow<T>>, const TrainConfig&,                  \
                                            const LrSearchConfig&, const EpochRunner<T>&,                          \
                                            const std::function<void(const SessionRecord&)>&);

FLOWCAST_INSTANTIATE(float)
FLOWCAST_INSTANTIATE(double)

#undef FLOWCAST_INSTANTIATE

}  // namespace flowcast
