#include "flowcast/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include <json.hpp>

#include "flowcast/binary_io.hpp"
#include "flowcast/errors.hpp"

namespace flowcast {

namespace {

void require_pair(std::span<const double> a, std::span<const double> b, std::size_t min_len, const char* what) {
    if (a.size() != b.size()) {
        throw DimensionError(std::string(what) + ": length mismatch " + std::to_string(a.size()) + " vs " +
                             std::to_string(b.size()));
    }
    if (a.size() < min_len) {
        throw EmptyInputError(std::string(what) + ": need at least " + std::to_string(min_len) + " values");
    }
}

}  // namespace

double rmse(std::span<const double> a, std::span<const double> b) {
    require_pair(a, b, 1, "rmse");
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        sum += d * d;
    }
    return std::sqrt(sum / static_cast<double>(a.size()));
}

double pearson(std::span<const double> a, std::span<const double> b) {
    require_pair(a, b, 2, "pearson");
    const double n = static_cast<double>(a.size());
    const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
    const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double da = a[i] - ma;
        const double db = b[i] - mb;
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if (!(saa > 0.0) || !(sbb > 0.0)) {
        throw UndefinedCorrelationError("pearson: correlation undefined for a constant input");
    }
    return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

std::vector<double> average_ranks(std::span<const double> v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t x, std::size_t y) { return v[x] < v[y]; });
    std::vector<double> ranks(v.size());
    std::size_t i = 0;
    while (i < idx.size()) {
        std::size_t j = i + 1;
        while (j < idx.size() && v[idx[j]] == v[idx[i]]) ++j;
        const double r = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
        for (std::size_t k = i; k < j; ++k) ranks[idx[k]] = r;
        i = j;
    }
    return ranks;
}

double spearman(std::span<const double> a, std::span<const double> b) {
    require_pair(a, b, 2, "spearman");
    const auto ra = average_ranks(a);
    const auto rb = average_ranks(b);
    try {
        return pearson(ra, rb);
    } catch (const UndefinedCorrelationError&) {
        throw UndefinedCorrelationError("spearman: correlation undefined for a constant input");
    }
}

template <typename T>
Tensor<T> rollout(const Predictor<T>& predictor, const Tensor<T>& seed_window, std::size_t n_steps) {
    if (seed_window.rank() != 2) {
        throw DimensionError("rollout: seed window must be [n_timesteps x F], got " + shape_string(seed_window.shape()));
    }
    const std::size_t nt = seed_window.extent(0);
    const std::size_t f = seed_window.extent(1);
    if (n_steps < 1) throw ConfigError("rollout: n_steps must be >= 1");
    Tensor<T> out({n_steps, f});
    Tensor<T> window = seed_window;
    for (std::size_t k = 0; k < n_steps; ++k) {
        const Tensor<T> pred = predictor(window);
        if (pred.size() < f || pred.size() % f != 0) {
            throw DimensionError("rollout: predictor returned " + shape_string(pred.shape()) + " for " +
                                 std::to_string(f) + " features");
        }
        const auto next = pred.data().subspan(0, f);
        std::copy(next.begin(), next.end(), out.row(k).begin());
        auto w = window.data();
        std::copy(w.begin() + static_cast<std::ptrdiff_t>(f), w.end(), w.begin());
        std::copy(next.begin(), next.end(), w.begin() + static_cast<std::ptrdiff_t>((nt - 1) * f));
    }
    return out;
}

namespace {

MetricsRow metrics_for(std::size_t step, std::span<const double> pred, std::span<const double> truth) {
    return {step, pearson(pred, truth), spearman(pred, truth), rmse(pred, truth)};
}

}  // namespace

MetricsReport evaluate_at_steps(const Predictor<float>& predictor, const Dataset& data,
                                std::span<const std::size_t> cases, const NormStats& stats,
                                const EvalOptions& options) {
    if (cases.empty()) throw EmptyInputError("evaluate_at_steps: no test cases");
    if (options.steps.empty()) throw ConfigError("evaluate_at_steps: no steps requested");
    if (options.n_timesteps < 1) throw ConfigError("evaluate_at_steps: n_timesteps must be >= 1");
    const std::size_t nt = options.n_timesteps;
    for (std::size_t s : options.steps) {
        if (s < 1) throw ConfigError("evaluate_at_steps: steps are 1-based");
    }
    const std::size_t max_step = *std::max_element(options.steps.begin(), options.steps.end());

    std::vector<std::vector<double>> pooled_pred(options.steps.size());
    std::vector<std::vector<double>> pooled_true(options.steps.size());
    MetricsReport report;

    for (std::size_t ci : cases) {
        if (ci >= data.cases.size()) {
            throw ConfigError("evaluate_at_steps: case " + std::to_string(ci) + " does not exist");
        }
        const auto& states = data.cases[ci].states;
        const std::size_t n_states = states.extent(0);
        if (n_states < max_step + nt) {
            throw ConfigError("evaluate_at_steps: case " + std::to_string(ci) + " has " + std::to_string(n_states) +
                              " states; step " + std::to_string(max_step) + " needs at least " +
                              std::to_string(max_step + nt));
        }
        const std::size_t f = states.size() / n_states;
        const auto norm = apply_normalization(states, stats);
        const auto first = norm.data().subspan(0, nt * f);
        Tensor<float> seed({nt, f}, std::vector<float>(first.begin(), first.end()));
        const auto predicted = rollout<float>(predictor, seed, max_step);
        const auto denorm = inverse_normalization(predicted.reshaped({max_step, f / stats.n_dims(), stats.n_dims()}),
                                                  stats);

        CaseMetrics cm{ci, {}};
        for (std::size_t k = 0; k < options.steps.size(); ++k) {
            const std::size_t step = options.steps[k];
            const auto p = denorm.data().subspan((step - 1) * f, f);
            const auto t = states.data().subspan((nt - 1 + step) * f, f);
            std::vector<double> pv(p.begin(), p.end());
            std::vector<double> tv(t.begin(), t.end());
            if (options.per_case) cm.rows.push_back(metrics_for(step, pv, tv));
            pooled_pred[k].insert(pooled_pred[k].end(), pv.begin(), pv.end());
            pooled_true[k].insert(pooled_true[k].end(), tv.begin(), tv.end());
        }
        if (options.per_case) report.per_case.push_back(std::move(cm));
    }
    for (std::size_t k = 0; k < options.steps.size(); ++k) {
        report.rows.push_back(metrics_for(options.steps[k], pooled_pred[k], pooled_true[k]));
    }
    return report;
}

MetricsReport evaluate_at_steps(const SurrogateModel<float>& model, const Dataset& data,
                                std::span<const std::size_t> cases, const NormStats& stats,
                                const EvalOptions& options) {
    if (model.config.n_timesteps != options.n_timesteps) {
        throw ConfigError("evaluate_at_steps: model window length " + std::to_string(model.config.n_timesteps) +
                          " differs from n_timesteps " + std::to_string(options.n_timesteps));
    }
    Predictor<float> predictor = [&model](const Tensor<float>& w) { return surrogate_predict(model, w); };
    return evaluate_at_steps(predictor, data, cases, stats, options);
}

namespace {

nlohmann::json rows_json(const std::vector<MetricsRow>& rows) {
    auto arr = nlohmann::json::array();
    for (const auto& r : rows) {
        arr.push_back({{"step", r.step}, {"pearson", r.pearson}, {"spearman", r.spearman}, {"rmse", r.rmse}});
    }
    return arr;
}

}  // namespace

std::string MetricsReport::to_json() const {
    nlohmann::json j;
    j["rows"] = rows_json(rows);
    if (!per_case.empty()) {
        auto arr = nlohmann::json::array();
        for (const auto& c : per_case) arr.push_back({{"case", c.case_index}, {"rows", rows_json(c.rows)}});
        j["per_case"] = std::move(arr);
    }
    return j.dump(2);
}

std::string MetricsReport::to_table() const {
    std::string out;
    char line[128];
    std::snprintf(line, sizeof line, "%6s  %10s  %10s  %12s\n", "Step", "Pearson's", "Spearman's", "RMSE");
    out += line;
    for (const auto& r : rows) {
        std::snprintf(line, sizeof line, "%6zu  %10.3f  %10.3f  %12.6f\n", r.step, r.pearson, r.spearman, r.rmse);
        out += line;
    }
    return out;
}

void write_metrics_report(const std::filesystem::path& path, const MetricsReport& report) {
    write_file_atomic(path, report.to_json());
}

template Tensor<float> rollout<float>(const Predictor<float>&, const Tensor<float>&, std::size_t);
template Tensor<double> rollout<double>(const Predictor<double>&, const Tensor<double>&, std::size_t);

}  // namespace flowcast
