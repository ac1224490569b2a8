#include "flowcast/layers.hpp"

#include <cmath>
#include <random>

#include <Eigen/Core>

#include "flowcast/errors.hpp"

namespace flowcast {

namespace {

constexpr std::size_t gate_offset(Gate g, std::size_t hidden) {
    return static_cast<std::size_t>(g) * hidden;
}

void require_vector(const Shape& s, std::size_t n, const char* what) {
    if (s.size() != 1 || s[0] != n) {
        throw DimensionError(std::string(what) + ": expected [" + std::to_string(n) + "], got " +
                             shape_string(s));
    }
}

void require_matrix(const Shape& s, std::size_t rows, std::size_t cols, const char* what) {
    if (s.size() != 2 || s[0] != rows || s[1] != cols) {
        throw DimensionError(std::string(what) + ": expected [" + std::to_string(rows) + "x" +
                             std::to_string(cols) + "], got " + shape_string(s));
    }
}

// y += W x for W [rows x cols] row-major.
template <typename T>
void gemv_acc(std::span<const T> w, std::size_t rows, std::size_t cols, const T* x, T* y) {
    using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;
    const auto r = static_cast<Eigen::Index>(rows);
    const auto c = static_cast<Eigen::Index>(cols);
    Eigen::Map<Vec>(y, r).noalias() += Eigen::Map<const Mat>(w.data(), r, c) * Eigen::Map<const Vec>(x, c);
}

// y += W^T x for W [rows x cols].
template <typename T>
void gemv_t_acc(std::span<const T> w, std::size_t rows, std::size_t cols, const T* x, T* y) {
    for (std::size_t r = 0; r < rows; ++r) {
        const T xr = x[r];
        if (xr == T{0}) continue;
        const T* wr = w.data() + r * cols;
        for (std::size_t c = 0; c < cols; ++c) y[c] += xr * wr[c];
    }
}

// G += a b^T for G [rows x cols].
template <typename T>
void outer_acc(std::span<T> g, std::size_t rows, std::size_t cols, const T* a, const T* b) {
    for (std::size_t r = 0; r < rows; ++r) {
        const T ar = a[r];
        if (ar == T{0}) continue;
        T* gr = g.data() + r * cols;
        for (std::size_t c = 0; c < cols; ++c) gr[c] += ar * b[c];
    }
}

template <typename T>
void fill_glorot(Tensor<T>& t, std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (T& v : t.data()) v = static_cast<T>(dist(rng));
}

}  // namespace

template <typename T>
LstmParams<T> LstmParams<T>::zeros(std::size_t hidden, std::size_t input_size) {
    return {Tensor<T>({4 * hidden, input_size}), Tensor<T>({4 * hidden, hidden}), Tensor<T>({4 * hidden})};
}

template <typename T>
void LstmParams<T>::validate() const {
    if (wh.rank() != 2) throw DimensionError("lstm: recurrent kernel must be rank 2");
    const std::size_t h = wh.extent(1);
    require_matrix(wh.shape(), 4 * h, h, "lstm recurrent kernel");
    if (wx.rank() != 2) throw DimensionError("lstm: input kernel must be rank 2");
    require_matrix(wx.shape(), 4 * h, wx.extent(1), "lstm input kernel");
    require_vector(b.shape(), 4 * h, "lstm bias");
}

template <typename T>
DenseParams<T> DenseParams<T>::zeros(std::size_t units, std::size_t input_size, Activation act) {
    return {Tensor<T>({units, input_size}), Tensor<T>({units}), act};
}

template <typename T>
void DenseParams<T>::validate() const {
    if (w.rank() != 2) throw DimensionError("dense: kernel must be rank 2");
    require_vector(b.shape(), w.extent(0), "dense bias");
}

void ModelConfig::validate() const {
    if (n_timesteps < 1) throw ConfigError("n_timesteps must be >= 1");
    if (n_outputs < 1) throw ConfigError("n_outputs must be >= 1");
    if (n_features < 1) throw ConfigError("n_features must be >= 1");
    if (hidden < 1) throw ConfigError("hidden must be >= 1");
    if (dense_hidden < 1) throw ConfigError("dense_hidden must be >= 1");
}

template <typename T>
SurrogateModel<T> SurrogateModel<T>::zeros(const ModelConfig& config) {
    config.validate();
    SurrogateModel m;
    m.config = config;
    m.encoder = LstmParams<T>::zeros(config.hidden, config.n_features);
    m.decoder = LstmParams<T>::zeros(config.hidden, config.hidden);
    m.dense1 = DenseParams<T>::zeros(config.dense_hidden, config.hidden, Activation::relu);
    m.dense2 = DenseParams<T>::zeros(config.n_features, config.dense_hidden, Activation::linear);
    return m;
}

template <typename T>
std::array<ParamRef<T>, kParamBlockCount> SurrogateModel<T>::parameters() {
    return {{{"encoder.wx", &encoder.wx},
             {"encoder.wh", &encoder.wh},
             {"encoder.b", &encoder.b},
             {"decoder.wx", &decoder.wx},
             {"decoder.wh", &decoder.wh},
             {"decoder.b", &decoder.b},
             {"dense1.w", &dense1.w},
             {"dense1.b", &dense1.b},
             {"dense2.w", &dense2.w},
             {"dense2.b", &dense2.b}}};
}

template <typename T>
std::array<ConstParamRef<T>, kParamBlockCount> SurrogateModel<T>::parameters() const {
    auto refs = const_cast<SurrogateModel*>(this)->parameters();
    std::array<ConstParamRef<T>, kParamBlockCount> out;
    for (std::size_t i = 0; i < refs.size(); ++i) out[i] = {refs[i].name, refs[i].tensor};
    return out;
}

template <typename T>
std::size_t SurrogateModel<T>::parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : parameters()) n += p.tensor->size();
    return n;
}

template <typename T>
void SurrogateModel<T>::validate() const {
    config.validate();
    encoder.validate();
    decoder.validate();
    dense1.validate();
    dense2.validate();
    const auto& c = config;
    require_matrix(encoder.wx.shape(), 4 * c.hidden, c.n_features, "encoder input kernel");
    require_matrix(decoder.wx.shape(), 4 * c.hidden, c.hidden, "decoder input kernel");
    require_matrix(decoder.wh.shape(), 4 * c.hidden, c.hidden, "decoder recurrent kernel");
    require_matrix(dense1.w.shape(), c.dense_hidden, c.hidden, "dense1 kernel");
    require_matrix(dense2.w.shape(), c.n_features, c.dense_hidden, "dense2 kernel");
    if (dense2.activation != Activation::linear) throw ConfigError("dense2 activation must be linear");
}

template <typename T>
SurrogateModel<T> init_surrogate(const ModelConfig& config, std::uint64_t seed) {
    auto m = SurrogateModel<T>::zeros(config);
    std::mt19937_64 rng(seed);
    const std::size_t h = config.hidden;
    fill_glorot(m.encoder.wx, config.n_features, 4 * h, rng);
    fill_glorot(m.encoder.wh, h, 4 * h, rng);
    fill_glorot(m.decoder.wx, h, 4 * h, rng);
    fill_glorot(m.decoder.wh, h, 4 * h, rng);
    fill_glorot(m.dense1.w, h, config.dense_hidden, rng);
    fill_glorot(m.dense2.w, config.dense_hidden, config.n_features, rng);
    for (auto* lstm : {&m.encoder, &m.decoder}) {
        auto b = lstm->b.data().subspan(gate_offset(Gate::forget, h), h);
        std::fill(b.begin(), b.end(), T{1});
    }
    return m;
}

template <typename To, typename From>
SurrogateModel<To> cast_model(const SurrogateModel<From>& m) {
    SurrogateModel<To> out;
    out.config = m.config;
    out.encoder = {cast<To>(m.encoder.wx), cast<To>(m.encoder.wh), cast<To>(m.encoder.b)};
    out.decoder = {cast<To>(m.decoder.wx), cast<To>(m.decoder.wh), cast<To>(m.decoder.b)};
    out.dense1 = {cast<To>(m.dense1.w), cast<To>(m.dense1.b), m.dense1.activation};
    out.dense2 = {cast<To>(m.dense2.w), cast<To>(m.dense2.b), m.dense2.activation};
    return out;
}

// ---------------------------------------------------------------------------
// LSTM

template <typename T>
LstmStep<T> lstm_cell_step(const Tensor<T>& x, const Tensor<T>& h_prev, const Tensor<T>& c_prev,
                           const LstmParams<T>& p) {
    const std::size_t h = p.hidden();
    const std::size_t f = p.input_size();
    require_vector(x.shape(), f, "lstm_cell_step x");
    require_vector(h_prev.shape(), h, "lstm_cell_step h_prev");
    require_vector(c_prev.shape(), h, "lstm_cell_step c_prev");

    LstmStep<T> out;
    auto& cache = out.cache;
    cache.x = x;
    cache.h_prev = h_prev;
    cache.c_prev = c_prev;
    cache.pre = p.b;
    T* z = cache.pre.data().data();
    gemv_acc<T>(p.wx.data(), 4 * h, f, x.data().data(), z);
    gemv_acc<T>(p.wh.data(), 4 * h, h, h_prev.data().data(), z);

    cache.gates = Tensor<T>({4 * h});
    T* a = cache.gates.data().data();
    for (std::size_t j = 0; j < 4 * h; ++j) {
        const bool candidate = j >= gate_offset(Gate::candidate, h) && j < gate_offset(Gate::output, h);
        a[j] = activate(z[j], candidate ? Activation::relu : Activation::sigmoid);
    }

    cache.c = Tensor<T>({h});
    cache.h = Tensor<T>({h});
    const T* ig = a + gate_offset(Gate::input, h);
    const T* fg = a + gate_offset(Gate::forget, h);
    const T* gg = a + gate_offset(Gate::candidate, h);
    const T* og = a + gate_offset(Gate::output, h);
    for (std::size_t k = 0; k < h; ++k) {
        const T c = fg[k] * c_prev[k] + ig[k] * gg[k];
        cache.c[k] = c;
        cache.h[k] = og[k] * activate(c, Activation::relu);
    }
    require_finite<T>(cache.c.data(), "lstm_cell_step cell state");
    require_finite<T>(cache.h.data(), "lstm_cell_step hidden state");
    out.h = cache.h;
    out.c = cache.c;
    return out;
}

template <typename T>
LstmCellGrads<T> lstm_cell_backward(const LstmParams<T>& p, const LstmStepCache<T>& cache,
                                    const Tensor<T>& dh, const Tensor<T>& dc_in, LstmParams<T>& grads,
                                    bool input_grad) {
    const std::size_t h = p.hidden();
    const std::size_t f = p.input_size();
    require_vector(dh.shape(), h, "lstm_cell_backward dh");
    require_vector(dc_in.shape(), h, "lstm_cell_backward dc");

    const T* a = cache.gates.data().data();
    const T* z = cache.pre.data().data();
    const T* ig = a + gate_offset(Gate::input, h);
    const T* fg = a + gate_offset(Gate::forget, h);
    const T* gg = a + gate_offset(Gate::candidate, h);
    const T* og = a + gate_offset(Gate::output, h);
    const T* zg = z + gate_offset(Gate::candidate, h);

    LstmCellGrads<T> out{Tensor<T>(), Tensor<T>({h}), Tensor<T>({h})};
    std::vector<T> dz(4 * h);
    for (std::size_t k = 0; k < h; ++k) {
        const T c = cache.c[k];
        const T dc = dc_in[k] + dh[k] * og[k] * activate_grad(c, Activation::relu);
        const T d_o = dh[k] * activate(c, Activation::relu);
        const T d_i = dc * gg[k];
        const T d_g = dc * ig[k];
        const T d_f = dc * cache.c_prev[k];
        out.dc_prev[k] = dc * fg[k];
        dz[gate_offset(Gate::input, h) + k] = d_i * ig[k] * (T{1} - ig[k]);
        dz[gate_offset(Gate::forget, h) + k] = d_f * fg[k] * (T{1} - fg[k]);
        dz[gate_offset(Gate::candidate, h) + k] = d_g * activate_grad(zg[k], Activation::relu);
        dz[gate_offset(Gate::output, h) + k] = d_o * og[k] * (T{1} - og[k]);
    }

    outer_acc<T>(grads.wx.data(), 4 * h, f, dz.data(), cache.x.data().data());
    outer_acc<T>(grads.wh.data(), 4 * h, h, dz.data(), cache.h_prev.data().data());
    auto gb = grads.b.data();
    for (std::size_t j = 0; j < 4 * h; ++j) gb[j] += dz[j];

    if (input_grad) {
        out.dx = Tensor<T>({f});
        gemv_t_acc<T>(p.wx.data(), 4 * h, f, dz.data(), out.dx.data().data());
    }
    gemv_t_acc<T>(p.wh.data(), 4 * h, h, dz.data(), out.dh_prev.data().data());
    return out;
}

template <typename T>
LstmForward<T> lstm_forward(const Tensor<T>& seq, const LstmParams<T>& p, bool return_sequences) {
    if (seq.rank() != 2) throw DimensionError("lstm_forward: expected [T x F] input, got " + shape_string(seq.shape()));
    const std::size_t steps = seq.extent(0);
    const std::size_t f = p.input_size();
    const std::size_t h = p.hidden();
    if (seq.extent(1) != f) {
        throw DimensionError("lstm_forward: feature extent " + std::to_string(seq.extent(1)) +
                             " does not match layer input " + std::to_string(f));
    }

    LstmForward<T> out;
    out.cache.return_sequences = return_sequences;
    out.cache.steps.reserve(steps);
    Tensor<T> hs = return_sequences ? Tensor<T>({steps, h}) : Tensor<T>();
    Tensor<T> h_prev({h});
    Tensor<T> c_prev({h});
    for (std::size_t t = 0; t < steps; ++t) {
        auto row = seq.row(t);
        Tensor<T> x({f}, std::vector<T>(row.begin(), row.end()));
        auto step = lstm_cell_step(x, h_prev, c_prev, p);
        if (return_sequences) std::copy(step.h.data().begin(), step.h.data().end(), hs.row(t).begin());
        h_prev = std::move(step.h);
        c_prev = std::move(step.c);
        out.cache.steps.push_back(std::move(step.cache));
    }
    out.output = return_sequences ? std::move(hs) : std::move(h_prev);
    return out;
}

template <typename T>
LstmBackward<T> lstm_backward(const LstmParams<T>& p, const LstmCache<T>& cache, const Tensor<T>& grad_out,
                              bool input_grad) {
    const std::size_t steps = cache.steps.size();
    if (steps == 0) throw EmptyInputError("lstm_backward: empty cache");
    const std::size_t h = p.hidden();
    const std::size_t f = p.input_size();
    if (cache.return_sequences) {
        require_matrix(grad_out.shape(), steps, h, "lstm_backward grad_out");
    } else {
        require_vector(grad_out.shape(), h, "lstm_backward grad_out");
    }

    LstmBackward<T> out{LstmParams<T>::zeros(h, f), input_grad ? Tensor<T>({steps, f}) : Tensor<T>()};
    Tensor<T> dh_next({h});
    Tensor<T> dc_next({h});
    for (std::size_t t = steps; t-- > 0;) {
        Tensor<T> dh = dh_next;
        if (cache.return_sequences) {
            auto g = grad_out.row(t);
            for (std::size_t k = 0; k < h; ++k) dh[k] += g[k];
        } else if (t == steps - 1) {
            for (std::size_t k = 0; k < h; ++k) dh[k] += grad_out[k];
        }
        auto cell = lstm_cell_backward(p, cache.steps[t], dh, dc_next, out.grads, input_grad);
        if (input_grad) std::copy(cell.dx.data().begin(), cell.dx.data().end(), out.grad_input.row(t).begin());
        dh_next = std::move(cell.dh_prev);
        dc_next = std::move(cell.dc_prev);
    }
    return out;
}

// ---------------------------------------------------------------------------
// RepeatVector and time-distributed Dense

template <typename T>
Tensor<T> repeat_vector(const Tensor<T>& v, std::size_t n) {
    if (n == 0) throw ConfigError("repeat_vector: n must be >= 1");
    if (v.rank() != 1) throw DimensionError("repeat_vector: expected a vector, got " + shape_string(v.shape()));
    const std::size_t h = v.size();
    Tensor<T> out({n, h});
    for (std::size_t r = 0; r < n; ++r) std::copy(v.data().begin(), v.data().end(), out.row(r).begin());
    return out;
}

template <typename T>
Tensor<T> repeat_vector_backward(const Tensor<T>& grad) {
    if (grad.rank() != 2) throw DimensionError("repeat_vector_backward: expected [n x H] gradient");
    const std::size_t h = grad.extent(1);
    Tensor<T> out({h});
    for (std::size_t r = 0; r < grad.extent(0); ++r) {
        auto g = grad.row(r);
        for (std::size_t k = 0; k < h; ++k) out[k] += g[k];
    }
    return out;
}

template <typename T>
DenseForward<T> time_distributed_dense(const Tensor<T>& seq, const DenseParams<T>& p) {
    if (seq.rank() != 2 || seq.extent(1) != p.input_size()) {
        throw DimensionError("time_distributed_dense: input " + shape_string(seq.shape()) +
                             " incompatible with kernel " + shape_string(p.w.shape()));
    }
    const std::size_t steps = seq.extent(0);
    const std::size_t u = p.units();
    DenseForward<T> out{Tensor<T>({steps, u}), {seq, Tensor<T>({steps, u})}};
    for (std::size_t t = 0; t < steps; ++t) {
        auto pre = out.cache.pre.row(t);
        std::copy(p.b.data().begin(), p.b.data().end(), pre.begin());
        gemv_acc<T>(p.w.data(), u, p.input_size(), seq.row(t).data(), pre.data());
        auto y = out.output.row(t);
        for (std::size_t k = 0; k < u; ++k) y[k] = activate(pre[k], p.activation);
    }
    require_finite<T>(out.output.data(), "time_distributed_dense");
    return out;
}

template <typename T>
DenseBackward<T> time_distributed_dense_backward(const DenseParams<T>& p, const DenseCache<T>& cache,
                                                 const Tensor<T>& grad_out) {
    require_same_shape(grad_out.shape(), cache.pre.shape(), "time_distributed_dense_backward");
    const std::size_t steps = grad_out.extent(0);
    const std::size_t u = p.units();
    const std::size_t f = p.input_size();
    DenseBackward<T> out{DenseParams<T>::zeros(u, f, p.activation), Tensor<T>({steps, f})};
    std::vector<T> dpre(u);
    for (std::size_t t = 0; t < steps; ++t) {
        auto g = grad_out.row(t);
        auto pre = cache.pre.row(t);
        for (std::size_t k = 0; k < u; ++k) dpre[k] = g[k] * activate_grad(pre[k], p.activation);
        outer_acc<T>(out.grads.w.data(), u, f, dpre.data(), cache.input.row(t).data());
        for (std::size_t k = 0; k < u; ++k) out.grads.b[k] += dpre[k];
        gemv_t_acc<T>(p.w.data(), u, f, dpre.data(), out.grad_input.row(t).data());
    }
    return out;
}

// ---------------------------------------------------------------------------
// Full model

template <typename T>
SurrogateForward<T> surrogate_forward(const SurrogateModel<T>& m, const Tensor<T>& window) {
    const auto& c = m.config;
    require_matrix(window.shape(), c.n_timesteps, c.n_features, "surrogate_forward window");
    SurrogateForward<T> out;
    auto enc = lstm_forward(window, m.encoder, false);
    auto repeated = repeat_vector(enc.output, c.n_outputs);
    auto dec = lstm_forward(repeated, m.decoder, true);
    auto d1 = time_distributed_dense(dec.output, m.dense1);
    auto d2 = time_distributed_dense(d1.output, m.dense2);
    out.prediction = std::move(d2.output);
    out.cache = {std::move(enc.cache), std::move(dec.cache), std::move(d1.cache), std::move(d2.cache)};
    return out;
}

template <typename T>
Tensor<T> surrogate_predict(const SurrogateModel<T>& m, const Tensor<T>& window) {
    return surrogate_forward(m, window).prediction;
}

template <typename T>
SurrogateGrads<T> surrogate_backward(const SurrogateModel<T>& m, const SurrogateCache<T>& cache,
                                     const Tensor<T>& grad_pred) {
    const auto& c = m.config;
    require_matrix(grad_pred.shape(), c.n_outputs, c.n_features, "surrogate_backward grad_pred");
    if (cache.encoder.steps.size() != c.n_timesteps || cache.decoder.steps.size() != c.n_outputs) {
        throw DimensionError("surrogate_backward: cache does not match model config");
    }
    SurrogateGrads<T> g;
    g.config = c;
    auto d2 = time_distributed_dense_backward(m.dense2, cache.dense2, grad_pred);
    auto d1 = time_distributed_dense_backward(m.dense1, cache.dense1, d2.grad_input);
    auto dec = lstm_backward(m.decoder, cache.decoder, d1.grad_input, true);
    auto enc_grad = repeat_vector_backward(dec.grad_input);
    auto enc = lstm_backward(m.encoder, cache.encoder, enc_grad, false);
    g.encoder = std::move(enc.grads);
    g.decoder = std::move(dec.grads);
    g.dense1 = std::move(d1.grads);
    g.dense2 = std::move(d2.grads);
    for (const auto& p : g.parameters()) {
        if (!all_finite_values<T>(p.tensor->data())) {
            throw NumericError("gradient " + std::string(p.name) + ": non-finite value");
        }
    }
    return g;
}

#define FLOWCAST_INSTANTIATE(T)                                                                              \
    template struct LstmParams<T>;                                                                           \
    template struct DenseParams<T>;                                                                          \
    template struct SurrogateModel<T>;                                                                       \
    template SurrogateModel<T> init_surrogate<T>(const ModelConfig&, std::uint64_t);                          \
    template LstmStep<T> lstm_cell_step<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,              \
                                           const LstmParams<T>&);                                            \
    template LstmCellGrads<T> lstm_cell_backward<T>(const LstmParams<T>&, const LstmStepCache<T>&,            \
                                                    const Tensor<T>&, const Tensor<T>&, LstmParams<T>&, bool); \
    template LstmForward<T> lstm_forward<T>(const Tensor<T>&, const LstmParams<T>&, bool);                   \
    template LstmBackward<T> lstm_backward<T>(const LstmParams<T>&, const LstmCache<T>&, const Tensor<T>&,   \
                                              bool);                                                         \
    template Tensor<T> repeat_vector<T>(const Tensor<T>&, std::size_t);                                      \
    template Tensor<T> repeat_vector_backward<T>(const Tensor<T>&);                                          \
    template DenseForward<T> time_distributed_dense<T>(const Tensor<T>&, const DenseParams<T>&);             \
    template DenseBackward<T> time_distributed_dense_backward<T>(const DenseParams<T>&, const DenseCache<T>&, \
                                                                 const Tensor<T>&);                          \
    template SurrogateForward<T> surrogate_forward<T>(const SurrogateModel<T>&, const Tensor<T>&);           \
    template Tensor<T> surrogate_predict<T>(const SurrogateModel<T>&, const Tensor<T>&);                     \
    template SurrogateGrads<T> surrogate_backward<T>(const SurrogateModel<T>&, const SurrogateCache<T>&,     \
                                                     const Tensor<T>&);

FLOWCAST_INSTANTIATE(float)
FLOWCAST_INSTANTIATE(double)

#undef FLOWCAST_INSTANTIATE

template SurrogateModel<float> cast_model<float, double>(const SurrogateModel<double>&);
template SurrogateModel<double> cast_model<double, float>(const SurrogateModel<float>&);
template SurrogateModel<float> cast_model<float, float>(const SurrogateModel<float>&);
template SurrogateModel<double> cast_model<double, double>(const SurrogateModel<double>&);

}  // namespace flowcast
