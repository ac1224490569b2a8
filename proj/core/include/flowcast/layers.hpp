#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string_view>
#include <vector>

#include "flowcast/tensor.hpp"

namespace flowcast {

/// Gate blocks inside the stacked 4H rows of an LSTM kernel, in storage order.
enum class Gate : std::size_t { input = 0, forget = 1, candidate = 2, output = 3 };

/// LSTM layer weights. Rows are stacked gate blocks in (i, f, g, o) order.
template <typename T>
struct LstmParams {
    Tensor<T> wx;  ///< [4H x F]
    Tensor<T> wh;  ///< [4H x H]
    Tensor<T> b;   ///< [4H]

    static LstmParams zeros(std::size_t hidden, std::size_t input_size);

    std::size_t hidden() const { return wh.extent(1); }
    std::size_t input_size() const { return wx.extent(1); }
    void validate() const;
};

template <typename T>
struct DenseParams {
    Tensor<T> w;  ///< [U x F]
    Tensor<T> b;  ///< [U]
    Activation activation = Activation::linear;

    static DenseParams zeros(std::size_t units, std::size_t input_size, Activation act);

    std::size_t units() const { return w.extent(0); }
    std::size_t input_size() const { return w.extent(1); }
    void validate() const;
};

struct ModelConfig {
    std::size_t n_timesteps = 3;
    std::size_t n_outputs = 1;
    std::size_t n_features = 1;
    std::size_t hidden = 10;
    std::size_t dense_hidden = 10;

    void validate() const;
    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

template <typename T>
struct ParamRef {
    std::string_view name;
    Tensor<T>* tensor;
};

template <typename T>
struct ConstParamRef {
    std::string_view name;
    const Tensor<T>* tensor;
};

inline constexpr std::size_t kParamBlockCount = 10;

/// Encoder LSTM -> repeat -> decoder LSTM -> dense(relu) -> dense(linear),
/// every dense applied per timestep. Gradient sets use the same type.
template <typename T>
struct SurrogateModel {
    ModelConfig config;
    LstmParams<T> encoder;
    LstmParams<T> decoder;
    DenseParams<T> dense1;
    DenseParams<T> dense2;

    static SurrogateModel zeros(const ModelConfig& config);

    /// Parameter tensors in checkpoint order: encoder (wx, wh, b), decoder
    /// (wx, wh, b), dense1 (w, b), dense2 (w, b).
    std::array<ParamRef<T>, kParamBlockCount> parameters();
    std::array<ConstParamRef<T>, kParamBlockCount> parameters() const;

    std::size_t parameter_count() const;
    void validate() const;

    friend bool operator==(const SurrogateModel& a, const SurrogateModel& b) {
        return a.config == b.config && a.encoder.wx == b.encoder.wx && a.encoder.wh == b.encoder.wh &&
               a.encoder.b == b.encoder.b && a.decoder.wx == b.decoder.wx &&
               a.decoder.wh == b.decoder.wh && a.decoder.b == b.decoder.b && a.dense1.w == b.dense1.w &&
               a.dense1.b == b.dense1.b && a.dense2.w == b.dense2.w && a.dense2.b == b.dense2.b;
    }
};

template <typename T>
using SurrogateGrads = SurrogateModel<T>;

/// Glorot-uniform kernels, forget-gate bias 1, remaining biases 0.
template <typename T>
SurrogateModel<T> init_surrogate(const ModelConfig& config, std::uint64_t seed);

template <typename To, typename From>
SurrogateModel<To> cast_model(const SurrogateModel<From>& m);

// ---------------------------------------------------------------------------
// LSTM

template <typename T>
struct LstmStepCache {
    Tensor<T> x;       ///< [F]
    Tensor<T> h_prev;  ///< [H]
    Tensor<T> c_prev;  ///< [H]
    Tensor<T> pre;     ///< [4H] gate pre-activations
    Tensor<T> gates;   ///< [4H] i, f, g, o after activation
    Tensor<T> c;       ///< [H]
    Tensor<T> h;       ///< [H]
};

template <typename T>
struct LstmStep {
    Tensor<T> h;
    Tensor<T> c;
    LstmStepCache<T> cache;
};

/// One step of the relu LSTM:
///   i, f, o = sigmoid(.), g = relu(.), c = f*c_prev + i*g, h = o*relu(c).
template <typename T>
LstmStep<T> lstm_cell_step(const Tensor<T>& x, const Tensor<T>& h_prev, const Tensor<T>& c_prev,
                           const LstmParams<T>& p);

template <typename T>
struct LstmCellGrads {
    Tensor<T> dx;
    Tensor<T> dh_prev;
    Tensor<T> dc_prev;
};

/// Reverse of lstm_cell_step. `dh` and `dc` are the total upstream gradients
/// reaching h and c; parameter gradients accumulate into `grads`.
template <typename T>
LstmCellGrads<T> lstm_cell_backward(const LstmParams<T>& p, const LstmStepCache<T>& cache,
                                    const Tensor<T>& dh, const Tensor<T>& dc, LstmParams<T>& grads,
                                    bool input_grad = true);

template <typename T>
struct LstmCache {
    std::vector<LstmStepCache<T>> steps;
    bool return_sequences = true;
};

template <typename T>
struct LstmForward {
    Tensor<T> output;  ///< [T x H] or [H]
    LstmCache<T> cache;
};

/// Runs the layer over `seq` [T x F] from zero initial state.
template <typename T>
LstmForward<T> lstm_forward(const Tensor<T>& seq, const LstmParams<T>& p, bool return_sequences);

template <typename T>
struct LstmBackward {
    LstmParams<T> grads;
    Tensor<T> grad_input;  ///< [T x F]; empty when not requested
};

/// Backpropagation through time for a cached forward pass.
template <typename T>
LstmBackward<T> lstm_backward(const LstmParams<T>& p, const LstmCache<T>& cache, const Tensor<T>& grad_out,
                              bool input_grad = true);

// ---------------------------------------------------------------------------
// RepeatVector and time-distributed Dense

template <typename T>
Tensor<T> repeat_vector(const Tensor<T>& v, std::size_t n);

/// Column sums of the upstream [n x H] gradient.
template <typename T>
Tensor<T> repeat_vector_backward(const Tensor<T>& grad);

template <typename T>
struct DenseCache {
    Tensor<T> input;  ///< [T x F]
    Tensor<T> pre;    ///< [T x U]
};

template <typename T>
struct DenseForward {
    Tensor<T> output;  ///< [T x U]
    DenseCache<T> cache;
};

template <typename T>
DenseForward<T> time_distributed_dense(const Tensor<T>& seq, const DenseParams<T>& p);

template <typename T>
struct DenseBackward {
    DenseParams<T> grads;
    Tensor<T> grad_input;  ///< [T x F]
};

template <typename T>
DenseBackward<T> time_distributed_dense_backward(const DenseParams<T>& p, const DenseCache<T>& cache,
                                                 const Tensor<T>& grad_out);

// ---------------------------------------------------------------------------
// Full model

template <typename T>
struct SurrogateCache {
    LstmCache<T> encoder;
    LstmCache<T> decoder;
    DenseCache<T> dense1;
    DenseCache<T> dense2;
};

template <typename T>
struct SurrogateForward {
    Tensor<T> prediction;  ///< [n_outputs x n_features]
    SurrogateCache<T> cache;
};

template <typename T>
SurrogateForward<T> surrogate_forward(const SurrogateModel<T>& m, const Tensor<T>& window);

template <typename T>
Tensor<T> surrogate_predict(const SurrogateModel<T>& m, const Tensor<T>& window);

template <typename T>
SurrogateGrads<T> surrogate_backward(const SurrogateModel<T>& m, const SurrogateCache<T>& cache,
                                     const Tensor<T>& grad_pred);

}  // namespace flowcast
