#include "flowcast/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "flowcast/errors.hpp"

namespace flowcast {

std::size_t shape_size(const Shape& shape) {
    std::size_t n = 1;
    for (std::size_t e : shape) n *= e;
    return n;
}

std::string shape_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

namespace {

void validate_shape(const Shape& shape) {
    if (shape.empty()) throw DimensionError("tensor shape must have at least one axis");
    for (std::size_t e : shape) {
        if (e == 0) throw DimensionError("tensor extents must be positive, got " + shape_string(shape));
    }
}

void require_rank2(const Shape& s, const char* what) {
    if (s.size() != 2) {
        throw DimensionError(std::string(what) + ": expected a rank-2 tensor, got " + shape_string(s));
    }
}

}  // namespace

void require_same_shape(const Shape& a, const Shape& b, const char* what) {
    if (a != b) {
        throw DimensionError(std::string(what) + ": shape mismatch " + shape_string(a) + " vs " +
                             shape_string(b));
    }
}

template <typename T>
void require_finite(std::span<const T> values, std::string_view what) {
    if (!all_finite_values(values)) throw NumericError(std::string(what) + ": non-finite value");
}

template <typename T>
Tensor<T>::Tensor(Shape shape) : shape_(std::move(shape)) {
    validate_shape(shape_);
    data_.assign(shape_size(shape_), T{0});
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
    validate_shape(shape_);
    if (data_.size() != shape_size(shape_)) {
        throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                             " does not match shape " + shape_string(shape_));
    }
}

template <typename T>
Tensor<T> Tensor<T>::filled(Shape shape, T value) {
    Tensor t(std::move(shape));
    std::fill(t.data_.begin(), t.data_.end(), value);
    return t;
}

template <typename T>
Tensor<T> Tensor<T>::identity(std::size_t n) {
    Tensor t({n, n});
    for (std::size_t i = 0; i < n; ++i) t.data_[i * n + i] = T{1};
    return t;
}

template <typename T>
Tensor<T> Tensor<T>::from_rows(std::initializer_list<std::initializer_list<T>> rows) {
    if (rows.size() == 0) throw DimensionError("from_rows: no rows");
    const std::size_t cols = rows.begin()->size();
    std::vector<T> data;
    data.reserve(rows.size() * cols);
    for (const auto& r : rows) {
        if (r.size() != cols) throw DimensionError("from_rows: ragged rows");
        data.insert(data.end(), r.begin(), r.end());
    }
    return Tensor({rows.size(), cols}, std::move(data));
}

template <typename T>
Tensor<T> Tensor<T>::from_values(std::initializer_list<T> values) {
    return Tensor({values.size()}, std::vector<T>(values));
}

template <typename T>
std::size_t Tensor<T>::extent(std::size_t axis) const {
    if (axis >= shape_.size()) {
        throw DimensionError("axis " + std::to_string(axis) + " out of range for " + shape_string(shape_));
    }
    return shape_[axis];
}

template <typename T>
T Tensor<T>::at(std::size_t r, std::size_t c) const {
    require_rank2(shape_, "at");
    return data_[r * shape_[1] + c];
}

template <typename T>
T& Tensor<T>::at(std::size_t r, std::size_t c) {
    require_rank2(shape_, "at");
    return data_[r * shape_[1] + c];
}

template <typename T>
std::span<const T> Tensor<T>::row(std::size_t r) const {
    require_rank2(shape_, "row");
    if (r >= shape_[0]) throw DimensionError("row index out of range");
    return std::span<const T>(data_).subspan(r * shape_[1], shape_[1]);
}

template <typename T>
std::span<T> Tensor<T>::row(std::size_t r) {
    require_rank2(shape_, "row");
    if (r >= shape_[0]) throw DimensionError("row index out of range");
    return std::span<T>(data_).subspan(r * shape_[1], shape_[1]);
}

template <typename T>
Tensor<T> Tensor<T>::reshaped(Shape shape) const {
    if (shape_size(shape) != data_.size()) {
        throw DimensionError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
    }
    return Tensor(std::move(shape), data_);
}

template <typename T>
bool Tensor<T>::all_finite() const noexcept {
    return all_finite_values<T>(data_);
}

std::string to_string(Activation kind) {
    switch (kind) {
    case Activation::relu: return "relu";
    case Activation::sigmoid: return "sigmoid";
    case Activation::linear: return "linear";
    }
    return "unknown";
}

Activation activation_from_string(const std::string& name) {
    if (name == "relu") return Activation::relu;
    if (name == "sigmoid") return Activation::sigmoid;
    if (name == "linear") return Activation::linear;
    throw ConfigError("unknown activation '" + name + "'");
}

template <typename T>
T activate(T x, Activation kind) noexcept {
    switch (kind) {
    case Activation::relu: return x > T{0} ? x : T{0};
    case Activation::sigmoid: return T{1} / (T{1} + std::exp(-x));
    case Activation::linear: return x;
    }
    return x;
}

template <typename T>
T activate_grad(T x, Activation kind) noexcept {
    switch (kind) {
    case Activation::relu: return x > T{0} ? T{1} : T{0};
    case Activation::sigmoid: {
        const T s = activate(x, Activation::sigmoid);
        return s * (T{1} - s);
    }
    case Activation::linear: return T{1};
    }
    return T{1};
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    require_rank2(a.shape(), "matmul lhs");
    require_rank2(b.shape(), "matmul rhs");
    const std::size_t m = a.extent(0), k = a.extent(1), n = b.extent(1);
    if (b.extent(0) != k) {
        throw DimensionError("matmul: inner extents differ " + shape_string(a.shape()) + " x " +
                             shape_string(b.shape()));
    }
    Tensor<T> out({m, n});
    auto o = out.data();
    auto ad = a.data();
    auto bd = b.data();
    for (std::size_t i = 0; i < m; ++i) {
        T* orow = o.data() + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const T aip = ad[i * k + p];
            const T* brow = bd.data() + p * n;
            for (std::size_t j = 0; j < n; ++j) orow[j] += aip * brow[j];
        }
    }
    require_finite<T>(out.data(), "matmul");
    return out;
}

template <typename T>
Tensor<T> activation(const Tensor<T>& x, Activation kind) {
    Tensor<T> out(x.shape());
    std::transform(x.data().begin(), x.data().end(), out.data().begin(),
                   [kind](T v) { return activate(v, kind); });
    require_finite<T>(out.data(), "activation");
    return out;
}

template <typename T>
Tensor<T> activation_grad(const Tensor<T>& x, Activation kind) {
    Tensor<T> out(x.shape());
    std::transform(x.data().begin(), x.data().end(), out.data().begin(),
                   [kind](T v) { return activate_grad(v, kind); });
    require_finite<T>(out.data(), "activation_grad");
    return out;
}

namespace {

template <typename T, typename Op>
Tensor<T> zip(const Tensor<T>& a, const Tensor<T>& b, const char* what, Op op) {
    require_same_shape(a.shape(), b.shape(), what);
    Tensor<T> out(a.shape());
    std::transform(a.data().begin(), a.data().end(), b.data().begin(), out.data().begin(), op);
    require_finite<T>(out.data(), what);
    return out;
}

}  // namespace

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    return zip(a, b, "add", [](T x, T y) { return x + y; });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    return zip(a, b, "sub", [](T x, T y) { return x - y; });
}

template <typename T>
Tensor<T> hadamard(const Tensor<T>& a, const Tensor<T>& b) {
    return zip(a, b, "hadamard", [](T x, T y) { return x * y; });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
    Tensor<T> out(a.shape());
    std::transform(a.data().begin(), a.data().end(), out.data().begin(),
                   [factor](T x) { return x * factor; });
    require_finite<T>(out.data(), "scale");
    return out;
}

#define FLOWCAST_INSTANTIATE(T)                                                  \
    template class Tensor<T>;                                                    \
    template void require_finite<T>(std::span<const T>, std::string_view);     \
    template T activate<T>(T, Activation) noexcept;                              \
    template T activate_grad<T>(T, Activation) noexcept;                         \
    template Tensor<T> matmul<T>(const Tensor<T>&, const Tensor<T>&);            \
    template Tensor<T> activation<T>(const Tensor<T>&, Activation);              \
    template Tensor<T> activation_grad<T>(const Tensor<T>&, Activation);         \
    template Tensor<T> add<T>(const Tensor<T>&, const Tensor<T>&);               \
    template Tensor<T> sub<T>(const Tensor<T>&, const Tensor<T>&);               \
    template Tensor<T> hadamard<T>(const Tensor<T>&, const Tensor<T>&);          \
    template Tensor<T> scale<T>(const Tensor<T>&, T);

FLOWCAST_INSTANTIATE(float)
FLOWCAST_INSTANTIATE(double)

#undef FLOWCAST_INSTANTIATE

}  // namespace flowcast
