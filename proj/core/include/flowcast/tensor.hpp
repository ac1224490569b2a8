#pragma once

#include <bit>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

namespace flowcast {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Dense row-major array of real scalars.
///
/// Every extent is positive and `size() == shape_size(shape())`. Tensors are
/// treated as values: operations return new tensors. The mutable accessors
/// exist for optimizer updates and for filling freshly constructed buffers.
template <typename T>
class Tensor {
public:
    using value_type = T;

    Tensor() = default;
    explicit Tensor(Shape shape);
    Tensor(Shape shape, std::vector<T> data);

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
    static Tensor filled(Shape shape, T value);
    static Tensor identity(std::size_t n);
    static Tensor from_rows(std::initializer_list<std::initializer_list<T>> rows);
    static Tensor from_values(std::initializer_list<T> values);

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t extent(std::size_t axis) const;
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    std::span<const T> data() const noexcept { return data_; }
    std::span<T> data() noexcept { return data_; }
    const std::vector<T>& values() const noexcept { return data_; }

    T operator[](std::size_t i) const { return data_[i]; }
    T& operator[](std::size_t i) { return data_[i]; }

    /// 2-D element access; requires rank 2.
    T at(std::size_t r, std::size_t c) const;
    T& at(std::size_t r, std::size_t c);

    /// Row `r` of a rank-2 tensor.
    std::span<const T> row(std::size_t r) const;
    std::span<T> row(std::size_t r);

    /// Same data, new shape with equal element count.
    Tensor reshaped(Shape shape) const;

    bool all_finite() const noexcept;

    friend bool operator==(const Tensor& a, const Tensor& b) {
        return a.shape_ == b.shape_ && a.data_ == b.data_;
    }

private:
    Shape shape_;
    std::vector<T> data_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

enum class Activation { relu, sigmoid, linear };

std::string to_string(Activation kind);
Activation activation_from_string(const std::string& name);

/// Scalar activation, shared by the tensor op and the layer kernels.
template <typename T>
T activate(T x, Activation kind) noexcept;

/// Derivative at `x`; relu'(0) is 0.
template <typename T>
T activate_grad(T x, Activation kind) noexcept;

/// Matrix product of rank-2 tensors [m x k] * [k x n].
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> activation(const Tensor<T>& x, Activation kind);

template <typename T>
Tensor<T> activation_grad(const Tensor<T>& x, Activation kind);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor);

template <typename T>
Tensor<T> hadamard(const Tensor<T>& a, const Tensor<T>& b);

/// Element-wise precision conversion.
template <typename To, typename From>
Tensor<To> cast(const Tensor<From>& t) {
    std::vector<To> out(t.data().begin(), t.data().end());
    return Tensor<To>(t.shape(), std::move(out));
}

/// Throws DimensionError unless both shapes are identical.
void require_same_shape(const Shape& a, const Shape& b, const char* what);

/// True if no element is NaN or Inf. Tests exponent bits, which vectorizes.
template <typename T>
bool all_finite_values(std::span<const T> values) noexcept {
    static_assert(sizeof(T) == 4 || sizeof(T) == 8);
    using Bits = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
    constexpr Bits exp_mask = static_cast<Bits>(sizeof(T) == 4 ? 0x7F800000ull : 0x7FF0000000000000ull);
    Bits bad = 0;
    for (T v : values) bad |= static_cast<Bits>((std::bit_cast<Bits>(v) & exp_mask) == exp_mask);
    return bad == 0;
}

/// Throws NumericError naming `what` if any element is NaN or Inf.
template <typename T>
void require_finite(std::span<const T> values, std::string_view what);

}  // namespace flowcast
