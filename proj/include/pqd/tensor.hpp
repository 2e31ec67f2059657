#pragma once

#include <cstddef>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "pqd/random.hpp"

namespace pqd {

namespace detail {

// std::allocator whose no-argument construct() default-initializes, so
// vector::resize leaves trivial element types uninitialized. Lets hot paths
// skip the zero fill on buffers they fully overwrite.
template <typename T>
struct uninit_allocator : std::allocator<T> {
    template <typename U>
    struct rebind {
        using other = uninit_allocator<U>;
    };
    template <typename U, typename... Args>
    void construct(U* p, Args&&... args) {
        if constexpr (sizeof...(Args) == 0)
            ::new (static_cast<void*>(p)) U;
        else
            ::new (static_cast<void*>(p)) U(std::forward<Args>(args)...);
    }
};

} // namespace detail

/// Dense N-dimensional array, row-major. The network uses (N, C, H, W) for
/// feature maps and (N, F) for flattened features. The shape constructor
/// zero-fills; uninit() skips the fill for buffers every caller overwrites.
template <typename T>
struct Tensor {
    using Storage = std::vector<T, detail::uninit_allocator<T>>;

    std::vector<std::size_t> shape;
    Storage data;

    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> s) : shape(std::move(s)) {
        data.assign(numel_of(shape), T{0});
    }

    static Tensor uninit(std::vector<std::size_t> s) {
        Tensor t;
        t.shape = std::move(s);
        t.data.resize(numel_of(t.shape));
        return t;
    }

    static std::size_t numel_of(const std::vector<std::size_t>& s) {
        return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
    }

    std::size_t numel() const { return data.size(); }
    std::size_t dim(std::size_t i) const { return shape.at(i); }

    T& at2(std::size_t n, std::size_t f) { return data[n * shape[1] + f]; }
    T at2(std::size_t n, std::size_t f) const { return data[n * shape[1] + f]; }

    T& at4(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
        return data[((n * shape[1] + c) * shape[2] + h) * shape[3] + w];
    }
    T at4(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
        return data[((n * shape[1] + c) * shape[2] + h) * shape[3] + w];
    }

    void fill(T v) { std::fill(data.begin(), data.end(), v); }

    bool same_shape(const Tensor& other) const { return shape == other.shape; }

    std::string shape_str() const {
        std::ostringstream os;
        os << '(';
        for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
        os << ')';
        return os.str();
    }
};

template <typename T>
void require_shape(const Tensor<T>& t, const std::vector<std::size_t>& shape,
                   const std::string& what) {
    if (t.shape != shape) {
        Tensor<T> expected(shape);
        throw std::invalid_argument(what + ": expected shape " + expected.shape_str() + ", got " +
                                    t.shape_str());
    }
}

template <typename T>
void fill_normal(Tensor<T>& t, RandomStream& rng, double stddev) {
    for (T& v : t.data) v = static_cast<T>(rng.normal(0.0, stddev));
}

/// Learnable tensor with its gradient accumulator and a stable name used by
/// checkpoints and the optimizer.
template <typename T>
struct Parameter {
    std::string id;
    Tensor<T> value;
    Tensor<T> grad;
    bool trainable = true;

    Parameter() = default;
    Parameter(std::string name, std::vector<std::size_t> shape)
        : id(std::move(name)), value(shape), grad(std::move(shape)) {}

    void zero_grad() { grad.fill(T{0}); }
};

} // namespace pqd
