#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "synnet/error.hpp"

namespace synnet {

/// Dimensions of a dense (batch, channel, height, width) tensor.
struct Shape4 {
    std::size_t n = 0;
    std::size_t c = 0;
    std::size_t h = 0;
    std::size_t w = 0;

    constexpr std::size_t count() const noexcept { return n * c * h * w; }
    constexpr std::size_t plane() const noexcept { return h * w; }
    constexpr bool valid() const noexcept { return n > 0 && c > 0 && h > 0 && w > 0; }

    friend constexpr bool operator==(const Shape4&, const Shape4&) = default;

    std::string str() const {
        return "(" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) + "," +
               std::to_string(w) + ")";
    }
};

inline void require_valid(const Shape4& s) {
    if (!s.valid()) {
        throw ShapeError("shape " + s.str() + " has a zero dimension");
    }
    // n*c*h*w must not wrap around size_t.
    const std::size_t limit = std::numeric_limits<std::size_t>::max();
    std::size_t acc = 1;
    for (std::size_t d : {s.n, s.c, s.h, s.w}) {
        if (acc > limit / d) {
            throw ShapeError("shape " + s.str() + " overflows the addressable range");
        }
        acc *= d;
    }
}

enum class DType : std::uint8_t { Single = 0, Double = 1 };

template <typename T>
constexpr DType dtype_of() {
    static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>, "unsupported scalar");
    return std::is_same_v<T, float> ? DType::Single : DType::Double;
}

/// Dense row-major NCHW tensor. Elementwise operations never broadcast.
template <typename T>
class Tensor {
    static_assert(std::is_floating_point_v<T>);

public:
    using value_type = T;

    Tensor() = default;

    explicit Tensor(const Shape4& shape, T fill = T(0)) : shape_(shape) {
        require_valid(shape);
        data_.assign(shape.count(), fill);
    }

    Tensor(const Shape4& shape, std::vector<T> values) : shape_(shape), data_(std::move(values)) {
        require_valid(shape);
        if (data_.size() != shape.count()) {
            throw ShapeError("value count " + std::to_string(data_.size()) + " does not match shape " +
                             shape.str());
        }
    }

    const Shape4& shape() const noexcept { return shape_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }
    static constexpr DType dtype() { return dtype_of<T>(); }

    std::span<T> data() noexcept { return data_; }
    std::span<const T> data() const noexcept { return data_; }
    T* raw() noexcept { return data_.data(); }
    const T* raw() const noexcept { return data_.data(); }

    std::size_t index(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const noexcept {
        return ((n * shape_.c + c) * shape_.h + h) * shape_.w + w;
    }

    T& operator()(std::size_t n, std::size_t c, std::size_t h, std::size_t w) noexcept {
        return data_[index(n, c, h, w)];
    }
    T operator()(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const noexcept {
        return data_[index(n, c, h, w)];
    }

    T& operator[](std::size_t i) noexcept { return data_[i]; }
    T operator[](std::size_t i) const noexcept { return data_[i]; }

    T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
        check(n, c, h, w);
        return data_[index(n, c, h, w)];
    }
    T at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
        check(n, c, h, w);
        return data_[index(n, c, h, w)];
    }

    /// Pointer to the h*w plane of (n, c).
    T* plane(std::size_t n, std::size_t c) noexcept { return data_.data() + (n * shape_.c + c) * shape_.plane(); }
    const T* plane(std::size_t n, std::size_t c) const noexcept {
        return data_.data() + (n * shape_.c + c) * shape_.plane();
    }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

    Tensor& operator+=(const Tensor& o) {
        require_same(o, "+=");
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
        return *this;
    }
    Tensor& operator-=(const Tensor& o) {
        require_same(o, "-=");
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
        return *this;
    }
    Tensor& operator*=(T s) {
        for (T& v : data_) v *= s;
        return *this;
    }

    bool all_finite() const {
        return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
    }

    template <typename U>
    Tensor<U> cast() const {
        std::vector<U> out(data_.begin(), data_.end());
        return Tensor<U>(shape_, std::move(out));
    }

    /// Bit-level equality of shape and every element.
    friend bool operator==(const Tensor& a, const Tensor& b) {
        return a.shape_ == b.shape_ && a.data_.size() == b.data_.size() &&
               (a.data_.empty() || std::memcmp(a.data_.data(), b.data_.data(), a.data_.size() * sizeof(T)) == 0);
    }

private:
    void check(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
        if (n >= shape_.n || c >= shape_.c || h >= shape_.h || w >= shape_.w) {
            throw ShapeError("index out of range for shape " + shape_.str());
        }
    }
    void require_same(const Tensor& o, const char* op) const {
        if (o.shape_ != shape_) {
            throw ShapeError(std::string("operator") + op + ": " + shape_.str() + " vs " + o.shape_.str());
        }
    }

    Shape4 shape_{};
    std::vector<T> data_;
};

/// Seeded random stream. Draws are derived from the raw 64-bit engine output
/// only, so values are identical on every platform.
class RngStream {
public:
    explicit RngStream(std::uint64_t seed = 0) : seed_(seed), engine_(seed) {}

    std::uint64_t seed() const noexcept { return seed_; }
    std::uint64_t counter() const noexcept { return counter_; }

    std::uint64_t next_u64() {
        ++counter_;
        return engine_();
    }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, bound).
    std::size_t below(std::size_t bound) {
        if (bound == 0) throw ParameterError("RngStream::below with zero bound");
        auto v = static_cast<std::size_t>(uniform() * static_cast<double>(bound));
        return std::min(v, bound - 1);
    }

    bool coin(double p = 0.5) { return uniform() < p; }

    /// Deterministic child stream, e.g. one per epoch.
    static std::uint64_t derive(std::uint64_t seed, std::uint64_t stream) {
        // splitmix64 finalizer over the combined key
        std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

private:
    std::uint64_t seed_;
    std::uint64_t counter_ = 0;
    std::mt19937_64 engine_;
};

template <typename T>
Tensor<T> tensor_new(const Shape4& shape, T fill) {
    return Tensor<T>(shape, fill);
}

/// Uniform draws from [-scale, +scale].
template <typename T>
Tensor<T> tensor_random(const Shape4& shape, RngStream& rng, double scale) {
    if (!(scale > 0.0) || !std::isfinite(scale)) {
        throw ParameterError("tensor_random scale must be positive, got " + std::to_string(scale));
    }
    Tensor<T> t(shape);
    for (T& v : t.data()) v = static_cast<T>(rng.uniform(-scale, scale));
    return t;
}

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
    require_valid(a.shape());
    require_valid(b.shape());
    const Shape4& sa = a.shape();
    const Shape4& sb = b.shape();
    if (sa.n != sb.n || sa.h != sb.h || sa.w != sb.w) {
        throw ShapeError("concat_channels: " + sa.str() + " vs " + sb.str());
    }
    Tensor<T> out(Shape4{sa.n, sa.c + sb.c, sa.h, sa.w});
    const std::size_t pa = sa.c * sa.plane();
    const std::size_t pb = sb.c * sb.plane();
    for (std::size_t n = 0; n < sa.n; ++n) {
        std::copy_n(a.plane(n, 0), pa, out.plane(n, 0));
        std::copy_n(b.plane(n, 0), pb, out.plane(n, sa.c));
    }
    return out;
}

/// Channels [begin, end) of x.
template <typename T>
Tensor<T> slice_channels(const Tensor<T>& x, std::size_t begin, std::size_t end) {
    const Shape4& s = x.shape();
    if (begin >= end || end > s.c) {
        throw ShapeError("slice_channels: interval [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") outside channel count " + std::to_string(s.c));
    }
    Tensor<T> out(Shape4{s.n, end - begin, s.h, s.w});
    const std::size_t len = (end - begin) * s.plane();
    for (std::size_t n = 0; n < s.n; ++n) std::copy_n(x.plane(n, begin), len, out.plane(n, 0));
    return out;
}

/// Batch items [begin, end) of x.
template <typename T>
Tensor<T> slice_batch(const Tensor<T>& x, std::size_t begin, std::size_t end) {
    const Shape4& s = x.shape();
    if (begin >= end || end > s.n) throw ShapeError("slice_batch: interval outside batch " + s.str());
    Tensor<T> out(Shape4{end - begin, s.c, s.h, s.w});
    std::copy_n(x.plane(begin, 0), out.size(), out.raw());
    return out;
}

/// Stack equally shaped tensors along the batch dimension.
template <typename T>
Tensor<T> stack_batch(std::span<const Tensor<T>> items) {
    if (items.empty()) throw ShapeError("stack_batch: no items");
    const Shape4 first = items.front().shape();
    std::size_t total = 0;
    for (const auto& t : items) {
        const Shape4& s = t.shape();
        if (s.c != first.c || s.h != first.h || s.w != first.w) {
            throw ShapeError("stack_batch: " + first.str() + " vs " + s.str());
        }
        total += s.n;
    }
    Tensor<T> out(Shape4{total, first.c, first.h, first.w});
    T* dst = out.raw();
    for (const auto& t : items) dst = std::copy(t.data().begin(), t.data().end(), dst);
    return out;
}

template <typename T>
double sum(const Tensor<T>& t) {
    double acc = 0.0;
    for (T v : t.data()) acc += static_cast<double>(v);
    return acc;
}

template <typename T>
double dot(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape() != b.shape()) throw ShapeError("dot: " + a.shape().str() + " vs " + b.shape().str());
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += static_cast<double>(a[i]) * static_cast<double>(b[i]);
    return acc;
}

template <typename T>
double max_abs(const Tensor<T>& t) {
    double m = 0.0;
    for (T v : t.data()) m = std::max(m, std::abs(static_cast<double>(v)));
    return m;
}

} // namespace synnet
