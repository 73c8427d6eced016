#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "synnet/tensor.hpp"

namespace synnet {

enum class Mode { Train, Infer };

// ---------------------------------------------------------------------------
// Convolution (cross-correlation, stride 1, zero "same" padding)
// ---------------------------------------------------------------------------

/// weight: (out_c, in_c, k, k) with k in {1, 3}; bias: (1, out_c, 1, 1).
template <typename T>
struct ConvParams {
    Tensor<T> weight;
    Tensor<T> bias;
};

template <typename T>
struct ConvTape {
    Tensor<T> input;
    Tensor<T> weight;
};

template <typename T>
struct ConvGrads {
    Tensor<T> weight;
    Tensor<T> bias;
};

namespace detail {

inline void check_conv_shapes(const Shape4& x, const Shape4& w, const Shape4& b) {
    if (w.h != w.w || (w.h != 1 && w.h != 3)) {
        throw ShapeError("conv kernel must be 1x1 or 3x3, got " + w.str());
    }
    if (x.c != w.c) {
        throw ShapeError("conv input channels " + std::to_string(x.c) + " != weight in_c " + std::to_string(w.c));
    }
    if (b.count() != w.n) {
        throw ShapeError("conv bias length " + std::to_string(b.count()) + " != out_c " + std::to_string(w.n));
    }
}

// Valid output range for a tap at offset d along an axis of length len.
struct TapRange {
    std::size_t lo, hi;
};
inline TapRange tap_range(std::ptrdiff_t d, std::size_t len) {
    const auto n = static_cast<std::ptrdiff_t>(len);
    const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, -d);
    const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(n, n - d);
    if (hi <= lo) return {0, 0};
    return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
}

} // namespace detail

template <typename T>
std::pair<Tensor<T>, ConvTape<T>> conv2d_forward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
    detail::check_conv_shapes(x.shape(), weight.shape(), bias.shape());
    const Shape4& xs = x.shape();
    const std::size_t out_c = weight.shape().n;
    const std::size_t k = weight.shape().h;
    const auto pad = static_cast<std::ptrdiff_t>(k / 2);
    const std::size_t H = xs.h, W = xs.w;

    Tensor<T> out(Shape4{xs.n, out_c, H, W});
    for (std::size_t n = 0; n < xs.n; ++n) {
        for (std::size_t o = 0; o < out_c; ++o) {
            T* dst = out.plane(n, o);
            std::fill_n(dst, H * W, bias[o]);
            for (std::size_t i = 0; i < xs.c; ++i) {
                const T* src = x.plane(n, i);
                for (std::size_t ky = 0; ky < k; ++ky) {
                    const std::ptrdiff_t dy = static_cast<std::ptrdiff_t>(ky) - pad;
                    const auto yr = detail::tap_range(dy, H);
                    for (std::size_t kx = 0; kx < k; ++kx) {
                        const std::ptrdiff_t dx = static_cast<std::ptrdiff_t>(kx) - pad;
                        const auto xr = detail::tap_range(dx, W);
                        const T wv = weight(o, i, ky, kx);
                        for (std::size_t y = yr.lo; y < yr.hi; ++y) {
                            T* orow = dst + y * W;
                            const T* irow = src + (static_cast<std::ptrdiff_t>(y) + dy) * static_cast<std::ptrdiff_t>(W) + dx;
                            for (std::size_t xx = xr.lo; xx < xr.hi; ++xx) orow[xx] += wv * irow[xx];
                        }
                    }
                }
            }
        }
    }
    return {std::move(out), ConvTape<T>{x, weight}};
}

template <typename T>
std::pair<Tensor<T>, ConvTape<T>> conv2d_forward(const Tensor<T>& x, const ConvParams<T>& p) {
    return conv2d_forward(x, p.weight, p.bias);
}

template <typename T>
std::pair<Tensor<T>, ConvGrads<T>> conv2d_backward(const ConvTape<T>& tape, const Tensor<T>& grad_out) {
    const Tensor<T>& x = tape.input;
    const Tensor<T>& weight = tape.weight;
    const Shape4& xs = x.shape();
    const std::size_t out_c = weight.shape().n;
    const std::size_t k = weight.shape().h;
    const auto pad = static_cast<std::ptrdiff_t>(k / 2);
    const std::size_t H = xs.h, W = xs.w;
    if (grad_out.shape() != Shape4{xs.n, out_c, H, W}) {
        throw ShapeError("conv2d_backward: grad " + grad_out.shape().str() + " does not match forward output");
    }

    Tensor<T> grad_in(xs);
    ConvGrads<T> grads{Tensor<T>(weight.shape()), Tensor<T>(Shape4{1, out_c, 1, 1})};
    std::vector<T> row_acc(W);

    for (std::size_t n = 0; n < xs.n; ++n) {
        for (std::size_t o = 0; o < out_c; ++o) {
            const T* g = grad_out.plane(n, o);
            T bsum = 0;
            for (std::size_t j = 0; j < H * W; ++j) bsum += g[j];
            grads.bias[o] += bsum;

            for (std::size_t i = 0; i < xs.c; ++i) {
                const T* src = x.plane(n, i);
                T* gin = grad_in.plane(n, i);
                for (std::size_t ky = 0; ky < k; ++ky) {
                    const std::ptrdiff_t dy = static_cast<std::ptrdiff_t>(ky) - pad;
                    const auto yr = detail::tap_range(dy, H);
                    for (std::size_t kx = 0; kx < k; ++kx) {
                        const std::ptrdiff_t dx = static_cast<std::ptrdiff_t>(kx) - pad;
                        const auto xr = detail::tap_range(dx, W);
                        const T wv = weight(o, i, ky, kx);
                        std::fill(row_acc.begin(), row_acc.end(), T(0));
                        for (std::size_t y = yr.lo; y < yr.hi; ++y) {
                            const T* grow = g + y * W;
                            const std::ptrdiff_t off = (static_cast<std::ptrdiff_t>(y) + dy) * static_cast<std::ptrdiff_t>(W) + dx;
                            const T* irow = src + off;
                            T* girow = gin + off;
                            for (std::size_t xx = xr.lo; xx < xr.hi; ++xx) {
                                row_acc[xx] += grow[xx] * irow[xx];
                                girow[xx] += wv * grow[xx];
                            }
                        }
                        T wsum = 0;
                        for (std::size_t xx = xr.lo; xx < xr.hi; ++xx) wsum += row_acc[xx];
                        grads.weight(o, i, ky, kx) += wsum;
                    }
                }
            }
        }
    }
    return {std::move(grad_in), std::move(grads)};
}

// ---------------------------------------------------------------------------
// Batch normalization
// ---------------------------------------------------------------------------

struct BatchNormOptions {
    double eps = 1e-5;
    double stat_momentum = 0.9;

    friend bool operator==(const BatchNormOptions&, const BatchNormOptions&) = default;
};

/// All four tensors have shape (1, C, 1, 1).
template <typename T>
struct BatchNormParams {
    Tensor<T> gamma;
    Tensor<T> beta;
    Tensor<T> running_mean;
    Tensor<T> running_var;

    static BatchNormParams identity(std::size_t channels) {
        const Shape4 s{1, channels, 1, 1};
        return {Tensor<T>(s, T(1)), Tensor<T>(s, T(0)), Tensor<T>(s, T(0)), Tensor<T>(s, T(1))};
    }
};

template <typename T>
struct BatchNormTape {
    Mode mode = Mode::Infer;
    Tensor<T> normalized;      // x_hat
    std::vector<T> inv_std;    // per channel
    Tensor<T> gamma;
};

template <typename T>
struct BatchNormGrads {
    Tensor<T> grad_in;
    Tensor<T> gamma;
    Tensor<T> beta;
};

template <typename T>
Tensor<T> batchnorm_infer(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                          const Tensor<T>& running_mean, const Tensor<T>& running_var,
                          const BatchNormOptions& opt = {}) {
    const Shape4& s = x.shape();
    for (const Tensor<T>* p : std::initializer_list<const Tensor<T>*>{&gamma, &beta, &running_mean, &running_var}) {
        if (p->size() != s.c) {
            throw ShapeError("batchnorm parameter length " + std::to_string(p->size()) + " != channels " +
                             std::to_string(s.c));
        }
    }
    Tensor<T> out(s);
    for (std::size_t c = 0; c < s.c; ++c) {
        const T inv = static_cast<T>(1.0 / std::sqrt(static_cast<double>(running_var[c]) + opt.eps));
        const T scale = gamma[c] * inv;
        const T shift = beta[c] - scale * running_mean[c];
        for (std::size_t n = 0; n < s.n; ++n) {
            const T* src = x.plane(n, c);
            T* dst = out.plane(n, c);
            for (std::size_t j = 0; j < s.plane(); ++j) dst[j] = scale * src[j] + shift;
        }
    }
    return out;
}

/// Train mode normalizes with batch statistics (biased variance) and
/// updates the running statistics in place; infer mode uses them.
template <typename T>
std::pair<Tensor<T>, BatchNormTape<T>> batchnorm_forward(const Tensor<T>& x, const Tensor<T>& gamma,
                                                         const Tensor<T>& beta, Tensor<T>& running_mean,
                                                         Tensor<T>& running_var, Mode mode,
                                                         const BatchNormOptions& opt = {}) {
    const Shape4& s = x.shape();
    for (const Tensor<T>* p : std::initializer_list<const Tensor<T>*>{&gamma, &beta, &running_mean, &running_var}) {
        if (p->size() != s.c) {
            throw ShapeError("batchnorm parameter length " + std::to_string(p->size()) + " != channels " +
                             std::to_string(s.c));
        }
    }
    const std::size_t plane = s.plane();
    Tensor<T> out(s);
    BatchNormTape<T> tape;
    tape.mode = mode;

    if (mode == Mode::Infer) {
        return {batchnorm_infer(x, gamma, beta, running_mean, running_var, opt), std::move(tape)};
    }

    const std::size_t m = s.n * plane;
    if (m <= 1) throw ParameterError("batchnorm: degenerate statistics, train mode needs n*h*w > 1");
    tape.normalized = Tensor<T>(s);
    tape.inv_std.resize(s.c);
    tape.gamma = gamma;
    for (std::size_t c = 0; c < s.c; ++c) {
        double mean = 0.0;
        for (std::size_t n = 0; n < s.n; ++n) {
            const T* src = x.plane(n, c);
            for (std::size_t j = 0; j < plane; ++j) mean += src[j];
        }
        mean /= static_cast<double>(m);
        double var = 0.0;
        for (std::size_t n = 0; n < s.n; ++n) {
            const T* src = x.plane(n, c);
            for (std::size_t j = 0; j < plane; ++j) {
                const double d = src[j] - mean;
                var += d * d;
            }
        }
        var /= static_cast<double>(m);
        const double inv = 1.0 / std::sqrt(var + opt.eps);
        tape.inv_std[c] = static_cast<T>(inv);
        for (std::size_t n = 0; n < s.n; ++n) {
            const T* src = x.plane(n, c);
            T* xh = tape.normalized.plane(n, c);
            T* dst = out.plane(n, c);
            for (std::size_t j = 0; j < plane; ++j) {
                xh[j] = static_cast<T>((src[j] - mean) * inv);
                dst[j] = gamma[c] * xh[j] + beta[c];
            }
        }
        const double mom = opt.stat_momentum;
        running_mean[c] = static_cast<T>(mom * running_mean[c] + (1.0 - mom) * mean);
        running_var[c] = static_cast<T>(mom * running_var[c] + (1.0 - mom) * var);
    }
    return {std::move(out), std::move(tape)};
}

template <typename T>
std::pair<Tensor<T>, BatchNormTape<T>> batchnorm_forward(const Tensor<T>& x, BatchNormParams<T>& p, Mode mode,
                                                         const BatchNormOptions& opt = {}) {
    return batchnorm_forward(x, p.gamma, p.beta, p.running_mean, p.running_var, mode, opt);
}

template <typename T>
BatchNormGrads<T> batchnorm_backward(const BatchNormTape<T>& tape, const Tensor<T>& grad_out) {
    if (tape.mode != Mode::Train) throw UsageError("batchnorm_backward needs a train-mode tape");
    const Shape4& s = tape.normalized.shape();
    if (grad_out.shape() != s) throw ShapeError("batchnorm_backward: grad shape " + grad_out.shape().str());
    const std::size_t plane = s.plane();
    const double m = static_cast<double>(s.n * plane);

    BatchNormGrads<T> g{Tensor<T>(s), Tensor<T>(Shape4{1, s.c, 1, 1}), Tensor<T>(Shape4{1, s.c, 1, 1})};
    for (std::size_t c = 0; c < s.c; ++c) {
        double sum_dy = 0.0, sum_dy_xh = 0.0;
        for (std::size_t n = 0; n < s.n; ++n) {
            const T* dy = grad_out.plane(n, c);
            const T* xh = tape.normalized.plane(n, c);
            for (std::size_t j = 0; j < plane; ++j) {
                sum_dy += dy[j];
                sum_dy_xh += static_cast<double>(dy[j]) * xh[j];
            }
        }
        g.beta[c] = static_cast<T>(sum_dy);
        g.gamma[c] = static_cast<T>(sum_dy_xh);
        const double k = static_cast<double>(tape.gamma[c]) * tape.inv_std[c] / m;
        const double mean_dy = sum_dy;
        for (std::size_t n = 0; n < s.n; ++n) {
            const T* dy = grad_out.plane(n, c);
            const T* xh = tape.normalized.plane(n, c);
            T* dx = g.grad_in.plane(n, c);
            for (std::size_t j = 0; j < plane; ++j) {
                dx[j] = static_cast<T>(k * (m * dy[j] - mean_dy - xh[j] * sum_dy_xh));
            }
        }
    }
    return g;
}

// ---------------------------------------------------------------------------
// ReLU and linear activation
// ---------------------------------------------------------------------------

template <typename T>
struct ReluTape {
    Tensor<T> input;
};

template <typename T>
std::pair<Tensor<T>, ReluTape<T>> relu_forward(const Tensor<T>& x) {
    Tensor<T> out(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] > T(0) ? x[i] : T(0);
    return {std::move(out), ReluTape<T>{x}};
}

/// Subgradient at exactly zero is zero.
template <typename T>
Tensor<T> relu_backward(const ReluTape<T>& tape, const Tensor<T>& grad_out) {
    if (grad_out.shape() != tape.input.shape()) throw ShapeError("relu_backward: shape mismatch");
    Tensor<T> g(grad_out.shape());
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = tape.input[i] > T(0) ? grad_out[i] : T(0);
    return g;
}

template <typename T>
const Tensor<T>& linear_activation(const Tensor<T>& x) {
    return x;
}

template <typename T>
const Tensor<T>& linear_activation_backward(const Tensor<T>& grad_out) {
    return grad_out;
}

// ---------------------------------------------------------------------------
// 2x2 max pooling with stored indices, and index-based unpooling
// ---------------------------------------------------------------------------

/// Argmax offset within each 2x2 window: 0 top-left, 1 top-right,
/// 2 bottom-left, 3 bottom-right.
struct PoolIndices {
    Shape4 pooled;
    std::vector<std::uint8_t> offsets;
};

template <typename T>
struct PoolTape {
    Shape4 input_shape;
    PoolIndices indices;
};

template <typename T>
struct PoolResult {
    Tensor<T> pooled;
    PoolIndices indices;
    PoolTape<T> tape;
};

template <typename T>
PoolResult<T> maxpool2x2_forward(const Tensor<T>& x) {
    const Shape4& s = x.shape();
    if (s.h % 2 != 0 || s.w % 2 != 0) throw ShapeError("maxpool2x2 needs even height and width, got " + s.str());
    const Shape4 ps{s.n, s.c, s.h / 2, s.w / 2};
    PoolResult<T> r{Tensor<T>(ps), PoolIndices{ps, std::vector<std::uint8_t>(ps.count())}, {}};
    for (std::size_t n = 0; n < s.n; ++n) {
        for (std::size_t c = 0; c < s.c; ++c) {
            const T* src = x.plane(n, c);
            T* dst = r.pooled.plane(n, c);
            std::uint8_t* idx = r.indices.offsets.data() + (n * s.c + c) * ps.plane();
            for (std::size_t y = 0; y < ps.h; ++y) {
                for (std::size_t xx = 0; xx < ps.w; ++xx) {
                    const T* top = src + (2 * y) * s.w + 2 * xx;
                    const std::array<T, 4> win{top[0], top[1], top[s.w], top[s.w + 1]};
                    std::uint8_t best = 0;
                    for (std::uint8_t q = 1; q < 4; ++q) {
                        if (win[q] > win[best]) best = q;  // strict: first occurrence wins ties
                    }
                    dst[y * ps.w + xx] = win[best];
                    idx[y * ps.w + xx] = best;
                }
            }
        }
    }
    r.tape = PoolTape<T>{s, r.indices};
    return r;
}

namespace detail {

// Flat index within the full-resolution plane of the argmax for pooled (y, x).
inline std::size_t unpool_target(std::size_t y, std::size_t x, std::uint8_t off, std::size_t full_w) {
    return (2 * y + (off >> 1)) * full_w + 2 * x + (off & 1);
}

} // namespace detail

template <typename T>
Tensor<T> maxpool2x2_backward(const PoolTape<T>& tape, const Tensor<T>& grad_out) {
    const Shape4& ps = tape.indices.pooled;
    if (grad_out.shape() != ps) throw ShapeError("maxpool2x2_backward: grad shape " + grad_out.shape().str());
    const Shape4& s = tape.input_shape;
    Tensor<T> g(s);
    for (std::size_t nc = 0; nc < s.n * s.c; ++nc) {
        const T* src = grad_out.raw() + nc * ps.plane();
        const std::uint8_t* idx = tape.indices.offsets.data() + nc * ps.plane();
        T* dst = g.raw() + nc * s.plane();
        for (std::size_t y = 0; y < ps.h; ++y) {
            for (std::size_t x = 0; x < ps.w; ++x) {
                dst[detail::unpool_target(y, x, idx[y * ps.w + x], s.w)] += src[y * ps.w + x];
            }
        }
    }
    return g;
}

struct UnpoolTape {
    PoolIndices indices;
};

/// Scatters each value to its recorded argmax position; every other
/// position of the doubled map is exactly zero.
template <typename T>
std::pair<Tensor<T>, UnpoolTape> unpool2x2_forward(const Tensor<T>& v, const PoolIndices& idx) {
    const Shape4& ps = v.shape();
    if (ps != idx.pooled || idx.offsets.size() != ps.count()) {
        throw ShapeError("unpool2x2: values " + ps.str() + " vs indices " + idx.pooled.str());
    }
    const Shape4 full{ps.n, ps.c, ps.h * 2, ps.w * 2};
    Tensor<T> out(full);
    for (std::size_t nc = 0; nc < ps.n * ps.c; ++nc) {
        const T* src = v.raw() + nc * ps.plane();
        const std::uint8_t* off = idx.offsets.data() + nc * ps.plane();
        T* dst = out.raw() + nc * full.plane();
        for (std::size_t y = 0; y < ps.h; ++y) {
            for (std::size_t x = 0; x < ps.w; ++x) {
                const std::uint8_t o = off[y * ps.w + x];
                if (o > 3) throw ShapeError("unpool2x2: pool index out of range");
                dst[detail::unpool_target(y, x, o, full.w)] = src[y * ps.w + x];
            }
        }
    }
    return {std::move(out), UnpoolTape{idx}};
}

/// Gathers grad_out at the recorded positions.
template <typename T>
Tensor<T> unpool2x2_backward(const UnpoolTape& tape, const Tensor<T>& grad_out) {
    const Shape4& ps = tape.indices.pooled;
    const Shape4 full{ps.n, ps.c, ps.h * 2, ps.w * 2};
    if (grad_out.shape() != full) throw ShapeError("unpool2x2_backward: grad shape " + grad_out.shape().str());
    Tensor<T> g(ps);
    for (std::size_t nc = 0; nc < ps.n * ps.c; ++nc) {
        const T* src = grad_out.raw() + nc * full.plane();
        const std::uint8_t* off = tape.indices.offsets.data() + nc * ps.plane();
        T* dst = g.raw() + nc * ps.plane();
        for (std::size_t y = 0; y < ps.h; ++y) {
            for (std::size_t x = 0; x < ps.w; ++x) {
                dst[y * ps.w + x] = src[detail::unpool_target(y, x, off[y * ps.w + x], full.w)];
            }
        }
    }
    return g;
}

} // namespace synnet
