#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "synnet/params.hpp"
#include "synnet/tensor.hpp"

namespace synnet {

/// Per-pixel loss weights, shape (n, 1, h, w), every entry >= 0.
template <typename T>
using WeightMap = Tensor<T>;

template <typename T>
struct LossValue {
    double value = 0.0;
    Tensor<T> grad;  // d(value) / d(prediction)
};

namespace detail {

inline void require_same_shape(const Shape4& a, const Shape4& b, const char* what) {
    if (a != b) throw ShapeError(std::string(what) + ": " + a.str() + " vs " + b.str());
}

template <typename T>
void check_weight_map(const WeightMap<T>& w, const Shape4& target) {
    const Shape4 expected{target.n, 1, target.h, target.w};
    if (w.shape() != expected) {
        throw ShapeError("weight map " + w.shape().str() + " does not match " + expected.str());
    }
    for (T v : w.data()) {
        if (!(v >= T(0)) || !std::isfinite(v)) throw ParameterError("weight map entries must be finite and >= 0");
    }
}

template <typename T>
double weight_at(const WeightMap<T>* w, std::size_t n, std::size_t j) {
    if (w == nullptr) return 1.0;
    return static_cast<double>(w->plane(n, 0)[j]);
}

} // namespace detail

/// Mean weighted squared error (1/(N*P)) * sum w * (pred - target)^2,
/// P = pixels per image (channels included).
template <typename T>
LossValue<T> l2_loss(const Tensor<T>& pred, const Tensor<T>& target, const WeightMap<T>* weights = nullptr) {
    detail::require_same_shape(pred.shape(), target.shape(), "l2_loss");
    if (weights) detail::check_weight_map(*weights, target.shape());
    const Shape4& s = pred.shape();
    const double norm = 1.0 / static_cast<double>(s.count());
    LossValue<T> r{0.0, Tensor<T>(s)};
    for (std::size_t n = 0; n < s.n; ++n) {
        for (std::size_t c = 0; c < s.c; ++c) {
            const T* p = pred.plane(n, c);
            const T* t = target.plane(n, c);
            T* g = r.grad.plane(n, c);
            for (std::size_t j = 0; j < s.plane(); ++j) {
                const double w = detail::weight_at(weights, n, j);
                const double d = static_cast<double>(p[j]) - static_cast<double>(t[j]);
                r.value += w * d * d;
                g[j] = static_cast<T>(2.0 * norm * w * d);
            }
        }
    }
    r.value *= norm;
    return r;
}

namespace detail {

// Sobel gradient magnitude of one plane with replicated borders.
inline std::vector<double> sobel_magnitude(const double* img, std::size_t H, std::size_t W) {
    auto at = [&](std::ptrdiff_t y, std::ptrdiff_t x) {
        y = std::clamp<std::ptrdiff_t>(y, 0, static_cast<std::ptrdiff_t>(H) - 1);
        x = std::clamp<std::ptrdiff_t>(x, 0, static_cast<std::ptrdiff_t>(W) - 1);
        return img[static_cast<std::size_t>(y) * W + static_cast<std::size_t>(x)];
    };
    std::vector<double> mag(H * W);
    for (std::size_t yy = 0; yy < H; ++yy) {
        for (std::size_t xx = 0; xx < W; ++xx) {
            const auto y = static_cast<std::ptrdiff_t>(yy);
            const auto x = static_cast<std::ptrdiff_t>(xx);
            const double gx = (at(y - 1, x + 1) + 2 * at(y, x + 1) + at(y + 1, x + 1)) -
                              (at(y - 1, x - 1) + 2 * at(y, x - 1) + at(y + 1, x - 1));
            const double gy = (at(y + 1, x - 1) + 2 * at(y + 1, x) + at(y + 1, x + 1)) -
                              (at(y - 1, x - 1) + 2 * at(y - 1, x) + at(y - 1, x + 1));
            mag[yy * W + xx] = std::sqrt(gx * gx + gy * gy);
        }
    }
    return mag;
}

// Sobel magnitude divided by its maximum; all zero for a constant plane.
inline std::vector<double> normalized_edges(const double* img, std::size_t H, std::size_t W) {
    std::vector<double> mag = sobel_magnitude(img, H, W);
    const double peak = *std::max_element(mag.begin(), mag.end());
    for (double& v : mag) v = peak > 0.0 ? v / peak : 0.0;
    return mag;
}

} // namespace detail

/// w(x) = 1 + beta * E(x), E the per-image max-normalized Sobel magnitude
/// of the ground-truth target.
template <typename T>
WeightMap<T> edge_weight_map(const Tensor<T>& target, double beta) {
    if (!(beta >= 0.0) || !std::isfinite(beta)) throw ParameterError("edge beta must be finite and >= 0");
    const Shape4& s = target.shape();
    if (s.c != 1) throw ShapeError("edge_weight_map expects single-channel targets, got " + s.str());
    WeightMap<T> w(Shape4{s.n, 1, s.h, s.w});
    for (std::size_t n = 0; n < s.n; ++n) {
        std::vector<double> img(target.plane(n, 0), target.plane(n, 0) + s.plane());
        std::vector<double> e = detail::normalized_edges(img.data(), s.h, s.w);
        T* dst = w.plane(n, 0);
        for (std::size_t j = 0; j < s.plane(); ++j) dst[j] = static_cast<T>(1.0 + beta * e[j]);
    }
    return w;
}

// ---------------------------------------------------------------------------
// Two-factor SSIM (luminance x contrast) used as a training objective
// ---------------------------------------------------------------------------

enum class SsimMode { Global, Local };

struct SsimConfig {
    SsimMode mode = SsimMode::Local;
    std::size_t window = 7;
    double dynamic_range = 1.0;
    double c1 = 1e-4;  // (0.01 L)^2
    double c2 = 9e-4;  // (0.03 L)^2
    // Added to every variance before the square root so the contrast
    // factor stays differentiable on flat windows.
    double sigma_eps = 1e-6;

    friend bool operator==(const SsimConfig&, const SsimConfig&) = default;

    static SsimConfig for_range(double L, SsimMode mode = SsimMode::Local, std::size_t window = 7) {
        SsimConfig c;
        c.mode = mode;
        c.window = window;
        c.dynamic_range = L;
        c.c1 = (0.01 * L) * (0.01 * L);
        c.c2 = (0.03 * L) * (0.03 * L);
        return c;
    }

    void validate(const Shape4& s) const {
        if (!(c1 > 0.0) || !(c2 > 0.0)) throw ParameterError("SSIM constants C1, C2 must be positive");
        if (!(sigma_eps >= 0.0)) throw ParameterError("SSIM sigma_eps must be >= 0");
        if (mode == SsimMode::Local) {
            if (window % 2 == 0 || window == 0) throw ParameterError("SSIM window must be odd");
            if (window > std::min(s.h, s.w)) {
                throw ParameterError("SSIM window " + std::to_string(window) + " larger than image " + s.str());
            }
        }
    }
};

namespace detail {

inline std::size_t reflect_index(std::ptrdiff_t i, std::size_t n) {
    const auto last = static_cast<std::ptrdiff_t>(n) - 1;
    if (i < 0) i = -i;
    if (i > last) i = 2 * last - i;
    return static_cast<std::size_t>(i);
}

// Mean over a (2r+1)^2 window with reflected borders; separable.
inline std::vector<double> box_mean(const std::vector<double>& in, std::size_t H, std::size_t W, std::size_t r) {
    const auto R = static_cast<std::ptrdiff_t>(r);
    const double inv = 1.0 / static_cast<double>((2 * r + 1) * (2 * r + 1));
    std::vector<double> tmp(H * W, 0.0), out(H * W, 0.0);
    for (std::size_t y = 0; y < H; ++y) {
        for (std::size_t x = 0; x < W; ++x) {
            double acc = 0.0;
            for (std::ptrdiff_t k = -R; k <= R; ++k) acc += in[y * W + reflect_index(static_cast<std::ptrdiff_t>(x) + k, W)];
            tmp[y * W + x] = acc;
        }
    }
    for (std::size_t y = 0; y < H; ++y) {
        for (std::size_t x = 0; x < W; ++x) {
            double acc = 0.0;
            for (std::ptrdiff_t k = -R; k <= R; ++k) acc += tmp[reflect_index(static_cast<std::ptrdiff_t>(y) + k, H) * W + x];
            out[y * W + x] = acc * inv;
        }
    }
    return out;
}

// Adjoint of box_mean.
inline std::vector<double> box_mean_adjoint(const std::vector<double>& g, std::size_t H, std::size_t W, std::size_t r) {
    const auto R = static_cast<std::ptrdiff_t>(r);
    const double inv = 1.0 / static_cast<double>((2 * r + 1) * (2 * r + 1));
    std::vector<double> tmp(H * W, 0.0), out(H * W, 0.0);
    for (std::size_t y = 0; y < H; ++y) {
        for (std::size_t x = 0; x < W; ++x) {
            const double v = g[y * W + x] * inv;
            for (std::ptrdiff_t k = -R; k <= R; ++k) tmp[reflect_index(static_cast<std::ptrdiff_t>(y) + k, H) * W + x] += v;
        }
    }
    for (std::size_t y = 0; y < H; ++y) {
        for (std::size_t x = 0; x < W; ++x) {
            const double v = tmp[y * W + x];
            for (std::ptrdiff_t k = -R; k <= R; ++k) out[y * W + reflect_index(static_cast<std::ptrdiff_t>(x) + k, W)] += v;
        }
    }
    return out;
}

// Q = l * c and its partials with respect to the prediction's mean and
// variance.
struct SsimTerms {
    double q, dq_dmu, dq_dvar;
};

inline SsimTerms ssim_terms(double mu_p, double mu_t, double var_p, double var_t, const SsimConfig& cfg) {
    const double nl = 2.0 * mu_p * mu_t + cfg.c1;
    const double dl = mu_p * mu_p + mu_t * mu_t + cfg.c1;
    const double l = nl / dl;
    const double sp = std::sqrt(var_p + cfg.sigma_eps);
    const double st = std::sqrt(var_t + cfg.sigma_eps);
    const double nc = 2.0 * sp * st + cfg.c2;
    const double dc = sp * sp + st * st + cfg.c2;
    const double c = nc / dc;
    const double dl_dmu = (2.0 * mu_t * dl - nl * 2.0 * mu_p) / (dl * dl);
    const double dc_dsp = (2.0 * st * dc - nc * 2.0 * sp) / (dc * dc);
    const double dc_dvar = sp > 0.0 ? dc_dsp / (2.0 * sp) : 0.0;
    return {l * c, c * dl_dmu, l * dc_dvar};
}

struct PlaneStats {
    std::vector<double> mu_p, mu_t, var_p, var_t;
};

inline PlaneStats local_stats(const std::vector<double>& p, const std::vector<double>& t, std::size_t H, std::size_t W,
                              std::size_t r) {
    std::vector<double> pp(p.size()), tt(t.size());
    for (std::size_t j = 0; j < p.size(); ++j) {
        pp[j] = p[j] * p[j];
        tt[j] = t[j] * t[j];
    }
    PlaneStats s{box_mean(p, H, W, r), box_mean(t, H, W, r), box_mean(pp, H, W, r), box_mean(tt, H, W, r)};
    for (std::size_t j = 0; j < p.size(); ++j) {
        s.var_p[j] -= s.mu_p[j] * s.mu_p[j];
        s.var_t[j] -= s.mu_t[j] * s.mu_t[j];
    }
    return s;
}

inline std::pair<double, double> global_stats(const std::vector<double>& v) {
    double mu = 0.0;
    for (double x : v) mu += x;
    mu /= static_cast<double>(v.size());
    double var = 0.0;
    for (double x : v) var += (x - mu) * (x - mu);
    return {mu, var / static_cast<double>(v.size())};
}

template <typename T>
std::vector<double> plane_copy(const Tensor<T>& t, std::size_t n, std::size_t c) {
    const T* p = t.plane(n, c);
    return std::vector<double>(p, p + t.shape().plane());
}

} // namespace detail

/// Per-pixel two-factor SSIM. Global mode broadcasts one value per image.
template <typename T>
Tensor<T> ssim_map(const Tensor<T>& pred, const Tensor<T>& target, const SsimConfig& cfg) {
    detail::require_same_shape(pred.shape(), target.shape(), "ssim_map");
    const Shape4& s = pred.shape();
    cfg.validate(s);
    Tensor<T> out(s);
    for (std::size_t n = 0; n < s.n; ++n) {
        for (std::size_t c = 0; c < s.c; ++c) {
            const auto p = detail::plane_copy(pred, n, c);
            const auto t = detail::plane_copy(target, n, c);
            T* dst = out.plane(n, c);
            if (cfg.mode == SsimMode::Global) {
                const auto [mp, vp] = detail::global_stats(p);
                const auto [mt, vt] = detail::global_stats(t);
                std::fill_n(dst, s.plane(), static_cast<T>(detail::ssim_terms(mp, mt, vp, vt, cfg).q));
            } else {
                const auto st = detail::local_stats(p, t, s.h, s.w, cfg.window / 2);
                for (std::size_t j = 0; j < s.plane(); ++j) {
                    dst[j] = static_cast<T>(detail::ssim_terms(st.mu_p[j], st.mu_t[j], st.var_p[j], st.var_t[j], cfg).q);
                }
            }
        }
    }
    return out;
}

/// (1/(N*P)) * sum w(x) * (1 - Q(x)), gradient via the product rule
/// through the window statistics.
template <typename T>
LossValue<T> ssim_loss(const Tensor<T>& pred, const Tensor<T>& target, const SsimConfig& cfg,
                       const WeightMap<T>* weights = nullptr) {
    detail::require_same_shape(pred.shape(), target.shape(), "ssim_loss");
    const Shape4& s = pred.shape();
    cfg.validate(s);
    if (weights) detail::check_weight_map(*weights, s);
    const double norm = 1.0 / static_cast<double>(s.count());
    LossValue<T> r{0.0, Tensor<T>(s)};

    for (std::size_t n = 0; n < s.n; ++n) {
        for (std::size_t c = 0; c < s.c; ++c) {
            const auto p = detail::plane_copy(pred, n, c);
            const auto t = detail::plane_copy(target, n, c);
            T* g = r.grad.plane(n, c);
            if (cfg.mode == SsimMode::Global) {
                const auto [mp, vp] = detail::global_stats(p);
                const auto [mt, vt] = detail::global_stats(t);
                const auto q = detail::ssim_terms(mp, mt, vp, vt, cfg);
                double wsum = 0.0;
                for (std::size_t j = 0; j < s.plane(); ++j) wsum += detail::weight_at(weights, n, j);
                r.value += wsum * (1.0 - q.q);
                const double dl_dq = -wsum * norm;
                const double P = static_cast<double>(s.plane());
                for (std::size_t j = 0; j < s.plane(); ++j) {
                    g[j] = static_cast<T>(dl_dq * (q.dq_dmu / P + q.dq_dvar * 2.0 * (p[j] - mp) / P));
                }
            } else {
                const std::size_t rad = cfg.window / 2;
                const auto st = detail::local_stats(p, t, s.h, s.w, rad);
                std::vector<double> a(s.plane()), b(s.plane());
                for (std::size_t j = 0; j < s.plane(); ++j) {
                    const double w = detail::weight_at(weights, n, j);
                    const auto q = detail::ssim_terms(st.mu_p[j], st.mu_t[j], st.var_p[j], st.var_t[j], cfg);
                    r.value += w * (1.0 - q.q);
                    const double g_mu = -w * norm * q.dq_dmu;
                    const double g_var = -w * norm * q.dq_dvar;
                    // var = E[p^2] - mu^2, so d/dmu picks up -2 mu g_var
                    a[j] = g_mu - 2.0 * g_var * st.mu_p[j];
                    b[j] = g_var;
                }
                const auto ga = detail::box_mean_adjoint(a, s.h, s.w, rad);
                const auto gb = detail::box_mean_adjoint(b, s.h, s.w, rad);
                for (std::size_t j = 0; j < s.plane(); ++j) g[j] = static_cast<T>(ga[j] + 2.0 * p[j] * gb[j]);
            }
        }
    }
    r.value *= norm;
    return r;
}

// ---------------------------------------------------------------------------
// Total variation and weight decay
// ---------------------------------------------------------------------------

/// Mean over images and valid stencil cells of sqrt(p^2 + q^2 + eps), with
/// one-sided differences p (down) and q (right); the last row and column
/// have no cell.
template <typename T>
LossValue<T> tv_loss(const Tensor<T>& pred, double eps = 1e-8) {
    if (!(eps >= 0.0)) throw ParameterError("tv eps must be >= 0");
    const Shape4& s = pred.shape();
    LossValue<T> r{0.0, Tensor<T>(s)};
    if (s.h < 2 || s.w < 2) return r;
    const std::size_t W = s.w;
    const double norm = 1.0 / static_cast<double>(s.n * s.c * (s.h - 1) * (s.w - 1));
    std::vector<double> g(s.plane());
    for (std::size_t n = 0; n < s.n; ++n) {
        for (std::size_t c = 0; c < s.c; ++c) {
            const T* x = pred.plane(n, c);
            std::fill(g.begin(), g.end(), 0.0);
            for (std::size_t i = 0; i + 1 < s.h; ++i) {
                for (std::size_t j = 0; j + 1 < W; ++j) {
                    const double v = x[i * W + j];
                    const double p = x[(i + 1) * W + j] - v;
                    const double q = x[i * W + j + 1] - v;
                    const double t = std::sqrt(p * p + q * q + eps);
                    r.value += t;
                    if (t > 0.0) {
                        g[i * W + j] -= (p + q) / t;
                        g[(i + 1) * W + j] += p / t;
                        g[i * W + j + 1] += q / t;
                    }
                }
            }
            T* dst = r.grad.plane(n, c);
            for (std::size_t j = 0; j < s.plane(); ++j) dst[j] = static_cast<T>(g[j] * norm);
        }
    }
    r.value *= norm;
    return r;
}

/// R_W = 1/2 * sum of squared convolution weights; biases and batchnorm
/// parameters are excluded.
template <typename T>
std::pair<double, ParamSet<T>> weight_decay(const ParamSet<T>& params) {
    ParamSet<T> grad = params.zeros_like();
    double value = 0.0;
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& e = params.entries()[i];
        if (e.kind != ParamKind::ConvWeight) continue;
        for (T v : e.value.data()) value += 0.5 * static_cast<double>(v) * static_cast<double>(v);
        grad[i] = e.value;
    }
    return {value, std::move(grad)};
}

// ---------------------------------------------------------------------------
// Joint loss
// ---------------------------------------------------------------------------

struct LossWeights {
    double l2 = 10.0;
    double ssim = 5.0;
    double tv = 0.5;
    double wd = 1e-4;

    friend bool operator==(const LossWeights&, const LossWeights&) = default;

    void validate() const {
        for (double v : {l2, ssim, tv, wd}) {
            if (!(v >= 0.0) || !std::isfinite(v)) throw ParameterError("loss weights must be finite and >= 0");
        }
    }
};

template <typename T>
struct LossReport {
    double l2 = 0.0;
    double ssim = 0.0;
    double tv = 0.0;
    double wd = 0.0;
    double total = 0.0;
    std::vector<Tensor<T>> grads;  // one per prediction head
    ParamSet<T> wd_grad;           // d(R_W)/d(theta), unscaled
};

/// Lambda-weighted sum of the loss terms. Multi-head terms are averaged
/// over heads. An empty `maps` span means unweighted L2 and SSIM.
template <typename T>
LossReport<T> joint_loss(std::span<const Tensor<T>> preds, std::span<const Tensor<T>> targets,
                         const ParamSet<T>& params, const LossWeights& lambda, const SsimConfig& cfg,
                         std::span<const WeightMap<T>> maps, double tv_eps = 1e-8) {
    lambda.validate();
    if (preds.size() != targets.size() || preds.empty()) {
        throw UsageError("joint_loss: " + std::to_string(preds.size()) + " predictions vs " +
                         std::to_string(targets.size()) + " targets");
    }
    if (!maps.empty() && maps.size() != preds.size()) throw UsageError("joint_loss: one weight map per head required");
    const double heads = static_cast<double>(preds.size());
    LossReport<T> rep;
    for (std::size_t h = 0; h < preds.size(); ++h) {
        const WeightMap<T>* w = maps.empty() ? nullptr : &maps[h];
        LossValue<T> l2 = l2_loss(preds[h], targets[h], w);
        LossValue<T> ss = ssim_loss(preds[h], targets[h], cfg, w);
        LossValue<T> tv = tv_loss(preds[h], tv_eps);
        rep.l2 += l2.value / heads;
        rep.ssim += ss.value / heads;
        rep.tv += tv.value / heads;
        Tensor<T> g(preds[h].shape());
        for (std::size_t j = 0; j < g.size(); ++j) {
            g[j] = static_cast<T>((lambda.l2 * l2.grad[j] + lambda.ssim * ss.grad[j] + lambda.tv * tv.grad[j]) / heads);
        }
        rep.grads.push_back(std::move(g));
    }
    auto [wd, wd_grad] = weight_decay(params);
    rep.wd = wd;
    rep.wd_grad = std::move(wd_grad);
    rep.total = lambda.l2 * rep.l2 + lambda.ssim * rep.ssim + lambda.tv * rep.tv + lambda.wd * rep.wd;
    return rep;
}

} // namespace synnet
