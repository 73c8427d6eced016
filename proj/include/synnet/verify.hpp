#pragma once

#include <chrono>
#include <cmath>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "synnet/loss.hpp"
#include "synnet/metrics.hpp"
#include "synnet/model.hpp"

namespace synnet {

// ---------------------------------------------------------------------------
// Reference oracles. Deliberately naive; they share no loops with the
// fast paths they check.
// ---------------------------------------------------------------------------

/// Direct cross-correlation over an explicitly zero-padded copy.
template <typename T>
Tensor<T> conv_oracle(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
    detail::check_conv_shapes(x.shape(), weight.shape(), bias.shape());
    const Shape4& s = x.shape();
    const std::size_t K = weight.shape().h, P = K / 2, O = weight.shape().n;
    const std::size_t ph = s.h + 2 * P, pw = s.w + 2 * P;
    std::vector<double> padded(s.n * s.c * ph * pw, 0.0);
    for (std::size_t n = 0; n < s.n; ++n)
        for (std::size_t c = 0; c < s.c; ++c)
            for (std::size_t y = 0; y < s.h; ++y)
                for (std::size_t w = 0; w < s.w; ++w)
                    padded[((n * s.c + c) * ph + y + P) * pw + w + P] = x(n, c, y, w);

    Tensor<T> out(Shape4{s.n, O, s.h, s.w});
    for (std::size_t n = 0; n < s.n; ++n)
        for (std::size_t o = 0; o < O; ++o)
            for (std::size_t y = 0; y < s.h; ++y)
                for (std::size_t w = 0; w < s.w; ++w) {
                    double acc = bias[o];
                    for (std::size_t c = 0; c < s.c; ++c)
                        for (std::size_t ky = 0; ky < K; ++ky)
                            for (std::size_t kx = 0; kx < K; ++kx)
                                acc += static_cast<double>(weight(o, c, ky, kx)) *
                                       padded[((n * s.c + c) * ph + y + ky) * pw + w + kx];
                    out(n, o, y, w) = static_cast<T>(acc);
                }
    return out;
}

template <typename T>
Tensor<T> conv_oracle(const Tensor<T>& x, const ConvParams<T>& p) {
    return conv_oracle(x, p.weight, p.bias);
}

/// Window maximum and its first offset (row-major within the window),
/// found by scanning all four candidates.
template <typename T>
std::pair<Tensor<T>, std::vector<std::uint8_t>> maxpool_oracle(const Tensor<T>& x) {
    const Shape4& s = x.shape();
    if (s.h % 2 || s.w % 2) throw ShapeError("maxpool_oracle needs even spatial dims, got " + s.str());
    Tensor<T> out(Shape4{s.n, s.c, s.h / 2, s.w / 2});
    std::vector<std::uint8_t> offsets(out.size());
    std::size_t k = 0;
    for (std::size_t n = 0; n < s.n; ++n)
        for (std::size_t c = 0; c < s.c; ++c)
            for (std::size_t y = 0; y < s.h / 2; ++y)
                for (std::size_t w = 0; w < s.w / 2; ++w, ++k) {
                    std::uint8_t best = 0;
                    for (std::uint8_t off = 1; off < 4; ++off) {
                        const T cand = x(n, c, 2 * y + off / 2, 2 * w + off % 2);
                        const T cur = x(n, c, 2 * y + best / 2, 2 * w + best % 2);
                        if (cand > cur) best = off;
                    }
                    out(n, c, y, w) = x(n, c, 2 * y + best / 2, 2 * w + best % 2);
                    offsets[k] = best;
                }
    return {std::move(out), std::move(offsets)};
}

/// Three-factor SSIM with every window position evaluated by a direct 2-D
/// weighted double loop.
template <typename T>
double ssim_standard_oracle(const Tensor<T>& a, const Tensor<T>& b, const StandardSsimOptions& opt = {}) {
    const Shape4& s = a.shape();
    const std::size_t K = opt.window;
    std::vector<double> g2(K * K);
    double total_w = 0.0;
    const double c = (static_cast<double>(K) - 1.0) / 2.0;
    for (std::size_t i = 0; i < K; ++i)
        for (std::size_t j = 0; j < K; ++j) {
            const double dy = static_cast<double>(i) - c, dx = static_cast<double>(j) - c;
            g2[i * K + j] = std::exp(-(dx * dx + dy * dy) / (2.0 * opt.sigma * opt.sigma));
            total_w += g2[i * K + j];
        }
    for (double& v : g2) v /= total_w;
    const double L = opt.dynamic_range;
    const double c1 = 0.0001 * L * L, c2 = 0.0009 * L * L;
    double acc = 0.0;
    std::size_t count = 0;
    for (std::size_t n = 0; n < s.n; ++n)
        for (std::size_t ch = 0; ch < s.c; ++ch)
            for (std::size_t y = 0; y + K <= s.h; ++y)
                for (std::size_t x = 0; x + K <= s.w; ++x) {
                    double ma = 0, mb = 0;
                    for (std::size_t i = 0; i < K; ++i)
                        for (std::size_t j = 0; j < K; ++j) {
                            ma += g2[i * K + j] * a(n, ch, y + i, x + j);
                            mb += g2[i * K + j] * b(n, ch, y + i, x + j);
                        }
                    double va = 0, vb = 0, cov = 0;
                    for (std::size_t i = 0; i < K; ++i)
                        for (std::size_t j = 0; j < K; ++j) {
                            const double da = a(n, ch, y + i, x + j) - ma;
                            const double db = b(n, ch, y + i, x + j) - mb;
                            va += g2[i * K + j] * da * da;
                            vb += g2[i * K + j] * db * db;
                            cov += g2[i * K + j] * da * db;
                        }
                    acc += (2 * ma * mb + c1) * (2 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
                    ++count;
                }
    return acc / static_cast<double>(count);
}

// ---------------------------------------------------------------------------
// Finite differences
// ---------------------------------------------------------------------------

using ScalarFn = std::function<double(const Tensor<double>&)>;

/// Central differences (f(x + h e_i) - f(x - h e_i)) / 2h for every element.
inline Tensor<double> finite_diff(const ScalarFn& f, const Tensor<double>& x, double h = 1e-5) {
    if (!(h > 0.0)) throw ParameterError("finite_diff step must be positive");
    Tensor<double> probe = x;
    Tensor<double> grad(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double orig = probe[i];
        probe[i] = orig + h;
        const double fp = f(probe);
        probe[i] = orig - h;
        const double fm = f(probe);
        probe[i] = orig;
        if (!std::isfinite(fp) || !std::isfinite(fm)) {
            throw ParameterError("finite_diff: objective is non-finite near element " + std::to_string(i));
        }
        grad[i] = (fp - fm) / (2.0 * h);
    }
    return grad;
}

/// max|a - b| / max(1e-12, max|a| + max|b|). Normalizing by the whole
/// gradient keeps entries that are exactly zero analytically (and hence
/// pure rounding noise numerically) from dominating.
inline double relative_error(const Tensor<double>& a, const Tensor<double>& b) {
    if (a.shape() != b.shape()) throw ShapeError("relative_error: " + a.shape().str() + " vs " + b.shape().str());
    double diff = 0.0, ma = 0.0, mb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        diff = std::max(diff, std::abs(a[i] - b[i]));
        ma = std::max(ma, std::abs(a[i]));
        mb = std::max(mb, std::abs(b[i]));
    }
    return diff / std::max(1e-12, ma + mb);
}

// ---------------------------------------------------------------------------
// Gradient-check suite
// ---------------------------------------------------------------------------

struct GradcheckEntry {
    std::string name;
    double max_rel_error = 0.0;
    double tolerance = 0.0;
    std::size_t elements = 0;
    bool pass = false;
};

struct GradcheckReport {
    std::vector<GradcheckEntry> entries;
    double seconds = 0.0;

    bool all_pass() const {
        for (const auto& e : entries) {
            if (!e.pass) return false;
        }
        return !entries.empty();
    }

    const GradcheckEntry* find(const std::string& name) const {
        for (const auto& e : entries) {
            if (e.name == name) return &e;
        }
        return nullptr;
    }
};

inline void print_report(std::ostream& os, const GradcheckReport& r) {
    char buf[256];
    for (const auto& e : r.entries) {
        std::snprintf(buf, sizeof buf, "%s %-28s max_rel=%.3e tol=%.0e n=%zu\n", e.pass ? "PASS" : "FAIL",
                      e.name.c_str(), e.max_rel_error, e.tolerance, e.elements);
        os << buf;
    }
    std::snprintf(buf, sizeof buf, "%zu checks, %s, %.2f s\n", r.entries.size(), r.all_pass() ? "all passed" : "FAILED",
                  r.seconds);
    os << buf;
}

/// Test hooks. `conv_backward` may tamper with the analytic conv gradients
/// so tests can confirm the suite notices.
struct GradcheckHooks {
    std::function<void(Tensor<double>& grad_in, ConvGrads<double>& grads)> conv_backward;
};

namespace detail {

inline Tensor<double> random_away_from_zero(const Shape4& s, RngStream& rng, double margin) {
    Tensor<double> t(s);
    for (double& v : t.data()) {
        do v = rng.uniform(-1.0, 1.0);
        while (std::abs(v) < margin);
    }
    return t;
}

// Redraws until every 2x2 window's maximum beats the runner-up by `gap`.
inline Tensor<double> random_without_pool_ties(const Shape4& s, RngStream& rng, double gap) {
    for (;;) {
        Tensor<double> t = tensor_random<double>(s, rng, 1.0);
        bool ok = true;
        for (std::size_t n = 0; n < s.n && ok; ++n)
            for (std::size_t c = 0; c < s.c && ok; ++c)
                for (std::size_t y = 0; y < s.h && ok; y += 2)
                    for (std::size_t x = 0; x < s.w && ok; x += 2) {
                        double v[4] = {t(n, c, y, x), t(n, c, y, x + 1), t(n, c, y + 1, x), t(n, c, y + 1, x + 1)};
                        std::sort(v, v + 4);
                        ok = v[3] - v[2] >= gap;
                    }
        if (ok) return t;
    }
}

inline Tensor<double> random_image(const Shape4& s, RngStream& rng) {
    Tensor<double> t(s);
    for (double& v : t.data()) v = rng.uniform(0.05, 0.95);
    return t;
}

// Projection <r, y>: turns a tensor-valued map into a scalar whose
// gradient with respect to y is r.
inline double project(const Tensor<double>& r, const Tensor<double>& y) { return dot(r, y); }

class Suite {
public:
    explicit Suite(std::uint64_t seed, GradcheckHooks hooks) : rng_(seed), hooks_(std::move(hooks)) {}

    void check(const std::string& name, double tol, const Tensor<double>& analytic, const ScalarFn& f,
               const Tensor<double>& at) {
        const Tensor<double> numeric = finite_diff(f, at, 1e-5);
        const double err = relative_error(analytic, numeric);
        report_.entries.push_back({name, err, tol, analytic.size(), err <= tol});
    }

    void conv_checks() {
        const Tensor<double> x = tensor_random<double>(Shape4{2, 3, 5, 6}, rng_, 1.0);
        const Tensor<double> w = tensor_random<double>(Shape4{4, 3, 3, 3}, rng_, 0.5);
        const Tensor<double> b = tensor_random<double>(Shape4{1, 4, 1, 1}, rng_, 0.5);
        const Tensor<double> r = tensor_random<double>(Shape4{2, 4, 5, 6}, rng_, 1.0);
        auto [y, tape] = conv2d_forward(x, w, b);
        auto [gin, grads] = conv2d_backward(tape, r);
        if (hooks_.conv_backward) hooks_.conv_backward(gin, grads);
        check("conv3x3.input", 1e-6, gin, [&](const Tensor<double>& v) { return project(r, conv2d_forward(v, w, b).first); }, x);
        check("conv3x3.weight", 1e-6, grads.weight,
              [&](const Tensor<double>& v) { return project(r, conv2d_forward(x, v, b).first); }, w);
        check("conv3x3.bias", 1e-6, grads.bias,
              [&](const Tensor<double>& v) { return project(r, conv2d_forward(x, w, v).first); }, b);

        const Tensor<double> w1 = tensor_random<double>(Shape4{2, 3, 1, 1}, rng_, 0.5);
        const Tensor<double> b1(Shape4{1, 2, 1, 1}, 0.1);
        const Tensor<double> r1 = tensor_random<double>(Shape4{2, 2, 5, 6}, rng_, 1.0);
        auto [y1, tape1] = conv2d_forward(x, w1, b1);
        auto [gin1, grads1] = conv2d_backward(tape1, r1);
        if (hooks_.conv_backward) hooks_.conv_backward(gin1, grads1);
        check("conv1x1.input", 1e-6, gin1,
              [&](const Tensor<double>& v) { return project(r1, conv2d_forward(v, w1, b1).first); }, x);
        check("conv1x1.weight", 1e-6, grads1.weight,
              [&](const Tensor<double>& v) { return project(r1, conv2d_forward(x, v, b1).first); }, w1);
    }

    void batchnorm_checks() {
        const Shape4 s{3, 2, 4, 4};
        const Tensor<double> x = tensor_random<double>(s, rng_, 2.0);
        const Tensor<double> gamma = tensor_random<double>(Shape4{1, 2, 1, 1}, rng_, 1.0);
        const Tensor<double> beta = tensor_random<double>(Shape4{1, 2, 1, 1}, rng_, 1.0);
        const Tensor<double> r = tensor_random<double>(s, rng_, 1.0);
        auto run = [&](const Tensor<double>& xv, const Tensor<double>& g, const Tensor<double>& b) {
            Tensor<double> rm(Shape4{1, 2, 1, 1}), rv(Shape4{1, 2, 1, 1}, 1.0);
            return batchnorm_forward(xv, g, b, rm, rv, Mode::Train);
        };
        auto [y, tape] = run(x, gamma, beta);
        const BatchNormGrads<double> g = batchnorm_backward(tape, r);
        check("batchnorm.input", 1e-6, g.grad_in,
              [&](const Tensor<double>& v) { return project(r, run(v, gamma, beta).first); }, x);
        check("batchnorm.gamma", 1e-6, g.gamma,
              [&](const Tensor<double>& v) { return project(r, run(x, v, beta).first); }, gamma);
        check("batchnorm.beta", 1e-6, g.beta,
              [&](const Tensor<double>& v) { return project(r, run(x, gamma, v).first); }, beta);
    }

    void activation_checks() {
        // Inputs kept >= 0.01 away from the ReLU kink.
        const Shape4 s{2, 2, 4, 4};
        const Tensor<double> x = random_away_from_zero(s, rng_, 0.01);
        const Tensor<double> r = tensor_random<double>(s, rng_, 1.0);
        auto [y, tape] = relu_forward(x);
        check("relu", 1e-6, relu_backward(tape, r),
              [&](const Tensor<double>& v) { return project(r, relu_forward(v).first); }, x);
        check("linear", 1e-6, linear_activation_backward(r),
              [&](const Tensor<double>& v) { return project(r, linear_activation(v)); }, x);
    }

    void pool_checks() {
        // Window maxima lead the runner-up by >= 0.01, so no argmax flips.
        const Shape4 s{2, 2, 6, 8};
        const Tensor<double> x = random_without_pool_ties(s, rng_, 0.01);
        const PoolResult<double> pr = maxpool2x2_forward(x);
        const Tensor<double> r = tensor_random<double>(pr.pooled.shape(), rng_, 1.0);
        check("maxpool2x2", 1e-6, maxpool2x2_backward(pr.tape, r),
              [&](const Tensor<double>& v) { return project(r, maxpool2x2_forward(v).pooled); }, x);

        const Tensor<double> v0 = tensor_random<double>(pr.pooled.shape(), rng_, 1.0);
        const Tensor<double> ru = tensor_random<double>(s, rng_, 1.0);
        auto [u, utape] = unpool2x2_forward(v0, pr.indices);
        check("unpool2x2", 1e-6, unpool2x2_backward(utape, ru),
              [&](const Tensor<double>& v) { return project(ru, unpool2x2_forward(v, pr.indices).first); }, v0);
    }

    void loss_checks() {
        const Shape4 s{2, 1, 12, 12};
        const Tensor<double> p = random_image(s, rng_);
        const Tensor<double> t = random_image(s, rng_);
        const WeightMap<double> wmap = edge_weight_map(t, 4.0);

        check("l2", 1e-7, l2_loss(p, t).grad, [&](const Tensor<double>& v) { return l2_loss(v, t).value; }, p);
        check("l2.weighted", 1e-7, l2_loss(p, t, &wmap).grad,
              [&](const Tensor<double>& v) { return l2_loss(v, t, &wmap).value; }, p);

        const SsimConfig local = SsimConfig::for_range(1.0, SsimMode::Local, 7);
        const SsimConfig global = SsimConfig::for_range(1.0, SsimMode::Global);
        check("ssim.local", 1e-5, ssim_loss(p, t, local).grad,
              [&](const Tensor<double>& v) { return ssim_loss(v, t, local).value; }, p);
        check("ssim.local.weighted", 1e-5, ssim_loss(p, t, local, &wmap).grad,
              [&](const Tensor<double>& v) { return ssim_loss(v, t, local, &wmap).value; }, p);
        check("ssim.global", 1e-5, ssim_loss(p, t, global).grad,
              [&](const Tensor<double>& v) { return ssim_loss(v, t, global).value; }, p);
        check("ssim.global.weighted", 1e-5, ssim_loss(p, t, global, &wmap).grad,
              [&](const Tensor<double>& v) { return ssim_loss(v, t, global, &wmap).value; }, p);

        // Every stencil magnitude kept >= 0.05 so the sqrt kink is far away.
        Tensor<double> q = random_image(s, rng_);
        while (min_tv_magnitude(q) < 0.05) q = random_image(s, rng_);
        check("tv", 1e-4, tv_loss(q).grad, [&](const Tensor<double>& v) { return tv_loss(v).value; }, q);
    }

    void weight_decay_check() {
        ParamSet<double> ps;
        ps.add("a.weight", ParamKind::ConvWeight, tensor_random<double>(Shape4{2, 2, 3, 3}, rng_, 1.0));
        ps.add("a.bias", ParamKind::ConvBias, tensor_random<double>(Shape4{1, 2, 1, 1}, rng_, 1.0));
        auto [value, grad] = weight_decay(ps);
        check("weight_decay", 1e-7, grad[0],
              [&](const Tensor<double>& v) {
                  ParamSet<double> q = ps;
                  q[0] = v;
                  return weight_decay(q).first;
              },
              ps[0]);
    }

    // Every parameter of a small network against central differences of a
    // joint loss. Draws are rejected while any pre-activation lies within
    // 1e-3 of the ReLU kink or any positive pool window is near a tie.
    void model_check(const std::string& name, const Topology& topo, std::size_t hw) {
        for (int attempt = 0; attempt < 64; ++attempt) {
            RngStream init(rng_.next_u64());
            auto [model, params] = build_model<double>(topo, init);
            std::vector<Tensor<double>> inputs, targets;
            for (std::size_t a = 0; a < topo.in_arms(); ++a) inputs.push_back(random_image(Shape4{2, 1, hw, hw}, rng_));
            for (std::size_t h = 0; h < topo.out_arms(); ++h) targets.push_back(random_image(Shape4{2, 1, hw, hw}, rng_));
            const LossWeights lambda{1.0, 0.5, 0.1, 0.01};
            const SsimConfig ssim = SsimConfig::for_range(1.0, SsimMode::Local, 3);
            std::vector<WeightMap<double>> maps;
            for (const auto& t : targets) maps.push_back(edge_weight_map(t, 4.0));

            auto objective = [&](ParamSet<double> ps, ForwardTrace<double>* keep) {
                ForwardTrace<double> tr = forward<double>(model, ps, inputs, Mode::Train);
                LossReport<double> rep = joint_loss<double>(tr.predictions, targets, ps, lambda, ssim, maps);
                if (keep) *keep = std::move(tr);
                return rep;
            };
            ForwardTrace<double> trace;
            LossReport<double> rep = objective(params, &trace);
            if (!well_separated(trace)) continue;
            ParamSet<double> grads = backward<double>(model, params, trace, rep.grads);
            for (std::size_t i = 0; i < grads.size(); ++i) {
                if (params.entries()[i].kind == ParamKind::ConvWeight) {
                    for (std::size_t j = 0; j < grads[i].size(); ++j) grads[i][j] += lambda.wd * rep.wd_grad[i][j];
                }
            }

            // Flatten learnable parameters into one vector.
            std::vector<std::size_t> learn;
            std::size_t total = 0;
            for (std::size_t i = 0; i < params.size(); ++i) {
                if (is_learnable(params.entries()[i].kind)) {
                    learn.push_back(i);
                    total += params[i].size();
                }
            }
            Tensor<double> flat(Shape4{1, 1, 1, total}), flat_grad(Shape4{1, 1, 1, total});
            std::size_t k = 0;
            for (std::size_t i : learn) {
                for (std::size_t j = 0; j < params[i].size(); ++j, ++k) {
                    flat[k] = params[i][j];
                    flat_grad[k] = grads[i][j];
                }
            }
            auto unflatten = [&](const Tensor<double>& v) {
                ParamSet<double> ps = params;
                std::size_t m = 0;
                for (std::size_t i : learn) {
                    for (std::size_t j = 0; j < ps[i].size(); ++j, ++m) ps[i][j] = v[m];
                }
                return ps;
            };
            check(name, 1e-5, flat_grad, [&](const Tensor<double>& v) { return objective(unflatten(v), nullptr).total; },
                  flat);
            return;
        }
        report_.entries.push_back({name + " (no admissible draw)", 1.0, 1e-5, 0, false});
    }

    GradcheckReport finish() { return std::move(report_); }

private:
    static double min_tv_magnitude(const Tensor<double>& x) {
        const Shape4& s = x.shape();
        double lo = 1e300;
        for (std::size_t n = 0; n < s.n; ++n)
            for (std::size_t y = 0; y + 1 < s.h; ++y)
                for (std::size_t w = 0; w + 1 < s.w; ++w) {
                    const double p = x(n, 0, y + 1, w) - x(n, 0, y, w);
                    const double q = x(n, 0, y, w + 1) - x(n, 0, y, w);
                    lo = std::min(lo, std::sqrt(p * p + q * q));
                }
        return lo;
    }

    static bool block_ok(const BlockTrace<double>& b) {
        for (double v : b.relu.input.data()) {
            if (std::abs(v) < 1e-3) return false;
        }
        return true;
    }

    static bool well_separated(const ForwardTrace<double>& tr) {
        for (const auto& e : tr.encoders) {
            for (const auto& b : e.blocks) {
                if (!block_ok(b)) return false;
            }
            for (const auto& f : e.skips) {
                const Shape4& s = f.shape();
                for (std::size_t n = 0; n < s.n; ++n)
                    for (std::size_t c = 0; c < s.c; ++c)
                        for (std::size_t y = 0; y < s.h; y += 2)
                            for (std::size_t x = 0; x < s.w; x += 2) {
                                double v[4] = {f(n, c, y, x), f(n, c, y, x + 1), f(n, c, y + 1, x),
                                               f(n, c, y + 1, x + 1)};
                                std::sort(v, v + 4);
                                if (v[3] > 0.0 && v[3] - v[2] < 1e-3) return false;
                            }
            }
        }
        for (const auto& d : tr.decoders) {
            for (const auto& b : d.blocks) {
                if (!block_ok(b)) return false;
            }
        }
        return true;
    }

    RngStream rng_;
    GradcheckHooks hooks_;
    GradcheckReport report_;
};

} // namespace detail

/// Layer, loss and whole-network gradient checks at double precision with
/// central differences (h = 1e-5).
inline GradcheckReport gradcheck_suite(std::uint64_t seed, const GradcheckHooks& hooks = {}) {
    const auto t0 = std::chrono::steady_clock::now();
    detail::Suite s(seed, hooks);
    s.conv_checks();
    s.batchnorm_checks();
    s.activation_checks();
    s.pool_checks();
    s.loss_checks();
    s.weight_decay_check();

    Topology tiny;
    tiny.depth = 1;
    tiny.channels = {4};
    tiny.head_width = 4;
    s.model_check("model.siso.depth1", tiny, 8);

    Topology miso;
    miso.kind = TopologyKind::Miso;
    miso.depth = 2;
    miso.channels = {2, 3};
    miso.head_width = 2;
    s.model_check("model.miso.depth2", miso, 8);

    Topology mimo = miso;
    mimo.kind = TopologyKind::Mimo;
    s.model_check("model.mimo.depth2", mimo, 8);

    GradcheckReport r = s.finish();
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return r;
}

} // namespace synnet
