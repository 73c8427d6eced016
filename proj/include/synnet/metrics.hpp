#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "synnet/tensor.hpp"

namespace synnet {

/// 10 log10(max^2 / MSE) in dB; +inf when the images are identical.
template <typename T>
double psnr(const Tensor<T>& pred, const Tensor<T>& target, double max_value = 1.0) {
    if (pred.shape() != target.shape()) throw ShapeError("psnr: " + pred.shape().str() + " vs " + target.shape().str());
    if (!(max_value > 0.0)) throw ParameterError("psnr max_value must be positive");
    double mse = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = static_cast<double>(pred[i]) - static_cast<double>(target[i]);
        mse += d * d;
    }
    mse /= static_cast<double>(pred.size());
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(max_value * max_value / mse);
}

struct StandardSsimOptions {
    std::size_t window = 11;
    double sigma = 1.5;
    double dynamic_range = 1.0;
};

namespace detail {

inline std::vector<double> gaussian_kernel(std::size_t size, double sigma) {
    std::vector<double> k(size);
    const double c = static_cast<double>(size - 1) / 2.0;
    double total = 0.0;
    for (std::size_t i = 0; i < size; ++i) {
        const double d = static_cast<double>(i) - c;
        k[i] = std::exp(-d * d / (2.0 * sigma * sigma));
        total += k[i];
    }
    for (double& v : k) v /= total;
    return k;
}

// Separable "valid" filtering: output is (H-k+1) x (W-k+1).
inline std::vector<double> filter_valid(const std::vector<double>& in, std::size_t H, std::size_t W,
                                        const std::vector<double>& k) {
    const std::size_t K = k.size();
    const std::size_t oh = H - K + 1, ow = W - K + 1;
    std::vector<double> rows(H * ow);
    for (std::size_t y = 0; y < H; ++y) {
        for (std::size_t x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (std::size_t i = 0; i < K; ++i) acc += k[i] * in[y * W + x + i];
            rows[y * ow + x] = acc;
        }
    }
    std::vector<double> out(oh * ow);
    for (std::size_t y = 0; y < oh; ++y) {
        for (std::size_t x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (std::size_t i = 0; i < K; ++i) acc += k[i] * rows[(y + i) * ow + x];
            out[y * ow + x] = acc;
        }
    }
    return out;
}

} // namespace detail

/// Three-factor SSIM (luminance, contrast, structure) on Gaussian-weighted
/// windows fully inside the image, averaged over all window positions of
/// every plane.
template <typename T>
double ssim_standard(const Tensor<T>& pred, const Tensor<T>& target, const StandardSsimOptions& opt = {}) {
    if (pred.shape() != target.shape()) {
        throw ShapeError("ssim_standard: " + pred.shape().str() + " vs " + target.shape().str());
    }
    const Shape4& s = pred.shape();
    if (opt.window == 0 || opt.window > std::min(s.h, s.w)) {
        throw ParameterError("ssim_standard window " + std::to_string(opt.window) + " larger than image " + s.str());
    }
    if (!(opt.sigma > 0.0) || !(opt.dynamic_range > 0.0)) throw ParameterError("ssim_standard: bad sigma or range");
    const double c1 = (0.01 * opt.dynamic_range) * (0.01 * opt.dynamic_range);
    const double c2 = (0.03 * opt.dynamic_range) * (0.03 * opt.dynamic_range);
    const auto k = detail::gaussian_kernel(opt.window, opt.sigma);

    double total = 0.0;
    std::size_t count = 0;
    std::vector<double> a(s.plane()), b(s.plane()), aa(s.plane()), bb(s.plane()), ab(s.plane());
    for (std::size_t n = 0; n < s.n; ++n) {
        for (std::size_t c = 0; c < s.c; ++c) {
            for (std::size_t j = 0; j < s.plane(); ++j) {
                a[j] = pred.plane(n, c)[j];
                b[j] = target.plane(n, c)[j];
                aa[j] = a[j] * a[j];
                bb[j] = b[j] * b[j];
                ab[j] = a[j] * b[j];
            }
            const auto ma = detail::filter_valid(a, s.h, s.w, k);
            const auto mb = detail::filter_valid(b, s.h, s.w, k);
            const auto saa = detail::filter_valid(aa, s.h, s.w, k);
            const auto sbb = detail::filter_valid(bb, s.h, s.w, k);
            const auto sab = detail::filter_valid(ab, s.h, s.w, k);
            for (std::size_t j = 0; j < ma.size(); ++j) {
                const double va = saa[j] - ma[j] * ma[j];
                const double vb = sbb[j] - mb[j] * mb[j];
                const double cov = sab[j] - ma[j] * mb[j];
                total += ((2.0 * ma[j] * mb[j] + c1) * (2.0 * cov + c2)) /
                         ((ma[j] * ma[j] + mb[j] * mb[j] + c1) * (va + vb + c2));
            }
            count += ma.size();
        }
    }
    return total / static_cast<double>(count);
}

} // namespace synnet
