// Copyright Contributors to the texsplat project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "texsplat/math.hpp"

#include <array>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace texsplat {

/// Float RGB image, row-major, 3 interleaved channels.
struct Image {
    int width = 0;
    int height = 0;
    std::vector<Real> data;

    Image() = default;
    Image(int w, int h, Real fill = 0) : width(w), height(h), data(std::size_t(w) * std::size_t(h) * 3, fill) {}

    std::size_t pixel_index(int x, int y) const { return std::size_t(y) * std::size_t(width) + std::size_t(x); }
    Vec3 at(int x, int y) const {
        const std::size_t b = pixel_index(x, y) * 3;
        return {data[b], data[b + 1], data[b + 2]};
    }
    void set(int x, int y, Vec3 c) {
        const std::size_t b = pixel_index(x, y) * 3;
        data[b] = c.x;
        data[b + 1] = c.y;
        data[b + 2] = c.z;
    }
    bool same_shape(const Image &o) const { return width == o.width && height == o.height; }

    friend bool operator==(const Image &, const Image &) = default;
};

inline void require_same_shape(const Image &a, const Image &b) {
    if (!a.same_shape(b))
        throw std::invalid_argument("image dimensions differ");
}

inline Real mean_abs_error(const Image &a, const Image &b) {
    require_same_shape(a, b);
    if (a.data.empty())
        return 0;
    Real acc = 0;
    for (std::size_t i = 0; i < a.data.size(); ++i)
        acc += std::abs(a.data[i] - b.data[i]);
    return acc / Real(a.data.size());
}

inline Real mean_squared_error(const Image &a, const Image &b) {
    require_same_shape(a, b);
    if (a.data.empty())
        return 0;
    Real acc = 0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const Real d = a.data[i] - b.data[i];
        acc += d * d;
    }
    return acc / Real(a.data.size());
}

/// Reported in place of +inf for identical images.
inline constexpr Real kPsnrCap = 99;

/// PSNR in dB for images in [0,1], capped at 99.
inline Real psnr(const Image &a, const Image &b) {
    const Real mse = mean_squared_error(a, b);
    if (mse <= 0)
        return kPsnrCap;
    return std::min(kPsnrCap, -10 * std::log10(mse));
}

namespace detail {

inline constexpr int kSsimRadius = 5;

inline std::array<Real, 2 * kSsimRadius + 1> ssim_kernel() {
    std::array<Real, 2 * kSsimRadius + 1> k{};
    Real sum = 0;
    for (int i = -kSsimRadius; i <= kSsimRadius; ++i) {
        k[std::size_t(i + kSsimRadius)] = std::exp(-(i * i) / (2 * 1.5 * 1.5));
        sum += k[std::size_t(i + kSsimRadius)];
    }
    for (auto &v : k)
        v /= sum;
    return k;
}

/// Separable Gaussian blur with zero padding, output the same size.
inline std::vector<Real> blur(const std::vector<Real> &plane, int w, int h) {
    static const auto kernel = ssim_kernel();
    std::vector<Real> tmp(plane.size(), 0.0), out(plane.size(), 0.0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            Real acc = 0;
            for (int k = -kSsimRadius; k <= kSsimRadius; ++k) {
                const int xx = x + k;
                if (xx >= 0 && xx < w)
                    acc += kernel[std::size_t(k + kSsimRadius)] * plane[std::size_t(y) * w + xx];
            }
            tmp[std::size_t(y) * w + x] = acc;
        }
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            Real acc = 0;
            for (int k = -kSsimRadius; k <= kSsimRadius; ++k) {
                const int yy = y + k;
                if (yy >= 0 && yy < h)
                    acc += kernel[std::size_t(k + kSsimRadius)] * tmp[std::size_t(yy) * w + x];
            }
            out[std::size_t(y) * w + x] = acc;
        }
    return out;
}

} // namespace detail

struct SsimResult {
    Real value = 1;
    /// d value / d a, same layout as Image::data (empty unless requested).
    std::vector<Real> grad;
};

/// Mean SSIM over pixels and channels: 11×11 Gaussian window (σ = 1.5),
/// C1 = 0.01², C2 = 0.03², zero-padded borders. Optionally returns the
/// gradient with respect to `a`.
inline SsimResult ssim(const Image &a, const Image &b, bool with_grad = false) {
    require_same_shape(a, b);
    constexpr Real c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
    const int w = a.width, h = a.height;
    const std::size_t np = std::size_t(w) * std::size_t(h);
    SsimResult res;
    if (np == 0)
        return res;
    if (with_grad)
        res.grad.assign(np * 3, 0.0);
    const Real inv_n = 1.0 / Real(np * 3);
    Real total = 0;
    std::vector<Real> x(np), y(np), xx(np), yy(np), xy(np);
    for (int ch = 0; ch < 3; ++ch) {
        for (std::size_t p = 0; p < np; ++p) {
            x[p] = a.data[p * 3 + ch];
            y[p] = b.data[p * 3 + ch];
            xx[p] = x[p] * x[p];
            yy[p] = y[p] * y[p];
            xy[p] = x[p] * y[p];
        }
        const auto mx = detail::blur(x, w, h), my = detail::blur(y, w, h);
        const auto exx = detail::blur(xx, w, h), eyy = detail::blur(yy, w, h), exy = detail::blur(xy, w, h);
        std::vector<Real> d_mx, d_exx, d_exy;
        if (with_grad) {
            d_mx.resize(np);
            d_exx.resize(np);
            d_exy.resize(np);
        }
        for (std::size_t p = 0; p < np; ++p) {
            const Real sxx = exx[p] - mx[p] * mx[p];
            const Real syy = eyy[p] - my[p] * my[p];
            const Real sxy = exy[p] - mx[p] * my[p];
            const Real l1 = 2 * mx[p] * my[p] + c1, l2 = 2 * sxy + c2;
            const Real d1 = mx[p] * mx[p] + my[p] * my[p] + c1, d2 = sxx + syy + c2;
            const Real s = (l1 * l2) / (d1 * d2);
            total += s;
            if (with_grad) {
                const Real ds_dmx = 2 * my[p] * l2 / (d1 * d2) - s * 2 * mx[p] / d1;
                const Real ds_dsxx = -s / d2;
                const Real ds_dsxy = 2 * l1 / (d1 * d2);
                d_mx[p] = (ds_dmx - 2 * mx[p] * ds_dsxx - my[p] * ds_dsxy) * inv_n;
                d_exx[p] = ds_dsxx * inv_n;
                d_exy[p] = ds_dsxy * inv_n;
            }
        }
        if (with_grad) {
            const auto g_mx = detail::blur(d_mx, w, h);
            const auto g_exx = detail::blur(d_exx, w, h);
            const auto g_exy = detail::blur(d_exy, w, h);
            for (std::size_t p = 0; p < np; ++p)
                res.grad[p * 3 + ch] = g_mx[p] + 2 * x[p] * g_exx[p] + y[p] * g_exy[p];
        }
    }
    res.value = total * inv_n;
    return res;
}

} // namespace texsplat
