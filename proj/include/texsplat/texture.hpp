// Copyright Contributors to the texsplat project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "texsplat/math.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace texsplat {

inline constexpr int kMaxTextureRes = 256;

/// Shape and placement of one texture grid. Texel (i, j) has its center at
/// continuous texel coordinate u = (i, j).
struct GridLayout {
    int res_u = 0;
    int res_v = 0;
    /// World-space edge length of one texel (k).
    Real texel_size = 0;
    /// Texel coordinate of the primitive's local origin.
    Vec2 offset;

    bool empty() const { return res_u <= 0 || res_v <= 0; }
    std::size_t texel_count() const { return empty() ? 0 : std::size_t(res_u) * std::size_t(res_v); }
    std::size_t index(int i, int j) const { return std::size_t(i) * std::size_t(res_v) + std::size_t(j); }

    friend bool operator==(const GridLayout &, const GridLayout &) = default;
};

/// Centering offset for a freshly allocated grid.
inline Vec2 centered_offset(int res_u, int res_v) { return {res_u / 2.0 - 0.5, res_v / 2.0 - 0.5}; }

/// Per-primitive grid of unactivated RGB texel offsets, laid out [u][v][channel].
struct TextureGrid {
    GridLayout layout;
    std::vector<Real> texels;

    TextureGrid() = default;
    TextureGrid(int res_u, int res_v, Real texel_size)
        : layout{res_u, res_v, texel_size, centered_offset(res_u, res_v)},
          texels(layout.texel_count() * 3, 0.0) {}

    bool empty() const { return layout.empty(); }
    Real &at(int i, int j, int c) { return texels[layout.index(i, j) * 3 + std::size_t(c)]; }
    Real at(int i, int j, int c) const { return texels[layout.index(i, j) * 3 + std::size_t(c)]; }

    friend bool operator==(const TextureGrid &, const TextureGrid &) = default;
};

/// Read-only window onto one grid, either standalone or inside a pool.
struct TextureView {
    GridLayout layout;
    std::span<const Real> texels;

    TextureView() = default;
    TextureView(const GridLayout &l, std::span<const Real> t) : layout(l), texels(t) {}
    TextureView(const TextureGrid &g) : layout(g.layout), texels(g.texels) {}

    bool empty() const { return layout.empty(); }
    Real at(int i, int j, int c) const { return texels[layout.index(i, j) * 3 + std::size_t(c)]; }
};

/// c = 2·sigmoid(c') − 1, componentwise.
inline Real activate(Real raw) { return 2 * sigmoid(raw) - 1; }
inline Vec3 activate(Vec3 raw) { return {activate(raw.x), activate(raw.y), activate(raw.z)}; }
inline Real activate_grad(Real raw) {
    const Real s = sigmoid(raw);
    return 2 * s * (1 - s);
}
/// Pre-activation value whose activation is `v`, for v in (−1, 1).
inline Real deactivate(Real v) { return logit((v + 1) / 2); }

/// Fixed-texel mapping: u = p^l / k + T_offset. Independent of the
/// primitive's scales.
inline Vec2 uv_fixed(Vec2 local, const GridLayout &layout) { return local / layout.texel_size + layout.offset; }

/// Scale-coupled mapping u = (p^c / (2s) + 0.5) · res, in corner-origin
/// coordinates. Kept as the baseline the fixed mapping is compared against.
inline Vec2 uv_naive(Vec2 canonical, Real s_extent, int res) {
    return (canonical / (2 * s_extent) + Vec2{0.5, 0.5}) * Real(res);
}

/// The four texels touched by a bilinear lookup. Taps outside the grid get
/// index -1 and contribute zero (activated zero, i.e. the DC color).
struct BilinearTaps {
    std::array<long, 4> index{-1, -1, -1, -1};
    std::array<Real, 4> weight{};
    std::array<Real, 4> dweight_du{};
    std::array<Real, 4> dweight_dv{};
};

inline BilinearTaps bilinear_taps(const GridLayout &layout, Vec2 u) {
    BilinearTaps taps;
    if (layout.empty() || !std::isfinite(u.x) || !std::isfinite(u.y))
        return taps;
    const Real fu = std::floor(u.x), fv = std::floor(u.y);
    // Far outside: every tap is padding.
    if (fu < -2 || fv < -2 || fu > layout.res_u + 1 || fv > layout.res_v + 1)
        return taps;
    const int i0 = int(fu), j0 = int(fv);
    const Real a = u.x - fu, b = u.y - fv;
    const std::array<int, 4> di{0, 1, 0, 1}, dj{0, 0, 1, 1};
    const std::array<Real, 4> wu{1 - a, a, 1 - a, a}, wv{1 - b, 1 - b, b, b};
    const std::array<Real, 4> dwu{-1, 1, -1, 1}, dwv{-1, -1, 1, 1};
    for (int k = 0; k < 4; ++k) {
        const int i = i0 + di[k], j = j0 + dj[k];
        if (i < 0 || j < 0 || i >= layout.res_u || j >= layout.res_v)
            continue;
        taps.index[k] = long(layout.index(i, j));
        taps.weight[k] = wu[k] * wv[k];
        taps.dweight_du[k] = dwu[k] * wv[k];
        taps.dweight_dv[k] = wu[k] * dwv[k];
    }
    return taps;
}

/// Bilinear lookup over already-activated texels.
inline Vec3 sample_activated(std::span<const Real> activated, const BilinearTaps &taps) {
    Vec3 out;
    for (int k = 0; k < 4; ++k) {
        if (taps.index[k] < 0)
            continue;
        const std::size_t base = std::size_t(taps.index[k]) * 3;
        out += Vec3{activated[base], activated[base + 1], activated[base + 2]} * taps.weight[k];
    }
    return out;
}

/// Bilinear interpolation of activated texels at u; zero padding outside.
inline Vec3 sample_bilinear(const TextureView &grid, Vec2 u) {
    const BilinearTaps taps = bilinear_taps(grid.layout, u);
    Vec3 out;
    for (int k = 0; k < 4; ++k) {
        if (taps.index[k] < 0)
            continue;
        const std::size_t base = std::size_t(taps.index[k]) * 3;
        out += activate(Vec3{grid.texels[base], grid.texels[base + 1], grid.texels[base + 2]}) * taps.weight[k];
    }
    return out;
}

/// Bilinear interpolation of the raw (pre-activation) texels, zero padded.
inline Vec3 sample_raw(const TextureView &grid, Vec2 u) {
    const BilinearTaps taps = bilinear_taps(grid.layout, u);
    Vec3 out;
    for (int k = 0; k < 4; ++k) {
        if (taps.index[k] < 0)
            continue;
        const std::size_t base = std::size_t(taps.index[k]) * 3;
        out += Vec3{grid.texels[base], grid.texels[base + 1], grid.texels[base + 2]} * taps.weight[k];
    }
    return out;
}

inline int axis_resolution(Real scale, Real texel_size) {
    const Real n = std::ceil(6 * scale / texel_size - 1e-9);
    if (!(n >= 1))
        return 1;
    return n >= kMaxTextureRes ? kMaxTextureRes : int(n);
}

/// Resolution covering ±3σ on each axis, capped at 256 and at least 1.
inline std::array<int, 2> required_resolution(Vec2 scales, Real texel_size) {
    return {axis_resolution(scales.x, texel_size), axis_resolution(scales.y, texel_size)};
}

/// Crop or zero-pad to `res_u × res_v` at unchanged texel size. The texel
/// lattice never moves relative to the primitive, so learned content stays
/// put; the offset shifts by whole texels.
inline TextureGrid reallocate(const TextureGrid &grid, int res_u, int res_v) {
    if (res_u < 1 || res_v < 1 || res_u > kMaxTextureRes || res_v > kMaxTextureRes)
        throw std::invalid_argument("reallocate: resolution out of [1, 256]");
    if (grid.layout.res_u == res_u && grid.layout.res_v == res_v)
        return grid;
    const int pad_u = int(std::floor((res_u - grid.layout.res_u) / 2.0));
    const int pad_v = int(std::floor((res_v - grid.layout.res_v) / 2.0));
    TextureGrid out;
    out.layout = {res_u, res_v, grid.layout.texel_size, grid.layout.offset + Vec2{Real(pad_u), Real(pad_v)}};
    out.texels.assign(out.layout.texel_count() * 3, 0.0);
    for (int i = 0; i < res_u; ++i) {
        const int si = i - pad_u;
        if (si < 0 || si >= grid.layout.res_u)
            continue;
        for (int j = 0; j < res_v; ++j) {
            const int sj = j - pad_v;
            if (sj < 0 || sj >= grid.layout.res_v)
                continue;
            for (int c = 0; c < 3; ++c)
                out.at(i, j, c) = grid.at(si, sj, c);
        }
    }
    return out;
}

/// Nearest-neighbour 2× upsampling: every texel becomes a 2×2 block and the
/// texel size halves. Resolutions beyond the cap are center-cropped.
inline TextureGrid resample_double(const TextureGrid &grid) {
    if (grid.empty())
        return grid;
    TextureGrid out;
    out.layout = {grid.layout.res_u * 2, grid.layout.res_v * 2, grid.layout.texel_size / 2,
                  grid.layout.offset * 2 + Vec2{0.5, 0.5}};
    out.texels.assign(out.layout.texel_count() * 3, 0.0);
    for (int i = 0; i < out.layout.res_u; ++i)
        for (int j = 0; j < out.layout.res_v; ++j)
            for (int c = 0; c < 3; ++c)
                out.at(i, j, c) = grid.at(i / 2, j / 2, c);
    if (out.layout.res_u > kMaxTextureRes || out.layout.res_v > kMaxTextureRes)
        out = reallocate(out, std::min(out.layout.res_u, kMaxTextureRes), std::min(out.layout.res_v, kMaxTextureRes));
    return out;
}

/// 2×2 box average of pre-activation values; the texel size doubles. Odd
/// resolutions are zero padded on the high side first.
inline TextureGrid resample_half(const TextureGrid &grid) {
    if (grid.empty())
        return grid;
    TextureGrid out;
    out.layout = {(grid.layout.res_u + 1) / 2, (grid.layout.res_v + 1) / 2, grid.layout.texel_size * 2,
                  (grid.layout.offset - Vec2{0.5, 0.5}) / 2};
    out.texels.assign(out.layout.texel_count() * 3, 0.0);
    for (int i = 0; i < out.layout.res_u; ++i)
        for (int j = 0; j < out.layout.res_v; ++j)
            for (int c = 0; c < 3; ++c) {
                auto src = [&](int si, int sj) {
                    return (si < grid.layout.res_u && sj < grid.layout.res_v) ? grid.at(si, sj, c) : Real(0);
                };
                // Pairwise sums keep half(double(g)) == g bit-exact.
                const Real top = src(2 * i, 2 * j) + src(2 * i, 2 * j + 1);
                const Real bottom = src(2 * i + 1, 2 * j) + src(2 * i + 1, 2 * j + 1);
                out.at(i, j, c) = (top + bottom) / 4;
            }
    return out;
}

/// Contiguous storage of variable-resolution grids ("jagged" tensor): one
/// flat texel buffer plus an index table with one entry per primitive.
class TexturePool {
  public:
    struct Entry {
        std::size_t first = 0; ///< offset into data(), in scalars
        GridLayout layout;
        friend bool operator==(const Entry &, const Entry &) = default;
    };

    TexturePool() = default;

    static TexturePool from_grids(std::span<const TextureGrid> grids) {
        TexturePool pool;
        std::size_t total = 0;
        for (const auto &g : grids)
            total += g.layout.texel_count() * 3;
        pool.data_.reserve(total);
        pool.entries_.reserve(grids.size());
        for (const auto &g : grids) {
            pool.entries_.push_back({pool.data_.size(), g.layout});
            pool.data_.insert(pool.data_.end(), g.texels.begin(), g.texels.end());
        }
        return pool;
    }

    /// Pool of `n` untextured primitives.
    static TexturePool empty_grids(std::size_t n) {
        TexturePool pool;
        pool.entries_.assign(n, Entry{});
        return pool;
    }

    std::size_t size() const { return entries_.size(); }
    const Entry &entry(std::size_t i) const { return entries_[i]; }
    const GridLayout &layout(std::size_t i) const { return entries_[i].layout; }

    TextureView view(std::size_t i) const {
        const auto &e = entries_[i];
        return {e.layout, std::span<const Real>(data_).subspan(e.first, e.layout.texel_count() * 3)};
    }
    std::span<Real> texels(std::size_t i) {
        const auto &e = entries_[i];
        return std::span<Real>(data_).subspan(e.first, e.layout.texel_count() * 3);
    }
    TextureGrid grid(std::size_t i) const {
        const TextureView v = view(i);
        TextureGrid g;
        g.layout = v.layout;
        g.texels.assign(v.texels.begin(), v.texels.end());
        return g;
    }
    std::vector<TextureGrid> grids() const {
        std::vector<TextureGrid> out;
        out.reserve(size());
        for (std::size_t i = 0; i < size(); ++i)
            out.push_back(grid(i));
        return out;
    }

    std::span<const Real> data() const { return data_; }
    std::span<Real> data() { return data_; }

    /// Number of texels (each holding 3 parameters).
    std::size_t total_texels() const { return data_.size() / 3; }

    /// Pool of the same layout holding activated values.
    std::vector<Real> activated() const {
        std::vector<Real> out(data_.size());
        std::transform(data_.begin(), data_.end(), out.begin(), [](Real v) { return activate(v); });
        return out;
    }

    friend bool operator==(const TexturePool &, const TexturePool &) = default;

  private:
    std::vector<Real> data_;
    std::vector<Entry> entries_;
};

} // namespace texsplat
