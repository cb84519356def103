// Copyright Contributors to the texsplat project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "texsplat/renderer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace texsplat {

struct AdaptationConfig {
    Real tau_ds = 0.01;     ///< downscale threshold on E_d (activated color units)
    Real quantile = 0.9;    ///< primitives above this error quantile are eligible
    int tau_tr_start = 64;  ///< split threshold on texture resolution, initial
    int tau_tr_end = 32;    ///< ... and final
    int tau_tr_ramp_iters = 7000;
    int t2p_floor_exponent = 1;

    void validate() const {
        if (!(tau_ds > 0))
            throw std::invalid_argument("adaptation: tau_ds must be positive");
        if (!(quantile > 0 && quantile < 1))
            throw std::invalid_argument("adaptation: quantile must lie in (0, 1)");
        if (tau_tr_ramp_iters < 0 || tau_tr_end > tau_tr_start || t2p_floor_exponent < 0)
            throw std::invalid_argument("adaptation: bad resolution threshold schedule");
    }
};

/// Resolution threshold at `iter`: linear from start to end over the ramp.
inline Real tau_tr(const AdaptationConfig &cfg, int iter) {
    if (cfg.tau_tr_ramp_iters <= 0 || iter >= cfg.tau_tr_ramp_iters)
        return cfg.tau_tr_end;
    const Real f = std::max(0, iter) / Real(cfg.tau_tr_ramp_iters);
    return cfg.tau_tr_start + (cfg.tau_tr_end - cfg.tau_tr_start) * f;
}

/// Back-projected pixel size at the primitive's center for the closest
/// camera: distance / max(fx, fy).
inline Real min_texel_size(const Primitive &prim, std::span<const Camera> cams) {
    if (cams.empty())
        throw std::invalid_argument("min_texel_size: no cameras");
    Real best_dist = std::numeric_limits<Real>::infinity();
    Real k = 0;
    for (const auto &cam : cams) {
        const Real d = norm(cam.center() - prim.center);
        if (d < best_dist) {
            best_dist = d;
            k = d / std::max(cam.fx, cam.fy);
        }
    }
    return k;
}

inline Real texel_size(const Primitive &prim, Real k_min) {
    if (prim.t2p_exponent < 0)
        throw std::invalid_argument("texel_size: negative t2p exponent");
    return std::ldexp(k_min, prim.t2p_exponent);
}

/// Exponent whose texel size makes the smallest ±3σ axis about `texels`
/// wide, rounded to the nearest power of two and clamped to the floor.
inline int initial_exponent(const Primitive &prim, Real k_min, int texels, int floor_exponent) {
    const Real target = 6 * std::min(prim.scales.x, prim.scales.y) / Real(texels);
    if (!(k_min > 0) || !(target > 0))
        return floor_exponent;
    return std::max(floor_exponent, int(std::lround(std::log2(target / k_min))));
}

/// E_d: falloff-weighted mean of |activated(T) − activated(lowpass(T))|
/// (mean over channels), lowpass = 2× box down then nearest up.
inline Real downscale_error(const TextureView &grid, const Primitive &prim) {
    if (grid.empty())
        throw std::invalid_argument("downscale_error: empty grid");
    TextureGrid g;
    g.layout = grid.layout;
    g.texels.assign(grid.texels.begin(), grid.texels.end());
    const TextureGrid half = resample_half(g);
    Real num = 0, den = 0;
    const Real k = grid.layout.texel_size;
    for (int i = 0; i < grid.layout.res_u; ++i)
        for (int j = 0; j < grid.layout.res_v; ++j) {
            const Vec2 local = (Vec2{Real(i), Real(j)} - grid.layout.offset) * k;
            const Real w = falloff(to_canonical(local, prim.scales));
            Real e = 0;
            for (int c = 0; c < 3; ++c)
                e += std::abs(activate(grid.at(i, j, c)) - activate(half.at(i / 2, j / 2, c)));
            num += w * e / 3;
            den += w;
        }
    return den > 0 ? num / den : 0;
}

/// Per-primitive error aggregated over views.
struct PrimitiveError {
    Real error = 0;        ///< E_i, contribution-weighted mean of E_i^π
    Real contribution = 0; ///< Σ_π w̄_i^π
};

/// E_i = Σ_π E_i^π w̄_i^π / Σ_π w̄_i^π; zero when no view sees the primitive.
inline PrimitiveError aggregate_error(std::span<const ViewError> per_view) {
    PrimitiveError r;
    Real num = 0;
    for (const auto &v : per_view) {
        num += v.error * v.contribution;
        r.contribution += v.contribution;
    }
    r.error = r.contribution > 0 ? num / r.contribution : 0;
    return r;
}

/// E_i for every primitive over all views.
inline std::vector<PrimitiveError> primitive_errors(std::span<const Camera> cams, std::span<const Image> refs,
                                                    const Scene &scene, const RenderSettings &settings = {}) {
    if (cams.size() != refs.size())
        throw std::invalid_argument("primitive_errors: camera and image counts differ");
    std::vector<std::vector<ViewError>> per_prim(scene.size());
    for (std::size_t v = 0; v < cams.size(); ++v) {
        const auto e = error_accumulate(cams[v], scene, refs[v], settings);
        for (std::size_t i = 0; i < scene.size(); ++i)
            per_prim[i].push_back(e[i]);
    }
    std::vector<PrimitiveError> out(scene.size());
    for (std::size_t i = 0; i < scene.size(); ++i)
        out[i] = aggregate_error(per_prim[i]);
    return out;
}

/// Flags primitives in the top (1 − quantile) fraction by error. Only
/// primitives seen by some view with nonzero error take part; ties break
/// toward the lower index.
inline std::vector<bool> top_quantile(std::span<const PrimitiveError> errors, Real quantile) {
    std::vector<std::size_t> pool;
    for (std::size_t i = 0; i < errors.size(); ++i)
        if (errors[i].contribution > 0 && errors[i].error > 0)
            pool.push_back(i);
    std::vector<bool> top(errors.size(), false);
    if (pool.empty())
        return top;
    std::stable_sort(pool.begin(), pool.end(),
                     [&](std::size_t a, std::size_t b) { return errors[a].error > errors[b].error; });
    const auto m = std::size_t(std::ceil((1 - quantile) * Real(pool.size()) - 1e-9));
    for (std::size_t r = 0; r < std::min(m, pool.size()); ++r)
        top[pool[r]] = true;
    return top;
}

struct SplitChild {
    Primitive prim;
    TextureGrid grid;
};

/// Replaces `prim` by 2^|axes| children displaced by ±σ along each split
/// axis, with half the scale there and e^{−1/2} times the opacity. The
/// texel size is kept, so child resolution roughly halves per split axis;
/// child texels are bilinear samples of the parent's pre-activation
/// texels at the child texel centers.
inline std::vector<SplitChild> split(const Primitive &prim, const TextureView &grid, std::span<const int> axes) {
    bool on[2] = {false, false};
    for (const int a : axes) {
        if (a != 0 && a != 1)
            throw std::invalid_argument("split: axis must be 0 or 1");
        on[a] = true;
    }
    if (!on[0] && !on[1])
        throw std::invalid_argument("split: no axes");
    const Mat3 r = prim.rotation_matrix();
    const Real child_opacity = std::min(prim.opacity() * std::exp(Real(-0.5)), 1 - 1e-12);
    std::vector<SplitChild> out;
    const int n0 = on[0] ? 2 : 1, n1 = on[1] ? 2 : 1;
    for (int s0 = 0; s0 < n0; ++s0)
        for (int s1 = 0; s1 < n1; ++s1) {
            // Displacement in the parent's local frame.
            Vec2 shift;
            SplitChild c;
            c.prim = prim;
            if (on[0]) {
                shift.x = (s0 == 0 ? -1 : 1) * prim.scales.x;
                c.prim.scales.x = prim.scales.x / 2;
            }
            if (on[1]) {
                shift.y = (s1 == 0 ? -1 : 1) * prim.scales.y;
                c.prim.scales.y = prim.scales.y / 2;
            }
            c.prim.center = prim.center + r.col[0] * shift.x + r.col[1] * shift.y;
            c.prim.opacity_logit = logit(child_opacity);
            if (!grid.empty()) {
                const Real k = grid.layout.texel_size;
                const auto res = required_resolution(c.prim.scales, k);
                c.grid = TextureGrid(res[0], res[1], k);
                for (int i = 0; i < res[0]; ++i)
                    for (int j = 0; j < res[1]; ++j) {
                        const Vec2 child_local = (Vec2{Real(i), Real(j)} - c.grid.layout.offset) * k;
                        const Vec3 v = sample_raw(grid, uv_fixed(child_local + shift, grid.layout));
                        for (int ch = 0; ch < 3; ++ch)
                            c.grid.at(i, j, ch) = v[ch];
                    }
            }
            out.push_back(std::move(c));
        }
    return out;
}

enum class AdaptAction { split, upscale, downscale };

inline const char *action_name(AdaptAction a) {
    switch (a) {
    case AdaptAction::split: return "split";
    case AdaptAction::upscale: return "upscale";
    case AdaptAction::downscale: return "downscale";
    }
    return "?";
}

struct Mutation {
    int iter = 0;
    std::size_t prim_id = 0; ///< index before the step
    AdaptAction action = AdaptAction::split;
    std::string detail;
};

struct AdaptResult {
    std::vector<Mutation> log;
    /// For each primitive after the step: its index before the step.
    std::vector<std::size_t> source;
    /// Newly created by a split (optimizer state starts fresh).
    std::vector<bool> created;
    /// Texture layout changed (texel optimizer state starts fresh).
    std::vector<bool> texture_changed;
};

/// One pass of texel-size adaptation and resolution-aware splitting, in
/// ascending primitive order. Split children replace their parent in place.
/// At most `split_room` primitives are added; when splits compete for room
/// the higher-error primitives go first.
inline AdaptResult adapt_step(Scene &scene, std::span<const PrimitiveError> errors, const AdaptationConfig &cfg,
                              int iter, std::size_t split_room = std::numeric_limits<std::size_t>::max()) {
    cfg.validate();
    if (errors.size() != scene.size())
        throw std::invalid_argument("adapt_step: error count does not match primitive count");
    const auto top = top_quantile(errors, cfg.quantile);
    const Real tau = tau_tr(cfg, iter);

    std::vector<std::vector<int>> split_axes(scene.size());
    std::vector<std::size_t> candidates;
    for (std::size_t i = 0; i < scene.size(); ++i) {
        const GridLayout &l = scene.textures.layout(i);
        if (!top[i] || l.empty())
            continue;
        if (l.res_u > tau)
            split_axes[i].push_back(0);
        if (l.res_v > tau)
            split_axes[i].push_back(1);
        if (!split_axes[i].empty())
            candidates.push_back(i);
    }
    std::stable_sort(candidates.begin(), candidates.end(),
                     [&](std::size_t a, std::size_t b) { return errors[a].error > errors[b].error; });
    std::size_t room = split_room;
    for (const std::size_t i : candidates) {
        const std::size_t extra = (std::size_t(1) << split_axes[i].size()) - 1;
        if (extra <= room)
            room -= extra;
        else
            split_axes[i].clear();
    }

    AdaptResult res;
    std::vector<Primitive> prims;
    std::vector<TextureGrid> grids;
    auto emit = [&](std::size_t i, AdaptAction a, std::string detail) {
        res.log.push_back({iter, i, a, std::move(detail)});
    };
    for (std::size_t i = 0; i < scene.size(); ++i) {
        const Primitive &p = scene.prims[i];
        const TextureView view = scene.textures.view(i);
        std::vector<SplitChild> out;
        bool created = false, changed = false;

        const std::vector<int> &axes = split_axes[i];
        if (!axes.empty()) {
            out = split(p, view, axes);
            created = changed = true;
            emit(i, AdaptAction::split,
                 axes.size() == 2 ? "both" : (axes[0] == 0 ? "u" : "v"));
        } else {
            out.push_back({p, scene.textures.grid(i)});
        }

        const bool can_upscale = top[i] && !view.empty() && p.t2p_exponent > cfg.t2p_floor_exponent;
        if (can_upscale) {
            for (auto &c : out) {
                c.grid = resample_double(c.grid);
                c.prim.t2p_exponent -= 1;
            }
            changed = true;
            emit(i, AdaptAction::upscale, "t2p_exponent " + std::to_string(p.t2p_exponent - 1));
        } else if (!top[i] && !view.empty() && downscale_error(view, p) < cfg.tau_ds) {
            auto &c = out.front();
            c.grid = resample_half(c.grid);
            c.prim.t2p_exponent += 1;
            changed = true;
            emit(i, AdaptAction::downscale, "t2p_exponent " + std::to_string(p.t2p_exponent + 1));
        }

        for (auto &c : out) {
            prims.push_back(c.prim);
            grids.push_back(std::move(c.grid));
            res.source.push_back(i);
            res.created.push_back(created);
            res.texture_changed.push_back(changed);
        }
    }
    scene.prims = std::move(prims);
    scene.textures = TexturePool::from_grids(grids);
    return res;
}

} // namespace texsplat
