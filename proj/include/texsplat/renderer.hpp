// Copyright Contributors to the texsplat project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "texsplat/geometry.hpp"
#include "texsplat/image.hpp"
#include "texsplat/parallel.hpp"
#include "texsplat/texture.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

namespace texsplat {

/// Pinhole camera, world-to-camera extrinsics, OpenCV axes (x right, y down,
/// z forward).
struct Camera {
    Quat rotation{1, 0, 0, 0};
    Vec3 translation;
    Real fx = 1, fy = 1;
    Real cx = 0, cy = 0;
    int width = 1, height = 1;

    Mat3 world_to_camera() const { return rotation_matrix(normalized(rotation)); }
    Vec3 center() const { return -world_to_camera().transpose_mul(translation); }
    Vec3 forward() const { return world_to_camera().transpose_mul({0, 0, 1}); }
    Vec3 to_camera(Vec3 world) const { return world_to_camera() * world + translation; }

    friend bool operator==(const Camera &, const Camera &) = default;
};

/// Camera at `eye` looking at `target`; `up` is approximately image-up.
inline Camera look_at(Vec3 eye, Vec3 target, Vec3 up, Real focal, int width, int height) {
    const Vec3 z = normalized(target - eye);
    const Vec3 x = normalized(cross(up * -1.0, z));
    const Vec3 y = cross(z, x);
    // Rows of the world-to-camera rotation are the camera axes in world space.
    Mat3 w2c;
    w2c.col = {Vec3{x.x, y.x, z.x}, Vec3{x.y, y.y, z.y}, Vec3{x.z, y.z, z.z}};
    Camera cam;
    cam.rotation = quat_from_matrix(w2c);
    cam.translation = -(w2c * eye);
    cam.fx = cam.fy = focal;
    cam.cx = width / 2.0;
    cam.cy = height / 2.0;
    cam.width = width;
    cam.height = height;
    return cam;
}

/// Unit ray through the center of pixel (px, py).
inline Ray pixel_ray(const Camera &cam, int px, int py) {
    const Vec3 dir_cam{(px + 0.5 - cam.cx) / cam.fx, (py + 0.5 - cam.cy) / cam.fy, 1};
    const Mat3 w2c = cam.world_to_camera();
    return {-w2c.transpose_mul(cam.translation), normalized(w2c.transpose_mul(dir_cam))};
}

/// Primitives plus their textures; textures.size() == prims.size().
struct Scene {
    std::vector<Primitive> prims;
    TexturePool textures;

    std::size_t size() const { return prims.size(); }
    friend bool operator==(const Scene &, const Scene &) = default;
};

struct RenderSettings {
    /// Hits with ‖p^c‖ > cull_sigma are dropped (the ±3σ footprint).
    /// Infinity disables footprint culling.
    Real cull_sigma = 3;
    /// Compositing stops once transmittance falls below this; 0 disables.
    Real min_transmittance = 1e-4;
    int tile_size = 16;
    int threads = default_thread_count();

    /// No culling and no early termination: the loss is smooth in every
    /// parameter, which is what finite-difference checks need.
    static RenderSettings smooth() {
        RenderSettings s;
        s.cull_sigma = std::numeric_limits<Real>::infinity();
        s.min_transmittance = 0;
        return s;
    }
};

/// One ray/primitive intersection, ready for compositing.
struct HitSample {
    int prim = -1;
    Real t = 0;
    Vec2 local;
    Vec2 canonical;
    Real falloff = 1;
    Real opacity = 1;
    /// c = SH(d) + bilerp(T, u), unclamped.
    Vec3 color;
    BilinearTaps taps;
};

struct CompositeResult {
    Vec3 raw;   ///< Σ w_i c_i before clamping
    Vec3 color; ///< clamped to [0,1]
    std::vector<Real> weights;
    Real transmittance = 1; ///< after the last composited hit
    std::size_t used = 0;   ///< hits composited before early termination
};

/// Front-to-back alpha compositing of hits sorted by ascending t:
/// C = Σ T_i o_i G_i c_i, T_i = Π_{j<i}(1 − o_j G_j). Background is black.
inline CompositeResult composite(std::span<const HitSample> hits, Real min_transmittance = 1e-4) {
    CompositeResult r;
    r.weights.assign(hits.size(), 0.0);
    Real trans = 1;
    for (std::size_t i = 0; i < hits.size(); ++i) {
        const Real alpha = hits[i].opacity * hits[i].falloff;
        const Real w = trans * alpha;
        r.weights[i] = w;
        r.raw += hits[i].color * w;
        trans *= 1 - alpha;
        r.used = i + 1;
        if (trans < min_transmittance)
            break;
    }
    r.transmittance = trans;
    for (int c = 0; c < 3; ++c)
        r.color[c] = std::clamp(r.raw[c], Real(0), Real(1));
    return r;
}

namespace detail {

struct PreparedPrimitive {
    Vec3 center;
    Mat3 rotation;
    Vec2 scales;
    Real opacity = 0;
    GridLayout layout;
    std::size_t tex_first = 0;
    /// Conservative pixel bounds of the culled footprint (inclusive).
    int x0 = 0, y0 = 0, x1 = -1, y1 = -1;
};

/// Per-camera precomputation shared by the forward and backward passes.
struct PreparedScene {
    const Scene *scene = nullptr;
    std::vector<PreparedPrimitive> prims;
    std::vector<Real> activated;
    Real cull_sq = 9;
};

inline void footprint_bounds(const Camera &cam, PreparedPrimitive &p, Real cull_sigma) {
    if (!std::isfinite(cull_sigma)) {
        p.x0 = 0;
        p.y0 = 0;
        p.x1 = cam.width - 1;
        p.y1 = cam.height - 1;
        return;
    }
    const Vec3 eu = p.rotation.col[0] * (cull_sigma * p.scales.x);
    const Vec3 ev = p.rotation.col[1] * (cull_sigma * p.scales.y);
    Real lo_x = std::numeric_limits<Real>::infinity(), lo_y = lo_x;
    Real hi_x = -lo_x, hi_y = -lo_x;
    for (int su = -1; su <= 1; su += 2)
        for (int sv = -1; sv <= 1; sv += 2) {
            const Vec3 c = cam.to_camera(p.center + eu * Real(su) + ev * Real(sv));
            if (c.z <= 1e-6) {
                // Footprint crosses the camera plane: no useful bound.
                p.x0 = 0;
                p.y0 = 0;
                p.x1 = cam.width - 1;
                p.y1 = cam.height - 1;
                return;
            }
            const Real px = cam.fx * c.x / c.z + cam.cx, py = cam.fy * c.y / c.z + cam.cy;
            lo_x = std::min(lo_x, px);
            hi_x = std::max(hi_x, px);
            lo_y = std::min(lo_y, py);
            hi_y = std::max(hi_y, py);
        }
    // Pixel centers sit at integer + 0.5.
    p.x0 = int(std::max<Real>(0, std::floor(lo_x - 1)));
    p.y0 = int(std::max<Real>(0, std::floor(lo_y - 1)));
    p.x1 = int(std::min<Real>(cam.width - 1, std::ceil(hi_x + 1)));
    p.y1 = int(std::min<Real>(cam.height - 1, std::ceil(hi_y + 1)));
}

inline PreparedScene prepare(const Camera &cam, const Scene &scene, const RenderSettings &settings) {
    if (scene.textures.size() != scene.prims.size())
        throw std::invalid_argument("scene: texture pool does not match primitive count");
    PreparedScene ps;
    ps.scene = &scene;
    ps.activated = scene.textures.activated();
    ps.cull_sq = settings.cull_sigma * settings.cull_sigma;
    ps.prims.resize(scene.prims.size());
    for (std::size_t i = 0; i < scene.prims.size(); ++i) {
        const Primitive &src = scene.prims[i];
        PreparedPrimitive &p = ps.prims[i];
        p.center = src.center;
        p.rotation = src.rotation_matrix();
        p.scales = src.scales;
        p.opacity = src.opacity();
        p.layout = scene.textures.layout(i);
        p.tex_first = scene.textures.entry(i).first;
        footprint_bounds(cam, p, settings.cull_sigma);
    }
    return ps;
}

/// Primitives whose footprint bounds overlap the tile, in index order.
inline void tile_candidates(const PreparedScene &ps, int x0, int y0, int x1, int y1, std::vector<int> &out) {
    out.clear();
    for (std::size_t i = 0; i < ps.prims.size(); ++i) {
        const auto &p = ps.prims[i];
        if (p.x1 < x0 || p.x0 > x1 || p.y1 < y0 || p.y0 > y1)
            continue;
        out.push_back(int(i));
    }
}

/// Intersects the ray with every candidate and sorts by (t, index).
inline void trace(const Ray &ray, const PreparedScene &ps, std::span<const int> candidates,
                  const std::array<Real, kShCoeffs> &basis, std::vector<HitSample> &hits) {
    hits.clear();
    for (const int idx : candidates) {
        const PreparedPrimitive &p = ps.prims[std::size_t(idx)];
        const auto hit = intersect(ray, p.center, p.rotation.col[2]);
        if (!hit)
            continue;
        HitSample s;
        s.prim = idx;
        s.t = hit->t;
        s.local = to_local(hit->point, p.rotation, p.center);
        s.canonical = to_canonical(s.local, p.scales);
        const Real r2 = dot(s.canonical, s.canonical);
        if (r2 > ps.cull_sq)
            continue;
        s.falloff = std::exp(-0.5 * r2);
        s.opacity = p.opacity;
        s.color = sh_color(ps.scene->prims[std::size_t(idx)].sh, basis);
        if (!p.layout.empty()) {
            s.taps = bilinear_taps(p.layout, uv_fixed(s.local, p.layout));
            s.color += sample_activated(std::span<const Real>(ps.activated).subspan(p.tex_first), s.taps);
        }
        hits.push_back(s);
    }
    std::sort(hits.begin(), hits.end(), [](const HitSample &a, const HitSample &b) {
        return a.t < b.t || (a.t == b.t && a.prim < b.prim);
    });
}

struct Tile {
    int x0, y0, x1, y1; // inclusive
};

inline std::vector<Tile> make_tiles(int width, int height, int tile_size) {
    const int ts = std::max(1, tile_size);
    std::vector<Tile> tiles;
    for (int y = 0; y < height; y += ts)
        for (int x = 0; x < width; x += ts)
            tiles.push_back({x, y, std::min(width, x + ts) - 1, std::min(height, y + ts) - 1});
    return tiles;
}

} // namespace detail

/// Mean-over-channels absolute error at one pixel (E_π(r)).
inline Real pixel_error(Vec3 rendered, Vec3 reference) {
    return (std::abs(rendered.x - reference.x) + std::abs(rendered.y - reference.y) +
            std::abs(rendered.z - reference.z)) /
           3;
}

struct RenderOutput {
    Image image;     ///< clamped to [0,1]
    Image unclamped; ///< Σ w_i c_i
    /// Σ_i w_i per pixel and the final transmittance, for conservation checks.
    std::vector<Real> weight_sum;
    std::vector<Real> transmittance;
    /// Per primitive: w̄_i = Σ_r w_i(r).
    std::vector<Real> contribution;
    /// Per primitive: E_i = Σ_r E(r) w_i(r); zero without a reference.
    std::vector<Real> error;
};

namespace detail {

/// Forward pass over a prepared scene. With `kept`, the composited hits of
/// every pixel are stored there (row-major) for a later backward pass.
inline RenderOutput render_prepared(const Camera &cam, const PreparedScene &ps, const RenderSettings &settings,
                                    const Image *reference, std::vector<std::vector<HitSample>> *kept) {
    if (reference && (reference->width != cam.width || reference->height != cam.height))
        throw std::invalid_argument("render: reference dimensions do not match the camera");
    const std::size_t n = ps.prims.size();
    if (kept)
        kept->assign(std::size_t(cam.width) * std::size_t(cam.height), {});
    RenderOutput out;
    out.image = Image(cam.width, cam.height);
    out.unclamped = Image(cam.width, cam.height);
    out.weight_sum.assign(std::size_t(cam.width) * cam.height, 0.0);
    out.transmittance.assign(std::size_t(cam.width) * cam.height, 1.0);
    out.contribution.assign(n, 0.0);
    out.error.assign(n, 0.0);

    const auto tiles = detail::make_tiles(cam.width, cam.height, settings.tile_size);
    std::vector<std::vector<Real>> tile_contrib(tiles.size()), tile_error(tiles.size());
    parallel_for(tiles.size(), settings.threads, [&](std::size_t ti) {
        const auto &tile = tiles[ti];
        std::vector<int> cand;
        detail::tile_candidates(ps, tile.x0, tile.y0, tile.x1, tile.y1, cand);
        auto &contrib = tile_contrib[ti];
        auto &err = tile_error[ti];
        contrib.assign(n, 0.0);
        err.assign(n, 0.0);
        std::vector<HitSample> hits;
        for (int y = tile.y0; y <= tile.y1; ++y)
            for (int x = tile.x0; x <= tile.x1; ++x) {
                const Ray ray = pixel_ray(cam, x, y);
                detail::trace(ray, ps, cand, sh_basis(ray.direction), hits);
                const auto comp = composite(hits, settings.min_transmittance);
                out.image.set(x, y, comp.color);
                out.unclamped.set(x, y, comp.raw);
                const std::size_t pix = out.image.pixel_index(x, y);
                out.transmittance[pix] = comp.transmittance;
                Real wsum = 0;
                const Real e = reference ? pixel_error(comp.color, reference->at(x, y)) : 0;
                for (std::size_t k = 0; k < comp.used; ++k) {
                    const auto prim = std::size_t(hits[k].prim);
                    wsum += comp.weights[k];
                    contrib[prim] += comp.weights[k];
                    err[prim] += e * comp.weights[k];
                }
                out.weight_sum[pix] = wsum;
                if (kept)
                    (*kept)[pix].assign(hits.begin(), hits.begin() + std::ptrdiff_t(comp.used));
            }
    });
    for (std::size_t ti = 0; ti < tiles.size(); ++ti)
        for (std::size_t i = 0; i < n; ++i) {
            out.contribution[i] += tile_contrib[ti][i];
            out.error[i] += tile_error[ti][i];
        }
    return out;
}

} // namespace detail

/// Renders the scene; with a reference image, also accumulates the
/// per-primitive error E_i^π. Deterministic for any thread count.
inline RenderOutput render(const Camera &cam, const Scene &scene, const RenderSettings &settings = {},
                           const Image *reference = nullptr) {
    return detail::render_prepared(cam, detail::prepare(cam, scene, settings), settings, reference, nullptr);
}

struct ViewError {
    Real error = 0;        ///< E_i^π
    Real contribution = 0; ///< w̄_i^π
};

/// Per-primitive (E_i^π, w̄_i^π) of one view against its reference image.
inline std::vector<ViewError> error_accumulate(const Camera &cam, const Scene &scene, const Image &reference,
                                              const RenderSettings &settings = {}) {
    const auto out = render(cam, scene, settings, &reference);
    std::vector<ViewError> res(scene.size());
    for (std::size_t i = 0; i < scene.size(); ++i)
        res[i] = {out.error[i], out.contribution[i]};
    return res;
}

} // namespace texsplat
