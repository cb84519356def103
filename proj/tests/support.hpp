// Copyright Contributors to the texsplat project
// SPDX-License-Identifier: Apache-2.0

// Test-only helpers: random scene generation and a brute-force reference
// renderer written independently of the renderer's tiling, culling
// bounds and sorting code.

#pragma once

#include "texsplat/renderer.hpp"

#include <cmath>
#include <limits>
#include <random>
#include <vector>

namespace texsplat::testing {

struct RandomSceneOptions {
    int max_prims = 10;
    int min_prims = 1;
    bool textured = true;
    Real texel_spread = 1.0; ///< raw texel values drawn from ±U(texel_floor, spread)
    Real texel_floor = 0;
    /// Per-channel linear ramps instead of noise: bilinear interpolation of
    /// a ramp has no slope jumps inside the grid.
    bool ramp_textures = false;
    /// Texels added per axis beyond the ±3σ requirement, pushing the
    /// zero-padded grid edge further into the falloff tail.
    int extra_texels = 0;
    Real sh_spread = 0.15;   ///< higher-order SH coefficients
    Real min_facing = 0.4;   ///< lower bound on |n_z|
    /// When positive, primitive i sits near depth 2 + i·depth_step, so planes
    /// do not cross inside anyone's footprint.
    Real depth_step = 0;
};

inline Camera test_camera(int w = 32, int h = 32) {
    Camera cam;
    cam.fx = cam.fy = w;
    cam.cx = w / 2.0;
    cam.cy = h / 2.0;
    cam.width = w;
    cam.height = h;
    return cam;
}

inline Quat random_facing_quat(std::mt19937_64 &rng, Real min_facing = 0.4) {
    std::normal_distribution<Real> n(0, 1);
    for (;;) {
        const Quat q = normalized(Quat{n(rng), n(rng), n(rng), n(rng)});
        if (std::abs(rotation_matrix(q).col[2].z) > min_facing)
            return q;
    }
}

/// Surfels in front of an identity camera at the origin looking down +z.
inline Scene random_scene(std::mt19937_64 &rng, const RandomSceneOptions &opt = {}) {
    std::uniform_int_distribution<int> count(opt.min_prims, opt.max_prims);
    std::uniform_real_distribution<Real> u01(0, 1);
    const int n = count(rng);
    Scene scene;
    std::vector<TextureGrid> grids;
    for (int i = 0; i < n; ++i) {
        Primitive p;
        const Real z = opt.depth_step > 0 ? 2 + opt.depth_step * (i + 0.1 * u01(rng)) : 2 + 3 * u01(rng);
        p.center = {(u01(rng) - 0.5) * 0.8 * z * 0.5, (u01(rng) - 0.5) * 0.8 * z * 0.5, z};
        p.scales = {0.15 + 0.4 * u01(rng), 0.15 + 0.4 * u01(rng)};
        p.rotation = random_facing_quat(rng, opt.min_facing);
        p.opacity_logit = -1 + 3 * u01(rng);
        for (int ch = 0; ch < 3; ++ch) {
            p.sh[std::size_t(ch * kShCoeffs)] = sh_dc_from_color(0.2 + 0.5 * u01(rng));
            for (int k = 1; k < kShCoeffs; ++k)
                p.sh[std::size_t(ch * kShCoeffs + k)] = (u01(rng) - 0.5) * 2 * opt.sh_spread;
        }
        scene.prims.push_back(p);
        if (opt.textured) {
            const Real k = std::min(p.scales.x, p.scales.y) * (0.5 + u01(rng));
            auto res = required_resolution(p.scales, k);
            res[0] = std::min(kMaxTextureRes, res[0] + opt.extra_texels);
            res[1] = std::min(kMaxTextureRes, res[1] + opt.extra_texels);
            TextureGrid g(res[0], res[1], k);
            if (opt.ramp_textures) {
                for (int c = 0; c < 3; ++c) {
                    const Real sign = u01(rng) < 0.5 ? -1 : 1, su = u01(rng), sv = u01(rng);
                    const Real span = opt.texel_spread - opt.texel_floor;
                    for (int a = 0; a < res[0]; ++a)
                        for (int b = 0; b < res[1]; ++b)
                            g.at(a, b, c) = sign * (opt.texel_floor + span * 0.5 *
                                                                          (su * a / std::max(1, res[0] - 1) +
                                                                           sv * b / std::max(1, res[1] - 1)));
                }
            } else {
                for (auto &v : g.texels) {
                    const Real mag = opt.texel_floor + (opt.texel_spread - opt.texel_floor) * u01(rng);
                    v = u01(rng) < 0.5 ? -mag : mag;
                }
            }
            grids.push_back(g);
        } else {
            grids.emplace_back();
        }
    }
    scene.textures = TexturePool::from_grids(grids);
    return scene;
}

/// Per-ray brute force: every primitive, insertion sort by t, direct
/// front-to-back accumulation.
struct OracleRay {
    Vec3 color;
    Vec3 raw;
    std::vector<std::pair<int, Real>> weights;
    Real transmittance = 1;
};

inline Vec3 oracle_bilinear(const TextureView &g, Real u, Real v) {
    // Independent bilinear: explicit 4-neighbour sum, zero outside.
    const int i = int(std::floor(u)), j = int(std::floor(v));
    const Real a = u - i, b = v - j;
    Vec3 out;
    const int di[4] = {0, 1, 0, 1}, dj[4] = {0, 0, 1, 1};
    const Real w[4] = {(1 - a) * (1 - b), a * (1 - b), (1 - a) * b, a * b};
    for (int k = 0; k < 4; ++k) {
        const int ii = i + di[k], jj = j + dj[k];
        if (ii < 0 || jj < 0 || ii >= g.layout.res_u || jj >= g.layout.res_v)
            continue;
        for (int c = 0; c < 3; ++c)
            out[c] += w[k] * (2 / (1 + std::exp(-g.at(ii, jj, c))) - 1);
    }
    return out;
}

inline OracleRay oracle_trace(const Ray &ray, const Scene &scene, Real cull_sigma, Real min_transmittance) {
    struct Entry {
        Real t;
        int idx;
        Real alpha;
        Vec3 color;
    };
    std::vector<Entry> entries;
    for (std::size_t i = 0; i < scene.prims.size(); ++i) {
        const Primitive &p = scene.prims[i];
        const Mat3 r = rotation_matrix(normalized(p.rotation));
        const Vec3 n = r.col[2];
        const Real nd = n.x * ray.direction.x + n.y * ray.direction.y + n.z * ray.direction.z;
        if (std::abs(nd) <= 1e-8)
            continue;
        const Vec3 rel = p.center - ray.origin;
        const Real t = (n.x * rel.x + n.y * rel.y + n.z * rel.z) / nd;
        if (!(t > 1e-4))
            continue;
        const Vec3 w = ray.origin + ray.direction * t - p.center;
        const Real a = r.col[0].x * w.x + r.col[0].y * w.y + r.col[0].z * w.z;
        const Real b = r.col[1].x * w.x + r.col[1].y * w.y + r.col[1].z * w.z;
        const Real ca = a / p.scales.x, cb = b / p.scales.y;
        if (ca * ca + cb * cb > cull_sigma * cull_sigma)
            continue;
        const Real g = std::exp(-0.5 * (ca * ca + cb * cb));
        Vec3 color = sh_color(p.sh, ray.direction);
        const TextureView tex = scene.textures.view(i);
        if (!tex.empty())
            color += oracle_bilinear(tex, a / tex.layout.texel_size + tex.layout.offset.x,
                                     b / tex.layout.texel_size + tex.layout.offset.y);
        entries.push_back({t, int(i), 1 / (1 + std::exp(-p.opacity_logit)) * g, color});
    }
    for (std::size_t i = 1; i < entries.size(); ++i)
        for (std::size_t j = i; j > 0; --j) {
            const auto &x = entries[j - 1], &y = entries[j];
            if (y.t < x.t || (y.t == x.t && y.idx < x.idx))
                std::swap(entries[j - 1], entries[j]);
            else
                break;
        }
    OracleRay out;
    for (const auto &e : entries) {
        const Real w = out.transmittance * e.alpha;
        out.raw += e.color * w;
        out.weights.push_back({e.idx, w});
        out.transmittance *= 1 - e.alpha;
        if (out.transmittance < min_transmittance)
            break;
    }
    for (int c = 0; c < 3; ++c)
        out.color[c] = std::min<Real>(1, std::max<Real>(0, out.raw[c]));
    return out;
}

inline Image oracle_render(const Camera &cam, const Scene &scene, Real cull_sigma = 3,
                           Real min_transmittance = 1e-4) {
    Image img(cam.width, cam.height);
    for (int y = 0; y < cam.height; ++y)
        for (int x = 0; x < cam.width; ++x)
            img.set(x, y, oracle_trace(pixel_ray(cam, x, y), scene, cull_sigma, min_transmittance).color);
    return img;
}

/// Each value shifted by ±delta with a random sign, so residuals against
/// `img` stay at least delta away from zero.
inline Image offset_reference(const Image &img, Real delta, std::mt19937_64 &rng) {
    Image out = img;
    std::bernoulli_distribution coin(0.5);
    for (auto &v : out.data)
        v += coin(rng) ? delta : -delta;
    return out;
}

inline Real max_abs_diff(const Image &a, const Image &b) {
    Real m = 0;
    for (std::size_t i = 0; i < a.data.size(); ++i)
        m = std::max(m, std::abs(a.data[i] - b.data[i]));
    return m;
}

} // namespace texsplat::testing
