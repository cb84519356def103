// Copyright Contributors to the texsplat project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "texsplat/renderer.hpp"

#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace texsplat {

struct LossWeights {
    Real ssim = 0.2;
    Real texture = 0.01;
    Real opacity = 0.01;
};

struct LossTerms {
    Real l1 = 0;
    Real ssim = 1; ///< SSIM value, not the loss term
    Real rgb = 0;  ///< (1 − λ)·L1 + λ·(1 − SSIM)
    Real texture = 0;
    Real opacity = 0;
    Real total = 0;
};

/// Gradient of the loss with respect to one primitive's raw parameters.
struct PrimitiveGrad {
    Vec3 center;
    Vec2 scales;
    Quat rotation{};
    Real opacity_logit = 0;
    std::array<Real, kShParams> sh{};
};

/// Gradients mirroring a Scene: per primitive, plus per texel scalar in the
/// texture pool's flat layout.
struct GradientSet {
    std::vector<PrimitiveGrad> prims;
    std::vector<Real> texels;

    bool all_finite() const {
        for (const auto &g : prims) {
            for (int k = 0; k < 3; ++k)
                if (!std::isfinite(g.center[k]))
                    return false;
            if (!std::isfinite(g.scales.x) || !std::isfinite(g.scales.y) || !std::isfinite(g.opacity_logit))
                return false;
            for (Real v : g.rotation)
                if (!std::isfinite(v))
                    return false;
            for (Real v : g.sh)
                if (!std::isfinite(v))
                    return false;
        }
        for (Real v : texels)
            if (!std::isfinite(v))
                return false;
        return true;
    }
};

class NonFiniteLoss : public std::runtime_error {
  public:
    explicit NonFiniteLoss(int view)
        : std::runtime_error("non-finite loss on view " + std::to_string(view)), view_(view) {}
    int view() const { return view_; }

  private:
    int view_;
};

/// L_RGB = (1 − λ)·L1 + λ·(1 − SSIM).
inline Real loss_rgb(const Image &render, const Image &reference, Real lambda_ssim = 0.2) {
    const Real l1 = mean_abs_error(render, reference);
    if (lambda_ssim == 0)
        return l1;
    return (1 - lambda_ssim) * l1 + lambda_ssim * (1 - ssim(render, reference).value);
}

/// λ Σ |activated texel| over every texel and channel.
inline Real loss_texture(const TexturePool &pool, Real lambda) {
    Real acc = 0;
    for (Real v : pool.data())
        acc += std::abs(activate(v));
    return lambda * acc;
}

/// λ · mean activated opacity.
inline Real loss_opacity(std::span<const Primitive> prims, Real lambda) {
    if (prims.empty())
        return 0;
    Real acc = 0;
    for (const auto &p : prims)
        acc += p.opacity();
    return lambda * acc / Real(prims.size());
}

struct BackwardResult {
    LossTerms loss;
    GradientSet grads;
    RenderOutput render;
};

namespace detail {

struct TexelGradEntry {
    std::size_t index; ///< texel index in the pool (scalar index / 3)
    Vec3 grad;
};

/// Reverse-mode pass through compositing, color, falloff, UV and
/// intersection for one pixel. `dl_draw` is dL/d(unclamped color).
/// dL/dR per primitive; the quaternion chain rule is linear in it, so it is
/// applied once after all pixels are summed.
struct RotationAccum {
    Mat3 dr{{Vec3{}, Vec3{}, Vec3{}}};
};

inline void backward_pixel(const Ray &ray, const PreparedScene &ps, std::span<const Real> act_grad,
                           std::span<const HitSample> hits, std::size_t used,
                           const std::array<Real, kShCoeffs> &basis, Vec3 dl_draw, std::vector<PrimitiveGrad> &pg,
                           std::vector<RotationAccum> &rg, std::vector<TexelGradEntry> &tg) {
    if (used == 0)
        return;
    // Transmittance before each hit.
    thread_local std::vector<Real> trans;
    trans.resize(used);
    Real t_acc = 1;
    for (std::size_t i = 0; i < used; ++i) {
        trans[i] = t_acc;
        t_acc *= 1 - hits[i].opacity * hits[i].falloff;
    }
    // behind = Σ_{j>i} α_j c_j Π_{i<k<j}(1 − α_k)
    Vec3 behind;
    for (std::size_t ii = used; ii-- > 0;) {
        const HitSample &h = hits[ii];
        const auto idx = std::size_t(h.prim);
        const PreparedPrimitive &p = ps.prims[idx];
        PrimitiveGrad &g = pg[idx];
        const Real alpha = h.opacity * h.falloff;
        const Real w = trans[ii] * alpha;

        const Vec3 dl_dc = dl_draw * w;
        const Real dl_dalpha = trans[ii] * dot(h.color - behind, dl_draw);
        behind = h.color * alpha + behind * (1 - alpha);

        // α = o·G
        const Real dl_do = dl_dalpha * h.falloff;
        Real dl_dg = dl_dalpha * h.opacity;
        g.opacity_logit += dl_do * h.opacity * (1 - h.opacity);

        // c = SH(d) + bilerp(T, u)
        for (int ch = 0; ch < 3; ++ch)
            for (int k = 0; k < kShCoeffs; ++k)
                g.sh[std::size_t(ch * kShCoeffs + k)] += dl_dc[ch] * basis[std::size_t(k)];
        Real dl_da = 0, dl_db = 0;
        if (!p.layout.empty()) {
            const auto raw = act_grad.subspan(p.tex_first);
            const auto act = std::span<const Real>(ps.activated).subspan(p.tex_first);
            Vec3 dtex_du, dtex_dv;
            for (int k = 0; k < 4; ++k) {
                if (h.taps.index[std::size_t(k)] < 0)
                    continue;
                const std::size_t base = std::size_t(h.taps.index[std::size_t(k)]) * 3;
                const Vec3 a{act[base], act[base + 1], act[base + 2]};
                dtex_du += a * h.taps.dweight_du[std::size_t(k)];
                dtex_dv += a * h.taps.dweight_dv[std::size_t(k)];
                const Real wk = h.taps.weight[std::size_t(k)];
                const Vec3 dg{dl_dc.x * wk * raw[base], dl_dc.y * wk * raw[base + 1], dl_dc.z * wk * raw[base + 2]};
                tg.push_back({p.tex_first / 3 + std::size_t(h.taps.index[std::size_t(k)]), dg});
            }
            // u = p^l / k + offset; the mapping has no σ dependence.
            dl_da += dot(dl_dc, dtex_du) / p.layout.texel_size;
            dl_db += dot(dl_dc, dtex_dv) / p.layout.texel_size;
        }

        // G = exp(-½ (a²/σ₁² + b²/σ₂²))
        const Real a = h.local.x, b = h.local.y;
        const Real s1 = p.scales.x, s2 = p.scales.y;
        dl_da += dl_dg * (-h.falloff * a / (s1 * s1));
        dl_db += dl_dg * (-h.falloff * b / (s2 * s2));
        g.scales.x += dl_dg * h.falloff * a * a / (s1 * s1 * s1);
        g.scales.y += dl_dg * h.falloff * b * b / (s2 * s2 * s2);

        // a = e_u·(p − μ), b = e_v·(p − μ), p = r₀ + t d, t = n·(μ − r₀)/(n·d)
        const Vec3 eu = p.rotation.col[0], ev = p.rotation.col[1], n = p.rotation.col[2];
        const Real nd = dot(n, ray.direction);
        const Vec3 wvec = ray.at(h.t) - p.center;
        const Real eud = dot(eu, ray.direction), evd = dot(ev, ray.direction);
        g.center += (n * (eud / nd) - eu) * dl_da + (n * (evd / nd) - ev) * dl_db;
        // dL/dR accumulated as columns, converted to the quaternion below.
        const Vec3 d_eu = wvec * dl_da;
        const Vec3 d_ev = wvec * dl_db;
        const Vec3 d_n = wvec * (-(dl_da * eud + dl_db * evd) / nd);
        Mat3 &dr = rg[idx].dr;
        dr.col[0] += d_eu;
        dr.col[1] += d_ev;
        dr.col[2] += d_n;
    }
}

/// dL/dq from dL/dR through normalization and the rotation matrix.
inline Quat rotation_grad(const Quat &q, const Mat3 &dr) {
    const Real qn = std::sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]);
    const Quat qh{q[0] / qn, q[1] / qn, q[2] / qn, q[3] / qn};
    const Quat dqh = rotation_matrix_backward(qh, dr);
    const Real proj = qh[0] * dqh[0] + qh[1] * dqh[1] + qh[2] * dqh[2] + qh[3] * dqh[3];
    Quat out{};
    for (std::size_t k = 0; k < 4; ++k)
        out[k] = (dqh[k] - qh[k] * proj) / qn;
    return out;
}

inline void add(PrimitiveGrad &dst, const PrimitiveGrad &src) {
    dst.center += src.center;
    dst.scales = dst.scales + src.scales;
    for (int k = 0; k < 4; ++k)
        dst.rotation[std::size_t(k)] += src.rotation[std::size_t(k)];
    dst.opacity_logit += src.opacity_logit;
    for (int k = 0; k < kShParams; ++k)
        dst.sh[std::size_t(k)] += src.sh[std::size_t(k)];
}

} // namespace detail

/// Loss of one view and its analytic gradient with respect to every raw
/// parameter. Reductions run in fixed tile order, so the result does not
/// depend on the thread count.
inline BackwardResult backward(const Camera &cam, const Scene &scene, const Image &reference,
                               const LossWeights &weights, const RenderSettings &settings = {}, int view = -1) {
    if (reference.width != cam.width || reference.height != cam.height)
        throw std::invalid_argument("backward: reference dimensions do not match the camera");
    BackwardResult res;
    const auto ps = detail::prepare(cam, scene, settings);
    std::vector<std::vector<HitSample>> kept;
    res.render = detail::render_prepared(cam, ps, settings, nullptr, &kept);
    const Image &img = res.render.image;
    const std::size_t n = scene.size();
    const std::size_t nvals = img.data.size();

    // Image-space loss and its gradient.
    LossTerms &L = res.loss;
    L.l1 = mean_abs_error(img, reference);
    std::vector<Real> dl_dimg(nvals, 0.0);
    const Real l1_scale = (1 - weights.ssim) / Real(std::max<std::size_t>(1, nvals));
    for (std::size_t i = 0; i < nvals; ++i) {
        const Real d = img.data[i] - reference.data[i];
        dl_dimg[i] = l1_scale * Real((d > 0) - (d < 0));
    }
    if (weights.ssim != 0) {
        const auto s = ssim(img, reference, true);
        L.ssim = s.value;
        for (std::size_t i = 0; i < nvals; ++i)
            dl_dimg[i] -= weights.ssim * s.grad[i];
    } else {
        L.ssim = ssim(img, reference).value;
    }
    L.rgb = (1 - weights.ssim) * L.l1 + weights.ssim * (1 - L.ssim);
    L.texture = loss_texture(scene.textures, weights.texture);
    L.opacity = loss_opacity(scene.prims, weights.opacity);
    L.total = L.rgb + L.texture + L.opacity;
    if (!std::isfinite(L.total))
        throw NonFiniteLoss(view);

    // Clamp to [0,1]: pass-through inside, zero outside.
    for (std::size_t i = 0; i < nvals; ++i) {
        const Real raw = res.render.unclamped.data[i];
        if (raw < 0 || raw > 1)
            dl_dimg[i] = 0;
    }

    const auto tiles = detail::make_tiles(cam.width, cam.height, settings.tile_size);
    std::vector<Real> act_grad(scene.textures.data().size());
    {
        const auto raw = scene.textures.data();
        for (std::size_t i = 0; i < raw.size(); ++i)
            act_grad[i] = activate_grad(raw[i]);
    }
    std::vector<std::vector<PrimitiveGrad>> tile_pg(tiles.size());
    std::vector<std::vector<detail::RotationAccum>> tile_rg(tiles.size());
    std::vector<std::vector<detail::TexelGradEntry>> tile_tg(tiles.size());
    parallel_for(tiles.size(), settings.threads, [&](std::size_t ti) {
        const auto &tile = tiles[ti];
        auto &pg = tile_pg[ti];
        pg.assign(n, PrimitiveGrad{});
        auto &rg = tile_rg[ti];
        rg.assign(n, detail::RotationAccum{});
        auto &tg = tile_tg[ti];
        for (int y = tile.y0; y <= tile.y1; ++y)
            for (int x = tile.x0; x <= tile.x1; ++x) {
                const std::size_t pix = img.pixel_index(x, y);
                const Vec3 g{dl_dimg[pix * 3], dl_dimg[pix * 3 + 1], dl_dimg[pix * 3 + 2]};
                if (g.x == 0 && g.y == 0 && g.z == 0)
                    continue;
                const Ray ray = pixel_ray(cam, x, y);
                const auto &hits = kept[pix];
                detail::backward_pixel(ray, ps, act_grad, hits, hits.size(), sh_basis(ray.direction), g, pg, rg, tg);
            }
    });

    GradientSet &G = res.grads;
    G.prims.assign(n, PrimitiveGrad{});
    G.texels.assign(scene.textures.data().size(), 0.0);
    std::vector<Mat3> dr(n, Mat3{{Vec3{}, Vec3{}, Vec3{}}});
    for (std::size_t ti = 0; ti < tiles.size(); ++ti) {
        for (std::size_t i = 0; i < n; ++i) {
            detail::add(G.prims[i], tile_pg[ti][i]);
            for (int c = 0; c < 3; ++c)
                dr[i].col[std::size_t(c)] += tile_rg[ti][i].dr.col[std::size_t(c)];
        }
        for (const auto &e : tile_tg[ti])
            for (int c = 0; c < 3; ++c)
                G.texels[e.index * 3 + std::size_t(c)] += e.grad[c];
    }
    for (std::size_t i = 0; i < n; ++i)
        G.prims[i].rotation = detail::rotation_grad(scene.prims[i].rotation, dr[i]);

    // Regularizers.
    if (weights.texture != 0) {
        const auto raw = scene.textures.data();
        for (std::size_t i = 0; i < raw.size(); ++i) {
            const Real a = activate(raw[i]);
            G.texels[i] += weights.texture * Real((a > 0) - (a < 0)) * activate_grad(raw[i]);
        }
    }
    if (weights.opacity != 0 && n > 0)
        for (std::size_t i = 0; i < n; ++i) {
            const Real o = scene.prims[i].opacity();
            G.prims[i].opacity_logit += weights.opacity / Real(n) * o * (1 - o);
        }
    return res;
}

} // namespace texsplat
