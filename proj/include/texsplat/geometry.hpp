// Copyright Contributors to the texsplat project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "texsplat/math.hpp"

#include <array>
#include <cmath>
#include <optional>

namespace texsplat {

inline constexpr int kShCoeffs = 16;
inline constexpr int kShParams = 3 * kShCoeffs;

/// Rays with |n·d| below this are treated as parallel to the surfel plane.
inline constexpr Real kParallelEps = 1e-8;
/// Hits closer than this along the ray are rejected.
inline constexpr Real kNearT = 1e-4;

/// One textured 2D Gaussian surfel. The texture itself lives in the
/// TexturePool, indexed like the primitive.
struct Primitive {
    Vec3 center;
    Vec2 scales{1, 1};
    Quat rotation{1, 0, 0, 0};
    Real opacity_logit = 0;
    /// Channel-major: sh[channel * 16 + coeff].
    std::array<Real, kShParams> sh{};
    /// t2p ratio = 2^t2p_exponent.
    int t2p_exponent = 1;

    Real opacity() const { return sigmoid(opacity_logit); }
    Mat3 rotation_matrix() const { return texsplat::rotation_matrix(normalized(rotation)); }
    Vec3 normal() const { return rotation_matrix().col[2]; }

    friend bool operator==(const Primitive &, const Primitive &) = default;
};

struct Ray {
    Vec3 origin;
    Vec3 direction{0, 0, 1};

    Vec3 at(Real t) const { return origin + direction * t; }
};

struct Hit {
    Real t = 0;
    Vec3 point;
};

/// Ray/plane intersection against the surfel's supporting plane. The plane is
/// unbounded here; footprint culling happens on the canonical coordinates.
inline std::optional<Hit> intersect(const Ray &ray, Vec3 center, Vec3 normal) {
    const Real denom = dot(normal, ray.direction);
    if (std::abs(denom) <= kParallelEps)
        return std::nullopt;
    const Real t = dot(normal, center - ray.origin) / denom;
    if (!(t > kNearT))
        return std::nullopt;
    return Hit{t, ray.at(t)};
}

inline std::optional<Hit> intersect(const Ray &ray, const Primitive &prim) {
    return intersect(ray, prim.center, prim.normal());
}

/// First two components of R⁻¹(p − μ). Off-plane points are projected.
inline Vec2 to_local(Vec3 world_point, const Mat3 &rotation, Vec3 center) {
    const Vec3 l = rotation.transpose_mul(world_point - center);
    return {l.x, l.y};
}

inline Vec2 to_local(Vec3 world_point, const Primitive &prim) {
    return to_local(world_point, prim.rotation_matrix(), prim.center);
}

inline Vec2 to_canonical(Vec2 local, Vec2 scales) { return {local.x / scales.x, local.y / scales.y}; }

inline Vec2 to_canonical(Vec2 local, const Primitive &prim) { return to_canonical(local, prim.scales); }

/// G(x) = exp(-½ xᵀx).
inline Real falloff(Vec2 canonical) { return std::exp(-0.5 * dot(canonical, canonical)); }

// Real spherical-harmonics constants up to degree 3.
inline constexpr Real kShC0 = 0.28209479177387814;
inline constexpr Real kShC1 = 0.4886025119029199;
inline constexpr std::array<Real, 5> kShC2{1.0925484305920792, -1.0925484305920792, 0.31539156525252005,
                                           -1.0925484305920792, 0.5462742152960396};
inline constexpr std::array<Real, 7> kShC3{-0.5900435899266435, 2.890611442640554, -0.4570457994644658,
                                           0.3731763325901154,  -0.4570457994644658, 1.445305721320277,
                                           -0.5900435899266435};

/// The 16 real SH basis functions evaluated at a unit direction.
inline std::array<Real, kShCoeffs> sh_basis(Vec3 d) {
    const Real x = d.x, y = d.y, z = d.z;
    const Real xx = x * x, yy = y * y, zz = z * z;
    return {kShC0,
            -kShC1 * y,
            kShC1 * z,
            -kShC1 * x,
            kShC2[0] * x * y,
            kShC2[1] * y * z,
            kShC2[2] * (2 * zz - xx - yy),
            kShC2[3] * x * z,
            kShC2[4] * (xx - yy),
            kShC3[0] * y * (3 * xx - yy),
            kShC3[1] * x * y * z,
            kShC3[2] * y * (4 * zz - xx - yy),
            kShC3[3] * z * (2 * zz - 3 * xx - 3 * yy),
            kShC3[4] * x * (4 * zz - xx - yy),
            kShC3[5] * z * (xx - yy),
            kShC3[6] * x * (xx - 3 * yy)};
}

/// View-dependent base color. Unclamped.
inline Vec3 sh_color(const std::array<Real, kShParams> &sh, const std::array<Real, kShCoeffs> &basis) {
    Vec3 c;
    for (int ch = 0; ch < 3; ++ch) {
        Real acc = 0;
        for (int k = 0; k < kShCoeffs; ++k)
            acc += sh[ch * kShCoeffs + k] * basis[k];
        c[ch] = acc;
    }
    return c;
}

inline Vec3 sh_color(const std::array<Real, kShParams> &sh, Vec3 dir) { return sh_color(sh, sh_basis(dir)); }

/// SH coefficient that yields `color` as the direction-independent DC term.
inline Real sh_dc_from_color(Real color) { return color / kShC0; }

} // namespace texsplat
