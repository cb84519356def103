// Copyright Contributors to the texsplat project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cmath>

namespace texsplat {

using Real = double;

struct Vec2 {
    Real x = 0, y = 0;

    constexpr Real operator[](int i) const { return i == 0 ? x : y; }
    constexpr Real &operator[](int i) { return i == 0 ? x : y; }

    friend constexpr Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
    friend constexpr Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
    friend constexpr Vec2 operator*(Vec2 a, Real s) { return {a.x * s, a.y * s}; }
    friend constexpr Vec2 operator*(Real s, Vec2 a) { return {a.x * s, a.y * s}; }
    friend constexpr Vec2 operator/(Vec2 a, Real s) { return {a.x / s, a.y / s}; }
    friend constexpr bool operator==(Vec2, Vec2) = default;
};

inline constexpr Real dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }

struct Vec3 {
    Real x = 0, y = 0, z = 0;

    constexpr Real operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }
    constexpr Real &operator[](int i) { return i == 0 ? x : (i == 1 ? y : z); }

    constexpr Vec3 &operator+=(Vec3 o) {
        x += o.x;
        y += o.y;
        z += o.z;
        return *this;
    }
    constexpr Vec3 &operator-=(Vec3 o) {
        x -= o.x;
        y -= o.y;
        z -= o.z;
        return *this;
    }
    constexpr Vec3 &operator*=(Real s) {
        x *= s;
        y *= s;
        z *= s;
        return *this;
    }

    friend constexpr Vec3 operator+(Vec3 a, Vec3 b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
    friend constexpr Vec3 operator-(Vec3 a, Vec3 b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
    friend constexpr Vec3 operator-(Vec3 a) { return {-a.x, -a.y, -a.z}; }
    friend constexpr Vec3 operator*(Vec3 a, Real s) { return {a.x * s, a.y * s, a.z * s}; }
    friend constexpr Vec3 operator*(Real s, Vec3 a) { return {a.x * s, a.y * s, a.z * s}; }
    friend constexpr Vec3 operator/(Vec3 a, Real s) { return {a.x / s, a.y / s, a.z / s}; }
    friend constexpr bool operator==(Vec3, Vec3) = default;
};

inline constexpr Real dot(Vec3 a, Vec3 b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
inline constexpr Vec3 cross(Vec3 a, Vec3 b) {
    return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
inline constexpr Vec3 mul(Vec3 a, Vec3 b) { return {a.x * b.x, a.y * b.y, a.z * b.z}; }
inline Real norm(Vec3 a) { return std::sqrt(dot(a, a)); }
inline Vec3 normalized(Vec3 a) { return a / norm(a); }

/// Column-major 3x3 matrix; `col[j]` is the j-th column.
struct Mat3 {
    std::array<Vec3, 3> col{Vec3{1, 0, 0}, Vec3{0, 1, 0}, Vec3{0, 0, 1}};

    constexpr Real operator()(int r, int c) const { return col[c][r]; }
    constexpr Real &operator()(int r, int c) { return col[c][r]; }

    constexpr Vec3 operator*(Vec3 v) const { return col[0] * v.x + col[1] * v.y + col[2] * v.z; }

    /// Rᵀ v, i.e. the inverse for a rotation.
    constexpr Vec3 transpose_mul(Vec3 v) const {
        return {dot(col[0], v), dot(col[1], v), dot(col[2], v)};
    }

    constexpr Mat3 transposed() const {
        Mat3 t;
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c)
                t(r, c) = (*this)(c, r);
        return t;
    }
};

/// Quaternion stored as (w, x, y, z).
using Quat = std::array<Real, 4>;

inline Quat normalized(const Quat &q) {
    const Real n = std::sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]);
    return {q[0] / n, q[1] / n, q[2] / n, q[3] / n};
}

/// Rotation matrix of a unit quaternion.
inline constexpr Mat3 rotation_matrix(const Quat &q) {
    const Real w = q[0], x = q[1], y = q[2], z = q[3];
    Mat3 r;
    r(0, 0) = 1 - 2 * (y * y + z * z);
    r(0, 1) = 2 * (x * y - w * z);
    r(0, 2) = 2 * (x * z + w * y);
    r(1, 0) = 2 * (x * y + w * z);
    r(1, 1) = 1 - 2 * (x * x + z * z);
    r(1, 2) = 2 * (y * z - w * x);
    r(2, 0) = 2 * (x * z - w * y);
    r(2, 1) = 2 * (y * z + w * x);
    r(2, 2) = 1 - 2 * (x * x + y * y);
    return r;
}

/// Gradient of a scalar with respect to the quaternion entries, given its
/// gradient with respect to the matrix entries (dL/dR(r,c)).
inline constexpr Quat rotation_matrix_backward(const Quat &q, const Mat3 &dr) {
    const Real w = q[0], x = q[1], y = q[2], z = q[3];
    const auto g = [&](int r, int c) { return dr(r, c); };
    Quat out{};
    out[0] = 2 * (-z * g(0, 1) + y * g(0, 2) + z * g(1, 0) - x * g(1, 2) - y * g(2, 0) + x * g(2, 1));
    out[1] = 2 * (y * g(0, 1) + z * g(0, 2) + y * g(1, 0) - 2 * x * g(1, 1) - w * g(1, 2) + z * g(2, 0) +
                  w * g(2, 1) - 2 * x * g(2, 2));
    out[2] = 2 * (-2 * y * g(0, 0) + x * g(0, 1) + w * g(0, 2) + x * g(1, 0) + z * g(1, 2) - w * g(2, 0) +
                  z * g(2, 1) - 2 * y * g(2, 2));
    out[3] = 2 * (-2 * z * g(0, 0) - w * g(0, 1) + x * g(0, 2) + w * g(1, 0) - 2 * z * g(1, 1) + y * g(1, 2) +
                  x * g(2, 0) + y * g(2, 1));
    return out;
}

/// Quaternion (w,x,y,z) of a rotation matrix.
inline Quat quat_from_matrix(const Mat3 &m) {
    const Real tr = m(0, 0) + m(1, 1) + m(2, 2);
    Quat q{};
    if (tr > 0) {
        const Real s = std::sqrt(tr + 1) * 2;
        q = {s / 4, (m(2, 1) - m(1, 2)) / s, (m(0, 2) - m(2, 0)) / s, (m(1, 0) - m(0, 1)) / s};
    } else if (m(0, 0) > m(1, 1) && m(0, 0) > m(2, 2)) {
        const Real s = std::sqrt(1 + m(0, 0) - m(1, 1) - m(2, 2)) * 2;
        q = {(m(2, 1) - m(1, 2)) / s, s / 4, (m(0, 1) + m(1, 0)) / s, (m(0, 2) + m(2, 0)) / s};
    } else if (m(1, 1) > m(2, 2)) {
        const Real s = std::sqrt(1 + m(1, 1) - m(0, 0) - m(2, 2)) * 2;
        q = {(m(0, 2) - m(2, 0)) / s, (m(0, 1) + m(1, 0)) / s, s / 4, (m(1, 2) + m(2, 1)) / s};
    } else {
        const Real s = std::sqrt(1 + m(2, 2) - m(0, 0) - m(1, 1)) * 2;
        q = {(m(1, 0) - m(0, 1)) / s, (m(0, 2) + m(2, 0)) / s, (m(1, 2) + m(2, 1)) / s, s / 4};
    }
    return normalized(q);
}

/// Orthonormal frame whose third column is `normal`.
inline Mat3 frame_from_normal(Vec3 normal) {
    const Vec3 n = normalized(normal);
    const Vec3 helper = std::abs(n.x) < 0.9 ? Vec3{1, 0, 0} : Vec3{0, 1, 0};
    const Vec3 u = normalized(cross(helper, n));
    const Vec3 v = cross(n, u);
    Mat3 m;
    m.col = {u, v, n};
    return m;
}

inline Real sigmoid(Real x) { return 1 / (1 + std::exp(-x)); }
inline Real logit(Real p) { return std::log(p / (1 - p)); }

/// Round-trip through 32-bit float; the on-disk precision of every parameter.
/// The volatile store keeps GCC 11's -O3 SLP pass from eliding the narrowing.
inline Real to_storage(Real v) {
    volatile float f = static_cast<float>(v);
    return static_cast<Real>(f);
}

} // namespace texsplat
