// Small fixed-size geometry kernel: 3-vectors, homogeneous affine transforms,
// axis-aligned boxes. Everything is double precision and value-semantic.
#pragma once

#include <array>
#include <cmath>
#include <cstddef>

namespace cf {

struct Vec3 {
    double x = 0.0, y = 0.0, z = 0.0;

    constexpr double operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }
    double& operator[](int i) { return i == 0 ? x : (i == 1 ? y : z); }

    Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
    Vec3 operator/(double s) const { return {x / s, y / s, z / s}; }
    Vec3 operator-() const { return {-x, -y, -z}; }
    Vec3& operator+=(const Vec3& o) { x += o.x; y += o.y; z += o.z; return *this; }
    Vec3& operator-=(const Vec3& o) { x -= o.x; y -= o.y; z -= o.z; return *this; }
    Vec3& operator*=(double s) { x *= s; y *= s; z *= s; return *this; }

    double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
    Vec3 cross(const Vec3& o) const {
        return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
    }
    double norm2() const { return dot(*this); }
    double norm() const { return std::sqrt(norm2()); }
    Vec3 normalized() const {
        const double n = norm();
        return n > 0.0 ? (*this) / n : Vec3{0.0, 0.0, 0.0};
    }
    Vec3 cwise_min(const Vec3& o) const { return {std::fmin(x, o.x), std::fmin(y, o.y), std::fmin(z, o.z)}; }
    Vec3 cwise_max(const Vec3& o) const { return {std::fmax(x, o.x), std::fmax(y, o.y), std::fmax(z, o.z)}; }
};

inline Vec3 operator*(double s, const Vec3& v) { return v * s; }

// 4x4 homogeneous transform, row-major, last row fixed to (0,0,0,1).
struct Affine {
    std::array<double, 16> m{1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1};

    static Affine identity() { return Affine{}; }
    static Affine translation(const Vec3& t);
    static Affine scaling(const Vec3& s);
    // Right-handed rotation about a unit axis, angle in radians.
    static Affine rotation(const Vec3& axis, double angle);
    // Linear part L (row-major 3x3) plus translation t.
    static Affine from_linear(const std::array<double, 9>& L, const Vec3& t);

    double at(int r, int c) const { return m[static_cast<size_t>(r) * 4 + c]; }
    double& at(int r, int c) { return m[static_cast<size_t>(r) * 4 + c]; }

    Vec3 apply(const Vec3& p) const {
        return {m[0] * p.x + m[1] * p.y + m[2] * p.z + m[3],
                m[4] * p.x + m[5] * p.y + m[6] * p.z + m[7],
                m[8] * p.x + m[9] * p.y + m[10] * p.z + m[11]};
    }
    // Linear part only (directions, no translation).
    Vec3 apply_vector(const Vec3& v) const {
        return {m[0] * v.x + m[1] * v.y + m[2] * v.z,
                m[4] * v.x + m[5] * v.y + m[6] * v.z,
                m[8] * v.x + m[9] * v.y + m[10] * v.z};
    }

    Affine operator*(const Affine& o) const;
    double det3() const;
    bool invertible(double eps = 1e-12) const { return std::fabs(det3()) > eps; }
    // Throws degenerate_transform if the linear part is singular.
    Affine inverse() const;
};

struct Box3 {
    Vec3 lo{0, 0, 0}, hi{0, 0, 0};

    Vec3 extent() const { return hi - lo; }
    Vec3 center() const { return (lo + hi) * 0.5; }
    double diagonal() const { return extent().norm(); }
    bool contains(const Vec3& p) const {
        return p.x >= lo.x && p.x <= hi.x && p.y >= lo.y && p.y <= hi.y && p.z >= lo.z && p.z <= hi.z;
    }
    Vec3 clamp(const Vec3& p) const {
        return {std::fmin(std::fmax(p.x, lo.x), hi.x),
                std::fmin(std::fmax(p.y, lo.y), hi.y),
                std::fmin(std::fmax(p.z, lo.z), hi.z)};
    }
    void expand(const Vec3& p) {
        lo = lo.cwise_min(p);
        hi = hi.cwise_max(p);
    }
    // Squared distance from p to the box (0 inside).
    double dist2(const Vec3& p) const {
        double d = 0.0;
        for (int i = 0; i < 3; ++i) {
            const double lodiff = lo[i] - p[i];
            const double hidiff = p[i] - hi[i];
            if (lodiff > 0.0) d += lodiff * lodiff;
            if (hidiff > 0.0) d += hidiff * hidiff;
        }
        return d;
    }
};

} // namespace cf
