#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <stdexcept>

namespace vxs {

inline constexpr double kPi = std::numbers::pi;

inline double deg_to_rad(double deg) { return deg * kPi / 180.0; }
inline double rad_to_deg(double rad) { return rad * 180.0 / kPi; }

// ======================================================
// Vec3
// ======================================================
struct Vec3 {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;

    constexpr Vec3() = default;
    constexpr Vec3(double x_, double y_, double z_) : x(x_), y(y_), z(z_) {}

    constexpr Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    constexpr Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    constexpr Vec3 operator-() const { return {-x, -y, -z}; }
    constexpr Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
    constexpr Vec3 operator/(double s) const { return {x / s, y / s, z / s}; }
    Vec3& operator+=(const Vec3& o) { x += o.x; y += o.y; z += o.z; return *this; }
    Vec3& operator-=(const Vec3& o) { x -= o.x; y -= o.y; z -= o.z; return *this; }
    Vec3& operator*=(double s) { x *= s; y *= s; z *= s; return *this; }
    constexpr bool operator==(const Vec3& o) const { return x == o.x && y == o.y && z == o.z; }

    constexpr double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
    constexpr Vec3 cross(const Vec3& o) const {
        return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
    }
    constexpr double norm2() const { return dot(*this); }
    double norm() const { return std::sqrt(norm2()); }

    Vec3 normalized() const {
        const double n = norm();
        if (n == 0.0) throw std::domain_error("cannot normalize zero vector");
        return *this / n;
    }

    double operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }
    double& operator[](int i) { return i == 0 ? x : (i == 1 ? y : z); }

    bool finite() const { return std::isfinite(x) && std::isfinite(y) && std::isfinite(z); }

    static constexpr Vec3 zero() { return {0.0, 0.0, 0.0}; }
    static constexpr Vec3 unit_x() { return {1.0, 0.0, 0.0}; }
    static constexpr Vec3 unit_y() { return {0.0, 1.0, 0.0}; }
    static constexpr Vec3 unit_z() { return {0.0, 0.0, 1.0}; }
};

inline constexpr Vec3 operator*(double s, const Vec3& v) { return v * s; }

inline Vec3 min_componentwise(const Vec3& a, const Vec3& b) {
    return {std::min(a.x, b.x), std::min(a.y, b.y), std::min(a.z, b.z)};
}
inline Vec3 max_componentwise(const Vec3& a, const Vec3& b) {
    return {std::max(a.x, b.x), std::max(a.y, b.y), std::max(a.z, b.z)};
}

// ======================================================
// Mat3 (row-major)
// ======================================================
struct Mat3 {
    std::array<double, 9> m{1, 0, 0, 0, 1, 0, 0, 0, 1};

    double operator()(int r, int c) const { return m[static_cast<size_t>(r) * 3 + c]; }
    double& operator()(int r, int c) { return m[static_cast<size_t>(r) * 3 + c]; }

    Vec3 apply(const Vec3& v) const {
        return {m[0] * v.x + m[1] * v.y + m[2] * v.z,
                m[3] * v.x + m[4] * v.y + m[5] * v.z,
                m[6] * v.x + m[7] * v.y + m[8] * v.z};
    }
    Vec3 apply_transposed(const Vec3& v) const {
        return {m[0] * v.x + m[3] * v.y + m[6] * v.z,
                m[1] * v.x + m[4] * v.y + m[7] * v.z,
                m[2] * v.x + m[5] * v.y + m[8] * v.z};
    }

    Mat3 transposed() const {
        Mat3 r;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) r(i, j) = (*this)(j, i);
        return r;
    }

    Mat3 operator*(const Mat3& o) const {
        Mat3 r;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) {
                double s = 0.0;
                for (int k = 0; k < 3; ++k) s += (*this)(i, k) * o(k, j);
                r(i, j) = s;
            }
        return r;
    }

    double determinant() const {
        return m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) +
               m[2] * (m[3] * m[7] - m[4] * m[6]);
    }

    // Max abs deviation of R^T R from identity.
    double orthonormal_error() const {
        const Mat3 g = transposed() * (*this);
        double e = 0.0;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j)
                e = std::max(e, std::abs(g(i, j) - (i == j ? 1.0 : 0.0)));
        return e;
    }
    bool is_rotation(double tol = 1e-9) const {
        return orthonormal_error() <= tol && determinant() > 0.0;
    }

    static Mat3 identity() { return {}; }

    static Mat3 rotation_x(double a) {
        const double c = std::cos(a), s = std::sin(a);
        Mat3 r;
        r.m = {1, 0, 0, 0, c, -s, 0, s, c};
        return r;
    }
    static Mat3 rotation_y(double a) {
        const double c = std::cos(a), s = std::sin(a);
        Mat3 r;
        r.m = {c, 0, s, 0, 1, 0, -s, 0, c};
        return r;
    }
    static Mat3 rotation_z(double a) {
        const double c = std::cos(a), s = std::sin(a);
        Mat3 r;
        r.m = {c, -s, 0, s, c, 0, 0, 0, 1};
        return r;
    }

    // Rodrigues rotation about a unit axis.
    static Mat3 axis_angle(const Vec3& axis, double angle) {
        const double c = std::cos(angle), s = std::sin(angle), t = 1.0 - c;
        const double x = axis.x, y = axis.y, z = axis.z;
        Mat3 r;
        r.m = {t * x * x + c,     t * x * y - s * z, t * x * z + s * y,
               t * x * y + s * z, t * y * y + c,     t * y * z - s * x,
               t * x * z - s * y, t * y * z + s * x, t * z * z + c};
        return r;
    }

    // w,x,y,z quaternion, need not be pre-normalized.
    static Mat3 from_quaternion(double w, double x, double y, double z) {
        const double n = std::sqrt(w * w + x * x + y * y + z * z);
        if (n == 0.0) throw std::domain_error("zero quaternion");
        w /= n; x /= n; y /= n; z /= n;
        Mat3 r;
        r.m = {1 - 2 * (y * y + z * z), 2 * (x * y - w * z),     2 * (x * z + w * y),
               2 * (x * y + w * z),     1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
               2 * (x * z - w * y),     2 * (y * z + w * x),     1 - 2 * (x * x + y * y)};
        return r;
    }
};

// ======================================================
// RigidTransform
// ======================================================
struct RigidTransform {
    Mat3 rotation;
    Vec3 translation;

    Vec3 apply(const Vec3& p) const { return rotation.apply(p) + translation; }
    Vec3 apply_inverse(const Vec3& p) const { return rotation.apply_transposed(p - translation); }
    Vec3 rotate(const Vec3& v) const { return rotation.apply(v); }
    Vec3 rotate_inverse(const Vec3& v) const { return rotation.apply_transposed(v); }

    RigidTransform compose(const RigidTransform& inner) const {
        return {rotation * inner.rotation, rotation.apply(inner.translation) + translation};
    }
    RigidTransform inverse() const {
        const Mat3 rt = rotation.transposed();
        return {rt, -rt.apply(translation)};
    }

    static RigidTransform identity() { return {}; }
};

// ======================================================
// Deterministic RNG
// ======================================================
class Rng {
public:
    explicit Rng(uint64_t seed) : engine_(seed) {}

    double uniform(double lo, double hi) {
        return std::uniform_real_distribution<double>(lo, hi)(engine_);
    }
    int uniform_int(int lo, int hi) {  // inclusive bounds
        return std::uniform_int_distribution<int>(lo, hi)(engine_);
    }
    double gaussian(double sigma) {
        if (sigma == 0.0) return 0.0;
        return std::normal_distribution<double>(0.0, sigma)(engine_);
    }
    bool bernoulli(double p) { return std::bernoulli_distribution(p)(engine_); }

    // Shoemake's method: uniform over SO(3).
    Mat3 random_rotation() {
        const double u1 = uniform(0.0, 1.0);
        const double u2 = uniform(0.0, 2.0 * kPi);
        const double u3 = uniform(0.0, 2.0 * kPi);
        const double a = std::sqrt(1.0 - u1), b = std::sqrt(u1);
        return Mat3::from_quaternion(a * std::sin(u2), a * std::cos(u2), b * std::sin(u3),
                                     b * std::cos(u3));
    }
    Vec3 random_unit_vector() {
        const double z = uniform(-1.0, 1.0);
        const double phi = uniform(0.0, 2.0 * kPi);
        const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
        return {r * std::cos(phi), r * std::sin(phi), z};
    }

    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
};

}  // namespace vxs
