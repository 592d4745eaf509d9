#pragma once

#include <algorithm>
#include <cmath>

#include "kinetic_exit/core.hpp"

namespace kinetic_exit::dynamics {

struct Vec2 {
    double q = 0.0, p = 0.0;

    Vec2() = default;
    constexpr Vec2(double q_, double p_) : q(q_), p(p_) {}
    explicit constexpr Vec2(const PhaseState& s) : q(s.q), p(s.p) {}
    constexpr PhaseState state() const { return {q, p}; }

    friend constexpr Vec2 operator+(Vec2 a, Vec2 b) { return {a.q + b.q, a.p + b.p}; }
    friend constexpr Vec2 operator-(Vec2 a, Vec2 b) { return {a.q - b.q, a.p - b.p}; }
    friend constexpr Vec2 operator*(double s, Vec2 a) { return {s * a.q, s * a.p}; }
};

/// Row-major 2x2 matrix [[a, b], [c, d]].
struct Mat2 {
    double a = 0.0, b = 0.0, c = 0.0, d = 0.0;

    static constexpr Mat2 identity() { return {1.0, 0.0, 0.0, 1.0}; }

    constexpr Mat2 transpose() const { return {a, c, b, d}; }
    constexpr double det() const { return a * d - b * c; }

    friend constexpr Vec2 operator*(const Mat2& m, Vec2 v) { return {m.a * v.q + m.b * v.p, m.c * v.q + m.d * v.p}; }
    friend constexpr Mat2 operator*(const Mat2& m, const Mat2& n) {
        return {m.a * n.a + m.b * n.c, m.a * n.b + m.b * n.d, m.c * n.a + m.d * n.c, m.c * n.b + m.d * n.d};
    }
    friend constexpr Mat2 operator+(const Mat2& m, const Mat2& n) { return {m.a + n.a, m.b + n.b, m.c + n.c, m.d + n.d}; }
    friend constexpr Mat2 operator*(double s, const Mat2& m) { return {s * m.a, s * m.b, s * m.c, s * m.d}; }
};

/// Lower Cholesky factor of a symmetric positive semi-definite matrix,
/// stored as [[l11, 0], [l21, l22]].
inline Mat2 cholesky(const Mat2& s) {
    const double l11 = std::sqrt(std::max(s.a, 0.0));
    const double l21 = l11 > 0.0 ? s.c / l11 : 0.0;
    const double l22 = std::sqrt(std::max(s.d - l21 * l21, 0.0));
    return {l11, 0.0, l21, l22};
}

/// Inverse of a symmetric positive definite matrix given its Cholesky factor.
inline Mat2 spd_inverse(const Mat2& s, const Mat2& chol) {
    const double det = (chol.a * chol.d) * (chol.a * chol.d);
    return {s.d / det, -s.b / det, -s.c / det, s.a / det};
}

}  // namespace kinetic_exit::dynamics
