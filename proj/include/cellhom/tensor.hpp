#pragma once

#include <array>
#include <cmath>
#include <utility>

namespace cellhom {

/// Spatial dimension. Only d = 2 kernels are built.
inline constexpr int kDim = 2;

struct Vec {
    double x = 0.0;
    double y = 0.0;

    double operator[](int i) const { return i == 0 ? x : y; }
    double &operator[](int i) { return i == 0 ? x : y; }

    friend Vec operator+(Vec a, Vec b) { return {a.x + b.x, a.y + b.y}; }
    friend Vec operator-(Vec a, Vec b) { return {a.x - b.x, a.y - b.y}; }
    friend Vec operator*(double s, Vec a) { return {s * a.x, s * a.y}; }
    friend bool operator==(const Vec &, const Vec &) = default;
};

inline double dot(Vec a, Vec b) { return a.x * b.x + a.y * b.y; }
inline double norm(Vec a) { return std::hypot(a.x, a.y); }
/// Counter-clockwise quarter turn.
inline Vec perp(Vec a) { return {-a.y, a.x}; }

/// 2x2 real matrix, row-major. Deformation gradients, corrector gradients
/// and stresses all live here.
struct Mat {
    std::array<double, 4> a{0.0, 0.0, 0.0, 0.0};

    constexpr Mat() = default;
    constexpr Mat(double m00, double m01, double m10, double m11) : a{m00, m01, m10, m11} {}

    static constexpr Mat identity() { return {1.0, 0.0, 0.0, 1.0}; }
    static constexpr Mat zero() { return {}; }
    static constexpr Mat diag(double d0, double d1) { return {d0, 0.0, 0.0, d1}; }

    double operator()(int i, int j) const { return a[2 * i + j]; }
    double &operator()(int i, int j) { return a[2 * i + j]; }

    Mat &operator+=(const Mat &o) {
        for (int i = 0; i < 4; ++i) a[i] += o.a[i];
        return *this;
    }
    Mat &operator-=(const Mat &o) {
        for (int i = 0; i < 4; ++i) a[i] -= o.a[i];
        return *this;
    }
    Mat &operator*=(double s) {
        for (auto &v : a) v *= s;
        return *this;
    }

    friend Mat operator+(Mat l, const Mat &r) { return l += r; }
    friend Mat operator-(Mat l, const Mat &r) { return l -= r; }
    friend Mat operator*(double s, Mat m) { return m *= s; }
    friend Mat operator*(Mat m, double s) { return m *= s; }
    friend bool operator==(const Mat &, const Mat &) = default;
};

inline Mat operator*(const Mat &l, const Mat &r) {
    return {l(0, 0) * r(0, 0) + l(0, 1) * r(1, 0), l(0, 0) * r(0, 1) + l(0, 1) * r(1, 1),
            l(1, 0) * r(0, 0) + l(1, 1) * r(1, 0), l(1, 0) * r(0, 1) + l(1, 1) * r(1, 1)};
}

inline Vec operator*(const Mat &m, Vec v) {
    return {m(0, 0) * v.x + m(0, 1) * v.y, m(1, 0) * v.x + m(1, 1) * v.y};
}

inline Mat transpose(const Mat &m) { return {m(0, 0), m(1, 0), m(0, 1), m(1, 1)}; }

/// a ⊗ b, i.e. (a b^T).
inline Mat outer(Vec a, Vec b) { return {a.x * b.x, a.x * b.y, a.y * b.x, a.y * b.y}; }

/// Frobenius inner product.
inline double ddot(const Mat &l, const Mat &r) {
    return l.a[0] * r.a[0] + l.a[1] * r.a[1] + l.a[2] * r.a[2] + l.a[3] * r.a[3];
}

inline double norm_sq(const Mat &m) { return ddot(m, m); }
inline double norm(const Mat &m) { return std::sqrt(norm_sq(m)); }
inline double max_abs(const Mat &m) {
    double r = 0.0;
    for (double v : m.a) r = std::max(r, std::abs(v));
    return r;
}

inline double det(const Mat &m) { return m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0); }

/// Classical adjugate: M * adj(M) = det(M) I.
inline Mat adjugate(const Mat &m) { return {m(1, 1), -m(0, 1), -m(1, 0), m(0, 0)}; }

/// Cofactor matrix, the derivative of det: d det(M) / dM = cof(M) = adj(M)^T.
inline Mat cofactor(const Mat &m) { return transpose(adjugate(m)); }

/// Inverse without any singularity guard; callers own that decision.
inline Mat inverse(const Mat &m) { return (1.0 / det(m)) * adjugate(m); }

/// Rotation by angle theta (counter-clockwise).
inline Mat rotation(double theta) {
    const double c = std::cos(theta), s = std::sin(theta);
    return {c, -s, s, c};
}

/// Pulls a derivative taken with respect to adj(F) back to one with respect to F.
inline Mat adjugate_pullback(const Mat &d_adj) {
    // adj [[a,b],[c,d]] = [[d,-b],[-c,a]]
    return {d_adj(1, 1), -d_adj(0, 1), -d_adj(1, 0), d_adj(0, 0)};
}

/// Coefficients of the affine map t -> det(A + t a⊗b) = c0 + c1 t.
struct DetLine {
    double c0 = 0.0;
    double c1 = 0.0;
};

/// det is affine along rank-one lines: c0 = det A, c1 = <cof A, a⊗b>.
inline DetLine rank_one_det_line(const Mat &A, Vec a, Vec b) {
    return {det(A), ddot(cofactor(A), outer(a, b))};
}

} // namespace cellhom
