#pragma once

// Reference values computed without the library: closed forms and a
// brute-force one-dimensional layer minimization.

#include <algorithm>
#include <array>
#include <cmath>

namespace oracle {

/// Neo-Hookean density μ/2(|F|^2 - 2) extended by max{·, |F|^2/c - c, 0}.
inline double neo_hookean_extended(double mu, double c, const std::array<double, 4> &F) {
    const double n2 = F[0] * F[0] + F[1] * F[1] + F[2] * F[2] + F[3] * F[3];
    return std::max({0.5 * mu * (n2 - 2.0), n2 / c - c, 0.0});
}

struct LayerOptimum {
    double value;
    double shear;  ///< second component of the high-phase layer vector
};

/// Two layers normal to e1 with volume fractions θ (coefficient mu_high) and
/// 1-θ (mu_low). Layer gradients F + g_i⊗e1 with θ g_h + (1-θ) g_l = 0 and
/// det = 1 in each layer. For F = [[1, s], [0, 1]] the determinant constraint
/// reads g1 = s g2, leaving one scalar t = g_h,2. Minimized by a dense scan
/// followed by golden-section refinement.
inline LayerOptimum laminate_layers(double mu_high, double mu_low, double theta, double s, double c) {
    auto energy = [&](double t) {
        const double gh[2] = {s * t, t};
        const double r = -theta / (1.0 - theta);
        const double gl[2] = {r * gh[0], r * gh[1]};
        const std::array<double, 4> Fh{1.0 + gh[0], s, gh[1], 1.0};
        const std::array<double, 4> Fl{1.0 + gl[0], s, gl[1], 1.0};
        return theta * neo_hookean_extended(mu_high, c, Fh) + (1.0 - theta) * neo_hookean_extended(mu_low, c, Fl);
    };
    double best_t = 0.0, best = energy(0.0);
    for (int i = -40000; i <= 40000; ++i) {
        const double t = i * 1e-4;
        const double e = energy(t);
        if (e < best) best = e, best_t = t;
    }
    double a = best_t - 1e-4, b = best_t + 1e-4;
    const double g = 0.5 * (std::sqrt(5.0) - 1.0);
    for (int it = 0; it < 200; ++it) {
        const double x1 = b - g * (b - a), x2 = a + g * (b - a);
        if (energy(x1) < energy(x2)) b = x2;
        else a = x1;
    }
    const double t = 0.5 * (a + b);
    return {energy(t), t};
}

} // namespace oracle
