#include "cellhom/density.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace cellhom {

namespace {

double wrap_unit(double t) { return t - std::floor(t + 0.5); }

/// |M|^p and its derivative p |M|^{p-2} M.
EnergyEval power_of_norm(const Mat &M, double p) {
    const double r2 = norm_sq(M);
    if (r2 == 0.0) return {0.0, Mat::zero()};
    const double r = std::sqrt(r2);
    const double rp = std::pow(r, p);
    return {rp, (p * rp / r2) * M};
}

} // namespace

void EnergySpec::validate() const {
    if (!(phase.mu_low > 0.0) || !(phase.mu_high > 0.0))
        throw std::invalid_argument("phase moduli must be positive");
    if (phase.axis != 0 && phase.axis != 1)
        throw std::invalid_argument("laminate axis must be 1 or 2");
    if (phase.kind == PhaseKind::laminate && !(phase.theta > 0.0 && phase.theta < 1.0))
        throw std::invalid_argument("laminate theta must lie in (0, 1)");
    if (phase.kind == PhaseKind::inclusion && !(phase.radius > 0.0 && phase.radius < 0.5))
        throw std::invalid_argument("inclusion radius must lie in (0, 0.5)");
    if (!(p >= kDim)) throw std::invalid_argument("growth exponent p must satisfy p >= d");
    if (model == Model::neo_hookean_incompressible && p != 2.0)
        throw std::invalid_argument("neo-hookean-incompressible requires p = 2");
    if (!(q >= 1.0)) throw std::invalid_argument("adjugate exponent q must be >= 1");
    if (!(c >= 1.0)) throw std::invalid_argument("growth constant c must be >= 1");
}

double EnergySpec::mu_max() const {
    return phase.kind == PhaseKind::constant ? phase.mu_low : std::max(phase.mu_low, phase.mu_high);
}

bool EnergySpec::homogeneous() const {
    return phase.kind == PhaseKind::constant || phase.mu_low == phase.mu_high;
}

std::string to_string(PhaseKind kind) {
    switch (kind) {
    case PhaseKind::constant: return "constant";
    case PhaseKind::laminate: return "laminate";
    case PhaseKind::checkerboard: return "checkerboard";
    case PhaseKind::inclusion: return "circular-inclusion";
    }
    return "?";
}

std::string to_string(Model model) {
    return model == Model::neo_hookean_incompressible ? "neo-hookean-incompressible"
                                                      : "adjugate-augmented";
}

PhaseKind parse_phase_kind(const std::string &s) {
    if (s == "constant") return PhaseKind::constant;
    if (s == "laminate") return PhaseKind::laminate;
    if (s == "checkerboard") return PhaseKind::checkerboard;
    if (s == "circular-inclusion" || s == "inclusion") return PhaseKind::inclusion;
    throw std::invalid_argument("unknown phase kind '" + s + "'");
}

Model parse_model(const std::string &s) {
    if (s == "neo-hookean-incompressible") return Model::neo_hookean_incompressible;
    if (s == "adjugate-augmented") return Model::adjugate_augmented;
    throw std::invalid_argument("unknown model '" + s + "'");
}

double mu_at(const PhaseField &phase, Vec y) {
    switch (phase.kind) {
    case PhaseKind::constant: return phase.mu_low;
    case PhaseKind::laminate: {
        const double t = y[phase.axis];
        return (t - std::floor(t)) < phase.theta ? phase.mu_high : phase.mu_low;
    }
    case PhaseKind::checkerboard: {
        const bool right = wrap_unit(y.x) >= 0.0;
        const bool up = wrap_unit(y.y) >= 0.0;
        return right == up ? phase.mu_high : phase.mu_low;
    }
    case PhaseKind::inclusion: {
        const Vec w{wrap_unit(y.x), wrap_unit(y.y)};
        return dot(w, w) < phase.radius * phase.radius ? phase.mu_high : phase.mu_low;
    }
    }
    return phase.mu_low;
}

EnergyEval eval_model(const EnergySpec &spec, double mu, const Mat &F) {
    if (spec.model == Model::neo_hookean_incompressible) {
        return {0.5 * mu * (norm_sq(F) - kDim), mu * F};
    }
    const auto f = power_of_norm(F, spec.p);
    const auto a = power_of_norm(adjugate(F), spec.q);
    const double offset = std::pow(kDim, 0.5 * spec.p) + std::pow(kDim, 0.5 * spec.q);
    return {mu * (f.value + a.value - offset), mu * (f.grad + adjugate_pullback(a.grad))};
}

EnergyEval eval_W_tilde(const EnergySpec &spec, double mu, const Mat &F) {
    EnergyEval best = eval_model(spec, mu, F);
    const auto fp = power_of_norm(F, spec.p);
    const double floor_value = fp.value / spec.c - spec.c;
    if (floor_value > best.value) best = {floor_value, (1.0 / spec.c) * fp.grad};
    if (0.0 > best.value) best = {0.0, Mat::zero()};
    return best;
}

EnergyEval eval_W_tilde(const EnergySpec &spec, Vec y, const Mat &F) {
    return eval_W_tilde(spec, mu_at(spec.phase, y), F);
}

EnergyEval eval_W_n(const EnergySpec &spec, double n, double mu, const Mat &F, double smoothing) {
    EnergyEval out = eval_W_tilde(spec, mu, F);
    const auto fp = power_of_norm(F, spec.p);
    const double cap = n * (fp.value + 1.0);
    if (cap < out.value) out = {cap, n * fp.grad};

    const double x = det(F) - 1.0;
    double pen, slope;
    if (smoothing > 0.0) {
        const double r = std::sqrt(x * x + smoothing * smoothing);
        pen = r - smoothing;
        slope = x / r;
    } else {
        pen = std::abs(x);
        slope = x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0);
    }
    out.value += n * pen;
    out.grad += (n * slope) * cofactor(F);
    return out;
}

EnergyEval eval_W_n(const EnergySpec &spec, double n, Vec y, const Mat &F, double smoothing) {
    return eval_W_n(spec, n, mu_at(spec.phase, y), F, smoothing);
}

Mat SigmaSampler::operator()(std::mt19937_64 &rng) const {
    std::uniform_int_distribution<int> count(1, max_factors);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
    Mat out = Mat::identity();
    const int factors = count(rng);
    for (int i = 0; i < factors; ++i) {
        const bool shear = unit(rng) < 0.5;
        const double th = angle(rng);
        const Vec a{std::cos(th), std::sin(th)};
        Mat factor;
        if (shear) {
            const double g = shear_range * (2.0 * unit(rng) - 1.0);
            factor = Mat::identity() + g * outer(a, perp(a));
        } else {
            const double lam = std::exp(log_stretch * (2.0 * unit(rng) - 1.0));
            const Mat R = rotation(th);
            factor = R * Mat::diag(lam, 1.0 / lam) * transpose(R);
        }
        out = factor * out;
    }
    return out;
}

Vec sample_cell_point(std::mt19937_64 &rng) {
    std::uniform_real_distribution<double> u(-0.5, 0.5);
    const double x = u(rng);
    return {x, u(rng)};
}

AssumptionReport check_assumptions(const EnergySpec &spec, int sample_count, std::uint64_t seed,
                                   double declared_c, std::size_t max_listed) {
    if (sample_count < 1) throw std::invalid_argument("sample_count must be >= 1");
    AssumptionReport rep;
    rep.sample_count = sample_count;
    rep.declared_c = declared_c > 0.0 ? declared_c : spec.c;
    const double c = rep.declared_c;

    std::mt19937_64 rng(seed);
    SigmaSampler sampler;
    auto record = [&](AssumptionViolation v) {
        ++rep.violation_count;
        if (rep.violations.size() < max_listed) rep.violations.push_back(std::move(v));
    };

    for (int s = 0; s < sample_count; ++s) {
        const Vec y = sample_cell_point(rng);
        const Mat F = sampler(rng);
        const Mat G = sampler(rng);
        const double mu = mu_at(spec.phase, y);
        // W on Σ is the model formula itself.
        const double wF = eval_model(spec, mu, F).value;
        const double wG = eval_model(spec, mu, G).value;
        const double wFG = eval_model(spec, mu, F * G).value;

        const double prod = (1.0 + wF) * (1.0 + wG);
        rep.min_c_submultiplicative = std::max(rep.min_c_submultiplicative, wFG / prod);
        if (wFG > c * prod) record({"submultiplicative", y, F, G, wFG, c * prod});

        const double a = std::pow(norm(F), spec.p);
        // upper: W <= c(a + 1); lower: a/c - c <= W  <=>  c >= (-W + sqrt(W^2 + 4a)) / 2
        const double c_up = wF / (a + 1.0);
        const double c_low = 0.5 * (-wF + std::sqrt(wF * wF + 4.0 * a));
        rep.min_c_growth = std::max({rep.min_c_growth, c_up, c_low});
        if (wF > c * (a + 1.0)) record({"growth_upper", y, F, G, wF, c * (a + 1.0)});
        if (a / c - c > wF) record({"growth_lower", y, F, G, a / c - c, wF});
    }
    rep.min_c = std::max(rep.min_c_submultiplicative, rep.min_c_growth);
    return rep;
}

} // namespace cellhom
