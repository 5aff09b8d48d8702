#include "cellhom/solve.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <stdexcept>

#include "cellhom/parallel.hpp"

namespace cellhom {

void SolverConfig::validate() const {
    if (max_iterations < 0) throw std::invalid_argument("solver max_iterations must be non-negative");
    if (!(gradient_tolerance > 0.0)) throw std::invalid_argument("solver gradient_tolerance must be positive");
    if (!(c1 > 0.0 && c1 < c2 && c2 < 1.0))
        throw std::invalid_argument("line-search constants need 0 < c1 < c2 < 1");
    if (memory < 1) throw std::invalid_argument("solver memory must be at least 1");
    if (max_linesearch < 1) throw std::invalid_argument("solver max_linesearch must be at least 1");
}

void AlConfig::validate() const {
    if (!(initial_penalty > 0.0)) throw std::invalid_argument("initial penalty must be positive");
    if (!(penalty_growth >= 1.0)) throw std::invalid_argument("penalty growth must be at least 1");
    if (!(multiplier_cap > 0.0)) throw std::invalid_argument("multiplier cap must be positive");
    if (outer_iterations < 1) throw std::invalid_argument("outer iterations must be at least 1");
    if (!(residual_tolerance > 0.0)) throw std::invalid_argument("residual tolerance must be positive");
}

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double inf_norm(std::span<const double> a) {
    double r = 0.0;
    for (double v : a) r = std::max(r, std::abs(v));
    return r;
}

struct Trial {
    double alpha = 0.0;
    double f = 0.0;
    double dphi = 0.0;
    std::vector<double> x, g;
};

class LineSearch {
public:
    LineSearch(const FlatObjective &f, const SolverConfig &cfg, std::span<const double> x0, double f0,
               std::span<const double> d, double dphi0)
        : f_(f), cfg_(cfg), x0_(x0), f0_(f0), d_(d), dphi0_(dphi0) {}

    /// Strong Wolfe search; falls back to an Armijo point found during zoom.
    bool run(double alpha, Trial &out) {
        Trial prev{0.0, f0_, dphi0_, {}, {}};
        for (int i = 0; i < cfg_.max_linesearch; ++i) {
            Trial cur = eval(alpha);
            if (!std::isfinite(cur.f)) {
                alpha = 0.5 * (prev.alpha + alpha);
                continue;
            }
            if (!armijo(cur) || (i > 0 && cur.f >= prev.f)) return zoom(prev, cur, out);
            if (curvature(cur)) {
                out = std::move(cur);
                return true;
            }
            if (cur.dphi >= 0.0) return zoom(cur, prev, out);
            prev = std::move(cur);
            alpha *= 4.0;
        }
        return fallback(out);
    }

private:
    Trial eval(double alpha) {
        ++evaluations_;
        Trial t;
        t.alpha = alpha;
        t.x.resize(x0_.size());
        t.g.resize(x0_.size());
        for (std::size_t i = 0; i < x0_.size(); ++i) t.x[i] = x0_[i] + alpha * d_[i];
        t.f = f_(t.x, t.g);
        t.dphi = dot(t.g, d_);
        if (std::isfinite(t.f) && t.f < f0_ && armijo(t) && (!best_ || t.f < best_->f)) best_ = t;
        return t;
    }

    bool armijo(const Trial &t) const {
        if (t.f <= f0_ + cfg_.c1 * t.alpha * dphi0_) return true;
        // Approximate Wolfe test once differences in f reach rounding level.
        const double eps = 1e-12 * std::abs(f0_);
        return t.f <= f0_ + eps && t.dphi <= (2.0 * cfg_.c1 - 1.0) * dphi0_;
    }

    bool curvature(const Trial &t) const { return std::abs(t.dphi) <= -cfg_.c2 * dphi0_; }

    static double cubic(const Trial &a, const Trial &b) {
        const double d1 = a.dphi + b.dphi - 3.0 * (a.f - b.f) / (a.alpha - b.alpha);
        const double disc = d1 * d1 - a.dphi * b.dphi;
        const double mid = 0.5 * (a.alpha + b.alpha);
        if (!(disc >= 0.0)) return mid;
        const double d2 = std::copysign(std::sqrt(disc), b.alpha - a.alpha);
        const double t = b.alpha - (b.alpha - a.alpha) * (b.dphi + d2 - d1) / (b.dphi - a.dphi + 2.0 * d2);
        const double lo = std::min(a.alpha, b.alpha), hi = std::max(a.alpha, b.alpha);
        const double w = hi - lo;
        if (!std::isfinite(t) || t < lo + 0.1 * w || t > hi - 0.1 * w) return mid;
        return t;
    }

    bool zoom(Trial lo, Trial hi, Trial &out) {
        while (evaluations_ < 2 * cfg_.max_linesearch) {
            if (std::abs(hi.alpha - lo.alpha) <= 1e-16 * std::max(1.0, std::abs(lo.alpha))) break;
            Trial cur = eval(cubic(lo, hi));
            if (!std::isfinite(cur.f) || !armijo(cur) || cur.f >= lo.f) {
                hi = std::move(cur);
                if (!std::isfinite(hi.f)) hi.f = std::numeric_limits<double>::max();
            } else {
                if (curvature(cur)) {
                    out = std::move(cur);
                    return true;
                }
                if (cur.dphi * (hi.alpha - lo.alpha) >= 0.0) hi = lo;
                lo = std::move(cur);
            }
        }
        return fallback(out);
    }

    bool fallback(Trial &out) {
        if (!best_) return false;
        out = *best_;
        return true;
    }

    const FlatObjective &f_;
    const SolverConfig &cfg_;
    std::span<const double> x0_;
    double f0_;
    std::span<const double> d_;
    double dphi0_;
    int evaluations_ = 0;
    std::optional<Trial> best_;
};

} // namespace

LbfgsOutcome lbfgs(const FlatObjective &f, std::vector<double> x0, const SolverConfig &config,
                   double step_scale) {
    config.validate();
    LbfgsOutcome out;
    out.x = std::move(x0);
    const std::size_t n = out.x.size();
    std::vector<double> g(n);
    double fx = f(out.x, g);
    if (!std::isfinite(fx)) throw std::runtime_error("objective is not finite at the starting point");
    out.value = fx;
    out.grad_norm = inf_norm(g);
    auto done = [&] { return out.grad_norm <= config.gradient_tolerance * (1.0 + std::abs(out.value)); };
    if (n == 0 || done()) {
        out.converged = true;
        return out;
    }

    std::deque<std::vector<double>> S, Y;
    std::deque<double> rho;
    std::vector<double> d(n), alpha_buf;
    int stalled = 0;

    for (int it = 1; it <= config.max_iterations; ++it) {
        // Two-loop recursion.
        for (std::size_t i = 0; i < n; ++i) d[i] = -g[i];
        alpha_buf.assign(S.size(), 0.0);
        for (std::size_t j = S.size(); j-- > 0;) {
            alpha_buf[j] = rho[j] * dot(S[j], d);
            for (std::size_t i = 0; i < n; ++i) d[i] -= alpha_buf[j] * Y[j][i];
        }
        if (!S.empty()) {
            const double gamma = dot(S.back(), Y.back()) / dot(Y.back(), Y.back());
            for (double &v : d) v *= gamma;
        }
        for (std::size_t j = 0; j < S.size(); ++j) {
            const double beta = rho[j] * dot(Y[j], d);
            for (std::size_t i = 0; i < n; ++i) d[i] += (alpha_buf[j] - beta) * S[j][i];
        }
        double dphi0 = dot(g, d);
        if (!(dphi0 < 0.0)) {
            S.clear(), Y.clear(), rho.clear();
            for (std::size_t i = 0; i < n; ++i) d[i] = -g[i];
            dphi0 = dot(g, d);
        }
        const double alpha0 = S.empty() ? std::min(1.0, step_scale / inf_norm(d)) : 1.0;

        Trial step;
        LineSearch ls(f, config, out.x, out.value, d, dphi0);
        if (!ls.run(alpha0, step)) {
            if (!S.empty()) {
                S.clear(), Y.clear(), rho.clear();
                out.iterations = it;
                continue;
            }
            out.line_search_failure = true;
            out.diagnostic = "line search failed along steepest descent";
            out.iterations = it;
            return out;
        }

        std::vector<double> s(n), y(n);
        for (std::size_t i = 0; i < n; ++i) {
            s[i] = step.x[i] - out.x[i];
            y[i] = step.g[i] - g[i];
        }
        const double sy = dot(s, y);
        if (sy > 1e-12 * std::sqrt(dot(s, s) * dot(y, y)) && sy > 0.0) {
            if (int(S.size()) == config.memory) S.pop_front(), Y.pop_front(), rho.pop_front();
            S.push_back(std::move(s));
            Y.push_back(std::move(y));
            rho.push_back(1.0 / sy);
        }
        const double decrease = out.value - step.f;
        out.x = std::move(step.x);
        g = std::move(step.g);
        out.value = step.f;
        out.grad_norm = inf_norm(g);
        out.iterations = it;
        if (done()) {
            out.converged = true;
            return out;
        }
        stalled = decrease <= 1e-15 * (1.0 + std::abs(out.value)) ? stalled + 1 : 0;
        if (stalled >= 20) {
            out.diagnostic = "stagnation: no measurable decrease in 20 iterations";
            return out;
        }
    }
    out.diagnostic = "iteration limit reached";
    return out;
}

namespace {

SolveResult finish_penalty(const CellProblem &problem, const LbfgsOutcome &o) {
    SolveResult r;
    r.phi = expand_from_free(problem.grid(), o.x);
    const CellProblem exact = problem.with_smoothing(0.0);
    r.value = objective_free(exact, o.x, {});
    r.iterations = o.iterations;
    r.converged = o.converged;
    r.grad_norm = o.grad_norm;
    r.constraint_residual = max_determinant_residual(problem, r.phi);
    r.line_search_failure = o.line_search_failure;
    r.diagnostic = o.diagnostic;
    return r;
}

} // namespace

namespace {

LbfgsOutcome descend(const CellProblem &problem, std::vector<double> x0, const SolverConfig &config) {
    const double step = 0.1 * problem.grid().h();
    auto run = [&](const CellProblem &p, std::vector<double> x, const SolverConfig &cfg) {
        FlatObjective f = [&](std::span<const double> xs, std::span<double> g) { return objective_free(p, xs, g); };
        return lbfgs(f, std::move(x), cfg, step);
    };
    if (!config.continuation) return run(problem, std::move(x0), config);

    const double f0 = objective_free(problem, x0, {});
    std::vector<double> x = x0;
    int warmup_iterations = 0;
    SolverConfig stage = config;
    stage.max_iterations = std::max(1, config.max_iterations / 3);
    for (double delta : {1e-2, 1e-4, 1e-6}) {
        if (delta <= problem.smoothing()) break;
        LbfgsOutcome o = run(problem.with_smoothing(delta), x, stage);
        warmup_iterations += o.iterations;
        x = std::move(o.x);
    }
    LbfgsOutcome out = run(problem, x, config);
    out.iterations += warmup_iterations;
    if (out.value > f0) {
        // The warm-up path ended in a worse basin; descend from the start instead.
        LbfgsOutcome direct = run(problem, std::move(x0), config);
        direct.iterations += out.iterations;
        if (direct.value <= out.value) out = std::move(direct);
    }
    return out;
}

} // namespace

SolveResult minimize(const CellProblem &problem, const FluctuationField &phi0, const SolverConfig &config) {
    config.validate();
    require_admissible(problem.grid(), phi0);
    return finish_penalty(problem, descend(problem, restrict_to_free(problem.grid(), phi0), config));
}

SolveResult multistart(const CellProblem &problem, const SolverConfig &config, int starts,
                       double perturbation_scale, std::uint64_t seed, const FluctuationField *base) {
    if (starts < 1) throw std::invalid_argument("multistart needs at least one start");
    const Grid &grid = problem.grid();
    const FluctuationField zero(grid);
    const FluctuationField &origin = base ? *base : zero;
    require_admissible(grid, origin);

    std::vector<std::vector<double>> x0(starts, restrict_to_free(grid, origin));
    for (int s = 1; s < starts; ++s) {
        std::seed_seq seq{std::uint32_t(seed), std::uint32_t(seed >> 32), std::uint32_t(s)};
        std::mt19937_64 rng(seq);
        std::uniform_real_distribution<double> U(-1.0, 1.0);
        const double amp = perturbation_scale * grid.h();
        for (double &v : x0[s]) v += amp * U(rng);
    }

    // Starts run in parallel; each solve is sequential so results do not
    // depend on the worker count.
    CellProblem inner = problem;
    inner.set_threads(1);
    std::vector<SolveResult> results(starts);
    parallel_for(std::size_t(starts), problem.threads(),
                 [&](std::size_t s) { results[s] = finish_penalty(inner, descend(inner, x0[s], config)); });
    std::size_t best = 0;
    for (std::size_t s = 1; s < results.size(); ++s)
        if (results[s].value < results[best].value) best = s;
    return std::move(results[best]);
}

SolveResult solve_constrained(const CellProblem &problem, const SolverConfig &config, const AlConfig &al,
                              const FluctuationField *phi0) {
    config.validate();
    al.validate();
    if (problem.mode() != ConstraintMode::exact)
        throw std::invalid_argument("constrained solve needs constraint mode 'exact'");
    if (problem.off_sigma()) throw std::invalid_argument("constrained solve needs det F = 1");
    const Grid &grid = problem.grid();
    FluctuationField start(grid);
    if (phi0) {
        require_admissible(grid, *phi0);
        start = *phi0;
    }
    const EnergySpec &spec = problem.spec();
    std::vector<double> lambda(grid.element_count(), 0.0);
    double rho = al.initial_penalty;
    std::vector<double> x = restrict_to_free(grid, start);

    SolveResult r;
    LbfgsOutcome inner;
    for (int outer = 0; outer < al.outer_iterations; ++outer) {
        FlatObjective f = [&](std::span<const double> xs, std::span<double> g) {
            const FluctuationField phi = expand_from_free(grid, xs);
            return assemble_cell_average(problem, phi, g, [&](std::size_t e, const Mat &A) {
                EnergyEval w = eval_W_tilde(spec, problem.mu(e), A);
                const double c = det(A) - 1.0;
                w.value += lambda[e] * c + 0.5 * rho * c * c;
                w.grad += (lambda[e] + rho * c) * cofactor(A);
                return w;
            });
        };
        inner = lbfgs(f, x, config, 0.1 * grid.h());
        x = inner.x;
        r.iterations += inner.iterations;
        const FluctuationField phi = expand_from_free(grid, x);
        const auto res = determinant_residuals(problem, phi);
        double worst = 0.0;
        for (std::size_t e = 0; e < res.size(); ++e) {
            lambda[e] = std::clamp(lambda[e] + rho * res[e], -al.multiplier_cap, al.multiplier_cap);
            worst = std::max(worst, std::abs(res[e]));
        }
        if (worst <= al.residual_tolerance && inner.converged) break;
        rho *= al.penalty_growth;
    }

    r.phi = expand_from_free(grid, x);
    r.constraint_residual = max_determinant_residual(problem, r.phi);
    if (r.constraint_residual > al.residual_tolerance) {
        // Close the remaining gap with a feasibility projection.
        ProjectionResult proj = project_incompressible(problem, r.phi, 1e-10);
        if (proj.residual < r.constraint_residual) {
            r.phi = std::move(proj.phi);
            r.constraint_residual = proj.residual;
        }
    }
    r.value = cell_average_W_tilde(problem, r.phi);
    r.grad_norm = inner.grad_norm;
    r.line_search_failure = inner.line_search_failure;
    r.converged = r.constraint_residual <= al.residual_tolerance;
    r.diagnostic = r.converged ? inner.diagnostic : "constraint residual above tolerance after outer iterations";
    return r;
}

ProjectionResult project_incompressible(const CellProblem &problem, const FluctuationField &phi,
                                        double tolerance, int max_iterations) {
    const Grid &grid = problem.grid();
    require_admissible(grid, phi);
    const std::size_t ne = grid.element_count();
    const auto &map = grid.node_to_free();
    std::vector<double> x = restrict_to_free(grid, phi);
    const std::size_t nf = x.size();

    std::vector<Mat> cof(ne);
    std::vector<double> r(ne);
    auto linearize = [&](const std::vector<double> &xs) {
        const FluctuationField f = expand_from_free(grid, xs);
        double worst = 0.0, ss = 0.0;
        for (std::size_t e = 0; e < ne; ++e) {
            const Mat A = problem.F() + element_gradient(grid, f, e);
            cof[e] = cofactor(A);
            r[e] = det(A) - 1.0;
            worst = std::max(worst, std::abs(r[e]));
            ss += r[e] * r[e];
        }
        return std::pair{worst, ss};
    };
    auto apply_J = [&](const std::vector<double> &v, std::vector<double> &out) {
        for (std::size_t e = 0; e < ne; ++e) {
            const auto nodes = grid.element_nodes(e);
            const auto &gr = grid.shape_gradients(e);
            Mat G;
            for (int l = 0; l < 3; ++l) {
                const long fi = map[nodes[l]];
                if (fi >= 0) G += outer(Vec{v[2 * fi], v[2 * fi + 1]}, gr[l]);
            }
            out[e] = ddot(cof[e], G);
        }
    };
    auto apply_Jt = [&](const std::vector<double> &w, std::vector<double> &out) {
        std::fill(out.begin(), out.end(), 0.0);
        for (std::size_t e = 0; e < ne; ++e) {
            const auto nodes = grid.element_nodes(e);
            const auto &gr = grid.shape_gradients(e);
            for (int l = 0; l < 3; ++l) {
                const long fi = map[nodes[l]];
                if (fi < 0) continue;
                const Vec c = w[e] * (cof[e] * gr[l]);
                out[2 * fi] += c.x;
                out[2 * fi + 1] += c.y;
            }
        }
    };

    ProjectionResult out;
    auto [worst, ss] = linearize(x);
    double mu = 1e-6 * double(grid.m()) * grid.m();
    std::vector<double> b(nf), dx(nf), res(nf), p(nf), Ap(nf), tmp(ne);
    while (worst > tolerance && out.iterations < max_iterations) {
        ++out.iterations;
        apply_Jt(r, b);
        for (double &v : b) v = -v;
        // CG on (J^T J + mu I) dx = b.
        std::fill(dx.begin(), dx.end(), 0.0);
        res = b;
        p = res;
        double rr = dot(res, res);
        const double stop = 1e-24 * std::max(rr, 1e-300);
        for (std::size_t it = 0; it < std::max<std::size_t>(nf, 50) && rr > stop; ++it) {
            apply_J(p, tmp);
            apply_Jt(tmp, Ap);
            for (std::size_t i = 0; i < nf; ++i) Ap[i] += mu * p[i];
            const double a = rr / dot(p, Ap);
            for (std::size_t i = 0; i < nf; ++i) dx[i] += a * p[i], res[i] -= a * Ap[i];
            const double rr2 = dot(res, res);
            for (std::size_t i = 0; i < nf; ++i) p[i] = res[i] + (rr2 / rr) * p[i];
            rr = rr2;
        }
        std::vector<double> trial(x);
        for (std::size_t i = 0; i < nf; ++i) trial[i] += dx[i];
        const std::vector<Mat> cof_keep = cof;
        const std::vector<double> r_keep = r;
        auto [w2, ss2] = linearize(trial);
        if (ss2 < ss) {
            x = std::move(trial);
            worst = w2, ss = ss2;
            mu = std::max(mu / 3.0, 1e-14);
        } else {
            cof = cof_keep;
            r = r_keep;
            mu *= 4.0;
            if (mu > 1e12) break;
        }
    }
    out.phi = expand_from_free(grid, x);
    out.residual = worst;
    out.converged = worst <= tolerance;
    return out;
}

} // namespace cellhom
