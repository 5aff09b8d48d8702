#include "cellhom/homog.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <stdexcept>

namespace cellhom {

void Schedule::validate() const {
    if (n_values.empty() || k_values.empty() || m_values.empty())
        throw std::invalid_argument("schedule lists must be non-empty");
    for (std::size_t i = 0; i < n_values.size(); ++i) {
        if (!(n_values[i] > 0.0)) throw std::invalid_argument("schedule n values must be positive");
        if (i > 0 && !(n_values[i] > n_values[i - 1]))
            throw std::invalid_argument("schedule n values must be strictly increasing");
    }
    for (std::size_t i = 0; i < k_values.size(); ++i) {
        if (k_values[i] < 1) throw std::invalid_argument("schedule k values must be positive");
        if (i > 0 && k_values[i] <= k_values[i - 1])
            throw std::invalid_argument("schedule k values must be strictly increasing");
    }
    for (std::size_t i = 0; i < m_values.size(); ++i) {
        if (m_values[i] < 1) throw std::invalid_argument("schedule m values must be positive");
        if (i > 0 && m_values[i] <= m_values[i - 1])
            throw std::invalid_argument("schedule m values must be strictly increasing");
    }
    if (starts < 1) throw std::invalid_argument("schedule starts must be at least 1");
    if (!(perturbation_scale >= 0.0)) throw std::invalid_argument("perturbation scale must be non-negative");
    if (!(smoothing >= 0.0)) throw std::invalid_argument("smoothing must be non-negative");
    if (threads < 1) throw std::invalid_argument("thread count must be at least 1");
    solver.validate();
    al.validate();
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (salt + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

double exact_penalty_value(const CellProblem &problem, const FluctuationField &phi) {
    const CellProblem exact = problem.with_smoothing(0.0);
    return objective_free(exact, restrict_to_free(problem.grid(), phi), {});
}

struct Level {
    std::vector<SolveResult> penalty;  // one per n
    SolveResult constrained;
    bool has_constrained = false;
};

SolveResult candidate_result(const CellProblem &problem, FluctuationField phi, double value,
                             const std::string &origin) {
    SolveResult r;
    r.value = value;
    r.constraint_residual = max_determinant_residual(problem, phi);
    r.phi = std::move(phi);
    r.diagnostic = origin;
    return r;
}

class Sweep {
public:
    Sweep(const EnergySpec &spec, const Mat &F, const Schedule &s) : spec_(spec), F_(F), s_(s) {}

    void run_level(int k, int m, bool constrained, std::uint64_t &salt) {
        const Grid grid(k, m, s_.boundary);
        CellProblem base(spec_, F_, s_.n_values.front(), grid, s_.smoothing);
        base.set_threads(s_.threads);
        Level level;
        const std::size_t nn = s_.n_values.size();

        for (std::size_t i = 0; i < nn; ++i) {
            const CellProblem problem = base.with_n(s_.n_values[i]);
            std::vector<std::pair<FluctuationField, std::string>> candidates;
            candidates.emplace_back(i == 0 ? FluctuationField(grid) : level.penalty[i - 1].phi,
                                    i == 0 ? "zero" : "warm start");
            for_coarser(k, m, [&](const Level &coarse, int kc, int mc) {
                candidates.emplace_back(transfer(coarse.penalty[i].phi, kc, mc, grid), "transferred");
            });
            std::vector<double> values;
            std::size_t warm = 0;
            for (std::size_t c = 0; c < candidates.size(); ++c) {
                values.push_back(exact_penalty_value(problem, candidates[c].first));
                if (values[c] < values[warm]) warm = c;
            }
            SolveResult best = multistart(problem, s_.solver, s_.starts, s_.perturbation_scale,
                                          mix_seed(s_.seed, salt++), &candidates[warm].first);
            for (std::size_t c = 0; c < candidates.size(); ++c)
                if (values[c] < best.value) {
                    SolveResult kept = candidate_result(problem, candidates[c].first, values[c],
                                                        "retained " + candidates[c].second + " field");
                    kept.grad_norm = best.grad_norm;
                    best = std::move(kept);
                }
            level.penalty.push_back(std::move(best));
        }

        if (constrained) {
            const CellProblem problem = base.with_mode(ConstraintMode::exact);
            std::vector<FluctuationField> starts{FluctuationField(grid)};
            for_coarser(k, m, [&](const Level &coarse, int kc, int mc) {
                if (coarse.has_constrained) starts.push_back(transfer(coarse.constrained.phi, kc, mc, grid));
            });
            SolveResult best;
            bool have = false;
            auto consider = [&](SolveResult r) {
                const bool better = !have || (r.converged && !best.converged) ||
                                    (r.converged == best.converged &&
                                     (r.converged ? r.value < best.value
                                                  : r.constraint_residual < best.constraint_residual));
                if (better) best = std::move(r), have = true;
            };
            for (const auto &phi0 : starts) {
                consider(solve_constrained(problem, s_.solver, s_.al, &phi0));
                const double res = max_determinant_residual(problem, phi0);
                if (res <= s_.al.residual_tolerance) {
                    SolveResult raw = candidate_result(problem, phi0, cell_average_W_tilde(problem, phi0),
                                                       "retained feasible start");
                    raw.converged = true;
                    consider(std::move(raw));
                }
            }
            level.constrained = std::move(best);
            level.has_constrained = true;

            // A feasible field is also a penalty competitor at every n.
            for (std::size_t i = 0; i < nn; ++i) {
                const CellProblem pn = base.with_n(s_.n_values[i]);
                const double v = exact_penalty_value(pn, level.constrained.phi);
                if (v < level.penalty[i].value)
                    level.penalty[i] = candidate_result(pn, level.constrained.phi, v, "retained constrained field");
            }
        }

        // Backward pass: the minimizer at n_{i+1} competes at n_i, where its
        // value can only be lower.
        for (std::size_t i = nn - 1; i-- > 0;) {
            const double tol = 1e-8 * (1.0 + std::abs(level.penalty[i].value));
            if (level.penalty[i + 1].value >= level.penalty[i].value - tol) continue;
            const CellProblem problem = base.with_n(s_.n_values[i]);
            const FluctuationField &phi = level.penalty[i + 1].phi;
            SolveResult r = minimize(problem, phi, s_.solver);
            const double raw = exact_penalty_value(problem, phi);
            if (raw < r.value) r = candidate_result(problem, phi, raw, "retained field from larger n");
            if (r.value < level.penalty[i].value) level.penalty[i] = std::move(r);
        }

        levels_[{k, m}] = std::move(level);
    }

    const Level &level(int k, int m) const { return levels_.at({k, m}); }

private:
    template <class Fn>
    void for_coarser(int k, int m, Fn &&fn) {
        for (int kc : s_.k_values)
            if (kc < k && k % kc == 0 && levels_.count({kc, m})) fn(levels_.at({kc, m}), kc, m);
        for (int mc : s_.m_values)
            if (mc < m && m % mc == 0 && levels_.count({k, mc})) fn(levels_.at({k, mc}), k, mc);
    }

    FluctuationField transfer(const FluctuationField &phi, int kc, int mc, const Grid &target) const {
        const Grid coarse(kc, mc, s_.boundary);
        if (kc != target.k()) return tile(coarse, phi, target.k() / kc);
        return prolong(coarse, phi, target);
    }

    const EnergySpec &spec_;
    Mat F_;
    const Schedule &s_;
    std::map<std::pair<int, int>, Level> levels_;
};

HomogEntry to_entry(double n, int k, int m, const SolveResult &r, bool constrained) {
    HomogEntry e;
    e.n = n;
    e.k = k;
    e.m = m;
    e.value = r.value;
    e.grad_norm = r.grad_norm;
    e.constraint_residual = r.constraint_residual;
    e.iterations = r.iterations;
    e.converged = r.converged;
    e.constrained = constrained;
    e.diagnostic = r.diagnostic;
    return e;
}

} // namespace

HomogReport estimate(const EnergySpec &spec, const Mat &F, const Schedule &schedule, bool allow_off_sigma) {
    spec.validate();
    schedule.validate();
    HomogReport rep;
    rep.F = F;
    rep.off_sigma = std::abs(det(F) - 1.0) > CellProblem::sigma_tolerance;
    if (rep.off_sigma && !allow_off_sigma)
        throw std::invalid_argument("det F ≠ 1 (det F = " + std::to_string(det(F)) +
                                    "); off-Σ input needs the divergence-demo flag");

    Sweep sweep(spec, F, schedule);
    std::uint64_t salt = 0;
    for (int k : schedule.k_values)
        for (int m : schedule.m_values) sweep.run_level(k, m, !rep.off_sigma, salt);

    const auto &ns = schedule.n_values;
    for (int k : schedule.k_values)
        for (int m : schedule.m_values) {
            const Level &lv = sweep.level(k, m);
            for (std::size_t i = 0; i < ns.size(); ++i) rep.entries.push_back(to_entry(ns[i], k, m, lv.penalty[i], false));
            if (lv.has_constrained) rep.entries.push_back(to_entry(kInf, k, m, lv.constrained, true));
        }
    for (const auto &e : rep.entries)
        if (!e.converged) ++rep.nonconverged;

    for (std::size_t i = 0; i < ns.size(); ++i)
        for (int k : schedule.k_values) {
            double best = kInf;
            for (int m : schedule.m_values) best = std::min(best, sweep.level(k, m).penalty[i].value);
            rep.estimate_W_n_k.push_back({ns[i], k, best});
        }
    rep.estimate_underbar_W = kInf;
    for (const auto &e : rep.estimate_W_n_k)
        if (e.n == ns.back()) rep.estimate_underbar_W = std::min(rep.estimate_underbar_W, e.value);
    rep.estimate_W_hom = kInf;
    if (!rep.off_sigma)
        for (int k : schedule.k_values)
            rep.estimate_W_hom = std::min(rep.estimate_W_hom, sweep.level(k, schedule.m_values.back()).constrained.value);
    rep.commutation_gap = rep.estimate_W_hom - rep.estimate_underbar_W;

    for (int k : schedule.k_values)
        for (int m : schedule.m_values) {
            const Level &lv = sweep.level(k, m);
            for (std::size_t i = 0; i + 1 < ns.size(); ++i)
                if (lv.penalty[i + 1].value < lv.penalty[i].value - 1e-8 * (1.0 + std::abs(lv.penalty[i].value)))
                    rep.n_monotone = false;
            for (int kc : schedule.k_values)
                if (kc < k && k % kc == 0) {
                    const Level &c = sweep.level(kc, m);
                    for (std::size_t i = 0; i < ns.size(); ++i)
                        if (lv.penalty[i].value > c.penalty[i].value + 1e-8) rep.k_subadditive = false;
                    if (lv.has_constrained && lv.constrained.converged && c.constrained.converged &&
                        lv.constrained.value > c.constrained.value + 1e-8)
                        rep.k_subadditive = false;
                }
            for (int mc : schedule.m_values)
                if (mc < m && m % mc == 0) {
                    const Level &c = sweep.level(k, mc);
                    for (std::size_t i = 0; i < ns.size(); ++i)
                        if (lv.penalty[i].value > c.penalty[i].value + 1e-10 * (1.0 + std::abs(c.penalty[i].value)))
                            rep.m_monotone = false;
                }
        }

    rep.growth_lower_bound = norm(F) / spec.c - spec.c;
    if (rep.off_sigma) {
        rep.divergence_ok = rep.estimate_underbar_W >= 0.5 * ns.back() * std::abs(det(F) - 1.0);
        rep.growth_ok = rep.estimate_underbar_W >= rep.growth_lower_bound;
    } else {
        rep.bound_ordering = rep.estimate_underbar_W <= rep.estimate_W_hom + 0.02 * (1.0 + rep.estimate_W_hom);
        rep.growth_ok = rep.estimate_underbar_W >= rep.growth_lower_bound && rep.estimate_W_hom >= rep.growth_lower_bound;
    }
    return rep;
}

void write_report_csv(std::ostream &os, const HomogReport &report) {
    os << "n,k,m,value,grad_norm,constraint_residual,iterations,converged\n";
    char buf[512];
    for (const auto &e : report.entries) {
        char nbuf[64];
        if (std::isinf(e.n)) std::snprintf(nbuf, sizeof nbuf, "inf");
        else std::snprintf(nbuf, sizeof nbuf, "%.17g", e.n);
        std::snprintf(buf, sizeof buf, "%s,%d,%d,%.17g,%.17g,%.17g,%d,%d\n", nbuf, e.k, e.m, e.value, e.grad_norm,
                      e.constraint_residual, e.iterations, e.converged ? 1 : 0);
        os << buf;
    }
}

CommutationReport commutation_check(const EnergySpec &spec, const Mat &F, int k, int m,
                                    const std::vector<double> &n_values, const Schedule &schedule,
                                    double tolerance) {
    Schedule s = schedule;
    s.n_values = n_values;
    s.k_values = {k};
    s.m_values = {m};
    const HomogReport rep = estimate(spec, F, s);
    CommutationReport out;
    out.n_values = n_values;
    out.tolerance = tolerance;
    for (const auto &e : rep.entries) {
        if (e.constrained) {
            out.constrained_value = e.value;
            out.constraint_residual = e.constraint_residual;
        } else {
            out.penalty_values.push_back(e.value);
        }
    }
    for (double v : out.penalty_values) out.gaps.push_back(out.constrained_value - v);
    out.gap_ok = std::abs(out.gaps.back()) <= tolerance * std::abs(out.constrained_value);
    out.gap_monotone = true;
    for (std::size_t i = 0; i + 1 < out.gaps.size(); ++i)
        if (out.gaps[i + 1] > out.gaps[i] + 1e-6) out.gap_monotone = false;
    return out;
}

// ---------------------------------------------------------------------------
// Probes

CellEstimator::CellEstimator(EnergySpec spec, int k, int m, const Schedule &schedule)
    : spec_(std::move(spec)), grid_(k, m, schedule.boundary), schedule_(schedule) {
    spec_.validate();
}

double CellEstimator::operator()(const Mat &F) {
    if (auto it = cache_.find(F.a); it != cache_.end()) return it->second;
    CellProblem problem(spec_, F, 1.0, grid_, schedule_.smoothing, ConstraintMode::exact);
    problem.set_threads(schedule_.threads);
    const FluctuationField zero(grid_);
    double value = cell_average_W_tilde(problem, zero);
    double residual = max_determinant_residual(problem, zero);
    const SolveResult r = solve_constrained(problem, schedule_.solver, schedule_.al, &zero);
    if (r.converged && r.value < value) value = r.value, residual = r.constraint_residual;
    worst_residual_ = std::max(worst_residual_, residual);
    cache_.emplace(F.a, value);
    return value;
}

RankOneReport rank_one_probe(const EnergySpec &spec, int samples, const Schedule &schedule, std::uint64_t seed,
                             double rel_tolerance) {
    if (samples < 1) throw std::invalid_argument("rank-one probe needs at least one sample");
    RankOneReport rep;
    rep.k = schedule.k_values.front();
    rep.m = schedule.m_values.front();
    CellEstimator est(spec, rep.k, rep.m, schedule);
    std::mt19937_64 rng(seed);
    const SigmaSampler sampler;
    std::uniform_real_distribution<double> angle(0.0, 2.0 * M_PI), len(0.25, 1.0);
    double vmax = 0.0;
    for (int s = 0; s < samples; ++s) {
        RankOneSample smp;
        smp.A = sampler(rng);
        const double th = angle(rng);
        const Vec b{std::cos(th), std::sin(th)};
        Vec a = perp(cofactor(smp.A) * b);
        a = (len(rng) / norm(a)) * a;
        smp.B = smp.A + outer(a, b);
        smp.value_A = est(smp.A);
        smp.value_B = est(smp.B);
        smp.value_mid = est(0.5 * (smp.A + smp.B));
        smp.excess = smp.value_mid - 0.5 * (smp.value_A + smp.value_B);
        vmax = std::max({vmax, smp.value_A, smp.value_B, smp.value_mid});
        rep.samples.push_back(smp);
    }
    rep.tolerance = rel_tolerance * (1.0 + vmax);
    for (auto &smp : rep.samples) {
        smp.violation = smp.excess > rep.tolerance;
        rep.violations += smp.violation;
    }
    return rep;
}

GrowthReport growth_probe(const EnergySpec &spec, int samples, const Schedule &schedule, std::uint64_t seed) {
    if (samples < 1) throw std::invalid_argument("growth probe needs at least one sample");
    GrowthReport rep;
    rep.k = schedule.k_values.front();
    rep.m = schedule.m_values.front();
    CellEstimator est(spec, rep.k, rep.m, schedule);
    std::mt19937_64 rng(seed);
    const SigmaSampler sampler;
    while (int(rep.samples.size()) < samples) {
        const Mat F = sampler(rng);
        if (norm(F) > 10.0) {
            ++rep.skipped;
            continue;
        }
        GrowthSample g;
        g.F = F;
        g.value = est(F);
        g.bound = norm(F) / spec.c - spec.c;
        g.margin = g.value - g.bound;
        if (g.margin < 0.0) ++rep.violations;
        rep.samples.push_back(g);
    }
    return rep;
}

namespace {

/// Quarter-turn rotation Q_j with exact integer entries.
Mat quarter_turn(int j) {
    switch (((j % 4) + 4) % 4) {
    case 0: return {1, 0, 0, 1};
    case 1: return {0, -1, 1, 0};
    case 2: return {-1, 0, 0, -1};
    default: return {0, 1, -1, 0};
    }
}

} // namespace

std::vector<LoopTwist::Piece> LoopTwist::pieces() const {
    std::vector<Piece> out;
    for (std::size_t s = 0; s + 1 < knots.size(); ++s) {
        const double ra = knots[s], rb = knots[s + 1];
        const double beta = (shift[s + 1] - shift[s]) / (rb - ra);
        const double alpha = shift[s] - beta * ra;
        auto d = [&](double r) { return alpha + beta * r; };
        auto ratio = [&](double r) { return d(r) / (2.0 * r); };
        // d/(2r) is monotone on the segment, so the integer crossings lie between its end values.
        const double lo_r = ra > 0.0 ? ratio(ra) : beta / 2.0, hi_r = ratio(rb);
        std::vector<double> cuts{ra, rb};
        for (long q = long(std::floor(std::min(lo_r, hi_r))); q <= long(std::floor(std::max(lo_r, hi_r))) + 1; ++q) {
            if (2.0 * q == beta) continue;
            const double r = alpha / (2.0 * q - beta);
            if (r > ra && r < rb) cuts.push_back(r);
        }
        std::sort(cuts.begin(), cuts.end());
        for (std::size_t c = 0; c + 1 < cuts.size(); ++c) {
            const double r0 = cuts[c], r1 = cuts[c + 1], rm = 0.5 * (r0 + r1), len = r1 - r0;
            if (len <= 0.0) continue;
            const long q = long(std::floor(ratio(rm)));
            const double w[2] = {len * (2.0 * rm * (q + 1) - d(rm)), len * (d(rm) - 2.0 * rm * q)};
            for (int j = 0; j < 4; ++j)
                for (int t = 0; t < 2; ++t) {
                    if (w[t] <= 1e-15) continue;
                    const long p = q + t;
                    const Mat shear{1.0, 0.0, beta - 2.0 * double(p), 1.0};
                    out.push_back({quarter_turn(int(j + p % 4)) * shear * transpose(quarter_turn(j)), w[t]});
                }
        }
    }
    return out;
}

Vec LoopTwist::operator()(Vec x) const {
    const Vec c{0.5, 0.5};
    const Vec rel = x - c;
    const double r = std::max(std::abs(rel.x), std::abs(rel.y));
    if (r == 0.0) return x;
    auto it = std::upper_bound(knots.begin(), knots.end(), r);
    const std::size_t s = std::min<std::size_t>(std::size_t(it - knots.begin()), knots.size() - 1) - 1;
    const double d = shift[s] + (shift[s + 1] - shift[s]) * (r - knots[s]) / (knots[s + 1] - knots[s]);
    int j = 0;
    Vec local{};
    for (; j < 4; ++j) {
        local = transpose(quarter_turn(j)) * rel;
        if (local.x == r && local.y >= -r && local.y < r) break;
    }
    if (j == 4) j = 0, local = rel;  // unreachable for finite input
    const double t = local.y + r + d;
    const double p = std::floor(t / (2.0 * r));
    const double sigma = t - 2.0 * r * p;
    return c + quarter_turn(j + int(long(p) % 4)) * Vec{r, -r + sigma};
}

LoopTwist LoopTwist::random(std::mt19937_64 &rng, double amplitude, int segments) {
    if (segments < 1) throw std::invalid_argument("loop twist needs at least one segment");
    std::uniform_real_distribution<double> U(-amplitude, amplitude);
    LoopTwist lt;
    for (int i = 0; i <= segments; ++i) {
        lt.knots.push_back(0.5 * i / segments);
        lt.shift.push_back(i == 0 || i == segments ? 0.0 : U(rng));
    }
    return lt;
}

QuasiconvexityReport quasiconvexity_probe(const EnergySpec &spec, const Mat &F, int test_fields,
                                          const Schedule &schedule, std::uint64_t seed, double rel_tolerance,
                                          double amplitude) {
    if (test_fields < 1) throw std::invalid_argument("quasiconvexity probe needs at least one test field");
    if (std::abs(det(F) - 1.0) > CellProblem::sigma_tolerance)
        throw std::invalid_argument("quasiconvexity probe needs det F = 1");
    QuasiconvexityReport rep;
    rep.k = schedule.k_values.front();
    rep.m = schedule.m_values.front();
    CellEstimator est(spec, rep.k, rep.m, schedule);
    rep.value_F = est(F);
    std::mt19937_64 rng(seed);
    double vmax = rep.value_F;
    for (int f = 0; f < test_fields; ++f) {
        const LoopTwist lt = LoopTwist::random(rng, amplitude);
        QuasiconvexitySample smp;
        smp.lhs = rep.value_F;
        for (const auto &piece : lt.pieces()) {
            const Mat G = F * piece.grad;
            if (std::abs(det(G) - 1.0) > 1e-9) {
                ++rep.skipped;
                continue;
            }
            const double v = est(G);
            vmax = std::max(vmax, v);
            smp.rhs += piece.weight * v;
            ++smp.pieces;
        }
        rep.samples.push_back(smp);
    }
    rep.tolerance = rel_tolerance * (1.0 + vmax);
    for (auto &smp : rep.samples) {
        smp.violation = smp.lhs > smp.rhs + rep.tolerance;
        rep.violations += smp.violation;
    }
    return rep;
}

} // namespace cellhom
