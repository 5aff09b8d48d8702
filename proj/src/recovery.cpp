#include "cellhom/recovery.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

#include "cellhom/parallel.hpp"

namespace cellhom {

namespace {

double cross(Vec a, Vec b) { return a.x * b.y - a.y * b.x; }

} // namespace

double MacroPiece::area() const {
    double a = 0.0;
    for (std::size_t i = 0; i < polygon.size(); ++i) a += cross(polygon[i], polygon[(i + 1) % polygon.size()]);
    return 0.5 * a;
}

bool MacroPiece::contains(Vec x, double tol) const {
    for (std::size_t i = 0; i < polygon.size(); ++i) {
        const Vec p = polygon[i], q = polygon[(i + 1) % polygon.size()];
        if (cross(q - p, x - p) < -tol * norm(q - p)) return false;
    }
    return true;
}

MacroDeformation MacroDeformation::affine(const Mat &F) {
    MacroDeformation u;
    u.pieces.push_back({{{0, 0}, {1, 0}, {1, 1}, {0, 1}}, F, {}});
    return u;
}

MacroDeformation MacroDeformation::rank_one_laminate(const Mat &F, int axis, double offset, double amplitude) {
    if (axis != 0 && axis != 1) throw std::invalid_argument("laminate axis must be 0 or 1");
    if (!(offset > 0.0 && offset < 1.0)) throw std::invalid_argument("laminate offset must lie in (0, 1)");
    const Vec nu = axis == 0 ? Vec{1, 0} : Vec{0, 1};
    Vec a = perp(cofactor(F) * nu);
    a = (amplitude / norm(a)) * a;
    const Mat F2 = F + outer(a, nu);
    const Vec b2 = -offset * a;
    MacroDeformation u;
    if (axis == 0) {
        u.pieces.push_back({{{0, 0}, {offset, 0}, {offset, 1}, {0, 1}}, F, {}});
        u.pieces.push_back({{{offset, 0}, {1, 0}, {1, 1}, {offset, 1}}, F2, b2});
    } else {
        u.pieces.push_back({{{0, 0}, {1, 0}, {1, offset}, {0, offset}}, F, {}});
        u.pieces.push_back({{{0, offset}, {1, offset}, {1, 1}, {0, 1}}, F2, b2});
    }
    return u;
}

void MacroDeformation::validate() const {
    if (pieces.empty()) throw std::invalid_argument("macro deformation has no pieces");
    if (pieces.size() > max_pieces) throw std::invalid_argument("macro deformation has more than 8 pieces");
    double total = 0.0;
    for (std::size_t i = 0; i < pieces.size(); ++i) {
        const auto &pc = pieces[i];
        if (pc.polygon.size() < 3) throw std::invalid_argument("piece " + std::to_string(i) + " is not a polygon");
        for (std::size_t v = 0; v < pc.polygon.size(); ++v) {
            const Vec p = pc.polygon[v], q = pc.polygon[(v + 1) % pc.polygon.size()],
                      r = pc.polygon[(v + 2) % pc.polygon.size()];
            if (p.x < -1e-12 || p.x > 1 + 1e-12 || p.y < -1e-12 || p.y > 1 + 1e-12)
                throw std::invalid_argument("piece " + std::to_string(i) + " leaves the unit square");
            if (cross(q - p, r - q) < -1e-12)
                throw std::invalid_argument("piece " + std::to_string(i) + " is not convex and counter-clockwise");
        }
        if (std::abs(det(pc.F) - 1.0) > 1e-12)
            throw std::invalid_argument("det F ≠ 1 on piece " + std::to_string(i));
        total += pc.area();
    }
    if (std::abs(total - 1.0) > 1e-12) throw std::invalid_argument("pieces do not tile the unit square");

    // Shared edges: rank-one compatibility and continuity.
    for (std::size_t i = 0; i < pieces.size(); ++i)
        for (std::size_t j = i + 1; j < pieces.size(); ++j) {
            const auto &A = pieces[i], &B = pieces[j];
            for (std::size_t e = 0; e < A.polygon.size(); ++e) {
                const Vec p = A.polygon[e], q = A.polygon[(e + 1) % A.polygon.size()];
                const Vec t = (1.0 / norm(q - p)) * (q - p);
                for (std::size_t f = 0; f < B.polygon.size(); ++f) {
                    const Vec r = B.polygon[f], s = B.polygon[(f + 1) % B.polygon.size()];
                    if (std::abs(cross(t, r - p)) > 1e-12 || std::abs(cross(t, s - p)) > 1e-12) continue;
                    const double lo = std::max(std::min(dot(t, r - p), dot(t, s - p)), 0.0);
                    const double hi = std::min(std::max(dot(t, r - p), dot(t, s - p)), norm(q - p));
                    if (hi - lo <= 1e-12) continue;
                    const Vec jump = (A.F - B.F) * t;
                    if (norm(jump) > 1e-10)
                        throw std::invalid_argument("pieces " + std::to_string(i) + " and " + std::to_string(j) +
                                                    " are not rank-one compatible");
                    for (double s_ : {lo, hi}) {
                        const Vec x = p + s_ * t;
                        if (norm((A.F * x + A.b) - (B.F * x + B.b)) > 1e-10)
                            throw std::invalid_argument("u is discontinuous between pieces " + std::to_string(i) +
                                                        " and " + std::to_string(j));
                    }
                }
            }
        }
}

int MacroDeformation::locate(Vec x) const {
    for (std::size_t i = 0; i < pieces.size(); ++i)
        if (pieces[i].contains(x)) return int(i);
    return -1;
}

Vec MacroDeformation::value(Vec x) const {
    const int i = locate(x);
    if (i < 0) throw std::out_of_range("point outside the domain");
    return pieces[i].F * x + pieces[i].b;
}

Mat MacroDeformation::gradient(Vec x) const {
    const int i = locate(x);
    if (i < 0) throw std::out_of_range("point outside the domain");
    return pieces[i].F;
}

Corrector build_corrector(const EnergySpec &spec, const Mat &F, double eta, const Schedule &schedule,
                          bool eta_relative) {
    spec.validate();
    schedule.validate();
    if (!(eta > 0.0)) throw std::invalid_argument("corrector slack eta must be positive");
    if (std::abs(det(F) - 1.0) > CellProblem::sigma_tolerance) throw std::invalid_argument("det F ≠ 1");
    if (schedule.boundary != BoundaryCondition::dirichlet)
        throw std::invalid_argument("correctors need zero-boundary cell fields");

    const int m = schedule.m_values.back();
    struct Solved {
        int k;
        SolveResult r;
    };
    std::vector<Solved> solved;
    for (int k : schedule.k_values) {
        const Grid grid(k, m);
        CellProblem problem(spec, F, schedule.n_values.back(), grid, schedule.smoothing, ConstraintMode::exact);
        problem.set_threads(schedule.threads);
        std::vector<FluctuationField> starts{FluctuationField(grid)};
        for (const auto &s : solved)
            if (k % s.k == 0) starts.push_back(tile(Grid(s.k, m), s.r.phi, k / s.k));
        SolveResult best;
        bool have = false;
        for (const auto &phi0 : starts) {
            SolveResult r = solve_constrained(problem, schedule.solver, schedule.al, &phi0);
            if (max_determinant_residual(problem, phi0) <= schedule.al.residual_tolerance) {
                const double raw = cell_average_W_tilde(problem, phi0);
                if (!r.converged || raw < r.value) {
                    r.phi = phi0;
                    r.value = raw;
                    r.constraint_residual = max_determinant_residual(problem, phi0);
                    r.converged = true;
                }
            }
            if (!have || (r.converged && (!best.converged || r.value < best.value))) best = std::move(r), have = true;
        }
        solved.push_back({k, std::move(best)});
    }

    Corrector c;
    c.F = F;
    c.m = m;
    c.reference = solved.front().r.value;
    for (const auto &s : solved) {
        c.values.push_back(s.r.value);
        if (s.r.converged) c.reference = std::min(c.reference, s.r.value);
    }
    c.eta = eta_relative ? eta * c.reference : eta;
    const Solved *pick = nullptr;
    for (const auto &s : solved)
        if (s.r.converged && s.r.value <= c.reference + c.eta) {
            pick = &s;
            break;
        }
    c.met = pick != nullptr;
    if (!pick) {
        pick = &solved.front();
        for (const auto &s : solved)
            if (s.r.value < pick->r.value) pick = &s;
    }
    c.k = pick->k;
    CellProblem problem(spec, F, schedule.n_values.back(), Grid(c.k, m), schedule.smoothing, ConstraintMode::exact);
    const ProjectionResult proj = project_incompressible(problem, pick->r.phi, 1e-10);
    c.phi = proj.residual <= pick->r.constraint_residual ? proj.phi : pick->r.phi;
    c.residual = max_determinant_residual(problem, c.phi);
    c.cell_value = cell_average_W_tilde(problem, c.phi);
    c.met = c.met && c.cell_value <= c.reference + c.eta;
    return c;
}

namespace {

/// Mask cell of x for a corrector with multiplier k: index z with the cell
/// ε (k z + [-1/2, k - 1/2]^2), and the local coordinate of x in it.
struct MaskCell {
    Vec lo, hi, local;
};

MaskCell mask_cell(double eps, int k, Vec x) {
    const double y[2] = {x.x / eps, x.y / eps};
    const double o = 0.5 * (k - 1);
    double z[2], local[2];
    for (int d = 0; d < 2; ++d) {
        z[d] = std::floor((y[d] + 0.5) / k);
        local[d] = y[d] - k * z[d] - o;
    }
    return {{eps * (k * z[0] - 0.5), eps * (k * z[1] - 0.5)},
            {eps * (k * z[0] + k - 0.5), eps * (k * z[1] + k - 0.5)},
            {local[0], local[1]}};
}

bool cell_inside(const MacroPiece &piece, const MaskCell &c) {
    return piece.contains(c.lo) && piece.contains({c.hi.x, c.lo.y}) && piece.contains(c.hi) &&
           piece.contains({c.lo.x, c.hi.y});
}

} // namespace

ZValue evaluate_z_eps(const MacroDeformation &u, const std::vector<Corrector> &correctors, double eps, Vec x) {
    if (!(eps > 0.0)) throw std::invalid_argument("eps must be positive");
    if (correctors.size() != u.pieces.size()) throw std::invalid_argument("need one corrector per piece");
    ZValue out;
    out.piece = u.locate(x);
    if (out.piece < 0) throw std::out_of_range("point outside the domain");
    const MacroPiece &piece = u.pieces[out.piece];
    const Corrector &cor = correctors[out.piece];
    const MaskCell cell = mask_cell(eps, cor.k, x);
    if (!cell_inside(piece, cell)) {
        out.z = piece.F * x + piece.b;
        out.grad = piece.F;
        return out;
    }
    out.in_mask = true;
    const Grid grid = cor.grid();
    const PointValue pv = evaluate(grid, cor.phi, cell.local);
    const Mat Finv = inverse(cor.F);
    const Vec v = x + eps * (Finv * pv.value);
    int j = u.locate(v);
    if (j < 0) j = out.piece;
    out.z = u.pieces[j].F * v + u.pieces[j].b;
    out.grad = u.pieces[j].F * (Mat::identity() + Finv * pv.grad);
    return out;
}

RecoveryReport limsup_experiment(const EnergySpec &spec, const MacroDeformation &u, const RecoveryOptions &options) {
    spec.validate();
    u.validate();
    if (options.eps_values.empty()) throw std::invalid_argument("eps list must be non-empty");
    for (std::size_t i = 0; i < options.eps_values.size(); ++i) {
        if (!(options.eps_values[i] > 0.0)) throw std::invalid_argument("eps values must be positive");
        if (i > 0 && !(options.eps_values[i] < options.eps_values[i - 1]))
            throw std::invalid_argument("eps values must be decreasing");
    }

    RecoveryReport rep;
    int max_mk = 0, max_k = 0;
    for (const auto &piece : u.pieces) {
        rep.correctors.push_back(build_corrector(spec, piece.F, options.eta, options.schedule, options.eta_relative));
        const Corrector &c = rep.correctors.back();
        max_mk = std::max(max_mk, c.m * c.k);
        max_k = std::max(max_k, c.k);
        rep.piece_areas.push_back(piece.area());
        rep.bound += piece.area() * c.reference;
        rep.slack += piece.area() * c.eta;
        rep.corrector_residual = std::max(rep.corrector_residual, c.residual);
    }
    const int q = options.quadrature_per_eps > 0 ? options.quadrature_per_eps : 4 * max_mk;
    if (q < 4 * max_mk)
        throw SizingError("quadrature step ε/" + std::to_string(q) + " does not resolve the corrector mesh: need at least " +
                          std::to_string(4 * max_mk) + " quadrature cells per ε (4·m·k_η with m = " +
                          std::to_string(rep.correctors.front().m) + ", k_η = " + std::to_string(max_k) + ")");

    const std::size_t np = u.pieces.size();
    for (double eps : options.eps_values) {
        RecoveryRow row;
        row.eps = eps;
        row.bound = rep.bound;
        const int N = int(std::ceil(q / eps - 1e-9));
        row.quadrature_cells = N;
        const double h = 1.0 / N;
        struct Acc {
            double energy = 0.0, l1 = 0.0, det_res = 0.0;
            std::vector<double> pieces;
        };
        std::vector<Acc> rows(N);
        parallel_for(std::size_t(N), options.schedule.threads, [&](std::size_t j) {
            Acc acc;
            acc.pieces.assign(np, 0.0);
            const double yq = (j + 0.5) * h;
            for (int i = 0; i < N; ++i) {
                const Vec x{(i + 0.5) * h, yq};
                const ZValue zv = evaluate_z_eps(u, rep.correctors, eps, x);
                const double w = eval_W_tilde(spec, mu_at(spec.phase, (1.0 / eps) * x), zv.grad).value * h * h;
                acc.energy += w;
                acc.pieces[zv.piece] += w;
                acc.l1 += norm(zv.z - u.value(x)) * h * h;
                acc.det_res = std::max(acc.det_res, std::abs(det(zv.grad) - 1.0));
            }
            rows[j] = std::move(acc);
        });
        row.piece_energies.assign(np, 0.0);
        for (const auto &acc : rows) {
            row.energy += acc.energy;
            row.l1_distance += acc.l1;
            row.det_residual = std::max(row.det_residual, acc.det_res);
            for (std::size_t p = 0; p < np; ++p) row.piece_energies[p] += acc.pieces[p];
        }

        // Exact covered area: whole ε k cells inside each piece.
        double covered = 0.0;
        for (std::size_t p = 0; p < np; ++p) {
            const int k = rep.correctors[p].k;
            const double size = eps * k;
            const long zmax = long(std::ceil(1.0 / size)) + 1;
            long count = 0;
            for (long zy = -1; zy <= zmax; ++zy)
                for (long zx = -1; zx <= zmax; ++zx) {
                    const MaskCell c{{eps * (k * zx - 0.5), eps * (k * zy - 0.5)},
                                     {eps * (k * zx + k - 0.5), eps * (k * zy + k - 0.5)},
                                     {}};
                    if (cell_inside(u.pieces[p], c)) ++count;
                }
            covered += count * size * size;
        }
        row.uncovered_fraction = std::max(0.0, 1.0 - covered);

        // Boundary samples.
        const int nb = 4 * N;
        for (int s = 0; s <= nb; ++s) {
            const double t = double(s) / nb;
            for (Vec x : {Vec{t, 0.0}, Vec{t, 1.0}, Vec{0.0, t}, Vec{1.0, t}})
                row.boundary_error =
                    std::max(row.boundary_error, norm(evaluate_z_eps(u, rep.correctors, eps, x).z - u.value(x)));
        }
        rep.fitted_coverage_constant = std::max(rep.fitted_coverage_constant, row.uncovered_fraction / eps);
        rep.rows.push_back(std::move(row));
    }

    const double limit = rep.bound + rep.slack + 0.02 * rep.bound;
    rep.energy_ok = std::all_of(rep.rows.begin(), rep.rows.end(), [&](const auto &r) { return r.energy <= limit; });
    rep.energy_ok_smallest_eps = rep.rows.back().energy <= limit;
    rep.det_ok = std::all_of(rep.rows.begin(), rep.rows.end(),
                             [&](const auto &r) { return r.det_residual <= 1e-10 + rep.corrector_residual; });
    rep.l1_ok = true;
    for (std::size_t i = 0; i + 1 < rep.rows.size(); ++i)
        if (rep.rows[i + 1].l1_distance > 1.05 * rep.rows[i].l1_distance) rep.l1_ok = false;
    rep.coverage_ok = std::all_of(rep.rows.begin(), rep.rows.end(),
                                  [&](const auto &r) { return r.uncovered_fraction <= 4.0 * max_k * r.eps; });
    rep.boundary_ok = std::all_of(rep.rows.begin(), rep.rows.end(), [](const auto &r) { return r.boundary_error == 0.0; });
    return rep;
}

void write_recovery_csv(std::ostream &os, const RecoveryReport &report) {
    os << "eps,energy,bound,det_residual,l1_distance,uncovered_fraction\n";
    char buf[512];
    for (const auto &r : report.rows) {
        std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", r.eps, r.energy, r.bound,
                      r.det_residual, r.l1_distance, r.uncovered_fraction);
        os << buf;
    }
}

} // namespace cellhom
