#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <ostream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "cellhom/config.hpp"

namespace cellhom {

#ifndef CELLHOM_VERSION
#define CELLHOM_VERSION "0.0.0"
#endif
const char *const version_string = "cellhom " CELLHOM_VERSION;

namespace {

using json = nlohmann::ordered_json;

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

json number(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    if (std::isnan(v)) return "nan";
    return v;
}

json matrix(const Mat &F) { return json::array({json::array({F(0, 0), F(0, 1)}), json::array({F(1, 0), F(1, 1)})}); }

std::filesystem::path output_path(const RunConfig &c, const std::string &name) {
    std::error_code ec;
    std::filesystem::create_directories(c.output_dir, ec);
    if (ec) throw IoError("cannot create output directory '" + c.output_dir + "': " + ec.message());
    return std::filesystem::path(c.output_dir) / name;
}

void write_text(const std::filesystem::path &path, const std::string &text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    out << text;
    if (!out) throw IoError("write failed for '" + path.string() + "'");
}

json envelope(const RunConfig &c) {
    json j;
    j["version"] = version_string;
    j["command"] = to_string(c.command);
    j["config"] = serialize_config(c);
    return j;
}

void write_json(const RunConfig &c, const std::string &name, const json &j) {
    write_text(output_path(c, name), j.dump(2) + "\n");
}

json solve_json(const SolveResult &r) {
    return {{"value", number(r.value)},
            {"iterations", r.iterations},
            {"converged", r.converged},
            {"grad_norm", number(r.grad_norm)},
            {"constraint_residual", number(r.constraint_residual)},
            {"line_search_failure", r.line_search_failure},
            {"diagnostic", r.diagnostic}};
}

void warn_alignment(const RunConfig &c, const std::vector<int> &ms, std::ostream &log) {
    const PhaseField &ph = c.spec.phase;
    if (ph.kind != PhaseKind::laminate && ph.kind != PhaseKind::checkerboard) return;
    for (int m : ms) {
        const double t = ph.kind == PhaseKind::laminate ? ph.theta * m : 0.5 * m;
        if (std::abs(t - std::round(t)) > 1e-12)
            log << "warning: phase interfaces are not aligned with mesh lines at m = " << m << "\n";
    }
}

// ---------------------------------------------------------------------------

int run_cell(const RunConfig &c, std::ostream &log) {
    const CellSettings &s = c.cell;
    warn_alignment(c, {s.m}, log);
    const Grid grid(s.k, s.m, c.schedule.boundary);
    CellProblem problem(c.spec, c.F, s.n, grid, c.schedule.smoothing, s.mode);
    problem.set_threads(c.schedule.threads);
    FluctuationField phi0(grid);
    if (!s.field_input.empty()) {
        std::ifstream in(s.field_input, std::ios::binary);
        if (!in) throw IoError("cannot read field '" + s.field_input + "'");
        phi0 = s.field_format == FieldFormat::csv ? read_field_csv(in, grid) : read_field_binary(in, grid);
    }
    log << "cell: k = " << s.k << ", m = " << s.m << ", n = " << s.n << ", mode = " << to_string(s.mode) << "\n";
    SolveResult r;
    if (s.mode == ConstraintMode::exact) {
        r = solve_constrained(problem, c.schedule.solver, c.schedule.al, &phi0);
    } else {
        r = multistart(problem, c.schedule.solver, c.schedule.starts, c.schedule.perturbation_scale, c.schedule.seed,
                       &phi0);
    }
    log << "value = " << r.value << (r.converged ? "" : " (not converged: " + r.diagnostic + ")") << "\n";

    json j = envelope(c);
    j["off_sigma"] = problem.off_sigma();
    j["result"] = solve_json(r);
    j["null_lagrangian_residual"] = number(null_lagrangian_residual(problem, r.phi));
    write_json(c, "cell.json", j);

    HomogReport table;
    HomogEntry e;
    e.n = s.mode == ConstraintMode::exact ? std::numeric_limits<double>::infinity() : s.n;
    e.k = s.k;
    e.m = s.m;
    e.value = r.value;
    e.grad_norm = r.grad_norm;
    e.constraint_residual = r.constraint_residual;
    e.iterations = r.iterations;
    e.converged = r.converged;
    table.entries.push_back(e);
    std::ostringstream csv;
    write_report_csv(csv, table);
    write_text(output_path(c, "cell.csv"), csv.str());

    if (!s.field_output.empty()) {
        // Relative paths land in the output directory.
        const auto path = output_path(c, s.field_output);
        std::ofstream out(path, std::ios::binary);
        if (!out) throw IoError("cannot write field '" + path.string() + "'");
        if (s.field_format == FieldFormat::csv) write_field_csv(out, grid, r.phi);
        else write_field_binary(out, r.phi);
    }
    return c.strict && !r.converged ? 2 : 0;
}

json homog_json(const HomogReport &r) {
    json entries = json::array();
    for (const auto &e : r.entries)
        entries.push_back({{"n", number(e.n)},
                           {"k", e.k},
                           {"m", e.m},
                           {"value", number(e.value)},
                           {"grad_norm", number(e.grad_norm)},
                           {"constraint_residual", number(e.constraint_residual)},
                           {"iterations", e.iterations},
                           {"converged", e.converged},
                           {"constrained", e.constrained},
                           {"diagnostic", e.diagnostic}});
    json nk = json::array();
    for (const auto &e : r.estimate_W_n_k) nk.push_back({{"n", number(e.n)}, {"k", e.k}, {"value", number(e.value)}});
    return {{"F", matrix(r.F)},
            {"off_sigma", r.off_sigma},
            {"estimate_W_n_k", nk},
            {"estimate_underbar_W", number(r.estimate_underbar_W)},
            {"estimate_W_hom", number(r.estimate_W_hom)},
            {"commutation_gap", number(r.commutation_gap)},
            {"growth_lower_bound", number(r.growth_lower_bound)},
            {"flags",
             {{"n_monotone", r.n_monotone},
              {"k_subadditive", r.k_subadditive},
              {"m_monotone", r.m_monotone},
              {"bound_ordering", r.bound_ordering},
              {"growth", r.growth_ok},
              {"divergence", r.divergence_ok}}},
            {"nonconverged_entries", r.nonconverged},
            {"entries", entries}};
}

int run_homogenize(const RunConfig &c, std::ostream &log) {
    warn_alignment(c, c.schedule.m_values, log);
    log << "homogenize: " << c.schedule.n_values.size() << " n values, " << c.schedule.k_values.size()
        << " k values, " << c.schedule.m_values.size() << " m values\n";
    const HomogReport r = estimate(c.spec, c.F, c.schedule, c.allow_off_sigma);
    log << "underbar-W estimate = " << r.estimate_underbar_W << ", W_hom estimate = " << r.estimate_W_hom << "\n";
    json j = envelope(c);
    j["report"] = homog_json(r);
    write_json(c, "homogenize.json", j);
    std::ostringstream csv;
    write_report_csv(csv, r);
    write_text(output_path(c, "homogenize.csv"), csv.str());
    return c.strict && r.nonconverged > 0 ? 2 : 0;
}

MacroDeformation macro_from(const RunConfig &c) {
    if (c.recovery.macro == "affine") return MacroDeformation::affine(c.F);
    return MacroDeformation::rank_one_laminate(c.F, c.recovery.axis, c.recovery.offset, c.recovery.amplitude);
}

int run_recover(const RunConfig &c, std::ostream &log) {
    if (c.schedule.boundary != BoundaryCondition::dirichlet)
        throw std::invalid_argument("recover needs zero-boundary correctors (schedule.boundary = \"dirichlet\")");
    warn_alignment(c, c.schedule.m_values, log);
    RecoveryOptions o;
    o.eta = c.recovery.eta;
    o.eta_relative = c.recovery.eta_relative;
    o.eps_values = c.recovery.eps_values;
    o.quadrature_per_eps = c.recovery.quadrature_per_eps;
    o.schedule = c.schedule;
    const RecoveryReport r = limsup_experiment(c.spec, macro_from(c), o);

    json cors = json::array();
    bool all_met = true;
    for (const auto &cor : r.correctors) {
        all_met = all_met && cor.met;
        json vals = json::array();
        for (double v : cor.values) vals.push_back(number(v));
        cors.push_back({{"F", matrix(cor.F)},
                        {"k", cor.k},
                        {"m", cor.m},
                        {"eta", number(cor.eta)},
                        {"cell_value", number(cor.cell_value)},
                        {"reference", number(cor.reference)},
                        {"residual", number(cor.residual)},
                        {"met", cor.met},
                        {"values_per_k", vals}});
    }
    json rows = json::array();
    for (const auto &row : r.rows) {
        json pe = json::array();
        for (double v : row.piece_energies) pe.push_back(number(v));
        rows.push_back({{"eps", row.eps},
                        {"energy", number(row.energy)},
                        {"bound", number(row.bound)},
                        {"det_residual", number(row.det_residual)},
                        {"l1_distance", number(row.l1_distance)},
                        {"uncovered_fraction", number(row.uncovered_fraction)},
                        {"boundary_error", number(row.boundary_error)},
                        {"quadrature_cells", row.quadrature_cells},
                        {"piece_energies", pe}});
        log << "eps = " << row.eps << ": energy = " << row.energy << ", bound = " << row.bound << "\n";
    }
    json j = envelope(c);
    j["report"] = {{"correctors", cors},
                   {"bound", number(r.bound)},
                   {"slack", number(r.slack)},
                   {"fitted_coverage_constant", number(r.fitted_coverage_constant)},
                   {"corrector_residual", number(r.corrector_residual)},
                   {"verdicts",
                    {{"energy", r.energy_ok},
                     {"energy_smallest_eps", r.energy_ok_smallest_eps},
                     {"determinant", r.det_ok},
                     {"l1_non_increasing", r.l1_ok},
                     {"coverage", r.coverage_ok},
                     {"boundary", r.boundary_ok}}},
                   {"rows", rows}};
    write_json(c, "recover.json", j);
    std::ostringstream csv;
    write_recovery_csv(csv, r);
    write_text(output_path(c, "recover.csv"), csv.str());
    return c.strict && !all_met ? 2 : 0;
}

// ---------------------------------------------------------------------------
// check

struct CheckItem {
    std::string name;
    bool passed;
    std::string detail;
};

std::string fmt(const char *f, double a, double b = 0.0) {
    char buf[256];
    std::snprintf(buf, sizeof buf, f, a, b);
    return buf;
}

FluctuationField random_field(const Grid &grid, std::mt19937_64 &rng, double amplitude) {
    std::uniform_real_distribution<double> U(-amplitude, amplitude);
    std::vector<double> x(2 * grid.free_node_count());
    for (double &v : x) v = U(rng);
    return expand_from_free(grid, x);
}

int run_check(const RunConfig &c, std::ostream &log) {
    std::vector<CheckItem> items;
    auto add = [&](std::string name, bool ok, std::string detail) {
        log << (ok ? "PASS " : "FAIL ") << name << ": " << detail << "\n";
        items.push_back({std::move(name), ok, std::move(detail)});
    };
    const Schedule &s = c.schedule;
    std::mt19937_64 rng(s.seed);
    const bool on_sigma = std::abs(det(c.F) - 1.0) <= CellProblem::sigma_tolerance;

    {
        const AssumptionReport a = check_assumptions(c.spec, c.check.assumption_samples, s.seed, c.spec.c);
        add("growth_class_constants", a.violation_count == 0,
            fmt("declared c = %.6g, smallest admissible c measured = %.6g", c.spec.c, a.min_c));
    }
    {
        const Grid grid(c.check.probe_k, s.m_values.front(), s.boundary);
        const CellProblem p(c.spec, c.F, s.n_values.back(), grid, s.smoothing);
        double worst = 0.0;
        for (int i = 0; i < c.check.null_lagrangian_fields; ++i)
            worst = std::max(worst, null_lagrangian_residual(p, random_field(grid, rng, 0.3 * grid.h())));
        add("null_lagrangian", worst <= 1e-10, fmt("max residual %.3g over random fields", worst));
    }
    {
        const Grid grid(c.check.probe_k, s.m_values.front(), s.boundary);
        double worst = 0.0;
        for (int i = 0; i < c.check.gradient_instances; ++i) {
            const double n = s.n_values[i % s.n_values.size()];
            const CellProblem p(c.spec, c.F, n, grid, s.smoothing);
            const FluctuationField phi = random_field(grid, rng, 0.2 * grid.h());
            const auto x = restrict_to_free(grid, phi);
            std::vector<double> g(x.size()), d(x.size());
            objective_free(p, x, g);
            std::uniform_real_distribution<double> U(-1.0, 1.0);
            for (double &v : d) v = U(rng);
            double an = 0.0;
            for (std::size_t q = 0; q < x.size(); ++q) an += g[q] * d[q];
            const double step = 1e-6 * grid.h();
            std::vector<double> xp(x), xm(x);
            for (std::size_t q = 0; q < x.size(); ++q) xp[q] += step * d[q], xm[q] -= step * d[q];
            const double fd = (objective_free(p, xp, {}) - objective_free(p, xm, {})) / (2.0 * step);
            worst = std::max(worst, std::abs(fd - an) / std::max({std::abs(an), std::abs(fd), 1e-300}));
        }
        add("gradient_finite_difference", worst <= 1e-5, fmt("max relative error %.3g", worst));
    }

    const HomogReport r = estimate(c.spec, c.F, s, c.allow_off_sigma);
    add("n_monotone", r.n_monotone, "warm-started penalty values along the n schedule");
    add("k_subadditive", r.k_subadditive, "values at multiples of k against tiled competitors");
    add("m_monotone", r.m_monotone, "values under nested mesh refinement");
    add("growth_bound", r.growth_ok, fmt("estimates against |F|/c - c = %.6g", r.growth_lower_bound));
    if (on_sigma) {
        add("bound_ordering", r.bound_ordering,
            fmt("underbar-W %.9g vs W_hom %.9g", r.estimate_underbar_W, r.estimate_W_hom));
        if (c.spec.homogeneous()) {
            const double wn = eval_W_n(c.spec, s.n_values.back(), c.spec.phase.mu_low, c.F, 0.0).value;
            const double wt = eval_W_tilde(c.spec, c.spec.phase.mu_low, c.F).value;
            add("jensen_penalty", std::abs(r.estimate_underbar_W - wn) <= 1e-4 * std::max(1.0, std::abs(wn)),
                fmt("estimate %.12g vs W_n(F) %.12g", r.estimate_underbar_W, wn));
            add("jensen_constrained", std::abs(r.estimate_W_hom - wt) <= 1e-4 * std::max(1.0, std::abs(wt)),
                fmt("estimate %.12g vs W(F) %.12g", r.estimate_W_hom, wt));
        }
        Schedule probe = s;
        probe.k_values = {c.check.probe_k};
        probe.m_values = {c.check.probe_m};
        const GrowthReport g = growth_probe(c.spec, c.check.growth_samples, probe, s.seed + 1);
        add("growth_probe", g.violations == 0, fmt("%.0f violations over %.0f samples", g.violations, g.samples.size()));
        const RankOneReport ro = rank_one_probe(c.spec, c.check.rank_one_samples, probe, s.seed + 2);
        add("rank_one_probe", ro.violations == 0, fmt("%.0f violations, tolerance %.3g", ro.violations, ro.tolerance));
        const QuasiconvexityReport qc =
            quasiconvexity_probe(c.spec, c.F, c.check.quasiconvexity_fields, probe, s.seed + 3);
        add("quasiconvexity_probe", qc.violations == 0,
            fmt("%.0f violations, tolerance %.3g", qc.violations, qc.tolerance));
    } else {
        add("off_sigma_divergence", r.divergence_ok,
            fmt("underbar-W %.6g vs n|det F - 1|/2 = %.6g", r.estimate_underbar_W,
                0.5 * s.n_values.back() * std::abs(det(c.F) - 1.0)));
    }

    bool all = true;
    json list = json::array();
    for (const auto &it : items) {
        all = all && it.passed;
        list.push_back({{"name", it.name}, {"passed", it.passed}, {"detail", it.detail}});
    }
    json j = envelope(c);
    j["all_passed"] = all;
    j["checks"] = list;
    j["homogenization"] = homog_json(r);
    write_json(c, "check.json", j);
    return all ? 0 : 1;
}

} // namespace

int execute(const RunConfig &config, std::ostream &log) {
    try {
        config.validate();
        switch (config.command) {
        case Command::cell: return run_cell(config, log);
        case Command::homogenize: return run_homogenize(config, log);
        case Command::recover: return run_recover(config, log);
        case Command::check: return run_check(config, log);
        }
    } catch (const SizingError &e) {
        log << "error: " << e.what() << "\n";
        return 3;
    } catch (const ConfigError &e) {
        log << "error: " << e.what() << "\n";
        return 3;
    } catch (const IoError &e) {
        log << "error: " << e.what() << "\n";
        return 3;
    } catch (const std::invalid_argument &e) {
        log << "error: " << e.what() << "\n";
        return 3;
    } catch (const std::runtime_error &e) {
        log << "error: " << e.what() << "\n";
        return 3;
    }
    return 3;
}

} // namespace cellhom
