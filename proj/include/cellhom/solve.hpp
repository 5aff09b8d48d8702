#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "cellhom/cell.hpp"

namespace cellhom {

struct SolverConfig {
    int max_iterations = 3000;
    double gradient_tolerance = 1e-7;  ///< stop when ‖g‖_∞ ≤ tol·(1 + |f|)
    double c1 = 1e-4;                  ///< sufficient decrease
    double c2 = 0.9;                   ///< curvature
    int memory = 10;
    int max_linesearch = 40;
    /// Warm-up stages at smoothing 1e-2, 1e-4, 1e-6 (those above the target δ),
    /// each capped at max_iterations / 3, before the final solve.
    bool continuation = true;

    void validate() const;
    friend bool operator==(const SolverConfig &, const SolverConfig &) = default;
};

struct SolveResult {
    double value = 0.0;  ///< objective at the returned field, evaluated without smoothing
    FluctuationField phi;
    int iterations = 0;
    bool converged = false;
    double grad_norm = 0.0;            ///< ‖g‖_∞ of the smoothed objective over free dofs
    double constraint_residual = 0.0;  ///< max_e |det(F + G_e) - 1|
    bool line_search_failure = false;
    std::string diagnostic;
};

/// Objective on a flat vector: returns f(x) and writes ∇f(x) into g.
using FlatObjective = std::function<double(std::span<const double> x, std::span<double> g)>;

struct LbfgsOutcome {
    std::vector<double> x;
    double value = 0.0;
    double grad_norm = 0.0;
    int iterations = 0;
    bool converged = false;
    bool line_search_failure = false;
    std::string diagnostic;
};

/// Limited-memory BFGS with a strong-Wolfe line search. Accepted iterates have
/// non-increasing objective. `step_scale` bounds the first trial displacement.
LbfgsOutcome lbfgs(const FlatObjective &f, std::vector<double> x0, const SolverConfig &config,
                   double step_scale = 1.0);

/// Quasi-Newton descent on the penalty objective from phi0, optionally after
/// smoothing continuation. Never returns a field worse than phi0 for the
/// problem's own smoothing.
SolveResult minimize(const CellProblem &problem, const FluctuationField &phi0, const SolverConfig &config);

/// Start 0 is `base` (zero when omitted); starts 1.. add seeded uniform
/// interior perturbations of size perturbation_scale·h. Returns the result with
/// the smallest (value, start index).
SolveResult multistart(const CellProblem &problem, const SolverConfig &config, int starts,
                       double perturbation_scale, std::uint64_t seed,
                       const FluctuationField *base = nullptr);

struct AlConfig {
    double initial_penalty = 10.0;
    double penalty_growth = 10.0;
    double multiplier_cap = 1e6;
    int outer_iterations = 6;
    double residual_tolerance = 1e-6;

    void validate() const;
    friend bool operator==(const AlConfig &, const AlConfig &) = default;
};

/// Augmented Lagrangian for min avg W̃(y, F + ∇φ) subject to
/// det(F + G_e) = 1 on every element. Requires mode = exact and det F = 1.
SolveResult solve_constrained(const CellProblem &problem, const SolverConfig &config, const AlConfig &al,
                              const FluctuationField *phi0 = nullptr);

struct ProjectionResult {
    FluctuationField phi;
    double residual = 0.0;
    int iterations = 0;
    bool converged = false;
};

/// Levenberg-Marquardt on Σ_e (det(F + G_e) - 1)^2 starting from phi, stopping
/// once max_e |det(F + G_e) - 1| ≤ tolerance.
ProjectionResult project_incompressible(const CellProblem &problem, const FluctuationField &phi,
                                        double tolerance = 1e-10, int max_iterations = 100);

} // namespace cellhom
