#pragma once

#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "cellhom/homog.hpp"

namespace cellhom {

/// Convex polygonal piece of the unit square with u(x) = F x + b on it.
struct MacroPiece {
    std::vector<Vec> polygon;  ///< counter-clockwise vertices
    Mat F;
    Vec b;

    double area() const;
    bool contains(Vec x, double tol = 1e-12) const;
};

/// Continuous piecewise-affine u on Ω = (0,1)^2 with gradients in Σ.
struct MacroDeformation {
    static constexpr std::size_t max_pieces = 8;
    std::vector<MacroPiece> pieces;

    static MacroDeformation affine(const Mat &F);
    /// Pieces {x_axis < offset} and {x_axis > offset}; the second gradient is
    /// F + a⊗e_axis with a chosen orthogonal to cof(F) e_axis, so it stays in Σ.
    static MacroDeformation rank_one_laminate(const Mat &F, int axis, double offset, double amplitude);

    /// Throws std::invalid_argument for det F_i ≠ 1, gaps or overlaps, or an
    /// interface that is not rank-one compatible or not continuous.
    void validate() const;
    /// Index of the first piece containing x, or -1.
    int locate(Vec x) const;
    Vec value(Vec x) const;
    Mat gradient(Vec x) const;
};

struct Corrector {
    Mat F;
    double eta = 0.0;
    int k = 1;
    int m = 1;
    FluctuationField phi;        ///< on Grid(k, m), zero on the cell boundary
    double cell_value = 0.0;     ///< ⨏ W̃(y, F + ∇φ) over the k-cell
    double reference = 0.0;      ///< best W_hom estimate over the k schedule
    double residual = 0.0;       ///< max_e |det(F + ∇φ_e) - 1| after projection
    bool met = false;            ///< cell_value ≤ reference + eta
    std::vector<double> values;  ///< constrained value per scheduled k

    Grid grid() const { return Grid(k, m); }
};

/// Constrained cell solves over schedule.k_values at the finest m; returns
/// the smallest k whose value is within eta of the best one, with its field
/// projected onto det = 1 to 1e-10. With eta_relative, eta multiplies the
/// best value.
Corrector build_corrector(const EnergySpec &spec, const Mat &F, double eta, const Schedule &schedule,
                          bool eta_relative = false);

struct ZValue {
    Vec z;
    Mat grad;
    int piece = -1;
    bool in_mask = false;
};

/// z_ε(x) = u(v_ε(x)) with v_ε(x) = x + ε F_i^{-1} φ_i(x/ε) inside whole ε k_i
/// cells contained in piece i, and z_ε = u outside them. `correctors` holds
/// one corrector per piece of u.
ZValue evaluate_z_eps(const MacroDeformation &u, const std::vector<Corrector> &correctors, double eps, Vec x);

struct RecoveryOptions {
    double eta = 0.05;
    bool eta_relative = true;
    std::vector<double> eps_values{0.25, 0.125, 0.0625};
    int quadrature_per_eps = 0;  ///< quadrature cells per ε length; 0 -> 4 m k_η
    Schedule schedule;
};

struct RecoveryRow {
    double eps = 0.0;
    double energy = 0.0;
    double bound = 0.0;
    double det_residual = 0.0;
    double l1_distance = 0.0;
    double uncovered_fraction = 0.0;
    double boundary_error = 0.0;
    int quadrature_cells = 0;  ///< per unit length
    std::vector<double> piece_energies;
};

struct RecoveryReport {
    std::vector<Corrector> correctors;
    std::vector<double> piece_areas;
    double bound = 0.0;  ///< Σ area_i W_hom-estimate(F_i)
    double slack = 0.0;  ///< Σ area_i η_i
    std::vector<RecoveryRow> rows;
    double fitted_coverage_constant = 0.0;  ///< max uncovered/ε
    double corrector_residual = 0.0;
    bool energy_ok = false;     ///< every ε: energy ≤ bound + slack + 0.02 bound
    bool energy_ok_smallest_eps = false;
    bool det_ok = false;        ///< det residual ≤ 1e-10 + corrector residual
    bool l1_ok = false;         ///< non-increasing within 5 %
    bool coverage_ok = false;   ///< uncovered ≤ 4 k ε
    bool boundary_ok = false;   ///< z = u on ∂Ω samples
};

/// Quadrature step that cannot resolve one corrector element per ε-cell.
class SizingError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

RecoveryReport limsup_experiment(const EnergySpec &spec, const MacroDeformation &u, const RecoveryOptions &options);

void write_recovery_csv(std::ostream &os, const RecoveryReport &report);

} // namespace cellhom
