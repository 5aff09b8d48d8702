#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "cellhom/density.hpp"
#include "cellhom/tensor.hpp"

namespace cellhom {

enum class BoundaryCondition {
    dirichlet,  ///< fluctuation vanishes on ∂(kY)
    periodic,   ///< experimental: kY-periodic fluctuation, one pinned corner
};

std::string to_string(BoundaryCondition bc);
BoundaryCondition parse_boundary_condition(const std::string &s);

/// Uniform simplicial mesh of the k-cell. Node (i, j) sits at local position
/// (-k/2 + i/m, -k/2 + j/m) and has index j*(km+1) + i (row-major, rows are
/// constant y). Each square is split by its main diagonal into the triangles
/// (a, b, c) and (a, c, d) with a = (i,j), b = (i+1,j), c = (i+1,j+1), d = (i,j+1).
///
/// The k-cell covers the k×k integer translates Y + z, z ∈ {0..k-1}^2, of the
/// period cell, so in microstructure coordinates a local point ℓ sits at
/// ℓ + (k-1)/2 (1, 1). For odd k this is exactly kY; for even k it is kY
/// shifted by half a period, which keeps every r×r tiling aligned with the
/// microstructure.
class Grid {
public:
    Grid(int k, int m, BoundaryCondition bc = BoundaryCondition::dirichlet);

    int k() const { return k_; }
    int m() const { return m_; }
    BoundaryCondition boundary() const { return bc_; }
    int cells_per_edge() const { return k_ * m_; }
    double h() const { return 1.0 / m_; }
    std::size_t node_count() const;
    std::size_t element_count() const;
    double element_area() const { return 0.5 / (double(m_) * m_); }
    double total_area() const { return double(k_) * k_; }

    std::size_t node_index(int i, int j) const { return std::size_t(j) * (k_ * m_ + 1) + i; }
    Vec node_position(std::size_t node) const;
    bool on_boundary(std::size_t node) const;

    std::array<std::size_t, 3> element_nodes(std::size_t e) const;
    /// Gradients of the three barycentric coordinates on element e.
    const std::array<Vec, 3> &shape_gradients(std::size_t e) const { return grads_[e & 1]; }
    /// Barycenter in microstructure coordinates, wrapped into one period cell.
    Vec element_barycenter_micro(std::size_t e) const;
    Vec microstructure_offset() const;

    /// Free degrees of freedom: node -> free index, or -1 when the node is
    /// fixed to zero. Periodic grids map identified nodes to one index.
    const std::vector<long> &node_to_free() const { return node_to_free_; }
    std::size_t free_node_count() const { return free_count_; }

    /// Element containing a local point of the closed cell, and barycentric weights.
    struct Location {
        std::size_t element;
        std::array<double, 3> weights;
    };
    Location locate(Vec local) const;

    friend bool operator==(const Grid &a, const Grid &b) {
        return a.k_ == b.k_ && a.m_ == b.m_ && a.bc_ == b.bc_;
    }

private:
    int k_, m_;
    BoundaryCondition bc_;
    std::array<std::array<Vec, 3>, 2> grads_{};
    std::vector<long> node_to_free_;
    std::size_t free_count_ = 0;
};

/// Nodal fluctuation φ, two components per node in node order.
struct FluctuationField {
    std::vector<double> data;

    FluctuationField() = default;
    explicit FluctuationField(const Grid &g) : data(2 * g.node_count(), 0.0) {}

    Vec at(std::size_t node) const { return {data[2 * node], data[2 * node + 1]}; }
    void set(std::size_t node, Vec v) {
        data[2 * node] = v.x;
        data[2 * node + 1] = v.y;
    }
    double max_abs() const;
};

/// Throws std::invalid_argument unless φ has the grid's size and satisfies its
/// boundary condition exactly (zero on ∂(kY), or equal on identified nodes).
void require_admissible(const Grid &grid, const FluctuationField &phi);
bool is_admissible(const Grid &grid, const FluctuationField &phi);

/// Constant gradient of φ on element e.
Mat element_gradient(const Grid &grid, const FluctuationField &phi, std::size_t e);

/// P1 value and gradient of φ at a local point of the cell.
struct PointValue {
    Vec value;
    Mat grad;
};
PointValue evaluate(const Grid &grid, const FluctuationField &phi, Vec local);

/// Free-dof vector <-> nodal field.
std::vector<double> restrict_to_free(const Grid &grid, const FluctuationField &phi);
FluctuationField expand_from_free(const Grid &grid, std::span<const double> x);

enum class ConstraintMode { penalty, exact };
std::string to_string(ConstraintMode mode);
ConstraintMode parse_constraint_mode(const std::string &s);

/// One discretized k-cell problem: spec, macroscopic F, truncation level n,
/// mesh, smoothing δ and constraint mode. Per-element coefficients are
/// sampled at barycenters once, at construction.
class CellProblem {
public:
    static constexpr double sigma_tolerance = 1e-10;

    CellProblem(EnergySpec spec, Mat F, double n, Grid grid, double smoothing = 1e-8,
                ConstraintMode mode = ConstraintMode::penalty);

    const EnergySpec &spec() const { return spec_; }
    const Mat &F() const { return F_; }
    double n() const { return n_; }
    const Grid &grid() const { return grid_; }
    double smoothing() const { return smoothing_; }
    ConstraintMode mode() const { return mode_; }
    bool off_sigma() const { return off_sigma_; }
    double mu(std::size_t e) const { return mu_[e]; }
    int threads() const { return threads_; }

    CellProblem with_n(double n) const;
    CellProblem with_smoothing(double smoothing) const;
    CellProblem with_mode(ConstraintMode mode) const;
    void set_threads(int threads) { threads_ = threads < 1 ? 1 : threads; }

private:
    EnergySpec spec_;
    Mat F_;
    double n_;
    Grid grid_;
    double smoothing_;
    ConstraintMode mode_;
    bool off_sigma_;
    int threads_ = 1;
    std::vector<double> mu_;
};

struct ObjectiveValue {
    double value = 0.0;
    FluctuationField grad;
};

/// Cell average (1/k^2) Σ_e |e| W_n(y_e, F + ∇φ_e) and its exact nodal
/// gradient; fixed components of the gradient are zero.
ObjectiveValue objective_and_gradient(const CellProblem &problem, const FluctuationField &phi);

/// Same objective on the free-dof vector; grad may be empty.
double objective_free(const CellProblem &problem, std::span<const double> x, std::span<double> grad);

/// (1/k^2) Σ_e |e| w_e(F + G_e) for an arbitrary per-element density, with its
/// gradient with respect to the free dofs written into grad_free (may be empty).
using ElementDensity = std::function<EnergyEval(std::size_t e, const Mat &A)>;
double assemble_cell_average(const CellProblem &problem, const FluctuationField &phi,
                             std::span<double> grad_free, const ElementDensity &density);

/// Cell average of the un-truncated extension W̃.
double cell_average_W_tilde(const CellProblem &problem, const FluctuationField &phi);

/// Per-element determinant constraint values det(F + ∇φ_e) - 1.
std::vector<double> determinant_residuals(const CellProblem &problem, const FluctuationField &phi);
double max_determinant_residual(const CellProblem &problem, const FluctuationField &phi);

/// |(1/k^2) Σ_e |e| det(F + ∇φ_e) - det F|.
double null_lagrangian_residual(const CellProblem &problem, const FluctuationField &phi);

/// r×r periodic tiling of φ onto the (r k, m) grid.
FluctuationField tile(const Grid &grid, const FluctuationField &phi, int factor);

/// Nested interpolation onto a finer grid (fine.m a multiple of coarse.m, same k).
FluctuationField prolong(const Grid &coarse, const FluctuationField &phi, const Grid &fine);

/// CSV columns: node,i,j,x,y,phi_x,phi_y (row-major node order, %.17g).
void write_field_csv(std::ostream &os, const Grid &grid, const FluctuationField &phi);
FluctuationField read_field_csv(std::istream &is, const Grid &grid);
/// Flat little-endian float64 pairs (phi_x, phi_y) per node, row-major node order.
void write_field_binary(std::ostream &os, const FluctuationField &phi);
FluctuationField read_field_binary(std::istream &is, const Grid &grid);

} // namespace cellhom
