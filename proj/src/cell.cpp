#include "cellhom/cell.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "cellhom/parallel.hpp"

namespace cellhom {

std::string to_string(BoundaryCondition bc) {
    return bc == BoundaryCondition::dirichlet ? "dirichlet" : "periodic";
}

BoundaryCondition parse_boundary_condition(const std::string &s) {
    if (s == "dirichlet") return BoundaryCondition::dirichlet;
    if (s == "periodic") return BoundaryCondition::periodic;
    throw std::invalid_argument("unknown boundary condition '" + s + "'");
}

std::string to_string(ConstraintMode mode) {
    return mode == ConstraintMode::penalty ? "penalty" : "exact";
}

ConstraintMode parse_constraint_mode(const std::string &s) {
    if (s == "penalty") return ConstraintMode::penalty;
    if (s == "exact") return ConstraintMode::exact;
    throw std::invalid_argument("unknown constraint mode '" + s + "'");
}

// ---------------------------------------------------------------------------
// Grid

Grid::Grid(int k, int m, BoundaryCondition bc) : k_(k), m_(m), bc_(bc) {
    if (k < 1) throw std::invalid_argument("cell multiplier k must be positive");
    if (m < 1) throw std::invalid_argument("subdivision count m must be positive");
    const double inv_h = double(m);
    grads_[0] = {Vec{-inv_h, 0.0}, Vec{inv_h, -inv_h}, Vec{0.0, inv_h}};
    grads_[1] = {Vec{0.0, -inv_h}, Vec{inv_h, 0.0}, Vec{-inv_h, inv_h}};

    const int N = k * m;
    node_to_free_.assign(node_count(), -1);
    if (bc == BoundaryCondition::dirichlet) {
        long next = 0;
        for (int j = 1; j < N; ++j)
            for (int i = 1; i < N; ++i) node_to_free_[node_index(i, j)] = next++;
        free_count_ = std::size_t(next);
    } else {
        // Representatives (i, j) with 0 <= i, j < N; corner (0, 0) pinned.
        std::vector<long> rep(std::size_t(N) * N, -1);
        long next = 0;
        for (int j = 0; j < N; ++j)
            for (int i = 0; i < N; ++i)
                if (i != 0 || j != 0) rep[std::size_t(j) * N + i] = next++;
        for (int j = 0; j <= N; ++j)
            for (int i = 0; i <= N; ++i)
                node_to_free_[node_index(i, j)] = rep[std::size_t(j % N) * N + (i % N)];
        free_count_ = std::size_t(next);
    }
}

std::size_t Grid::node_count() const {
    const std::size_t n = std::size_t(k_) * m_ + 1;
    return n * n;
}

std::size_t Grid::element_count() const {
    const std::size_t n = std::size_t(k_) * m_;
    return 2 * n * n;
}

Vec Grid::node_position(std::size_t node) const {
    const int N = k_ * m_;
    const int i = int(node % (N + 1)), j = int(node / (N + 1));
    return {double(2 * i - N) / (2.0 * m_), double(2 * j - N) / (2.0 * m_)};
}

bool Grid::on_boundary(std::size_t node) const {
    const int N = k_ * m_;
    const int i = int(node % (N + 1)), j = int(node / (N + 1));
    return i == 0 || j == 0 || i == N || j == N;
}

std::array<std::size_t, 3> Grid::element_nodes(std::size_t e) const {
    const int N = k_ * m_;
    const std::size_t sq = e / 2;
    const int i = int(sq % N), j = int(sq / N);
    const std::size_t a = node_index(i, j), b = node_index(i + 1, j), c = node_index(i + 1, j + 1),
                      d = node_index(i, j + 1);
    if ((e & 1) == 0) return {a, b, c};
    return {a, c, d};
}

Vec Grid::element_barycenter_micro(std::size_t e) const {
    const int N = k_ * m_;
    const std::size_t sq = e / 2;
    const int i = int(sq % N) % m_, j = int(sq / N) % m_;
    const bool lower = (e & 1) == 0;
    const double ox = lower ? 2.0 / 3.0 : 1.0 / 3.0;
    const double oy = lower ? 1.0 / 3.0 : 2.0 / 3.0;
    return {-0.5 + (i + ox) / m_, -0.5 + (j + oy) / m_};
}

Vec Grid::microstructure_offset() const {
    const double o = 0.5 * (k_ - 1);
    return {o, o};
}

Grid::Location Grid::locate(Vec local) const {
    const int N = k_ * m_;
    const double half = 0.5 * k_;
    auto split = [&](double v, int &idx, double &frac) {
        const double s = (v + half) * m_;
        idx = int(std::floor(s));
        if (idx < 0) idx = 0;
        if (idx > N - 1) idx = N - 1;
        frac = s - idx;
    };
    int i, j;
    double fs, ft;
    split(local.x, i, fs);
    split(local.y, j, ft);
    const std::size_t sq = std::size_t(j) * N + i;
    if (fs >= ft) return {2 * sq, {1.0 - fs, fs - ft, ft}};
    return {2 * sq + 1, {1.0 - ft, fs, ft - fs}};
}

// ---------------------------------------------------------------------------
// Fields

double FluctuationField::max_abs() const {
    double r = 0.0;
    for (double v : data) r = std::max(r, std::abs(v));
    return r;
}

bool is_admissible(const Grid &grid, const FluctuationField &phi) {
    if (phi.data.size() != 2 * grid.node_count()) return false;
    const auto &map = grid.node_to_free();
    if (grid.boundary() == BoundaryCondition::dirichlet) {
        for (std::size_t n = 0; n < grid.node_count(); ++n)
            if (map[n] < 0 && (phi.data[2 * n] != 0.0 || phi.data[2 * n + 1] != 0.0)) return false;
        return true;
    }
    const int N = grid.cells_per_edge();
    for (int j = 0; j <= N; ++j)
        for (int i = 0; i <= N; ++i) {
            const std::size_t n = grid.node_index(i, j);
            const std::size_t r = grid.node_index(i % N, j % N);
            if (map[n] < 0) {
                if (phi.data[2 * n] != 0.0 || phi.data[2 * n + 1] != 0.0) return false;
            } else if (phi.data[2 * n] != phi.data[2 * r] || phi.data[2 * n + 1] != phi.data[2 * r + 1]) {
                return false;
            }
        }
    return true;
}

void require_admissible(const Grid &grid, const FluctuationField &phi) {
    if (phi.data.size() != 2 * grid.node_count())
        throw std::invalid_argument("fluctuation field size does not match the grid");
    if (!is_admissible(grid, phi))
        throw std::invalid_argument(grid.boundary() == BoundaryCondition::dirichlet
                                        ? "fluctuation field has nonzero boundary values"
                                        : "fluctuation field violates the periodic identification");
}

Mat element_gradient(const Grid &grid, const FluctuationField &phi, std::size_t e) {
    const auto nodes = grid.element_nodes(e);
    const auto &g = grid.shape_gradients(e);
    Mat G;
    for (int l = 0; l < 3; ++l) G += outer(phi.at(nodes[l]), g[l]);
    return G;
}

PointValue evaluate(const Grid &grid, const FluctuationField &phi, Vec local) {
    const auto loc = grid.locate(local);
    const auto nodes = grid.element_nodes(loc.element);
    Vec v;
    for (int l = 0; l < 3; ++l) v = v + loc.weights[l] * phi.at(nodes[l]);
    return {v, element_gradient(grid, phi, loc.element)};
}

std::vector<double> restrict_to_free(const Grid &grid, const FluctuationField &phi) {
    std::vector<double> x(2 * grid.free_node_count(), 0.0);
    std::vector<char> seen(grid.free_node_count(), 0);
    const auto &map = grid.node_to_free();
    for (std::size_t n = 0; n < grid.node_count(); ++n) {
        const long f = map[n];
        if (f < 0 || seen[f]) continue;
        seen[f] = 1;
        x[2 * f] = phi.data[2 * n];
        x[2 * f + 1] = phi.data[2 * n + 1];
    }
    return x;
}

FluctuationField expand_from_free(const Grid &grid, std::span<const double> x) {
    FluctuationField phi(grid);
    const auto &map = grid.node_to_free();
    for (std::size_t n = 0; n < grid.node_count(); ++n) {
        const long f = map[n];
        if (f < 0) continue;
        phi.data[2 * n] = x[2 * f];
        phi.data[2 * n + 1] = x[2 * f + 1];
    }
    return phi;
}

// ---------------------------------------------------------------------------
// CellProblem

CellProblem::CellProblem(EnergySpec spec, Mat F, double n, Grid grid, double smoothing,
                         ConstraintMode mode)
    : spec_(std::move(spec)), F_(F), n_(n), grid_(std::move(grid)), smoothing_(smoothing),
      mode_(mode) {
    spec_.validate();
    if (!(n > 0.0)) throw std::invalid_argument("truncation level n must be positive");
    if (!(smoothing >= 0.0)) throw std::invalid_argument("smoothing must be non-negative");
    for (double v : F_.a)
        if (!std::isfinite(v)) throw std::invalid_argument("F must be finite");
    off_sigma_ = std::abs(det(F_) - 1.0) > sigma_tolerance;
    mu_.resize(grid_.element_count());
    for (std::size_t e = 0; e < mu_.size(); ++e)
        mu_[e] = mu_at(spec_.phase, grid_.element_barycenter_micro(e));
}

CellProblem CellProblem::with_n(double n) const {
    CellProblem p = *this;
    if (!(n > 0.0)) throw std::invalid_argument("truncation level n must be positive");
    p.n_ = n;
    return p;
}

CellProblem CellProblem::with_smoothing(double smoothing) const {
    CellProblem p = *this;
    p.smoothing_ = smoothing;
    return p;
}

CellProblem CellProblem::with_mode(ConstraintMode mode) const {
    CellProblem p = *this;
    p.mode_ = mode;
    return p;
}

namespace {
struct ElementTerm {
    double value;
    Mat stress;  // area-weighted dW/dA
};

} // namespace

double assemble_cell_average(const CellProblem &problem, const FluctuationField &phi,
                             std::span<double> grad_free, const ElementDensity &density) {
    const Grid &grid = problem.grid();
    const std::size_t ne = grid.element_count();
    const double area = grid.element_area();
    std::vector<ElementTerm> terms(ne);
    parallel_for(ne, problem.threads(), [&](std::size_t e) {
        const Mat A = problem.F() + element_gradient(grid, phi, e);
        EnergyEval w = density(e, A);
        terms[e] = {area * w.value, area * w.grad};
    });

    double total = 0.0;
    for (const auto &t : terms) total += t.value;
    const double scale = 1.0 / grid.total_area();

    if (!grad_free.empty()) {
        std::fill(grad_free.begin(), grad_free.end(), 0.0);
        const auto &map = grid.node_to_free();
        for (std::size_t e = 0; e < ne; ++e) {
            const auto nodes = grid.element_nodes(e);
            const auto &g = grid.shape_gradients(e);
            for (int l = 0; l < 3; ++l) {
                const long f = map[nodes[l]];
                if (f < 0) continue;
                const Vec v = terms[e].stress * g[l];
                grad_free[2 * f] += scale * v.x;
                grad_free[2 * f + 1] += scale * v.y;
            }
        }
    }
    return scale * total;
}

double objective_free(const CellProblem &problem, std::span<const double> x, std::span<double> grad) {
    const FluctuationField phi = expand_from_free(problem.grid(), x);
    const auto &spec = problem.spec();
    return assemble_cell_average(problem, phi, grad, [&](std::size_t e, const Mat &A) {
        return eval_W_n(spec, problem.n(), problem.mu(e), A, problem.smoothing());
    });
}

ObjectiveValue objective_and_gradient(const CellProblem &problem, const FluctuationField &phi) {
    require_admissible(problem.grid(), phi);
    const auto x = restrict_to_free(problem.grid(), phi);
    std::vector<double> g(x.size());
    ObjectiveValue out;
    out.value = objective_free(problem, x, g);
    out.grad = expand_from_free(problem.grid(), g);
    if (problem.grid().boundary() == BoundaryCondition::periodic) {
        // Identified nodes share one dof; report the dof gradient at the representative only.
        const Grid &grid = problem.grid();
        const int N = grid.cells_per_edge();
        for (int j = 0; j <= N; ++j)
            for (int i = 0; i <= N; ++i)
                if (i == N || j == N) out.grad.set(grid.node_index(i, j), Vec{});
    }
    return out;
}

double cell_average_W_tilde(const CellProblem &problem, const FluctuationField &phi) {
    const auto &spec = problem.spec();
    return assemble_cell_average(problem, phi, {}, [&](std::size_t e, const Mat &A) {
        return eval_W_tilde(spec, problem.mu(e), A);
    });
}

std::vector<double> determinant_residuals(const CellProblem &problem, const FluctuationField &phi) {
    const Grid &grid = problem.grid();
    std::vector<double> r(grid.element_count());
    for (std::size_t e = 0; e < r.size(); ++e)
        r[e] = det(problem.F() + element_gradient(grid, phi, e)) - 1.0;
    return r;
}

double max_determinant_residual(const CellProblem &problem, const FluctuationField &phi) {
    double worst = 0.0;
    for (double v : determinant_residuals(problem, phi)) worst = std::max(worst, std::abs(v));
    return worst;
}

double null_lagrangian_residual(const CellProblem &problem, const FluctuationField &phi) {
    require_admissible(problem.grid(), phi);
    const Grid &grid = problem.grid();
    double sum = 0.0;
    for (std::size_t e = 0; e < grid.element_count(); ++e)
        sum += grid.element_area() * det(problem.F() + element_gradient(grid, phi, e));
    return std::abs(sum / grid.total_area() - det(problem.F()));
}

FluctuationField tile(const Grid &grid, const FluctuationField &phi, int factor) {
    if (factor < 1) throw std::invalid_argument("tiling factor must be a positive integer");
    require_admissible(grid, phi);
    const Grid big(grid.k() * factor, grid.m(), grid.boundary());
    const int N = grid.cells_per_edge(), NB = big.cells_per_edge();
    FluctuationField out(big);
    for (int J = 0; J <= NB; ++J)
        for (int I = 0; I <= NB; ++I) out.set(big.node_index(I, J), phi.at(grid.node_index(I % N, J % N)));
    return out;
}

FluctuationField prolong(const Grid &coarse, const FluctuationField &phi, const Grid &fine) {
    if (coarse.k() != fine.k() || coarse.boundary() != fine.boundary() || fine.m() % coarse.m() != 0)
        throw std::invalid_argument("prolongation needs the same k and a fine m that is a multiple of the coarse m");
    require_admissible(coarse, phi);
    FluctuationField out(fine);
    for (std::size_t n = 0; n < fine.node_count(); ++n)
        out.set(n, evaluate(coarse, phi, fine.node_position(n)).value);
    // Re-impose the boundary condition exactly.
    const int N = fine.cells_per_edge();
    const auto &map = fine.node_to_free();
    for (int j = 0; j <= N; ++j)
        for (int i = 0; i <= N; ++i) {
            const std::size_t n = fine.node_index(i, j);
            if (map[n] < 0) out.set(n, Vec{});
            else if (fine.boundary() == BoundaryCondition::periodic)
                out.set(n, out.at(fine.node_index(i % N, j % N)));
        }
    return out;
}

// ---------------------------------------------------------------------------
// I/O

void write_field_csv(std::ostream &os, const Grid &grid, const FluctuationField &phi) {
    const int N = grid.cells_per_edge();
    os << "node,i,j,x,y,phi_x,phi_y\n";
    char buf[256];
    for (std::size_t n = 0; n < grid.node_count(); ++n) {
        const Vec p = grid.node_position(n);
        const Vec v = phi.at(n);
        std::snprintf(buf, sizeof buf, "%zu,%d,%d,%.17g,%.17g,%.17g,%.17g\n", n, int(n % (N + 1)),
                      int(n / (N + 1)), p.x, p.y, v.x, v.y);
        os << buf;
    }
}

FluctuationField read_field_csv(std::istream &is, const Grid &grid) {
    std::string line;
    if (!std::getline(is, line) || line.rfind("node,", 0) != 0)
        throw std::runtime_error("field CSV: missing header");
    FluctuationField phi(grid);
    std::size_t count = 0;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::size_t node;
        int i, j;
        double x, y, vx, vy;
        if (std::sscanf(line.c_str(), "%zu,%d,%d,%lf,%lf,%lf,%lf", &node, &i, &j, &x, &y, &vx, &vy) != 7)
            throw std::runtime_error("field CSV: malformed row " + std::to_string(count + 2));
        if (node >= grid.node_count() || grid.node_index(i, j) != node)
            throw std::runtime_error("field CSV: node index out of range at row " + std::to_string(count + 2));
        phi.set(node, {vx, vy});
        ++count;
    }
    if (count != grid.node_count())
        throw std::runtime_error("field CSV: expected " + std::to_string(grid.node_count()) + " rows, got " +
                                 std::to_string(count));
    require_admissible(grid, phi);
    return phi;
}

namespace {
std::uint64_t to_le(std::uint64_t v) {
    if constexpr (std::endian::native == std::endian::big) return __builtin_bswap64(v);
    return v;
}
} // namespace

void write_field_binary(std::ostream &os, const FluctuationField &phi) {
    for (double v : phi.data) {
        const std::uint64_t u = to_le(std::bit_cast<std::uint64_t>(v));
        os.write(reinterpret_cast<const char *>(&u), sizeof u);
    }
}

FluctuationField read_field_binary(std::istream &is, const Grid &grid) {
    FluctuationField phi(grid);
    for (double &v : phi.data) {
        std::uint64_t u;
        if (!is.read(reinterpret_cast<char *>(&u), sizeof u))
            throw std::runtime_error("field binary: truncated input");
        v = std::bit_cast<double>(to_le(u));
    }
    if (is.peek() != std::char_traits<char>::eof()) throw std::runtime_error("field binary: trailing data");
    require_admissible(grid, phi);
    return phi;
}

} // namespace cellhom
