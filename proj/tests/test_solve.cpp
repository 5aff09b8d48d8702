#include <doctest.h>

#include <random>

#include "cellhom/solve.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace cellhom;

TEST_CASE("lbfgs minimizes a quadratic") {
    const FlatObjective f = [](std::span<const double> x, std::span<double> g) {
        double v = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double w = double(i + 1);
            v += 0.5 * w * (x[i] - 1.0) * (x[i] - 1.0);
            g[i] = w * (x[i] - 1.0);
        }
        return v;
    };
    SolverConfig cfg;
    const auto out = lbfgs(f, std::vector<double>(8, 0.0), cfg);
    CHECK(out.converged);
    for (double v : out.x) CHECK(v == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("solver config validation") {
    SolverConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    cfg.c2 = cfg.c1 / 2;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    AlConfig al;
    al.penalty_growth = 0.5;
    CHECK_THROWS_AS(al.validate(), std::invalid_argument);
}

TEST_CASE("identity is a global minimizer with value zero") {
    const CellProblem prob(fixtures::laminate(), Mat::identity(), 16.0, Grid(1, 8));
    const auto r = multistart(prob, SolverConfig{}, 3, 0.1, 1);
    CHECK(r.value == doctest::Approx(0.0).scale(1.0));
}

TEST_CASE("homogeneous Jensen case returns the affine value") {
    const Mat F = Mat::diag(2.0, 0.5);
    const double expected = oracle::neo_hookean_extended(1.0, 2.0, F.a);
    const CellProblem prob(fixtures::homogeneous(), F, 64.0, Grid(1, 8));
    const auto r = multistart(prob, SolverConfig{}, 3, 0.1, 7);
    CHECK(r.value == doctest::Approx(expected).epsilon(1e-6));
    CHECK(r.phi.max_abs() <= 1e-4);

    std::mt19937_64 rng(3);
    const auto start = fixtures::random_field(prob.grid(), rng, 0.02);
    const auto m = minimize(prob, start, SolverConfig{});
    CHECK(m.value == doctest::Approx(expected).epsilon(1e-6));

    const auto c = solve_constrained(prob.with_mode(ConstraintMode::exact), SolverConfig{}, AlConfig{});
    CHECK(c.value == doctest::Approx(expected).epsilon(1e-6));
    CHECK(c.constraint_residual <= 1e-6);
}

TEST_CASE("a single start is a plain minimization from zero") {
    const CellProblem prob(fixtures::laminate(), fixtures::laminate_F(), 4.0, Grid(1, 4));
    const auto a = multistart(prob, SolverConfig{}, 1, 0.1, 5);
    const auto b = minimize(prob, FluctuationField(prob.grid()), SolverConfig{});
    CHECK(a.value == b.value);
    CHECK(a.phi.data == b.phi.data);
}

TEST_CASE("multistart is deterministic") {
    const CellProblem prob(fixtures::laminate(), fixtures::laminate_F(), 16.0, Grid(1, 4));
    const auto a = multistart(prob, SolverConfig{}, 4, 0.2, 99);
    const auto b = multistart(prob, SolverConfig{}, 4, 0.2, 99);
    CHECK(a.value == b.value);
    CHECK(a.phi.data == b.phi.data);
    CHECK(a.iterations == b.iterations);
}

TEST_CASE("perturbed starts agree in the homogeneous case") {
    const CellProblem prob(fixtures::homogeneous(), Mat::diag(1.2, 1.0 / 1.2), 64.0, Grid(1, 6));
    const auto a = multistart(prob, SolverConfig{}, 1, 0.0, 1);
    std::mt19937_64 rng(4);
    for (int t = 0; t < 3; ++t) {
        const auto b = minimize(prob, fixtures::random_field(prob.grid(), rng, 0.02), SolverConfig{});
        CHECK(b.value == doctest::Approx(a.value).epsilon(1e-8));
    }
}

TEST_CASE("constrained solve rejects penalty mode and off-Σ data") {
    const CellProblem pen(fixtures::laminate(), Mat::identity(), 4.0, Grid(1, 4));
    CHECK_THROWS_AS(solve_constrained(pen, SolverConfig{}, AlConfig{}), std::invalid_argument);
    const CellProblem off(fixtures::laminate(), Mat::diag(2.0, 1.0), 4.0, Grid(1, 4), 1e-8, ConstraintMode::exact);
    CHECK_THROWS_AS(solve_constrained(off, SolverConfig{}, AlConfig{}), std::invalid_argument);
}

TEST_CASE("projection restores det = 1") {
    std::mt19937_64 rng(8);
    const CellProblem prob(fixtures::laminate(), fixtures::laminate_F(), 4.0, Grid(1, 8), 1e-8, ConstraintMode::exact);
    const auto phi = fixtures::random_field(prob.grid(), rng, 0.005);
    CHECK(max_determinant_residual(prob, phi) > 1e-4);
    const auto pr = project_incompressible(prob, phi);
    CHECK(pr.converged);
    CHECK(max_determinant_residual(prob, pr.phi) <= 1e-10);
    CHECK(is_admissible(prob.grid(), pr.phi));
}

TEST_CASE("laminate constrained value sits between the layer oracle and the affine value") {
    const auto layers = oracle::laminate_layers(10.0, 1.0, 0.5, 0.5, 10.0);
    const CellProblem prob(fixtures::laminate(), fixtures::laminate_F(), 1.0, Grid(1, 8), 1e-8, ConstraintMode::exact);
    const auto r = solve_constrained(prob, SolverConfig{}, AlConfig{});
    const double affine = cell_average_W_tilde(prob, FluctuationField(prob.grid()));
    CHECK(r.value <= affine + 1e-8);
    CHECK(r.value >= layers.value - 1e-8);
}
