#include <doctest.h>

#include <random>
#include <sstream>

#include "cellhom/cell.hpp"
#include "fixtures.hpp"

using namespace cellhom;

TEST_CASE("grid counts and geometry") {
    const Grid g(2, 4);
    CHECK(g.node_count() == 81);
    CHECK(g.element_count() == 128);
    CHECK(g.free_node_count() == 49);
    CHECK(g.element_count() * g.element_area() == doctest::Approx(g.total_area()));
    CHECK(g.node_position(0) == Vec{-1.0, -1.0});
    CHECK(g.node_position(80) == Vec{1.0, 1.0});
    CHECK(g.on_boundary(g.node_index(0, 3)));
    CHECK_FALSE(g.on_boundary(g.node_index(3, 3)));
    CHECK(g.microstructure_offset() == Vec{0.5, 0.5});
    CHECK_THROWS_AS(Grid(0, 4), std::invalid_argument);

    const Grid p(1, 4, BoundaryCondition::periodic);
    CHECK(p.free_node_count() == 15);
    CHECK(p.node_to_free()[p.node_index(4, 2)] == p.node_to_free()[p.node_index(0, 2)]);
}

TEST_CASE("shape gradients reproduce affine fields") {
    const Grid g(1, 3);
    const Mat G{0.3, -1.2, 0.7, 2.0};
    FluctuationField phi(g);
    for (std::size_t n = 0; n < g.node_count(); ++n) phi.set(n, G * g.node_position(n));
    for (std::size_t e = 0; e < g.element_count(); ++e) CHECK(max_abs(element_gradient(g, phi, e) - G) < 1e-12);
    const PointValue pv = evaluate(g, phi, {0.123, -0.321});
    CHECK(norm(pv.value - G * Vec{0.123, -0.321}) < 1e-12);
    const auto loc = g.locate({0.1, 0.2});
    CHECK(loc.weights[0] + loc.weights[1] + loc.weights[2] == doctest::Approx(1.0));
}

TEST_CASE("zero field gives the macroscopic density") {
    const EnergySpec s = fixtures::homogeneous();
    const Mat F = Mat::diag(2.0, 0.5);
    const CellProblem prob(s, F, 64.0, Grid(1, 8), 0.0);
    const auto ov = objective_and_gradient(prob, FluctuationField(prob.grid()));
    CHECK(ov.value == doctest::Approx(eval_W_n(s, 64.0, 1.0, F, 0.0).value));
    CHECK(ov.grad.max_abs() < 1e-12);
    CHECK(cell_average_W_tilde(prob, FluctuationField(prob.grid())) == doctest::Approx(1.125));
}

TEST_CASE("objective gradient matches central differences") {
    std::mt19937_64 rng(21);
    const CellProblem prob(fixtures::laminate(), fixtures::laminate_F(), 16.0, Grid(1, 6), 1e-3);
    const FluctuationField phi = fixtures::random_field(prob.grid(), rng, 0.05);
    auto x = restrict_to_free(prob.grid(), phi);
    std::vector<double> g(x.size());
    objective_free(prob, x, g);
    std::uniform_int_distribution<std::size_t> pick(0, x.size() - 1);
    const double h = 1e-6;
    for (int t = 0; t < 10; ++t) {
        const std::size_t i = pick(rng);
        const double x0 = x[i];
        x[i] = x0 + h;
        const double fp = objective_free(prob, x, {});
        x[i] = x0 - h;
        const double fm = objective_free(prob, x, {});
        x[i] = x0;
        CHECK((fp - fm) / (2 * h) == doctest::Approx(g[i]).epsilon(1e-5).scale(1e-3));
    }
}

TEST_CASE("inadmissible fields are rejected") {
    const Grid g(1, 4);
    FluctuationField phi(g);
    phi.set(g.node_index(0, 2), {0.1, 0.0});
    CHECK_FALSE(is_admissible(g, phi));
    CHECK_THROWS_AS(require_admissible(g, phi), std::invalid_argument);
    const CellProblem prob(fixtures::laminate(), Mat::identity(), 4.0, g);
    CHECK_THROWS_AS(objective_and_gradient(prob, phi), std::invalid_argument);
    CHECK_THROWS_AS(objective_and_gradient(prob, FluctuationField(Grid(1, 5))), std::invalid_argument);
    CHECK_THROWS_AS(CellProblem(fixtures::laminate(), Mat::identity(), 0.0, g), std::invalid_argument);
}

TEST_CASE("null Lagrangian holds for random fields") {
    std::mt19937_64 rng(22);
    const CellProblem prob(fixtures::laminate(), Mat::diag(2.0, 0.5), 1.0, Grid(1, 16));
    for (int t = 0; t < 100; ++t) {
        const auto phi = fixtures::random_field(prob.grid(), rng, 0.2);
        CHECK(null_lagrangian_residual(prob, phi) <= 1e-10);
    }
}

TEST_CASE("tiling preserves the cell average") {
    std::mt19937_64 rng(23);
    const CellProblem prob(fixtures::laminate(), fixtures::laminate_F(), 16.0, Grid(1, 8), 1e-8);
    const auto phi = fixtures::random_field(prob.grid(), rng, 0.05);
    const double base = objective_and_gradient(prob, phi).value;
    for (int r : {2, 3}) {
        const Grid big(r, 8);
        const CellProblem bp(prob.spec(), prob.F(), prob.n(), big, prob.smoothing());
        const auto tiled = tile(prob.grid(), phi, r);
        CHECK(is_admissible(big, tiled));
        CHECK(objective_and_gradient(bp, tiled).value == doctest::Approx(base).epsilon(1e-12));
    }
}

TEST_CASE("prolongation is exact on the coarse field") {
    std::mt19937_64 rng(24);
    const Grid coarse(2, 4), fine(2, 8);
    const auto phi = fixtures::random_field(coarse, rng, 0.1);
    const auto up = prolong(coarse, phi, fine);
    CHECK(is_admissible(fine, up));
    const CellProblem pc(fixtures::laminate(), fixtures::laminate_F(), 4.0, coarse, 0.0);
    const CellProblem pf(fixtures::laminate(), fixtures::laminate_F(), 4.0, fine, 0.0);
    CHECK(null_lagrangian_residual(pf, up) <= 1e-12);
    // W̃ of the homogeneous part is piecewise constant on coarse elements, so
    // the homogeneous-spec averages agree.
    const CellProblem hc(fixtures::homogeneous(), Mat::identity(), 4.0, coarse, 0.0);
    const CellProblem hf(fixtures::homogeneous(), Mat::identity(), 4.0, fine, 0.0);
    CHECK(objective_and_gradient(hf, up).value == doctest::Approx(objective_and_gradient(hc, phi).value).epsilon(1e-12));
    CHECK_THROWS_AS(prolong(coarse, phi, Grid(2, 6)), std::invalid_argument);
}

TEST_CASE("field I/O round trips") {
    std::mt19937_64 rng(25);
    const Grid g(2, 3);
    const auto phi = fixtures::random_field(g, rng, 1.0);

    std::stringstream csv;
    write_field_csv(csv, g, phi);
    CHECK(read_field_csv(csv, g).data == phi.data);

    std::stringstream bin(std::ios::in | std::ios::out | std::ios::binary);
    write_field_binary(bin, phi);
    CHECK(read_field_binary(bin, g).data == phi.data);

    std::stringstream wrong;
    write_field_csv(wrong, g, phi);
    CHECK_THROWS(read_field_csv(wrong, Grid(1, 3)));
    std::stringstream bad("node,i,j,x,y,phi_x,phi_y\n0,0,0,nope\n");
    CHECK_THROWS(read_field_csv(bad, g));
    std::stringstream shortbin(std::string(16, '\0'));
    CHECK_THROWS(read_field_binary(shortbin, g));
}

TEST_CASE("periodic fields tile and pin one corner") {
    std::mt19937_64 rng(26);
    const Grid g(1, 4, BoundaryCondition::periodic);
    const auto phi = fixtures::random_field(g, rng, 0.1);
    CHECK(is_admissible(g, phi));
    CHECK(phi.at(g.node_index(4, 1)) == phi.at(g.node_index(0, 1)));
    CHECK(phi.at(0) == Vec{});
    const CellProblem prob(fixtures::laminate(), Mat::diag(2.0, 0.5), 1.0, g);
    CHECK(null_lagrangian_residual(prob, phi) <= 1e-12);
}

TEST_CASE("off Σ the zero field pays the full penalty") {
    const CellProblem prob(fixtures::laminate(), Mat::diag(2.0, 1.0), 10.0, Grid(1, 4), 0.0);
    CHECK(prob.off_sigma());
    CHECK(objective_and_gradient(prob, FluctuationField(prob.grid())).value >= 10.0);
}
