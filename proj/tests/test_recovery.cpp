#include <doctest.h>

#include <sstream>

#include "cellhom/recovery.hpp"
#include "fixtures.hpp"

using namespace cellhom;

namespace {

RecoveryOptions small_options() {
    RecoveryOptions o;
    o.schedule.k_values = {1};
    o.schedule.m_values = {4};
    o.schedule.n_values = {16};
    o.schedule.starts = 1;
    o.eps_values = {0.5, 0.25};
    return o;
}

} // namespace

TEST_CASE("macro deformations") {
    const auto a = MacroDeformation::affine(fixtures::laminate_F());
    CHECK_NOTHROW(a.validate());
    CHECK(a.locate({0.3, 0.4}) == 0);
    CHECK(norm(a.value({0.2, 0.6}) - fixtures::laminate_F() * Vec{0.2, 0.6}) < 1e-15);

    for (int axis : {0, 1}) {
        const auto l = MacroDeformation::rank_one_laminate(fixtures::laminate_F(), axis, 0.4, 0.5);
        CHECK_NOTHROW(l.validate());
        CHECK(det(l.pieces[1].F) == doctest::Approx(1.0).epsilon(1e-14));
        CHECK(l.pieces[0].area() + l.pieces[1].area() == doctest::Approx(1.0));
    }

    auto bad = MacroDeformation::affine(Mat::diag(2.0, 1.0));
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

    auto broken = MacroDeformation::rank_one_laminate(Mat::identity(), 0, 0.5, 0.5);
    broken.pieces[1].b = Vec{0.1, 0.0};
    CHECK_THROWS_AS(broken.validate(), std::invalid_argument);
    broken = MacroDeformation::rank_one_laminate(Mat::identity(), 0, 0.5, 0.5);
    broken.pieces[1].F = Mat::diag(2.0, 0.5);
    CHECK_THROWS_AS(broken.validate(), std::invalid_argument);
}

TEST_CASE("zero corrector leaves u unchanged") {
    const auto u = MacroDeformation::affine(fixtures::laminate_F());
    Corrector c;
    c.F = fixtures::laminate_F();
    c.k = 1;
    c.m = 4;
    c.phi = FluctuationField(c.grid());
    for (Vec x : {Vec{0.1, 0.2}, Vec{0.5, 0.5}, Vec{0.93, 0.07}}) {
        const ZValue z = evaluate_z_eps(u, {c}, 0.25, x);
        CHECK(norm(z.z - u.value(x)) < 1e-14);
        CHECK(max_abs(z.grad - c.F) < 1e-14);
    }
}

TEST_CASE("homogeneous affine recovery reproduces the affine energy") {
    const Mat F = Mat::diag(2.0, 0.5);
    const auto rep = limsup_experiment(fixtures::homogeneous(), MacroDeformation::affine(F), small_options());
    REQUIRE(rep.rows.size() == 2);
    for (const auto &row : rep.rows) {
        CHECK(row.energy == doctest::Approx(1.125).epsilon(1e-6));
        CHECK(row.det_residual <= 1e-10);
    }
    CHECK(rep.energy_ok);
    CHECK(rep.det_ok);
    CHECK(rep.boundary_ok);
    std::ostringstream os;
    write_recovery_csv(os, rep);
    CHECK(os.str().rfind("eps,energy,bound,det_residual,l1_distance,uncovered_fraction\n", 0) == 0);
}

TEST_CASE("laminate recovery keeps det = 1 and the boundary") {
    const auto u = MacroDeformation::rank_one_laminate(fixtures::laminate_F(), 0, 0.5, 0.25);
    const auto rep = limsup_experiment(fixtures::laminate(), u, small_options());
    CHECK(rep.correctors.size() == 2);
    CHECK(rep.det_ok);
    CHECK(rep.boundary_ok);
    CHECK(rep.coverage_ok);
    for (const auto &row : rep.rows) CHECK(row.energy <= row.bound + rep.slack + 0.02 * row.bound);
}

TEST_CASE("coarse quadrature is a sizing error") {
    RecoveryOptions o = small_options();
    o.quadrature_per_eps = 3;
    CHECK_THROWS_AS(limsup_experiment(fixtures::laminate(), MacroDeformation::affine(Mat::identity()), o), SizingError);
}
