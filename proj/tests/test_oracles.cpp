#include <doctest.h>

#include "oracles.hpp"

// Frozen values of the independent references.

TEST_CASE("Jensen reference") {
    CHECK(oracle::neo_hookean_extended(1.0, 2.0, {2.0, 0.0, 0.0, 0.5}) == doctest::Approx(1.125).epsilon(1e-15));
}

TEST_CASE("layer reference for the shear laminate") {
    const auto r = oracle::laminate_layers(10.0, 1.0, 0.5, 0.5, 10.0);
    // Closed form of the unfloored quadratic: (1.375 - 4.5^2 / (4 * 6.875)) / 2.
    CHECK(r.value == doctest::Approx(0.31931818181818183).epsilon(1e-9));
    CHECK(r.shear == doctest::Approx(-0.32727272727272727).epsilon(1e-6));
    // Affine competitor (t = 0) is worse.
    CHECK(r.value < 0.6875);
}
