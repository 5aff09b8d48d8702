#pragma once

#include <random>
#include <vector>

#include "cellhom/cell.hpp"

namespace fixtures {

inline cellhom::EnergySpec laminate() {
    cellhom::EnergySpec s;
    s.phase = {cellhom::PhaseKind::laminate, 0, 0.5, 0.25, 1.0, 10.0};
    s.c = 10.0;
    return s;
}

inline cellhom::EnergySpec homogeneous() {
    cellhom::EnergySpec s;
    s.c = 2.0;
    return s;
}

inline cellhom::Mat laminate_F() { return {1.0, 0.5, 0.0, 1.0}; }

/// Seeded admissible field with free values in [-amp, amp].
inline cellhom::FluctuationField random_field(const cellhom::Grid &g, std::mt19937_64 &rng, double amp) {
    std::uniform_real_distribution<double> u(-amp, amp);
    std::vector<double> x(2 * g.free_node_count());
    for (auto &v : x) v = u(rng);
    return cellhom::expand_from_free(g, x);
}

} // namespace fixtures
