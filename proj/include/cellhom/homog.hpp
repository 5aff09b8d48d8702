#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "cellhom/solve.hpp"

namespace cellhom {

struct Schedule {
    std::vector<double> n_values{1, 4, 16, 64, 256, 1024};
    std::vector<int> k_values{1, 2, 3};
    std::vector<int> m_values{16, 32};
    int starts = 5;
    double perturbation_scale = 0.1;
    std::uint64_t seed = 0;
    SolverConfig solver;
    AlConfig al;
    double smoothing = 1e-8;
    BoundaryCondition boundary = BoundaryCondition::dirichlet;
    int threads = 1;

    void validate() const;
    friend bool operator==(const Schedule &, const Schedule &) = default;
};

/// One row of a sweep. Constrained-solver rows carry n = +inf.
struct HomogEntry {
    double n = 0.0;
    int k = 0;
    int m = 0;
    double value = 0.0;
    double grad_norm = 0.0;
    double constraint_residual = 0.0;
    int iterations = 0;
    bool converged = false;
    bool constrained = false;
    std::string diagnostic;
};

struct NkEstimate {
    double n;
    int k;
    double value;  ///< min over m
};

struct HomogReport {
    Mat F;
    bool off_sigma = false;
    std::vector<HomogEntry> entries;
    std::vector<NkEstimate> estimate_W_n_k;
    double estimate_underbar_W = 0.0;  ///< largest n, min over k (and m)
    double estimate_W_hom = 0.0;       ///< constrained, min over k at the largest m; +inf off Σ
    double commutation_gap = 0.0;      ///< estimate_W_hom - estimate_underbar_W
    double growth_lower_bound = 0.0;   ///< |F|/c - c
    bool n_monotone = true;
    bool k_subadditive = true;
    bool m_monotone = true;
    bool bound_ordering = true;
    bool growth_ok = true;
    bool divergence_ok = true;  ///< off Σ only: underbar-W ≥ n_max |det F - 1| / 2
    int nonconverged = 0;
};

/// Sweeps the schedule. Penalty solves are warm-started along n and seeded by
/// tiling (k' | k) and nested prolongation (m' | m); every candidate field is
/// itself a competitor, so the reported minima inherit the monotone structure.
HomogReport estimate(const EnergySpec &spec, const Mat &F, const Schedule &schedule,
                     bool allow_off_sigma = false);

void write_report_csv(std::ostream &os, const HomogReport &report);

struct CommutationReport {
    std::vector<double> n_values;
    std::vector<double> penalty_values;
    std::vector<double> gaps;  ///< constrained - penalty
    double constrained_value = 0.0;
    double constraint_residual = 0.0;
    double tolerance = 0.0;
    bool gap_ok = false;        ///< |gap(n_max)| ≤ tolerance·constrained
    bool gap_monotone = false;  ///< gap non-increasing within 1e-6
};

CommutationReport commutation_check(const EnergySpec &spec, const Mat &F, int k, int m,
                                    const std::vector<double> &n_values, const Schedule &schedule,
                                    double tolerance = 0.02);

/// Constrained cell estimate of W_hom at one (k, m), memoized by F.
class CellEstimator {
public:
    CellEstimator(EnergySpec spec, int k, int m, const Schedule &schedule);
    double operator()(const Mat &F);
    std::size_t evaluations() const { return cache_.size(); }
    double worst_residual() const { return worst_residual_; }

private:
    EnergySpec spec_;
    Grid grid_;
    Schedule schedule_;
    std::map<std::array<double, 4>, double> cache_;
    double worst_residual_ = 0.0;
};

struct RankOneSample {
    Mat A, B;
    double value_A = 0.0, value_B = 0.0, value_mid = 0.0;
    double excess = 0.0;  ///< value_mid - (value_A + value_B)/2
    bool violation = false;
};

struct ProbeSummary {
    int k = 1, m = 8;
    double tolerance = 0.0;
    int violations = 0;
    int skipped = 0;
};

struct RankOneReport : ProbeSummary {
    std::vector<RankOneSample> samples;
};

/// Rank-one segments [A, A + t a⊗b] inside Σ (a ⊥ cof(A) b), checked at the
/// midpoint against tolerance rel_tolerance·(1 + max value).
RankOneReport rank_one_probe(const EnergySpec &spec, int samples, const Schedule &schedule, std::uint64_t seed,
                             double rel_tolerance = 1e-3);

struct GrowthSample {
    Mat F;
    double value = 0.0;
    double bound = 0.0;
    double margin = 0.0;
};

struct GrowthReport : ProbeSummary {
    std::vector<GrowthSample> samples;
};

/// Checks W_hom(F) ≥ |F|/c - c on seeded F ∈ Σ with |F| ≤ 10.
GrowthReport growth_probe(const EnergySpec &spec, int samples, const Schedule &schedule, std::uint64_t seed);

/// Area-preserving piecewise-affine self-map v of the unit square with v = x
/// on the boundary: every point slides along its square loop |x - c|_∞ = r by
/// the arc length d(r), d piecewise linear with d = 0 at r = 0 and r = 1/2.
struct LoopTwist {
    std::vector<double> knots;  ///< radii, first 0 and last 1/2
    std::vector<double> shift;  ///< d at the knots

    struct Piece {
        Mat grad;       ///< ∇v on the piece, det = 1
        double weight;  ///< area
    };
    /// Exact list of gradient values with their areas (areas sum to 1).
    std::vector<Piece> pieces() const;
    Vec operator()(Vec x) const;

    static LoopTwist random(std::mt19937_64 &rng, double amplitude, int segments = 4);
};

struct QuasiconvexitySample {
    double lhs = 0.0;  ///< W_hom(F)
    double rhs = 0.0;  ///< Σ area · W_hom(F ∇v)
    int pieces = 0;
    bool violation = false;
};

struct QuasiconvexityReport : ProbeSummary {
    double value_F = 0.0;
    std::vector<QuasiconvexitySample> samples;
};

/// Jensen-type test W_hom(F) ≤ ⨏ W_hom(F + ∇φ) with φ = F(v - x) for seeded
/// loop twists v, so that every F + ∇φ = F ∇v lies in Σ exactly.
QuasiconvexityReport quasiconvexity_probe(const EnergySpec &spec, const Mat &F, int test_fields,
                                          const Schedule &schedule, std::uint64_t seed,
                                          double rel_tolerance = 1e-3, double amplitude = 0.25);

} // namespace cellhom
