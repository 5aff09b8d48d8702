#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "cellhom/tensor.hpp"

namespace cellhom {

enum class PhaseKind { constant, laminate, checkerboard, inclusion };

/// Piecewise-constant, Y-periodic coefficient with Y = [-1/2, 1/2)^2.
struct PhaseField {
    PhaseKind kind = PhaseKind::constant;
    int axis = 0;        ///< laminate normal, 0 -> e1, 1 -> e2
    double theta = 0.5;  ///< laminate volume fraction of the high phase
    double radius = 0.25;
    double mu_low = 1.0;
    double mu_high = 1.0;

    friend bool operator==(const PhaseField &, const PhaseField &) = default;
};

enum class Model { neo_hookean_incompressible, adjugate_augmented };

/// A periodic stored-energy density W(y, F) together with its growth data.
struct EnergySpec {
    PhaseField phase;
    Model model = Model::neo_hookean_incompressible;
    double p = 2.0;
    double q = 1.0;
    double c = 1.0;

    /// Throws std::invalid_argument when an invariant is broken.
    void validate() const;
    double mu_max() const;
    bool homogeneous() const;

    friend bool operator==(const EnergySpec &, const EnergySpec &) = default;
};

std::string to_string(PhaseKind kind);
std::string to_string(Model model);
PhaseKind parse_phase_kind(const std::string &s);
Model parse_model(const std::string &s);

/// Coefficient at the periodic wrap of y.
double mu_at(const PhaseField &phase, Vec y);

struct EnergyEval {
    double value = 0.0;
    Mat grad;
};

/// The model formula itself, with no floor and no Σ restriction.
EnergyEval eval_model(const EnergySpec &spec, double mu, const Mat &F);

/// Finite extension: max{model, |F|^p / c - c, 0}. Ties go to the model branch.
EnergyEval eval_W_tilde(const EnergySpec &spec, double mu, const Mat &F);
EnergyEval eval_W_tilde(const EnergySpec &spec, Vec y, const Mat &F);

/// Truncated and penalized density
///   min{W̃(y,F), n(|F|^p + 1)} + n |det F - 1|,
/// with |x| replaced by sqrt(x^2 + δ^2) - δ when smoothing δ > 0.
EnergyEval eval_W_n(const EnergySpec &spec, double n, double mu, const Mat &F, double smoothing);
EnergyEval eval_W_n(const EnergySpec &spec, double n, Vec y, const Mat &F, double smoothing);

/// Random element of Σ: a product of 1..4 shears I + γ a⊗a^⊥ or stretches
/// diag(λ, 1/λ) in a random frame. Never leaves Σ beyond rounding.
struct SigmaSampler {
    double shear_range = 1.0;   ///< γ ~ U[-range, range]
    double log_stretch = 0.69314718055994531;  ///< ln λ ~ U[-v, v]
    int max_factors = 4;

    Mat operator()(std::mt19937_64 &rng) const;
};

Vec sample_cell_point(std::mt19937_64 &rng);

struct AssumptionViolation {
    std::string kind;  ///< "submultiplicative", "growth_lower" or "growth_upper"
    Vec y;
    Mat F;
    Mat G;
    double lhs = 0.0;
    double rhs = 0.0;
};

struct AssumptionReport {
    int sample_count = 0;
    double declared_c = 0.0;
    double min_c_submultiplicative = 1.0;  ///< smallest c with W(FG) <= c(1+W(F))(1+W(G))
    double min_c_growth = 1.0;             ///< smallest c with the two-sided p-growth bound
    double min_c = 1.0;
    std::size_t violation_count = 0;
    std::vector<AssumptionViolation> violations;  ///< first max_listed entries
};

/// Samples (y, F, G) with F, G ∈ Σ and measures the submultiplicative and
/// two-sided growth constants. `declared_c <= 0` means use spec.c.
AssumptionReport check_assumptions(const EnergySpec &spec, int sample_count, std::uint64_t seed,
                                   double declared_c = 0.0, std::size_t max_listed = 100);

} // namespace cellhom
