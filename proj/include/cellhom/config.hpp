#pragma once

#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "cellhom/homog.hpp"
#include "cellhom/recovery.hpp"

namespace cellhom {

enum class Command { cell, homogenize, recover, check };
std::string to_string(Command c);
Command parse_command(const std::string &s);

enum class FieldFormat { csv, binary };

struct CellSettings {
    double n = 64.0;
    int k = 1;
    int m = 16;
    ConstraintMode mode = ConstraintMode::penalty;
    std::string field_input;   ///< optional warm start
    std::string field_output;  ///< optional export of the minimizer
    FieldFormat field_format = FieldFormat::csv;

    friend bool operator==(const CellSettings &, const CellSettings &) = default;
};

struct RecoverySettings {
    std::string macro = "affine";  ///< "affine" or "laminate"
    int axis = 0;                  ///< laminate interface normal (0 -> e1)
    double offset = 0.5;
    double amplitude = 0.5;
    double eta = 0.05;
    bool eta_relative = true;
    std::vector<double> eps_values{0.25, 0.125, 0.0625};
    int quadrature_per_eps = 0;

    friend bool operator==(const RecoverySettings &, const RecoverySettings &) = default;
};

struct CheckSettings {
    int assumption_samples = 2000;
    int null_lagrangian_fields = 100;
    int gradient_instances = 20;
    int growth_samples = 50;
    int rank_one_samples = 20;
    int quasiconvexity_fields = 5;
    int probe_k = 1;
    int probe_m = 8;

    friend bool operator==(const CheckSettings &, const CheckSettings &) = default;
};

struct RunConfig {
    Command command = Command::homogenize;
    EnergySpec spec;
    Mat F = Mat::identity();
    Schedule schedule;  ///< also carries the seed and the thread count
    CellSettings cell;
    RecoverySettings recovery;
    CheckSettings check;
    std::string output_dir = ".";
    bool allow_off_sigma = false;
    bool strict = false;

    /// Throws ConfigError for any broken invariant, including det F ≠ 1
    /// without allow_off_sigma.
    void validate() const;

    friend bool operator==(const RunConfig &, const RunConfig &) = default;
};

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Parses the sectioned key = value format documented in the README. Unknown
/// keys, duplicates and malformed values are errors naming the line.
/// `allow_off_sigma` forces the divergence-demo flag on before validation.
RunConfig parse_config(const std::string &text, bool allow_off_sigma = false);
RunConfig load_config(const std::string &path, bool allow_off_sigma = false);
/// Emits every field, so parse_config(serialize_config(c)) == c.
std::string serialize_config(const RunConfig &config);

/// Runs the configured command, writes its JSON report and CSV tables into
/// output_dir, and returns the exit status: 0 success, 1 failed check,
/// 2 non-convergence under strict, 3 configuration, I/O or precondition error.
int execute(const RunConfig &config, std::ostream &log);

extern const char *const version_string;

} // namespace cellhom
