#include <doctest.h>

#include <string>

#include "cellhom/config.hpp"

using namespace cellhom;

namespace {

const char *const laminate_text = R"(# shear on a two-phase laminate
command = "homogenize"
seed = 42
threads = 1
F = [[1.0, 0.5],
     [0.0, 1.0]]

[spec]
model = "neo-hookean-incompressible"
c = 10

[spec.phase]
kind = "laminate"
axis = 1
theta = 0.5
mu_low = 1
mu_high = 10

[schedule]
n_values = [1, 4, 16]   # truncation levels
k_values = [1, 2]
m_values = [8]
)";

} // namespace

TEST_CASE("empty text gives the defaults") {
    const RunConfig c = parse_config("");
    CHECK(c == RunConfig{});
    CHECK(c.command == Command::homogenize);
    CHECK(c.F == Mat::identity());
}

TEST_CASE("a laminate config parses") {
    const RunConfig c = parse_config(laminate_text);
    CHECK(c.schedule.seed == 42);
    CHECK(c.F == Mat{1.0, 0.5, 0.0, 1.0});
    CHECK(c.spec.phase.kind == PhaseKind::laminate);
    CHECK(c.spec.phase.axis == 0);
    CHECK(c.spec.phase.mu_high == 10.0);
    CHECK(c.spec.c == 10.0);
    CHECK(c.schedule.n_values == std::vector<double>{1, 4, 16});
    CHECK(c.schedule.k_values == std::vector<int>{1, 2});
}

TEST_CASE("serialization round trips") {
    RunConfig c = parse_config(laminate_text);
    c.command = Command::recover;
    c.recovery.macro = "laminate";
    c.recovery.eps_values = {0.5, 0.1};
    c.cell.field_output = "out \"phi\".csv";
    c.cell.mode = ConstraintMode::exact;
    c.schedule.smoothing = 1.0 / 3.0;
    c.schedule.solver.continuation = false;
    c.schedule.boundary = BoundaryCondition::periodic;
    const std::string text = serialize_config(c);
    CHECK(parse_config(text) == c);
    CHECK(serialize_config(parse_config(text)) == text);
    CHECK(parse_config(serialize_config(RunConfig{})) == RunConfig{});
}

TEST_CASE("det F ≠ 1 is rejected unless opted in") {
    const std::string text = "F = [[2.0, 0.0], [0.0, 1.0]]\n";
    CHECK_THROWS_WITH_AS(parse_config(text), doctest::Contains("det F ≠ 1"), ConfigError);
    const RunConfig c = parse_config(text, true);
    CHECK(c.allow_off_sigma);
    CHECK_NOTHROW(parse_config("allow_off_sigma = true\n" + text));
}

TEST_CASE("diagnostics name the line") {
    CHECK_THROWS_WITH_AS(parse_config("seed = 1\nbogus = 2\n"), doctest::Contains("line 2"), ConfigError);
    CHECK_THROWS_WITH_AS(parse_config("seed = 1\nseed = 2\n"), doctest::Contains("duplicate"), ConfigError);
    CHECK_THROWS_WITH_AS(parse_config("[spec]\np = \"two\"\n"), doctest::Contains("line 2"), ConfigError);
    CHECK_THROWS_AS(parse_config("[spec\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("seed\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("threads = 1.5\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("F = [[1, 0], [0]]\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("[schedule]\nk_values = [2, 1]\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("[spec.phase]\nkind = \"stripes\"\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("[spec.phase]\naxis = 3\nkind = \"laminate\"\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("[recovery]\neps_values = [0.1, 0.2]\n"), ConfigError);
    CHECK_THROWS_AS(load_config("/nonexistent/config.toml"), ConfigError);
}

TEST_CASE("commands") {
    for (Command c : {Command::cell, Command::homogenize, Command::recover, Command::check})
        CHECK(parse_command(to_string(c)) == c);
    CHECK_THROWS(parse_command("solve"));
    CHECK(std::string(version_string).find("1.0.0") != std::string::npos);
}
