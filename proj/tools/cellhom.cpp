// Command-line front end: cellhom <command> --config <path> [options].

#include <cstdint>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "cellhom/config.hpp"

int main(int argc, char **argv) {
    CLI::App app{"Cell-problem solver for incompressible periodic homogenization"};
    app.set_version_flag("--version", cellhom::version_string);

    std::string command, config_path, out_dir;
    std::uint64_t seed = 0;
    int threads = 0;
    bool allow_off_sigma = false, strict = false;
    app.add_option("command", command, "cell | homogenize | recover | check")
        ->required()
        ->check(CLI::IsMember({"cell", "homogenize", "recover", "check"}));
    app.add_option("--config", config_path, "configuration file")->required();
    auto *out_opt = app.add_option("--out", out_dir, "output directory (overrides output_dir)");
    auto *seed_opt = app.add_option("--seed", seed, "random seed (overrides seed)");
    auto *threads_opt =
        app.add_option("--threads", threads, "worker threads (overrides threads)")->check(CLI::PositiveNumber);
    app.add_flag("--allow-off-sigma", allow_off_sigma, "accept det F ≠ 1 for the divergence demonstration");
    app.add_flag("--strict", strict, "exit 2 when any solve fails to converge");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 3;
    }

    cellhom::RunConfig config;
    try {
        config = cellhom::load_config(config_path, allow_off_sigma);
    } catch (const std::exception &e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    config.command = cellhom::parse_command(command);
    if (*out_opt) config.output_dir = out_dir;
    if (*seed_opt) config.schedule.seed = seed;
    if (*threads_opt) config.schedule.threads = threads;
    if (strict) config.strict = true;
    return cellhom::execute(config, std::cout);
}
