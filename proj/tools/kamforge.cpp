#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "kamforge/cli.hpp"

int main(int argc, char** argv) {
    using namespace kamforge;
    CLI::App app{"kamforge: KAM iteration for Hamiltonians with degenerate normal directions"};
    std::string config_path, command, out_dir;
    std::optional<std::uint64_t> seed;
    std::optional<int> max_steps;
    bool quiet = false, print_schema = false;
    app.add_option("command", command, "run | measure | lattice | counterexample | selftest (overrides the config)")
        ->check(CLI::IsMember({"run", "measure", "lattice", "counterexample", "selftest"}));
    app.add_option("--config", config_path, "configuration file");
    app.add_option("--out", out_dir, "output directory (overrides out_dir)");
    app.add_option("--seed", seed, "seed for sampled checks (overrides seed)");
    app.add_option("--max-steps", max_steps, "number of KAM steps (overrides nu_max)")->check(CLI::NonNegativeNumber);
    app.add_flag("--quiet", quiet, "no summary on stdout");
    app.add_flag("--print-schema", print_schema, "list the configuration keys with their defaults");
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? exit_code::ok : exit_code::usage;
    }
    if (print_schema) {
        write_schema(std::cout);
        return exit_code::ok;
    }
    run_config cfg;
    try {
        if (config_path.empty()) {
            if (command != "selftest") {
                std::cerr << "config: --config is required except for selftest\n";
                return exit_code::usage;
            }
            cfg = parse_config_text("schema_version = 1\ncommand = selftest\n");
        } else {
            cfg = parse_config(std::filesystem::path(config_path));
        }
        if (!command.empty()) cfg.command = command;
        if (!out_dir.empty()) cfg.out_dir = out_dir;
        if (seed) cfg.seed = *seed;
        if (max_steps) cfg.nu_max = *max_steps;
        validate(cfg);
    } catch (const kam_error& e) {
        std::cerr << e.what() << '\n';
        return exit_code_for(e.kind());
    }
    if (const char* env = std::getenv("KAMFORGE_THREADS"); env && !quiet) {
        std::cout << "worker cap " << env << " from KAMFORGE_THREADS\n";
    }
    try {
        return execute(cfg, {quiet});
    } catch (const std::exception& e) {
        std::cerr << "internal: " << e.what() << '\n';
        return exit_code::internal;
    }
}
