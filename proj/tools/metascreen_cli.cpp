#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "ms/commands.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Design and verification toolkit for two-sided acoustic metascreens"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path;
    std::vector<double> freqs;
    std::string out_dir, cache_dir;
    std::uint64_t seed_value = 0;
    bool strict = false;
    app.add_option("--config", config_path, "JSON config file (flags override it)");
    app.add_option("--freq", freqs, "Frequencies in Hz (comma separated)")->delimiter(',');
    app.add_option("--out", out_dir, "Output directory root");
    auto* seed_opt = app.add_option("--seed", seed_value, "Phase-initialization seed");
    app.add_option("--cache", cache_dir, "Cell-table cache directory");
    app.add_flag("--strict", strict, "Reject inputs that would otherwise be adapted");

    app.add_subcommand("sweep", "Build the cell response table and coverage report");
    app.add_subcommand("design", "Design and verify a line-array metascreen");
    app.add_subcommand("hologram", "Design and verify a two-sided hologram panel");
    app.add_subcommand("propagate", "Propagate a sampled field between planes");

    CLI11_PARSE(app, argc, argv);

    ms::CliOverrides overrides;
    if (!freqs.empty()) overrides.freqs = freqs;
    if (!out_dir.empty()) overrides.out_dir = out_dir;
    if (seed_opt->count() > 0) overrides.seed = seed_value;
    if (!cache_dir.empty()) overrides.cache_dir = cache_dir;
    overrides.strict = strict;

    try {
        const nlohmann::json config = ms::load_config_file(config_path);
        if (app.got_subcommand("sweep")) return ms::cmd_sweep(config, overrides, std::cout);
        if (app.got_subcommand("design")) return ms::cmd_design(config, overrides, std::cout);
        if (app.got_subcommand("hologram")) return ms::cmd_hologram(config, overrides, std::cout);
        return ms::cmd_propagate(config, overrides, std::cout);
    } catch (const std::exception& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        return 1;
    }
}
