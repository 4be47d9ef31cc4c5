#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "turbulink/cli/config.hpp"
#include "turbulink/cli/run.hpp"

int main(int argc, char** argv) {
    using namespace turbulink::cli;

    CLI::App app{"Temporal-mode entanglement over turbulent free-space links"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path;
    std::vector<std::string> overrides;
    std::string out_dir;
    RunOptions opt;
    app.add_option("-c,--config", config_path, "config file (default: $TURBULINK_CONFIG, then built-in defaults)");
    app.add_option("-s,--set", overrides, "override a key, e.g. --set turbulence.cn2=1e-16");
    app.add_option("-j,--threads", opt.threads, "worker threads")->check(CLI::Range(1, 256));
    app.add_option("-o,--out", out_dir, "output directory (overrides output.directory)");
    app.add_flag("--gnuplot-hints", opt.gnuplot_hints, "print column documentation for each CSV");
    app.add_flag("--json", opt.json, "print the summary as JSON");

    std::string command;
    for (const auto& name : subcommands())
        app.add_subcommand(name, "run the " + name + " recipe")->callback([&command, name] { command = name; });
    std::string target;
    auto* sweep = app.add_subcommand("sweep", "evaluate a target over the Cartesian product of [sweep] axes");
    sweep->add_option("target", target, "beam, schmidt or tmatrix")->required();
    sweep->callback([&command] { command = "sweep"; });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kExitConfig;
    }

    RunConfig cfg;
    try {
        cfg = load_config(config_path);
        if (!out_dir.empty()) overrides.push_back("output.directory=\"" + out_dir + "\"");
        cfg = apply_overrides(cfg, overrides);
    } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    }

    if (command == "sweep") return run_sweep(target, cfg, opt, std::cout, std::cerr);
    return run_subcommand(command, cfg, opt, std::cout, std::cerr);
}
