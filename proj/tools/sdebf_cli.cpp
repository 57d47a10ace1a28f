#include <iostream>

#include "CLI11.hpp"

#include "sdebf/commands.hpp"
#include "sdebf/io.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Bayes-factor model and covariate selection for SDEs with known diffusion"};
    app.set_version_flag("--version", sdebf::version());
    app.require_subcommand(1);

    sdebf::CommandOptions options;
    std::uint64_t seed = 0;
    std::size_t threads = 0;
    const std::vector<std::pair<std::string, std::string>> commands{
        {"simulate", "Write simulated paths, covariate panels and the truth record"},
        {"select", "Run a selection study and write its report"},
        {"kl", "Minimize the Kullback-Leibler divergence over a parameter grid"},
        {"market", "Fit SDE families and select covariates for price series"},
    };
    for (const auto& [name, help] : commands) {
        auto* sub = app.add_subcommand(name, help);
        sub->add_option("--config", options.config_path, "Config file")->required();
        sub->add_option("--seed", seed, "Base seed (overrides [study] seed)");
        sub->add_option("--out", options.out_dir,
                        std::string("Output directory (default $") + sdebf::kOutDirEnv + " or sdebf_out)");
        sub->add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);
        sub->add_flag("--dry-run", options.dry_run, "Validate the config and write the manifest only");
    }

    CLI11_PARSE(app, argc, argv);

    const auto* sub = app.get_subcommands().front();
    if (sub->count("--seed") > 0) options.seed = seed;
    if (sub->count("--threads") > 0) options.threads = threads;
    return sdebf::run_command(sub->get_name(), options, std::cout);
}
