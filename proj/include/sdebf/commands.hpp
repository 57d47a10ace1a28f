#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace sdebf {

inline constexpr int kExitPass = 0;
inline constexpr int kExitCriterionFailed = 1;
inline constexpr int kExitError = 2;

// Names the default output directory when --out is not given.
inline constexpr const char* kOutDirEnv = "SDEBF_OUT_DIR";

struct CommandOptions {
    std::string config_path;
    std::optional<std::uint64_t> seed;     // overrides [study] seed
    std::optional<std::size_t> threads;    // overrides [study] threads
    std::string out_dir;                   // empty: $SDEBF_OUT_DIR, then "sdebf_out"
    bool dry_run = false;                  // validate the config, write the manifest only
};

std::string resolve_out_dir(const std::string& requested);

// Commands: simulate, select, kl, market. Writes <out>/manifest.json before anything
// else and again at the end. Returns kExitPass when the command's pass criterion
// holds, kExitCriterionFailed when it does not and kExitError on any error (the
// manifest then has status failed and the message).
int run_command(const std::string& command, const CommandOptions& options, std::ostream& log);

const std::vector<std::string>& command_names();

}  // namespace sdebf
