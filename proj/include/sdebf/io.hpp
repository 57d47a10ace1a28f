#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "sdebf/sde.hpp"

namespace sdebf {

std::string version();

// Shortest text that round-trips: %.17g.
std::string format_real(double v);

// `t,x` rows.
std::string path_csv(const Path& path);
// `t,z1,...,zp` rows of the raw (standardized) covariate values.
std::string panel_csv(const CovariatePanel& panel);

// Creates parent directories; throws IoError.
void write_file(const std::string& path, const std::string& content);
std::string read_file(const std::string& path);

struct RunManifest {
    // Written as Failed before any work starts, rewritten when the run ends.
    enum class Status { Ok, Failed, DryRun };

    std::string command;
    std::string config_path;
    std::string config_hash;
    std::uint64_t seed = 0;
    std::vector<std::string> artifacts;  // relative to the output directory
    double wall_clock_seconds = 0.0;
    std::string version = sdebf::version();
    Status status = Status::Failed;
    bool pass = false;
    std::string error;
};

std::string to_string(RunManifest::Status status);
void to_json(nlohmann::json& j, const RunManifest& m);
void from_json(const nlohmann::json& j, RunManifest& m);

// <dir>/manifest.json
void write_manifest(const std::string& dir, const RunManifest& manifest);
RunManifest read_manifest(const std::string& dir);

}  // namespace sdebf
