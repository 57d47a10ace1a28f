#include "sdebf/io.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "sdebf/errors.hpp"

#ifndef SDEBF_VERSION
#define SDEBF_VERSION "0.0.0"
#endif

namespace sdebf {

std::string version() { return SDEBF_VERSION; }

std::string format_real(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string path_csv(const Path& path) {
    std::string out = "t,x\n";
    for (std::size_t k = 0; k < path.values.size(); ++k) {
        out += format_real(path.grid.point(k)) + "," + format_real(path.values[k]) + "\n";
    }
    return out;
}

std::string panel_csv(const CovariatePanel& panel) {
    std::string out = "t";
    for (std::size_t l = 0; l < panel.p(); ++l) out += ",z" + std::to_string(l + 1);
    out += "\n";
    for (std::size_t k = 0; k < panel.grid().size(); ++k) {
        out += format_real(panel.grid().point(k));
        for (std::size_t l = 0; l < panel.p(); ++l) out += "," + format_real(panel.raw(l, k));
        out += "\n";
    }
    return out;
}

void write_file(const std::string& path, const std::string& content) {
    const std::filesystem::path p(path);
    std::error_code ec;
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path(), ec);
    if (ec) throw IoError("cannot create directory '" + p.parent_path().string() + "': " + ec.message());
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << content;
    out.close();
    if (!out) throw IoError("failed writing '" + path + "'");
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string to_string(RunManifest::Status status) {
    switch (status) {
        case RunManifest::Status::Ok: return "ok";
        case RunManifest::Status::Failed: return "failed";
        case RunManifest::Status::DryRun: return "dry_run";
    }
    return "failed";
}

void to_json(nlohmann::json& j, const RunManifest& m) {
    j = nlohmann::json{{"command", m.command},
                       {"config_path", m.config_path},
                       {"config_hash", m.config_hash},
                       {"seed", m.seed},
                       {"artifacts", m.artifacts},
                       {"wall_clock_seconds", m.wall_clock_seconds},
                       {"version", m.version},
                       {"status", to_string(m.status)},
                       {"pass", m.pass}};
    if (!m.error.empty()) j["error"] = m.error;
}

void from_json(const nlohmann::json& j, RunManifest& m) {
    m.command = j.at("command").get<std::string>();
    m.config_path = j.at("config_path").get<std::string>();
    m.config_hash = j.at("config_hash").get<std::string>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.artifacts = j.at("artifacts").get<std::vector<std::string>>();
    m.wall_clock_seconds = j.at("wall_clock_seconds").get<double>();
    m.version = j.at("version").get<std::string>();
    const auto status = j.at("status").get<std::string>();
    if (status == "ok") m.status = RunManifest::Status::Ok;
    else if (status == "dry_run") m.status = RunManifest::Status::DryRun;
    else m.status = RunManifest::Status::Failed;
    m.pass = j.at("pass").get<bool>();
    m.error = j.value("error", std::string());
}

void write_manifest(const std::string& dir, const RunManifest& manifest) {
    write_file((std::filesystem::path(dir) / "manifest.json").string(),
               nlohmann::json(manifest).dump(2) + "\n");
}

RunManifest read_manifest(const std::string& dir) {
    const auto text = read_file((std::filesystem::path(dir) / "manifest.json").string());
    try {
        return nlohmann::json::parse(text).get<RunManifest>();
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(0, "manifest: " + std::string(e.what()));
    }
}

}  // namespace sdebf
