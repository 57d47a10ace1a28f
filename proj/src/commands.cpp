#include "sdebf/commands.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <ostream>

#include <nlohmann/json.hpp>

#include "sdebf/config.hpp"
#include "sdebf/errors.hpp"
#include "sdebf/io.hpp"

namespace sdebf {

namespace {

struct Outcome {
    bool pass = false;
    std::vector<std::string> artifacts;
};

// Collects artifacts relative to the output directory.
class Writer {
public:
    explicit Writer(std::string dir) : dir_(std::move(dir)) {}

    void write(const std::string& name, const std::string& content) {
        write_file((std::filesystem::path(dir_) / name).string(), content);
        written_.push_back(name);
    }

    std::vector<std::string> take() { return std::move(written_); }

private:
    std::string dir_;
    std::vector<std::string> written_;
};

std::string numbered(const std::string& stem, std::size_t i, std::size_t n) {
    const int width = static_cast<int>(std::to_string(n).size());
    char buf[32];
    std::snprintf(buf, sizeof buf, "%0*zu", width < 2 ? 2 : width, i + 1);
    return stem + "_" + buf + ".csv";
}

std::string file_safe(const std::string& name) {
    std::string out;
    for (char ch : name) {
        const bool ok = (ch >= 'a' && ch <= 'z') || (ch >= 'A' && ch <= 'Z') || (ch >= '0' && ch <= '9') ||
                        ch == '-' || ch == '_' || ch == '.';
        out += ok ? ch : '_';
    }
    return out.empty() ? "company" : out;
}

// A parsed command ready to run; `run` does the work and writes the artifacts.
struct Prepared {
    std::uint64_t seed = 0;
    std::string config_hash;
    std::function<Outcome(Writer&, std::ostream&)> run;
};

StudyConfig study_with_overrides(const ConfigFile& file, const CommandOptions& o) {
    StudyConfig c = study_config_from(file);
    if (o.seed) c.seed = *o.seed;
    if (o.threads) c.threads = *o.threads;
    c.validate();
    return c;
}

std::string hash_with_seed(const ConfigFile& file, std::uint64_t seed) {
    return fnv1a_hex(file.canonical() + "effective.seed=" + std::to_string(seed) + "\n");
}

Prepared prepare_simulate(const ConfigFile& file, const CommandOptions& o) {
    const StudyConfig c = study_with_overrides(file, o);
    Prepared p{c.seed, config_hash(c), {}};
    p.run = [c](Writer& w, std::ostream& log) {
        const StudyData sd = c.kind == StudyKind::PerIndividual ? generate_per_individual_data(c)
                                                                : generate_shared_truth_data(c);
        const std::size_t n = sd.data.size();
        for (std::size_t i = 0; i < n; ++i) w.write(numbered("path", i, n), path_csv(sd.data[i].path));
        bool shared = true;
        for (const auto& ind : sd.data) shared = shared && ind.covariates == sd.data.front().covariates;
        if (shared) {
            w.write("panel.csv", panel_csv(*sd.data.front().covariates));
        } else {
            for (std::size_t i = 0; i < n; ++i) w.write(numbered("panel", i, n), panel_csv(*sd.data[i].covariates));
        }
        const nlohmann::json truth{{"study", to_string(c.kind)},
                                   {"seed", c.seed},
                                   {"config_hash", config_hash(c)},
                                   {"config", c},
                                   {"truth", sd.to_json()}};
        w.write("truth.json", truth.dump(2) + "\n");
        log << "simulated " << n << " path(s) for study " << to_string(c.kind) << "\n";
        return Outcome{true, w.take()};
    };
    return p;
}

void print_report(const SelectionReport& r, std::ostream& log) {
    for (const auto& t : r.tables) {
        log << t.name << " (" << t.score_label << "): " << (t.pass ? "pass" : "fail") << "\n";
        for (std::size_t k = 0; k < t.rows.size(); ++k) {
            const auto& row = t.rows[k];
            char buf[64];
            std::snprintf(buf, sizeof buf, "%12.6f  se %.2e", row.score, row.se);
            log << "  " << buf << "  " << row.label << (row.truth ? "  [truth]" : "")
                << (k == t.winner ? "  [winner]" : "") << "\n";
        }
    }
    log << "study " << r.study << ": " << (r.pass ? "PASS" : "FAIL") << "\n";
}

Prepared prepare_select(const ConfigFile& file, const CommandOptions& o) {
    const StudyConfig c = study_with_overrides(file, o);
    Prepared p{c.seed, config_hash(c), {}};
    p.run = [c](Writer& w, std::ostream& log) {
        const SelectionReport r = run_study(c);
        w.write("report.json", nlohmann::json(r).dump(2) + "\n");
        w.write("report.csv", to_csv(r));
        print_report(r, log);
        return Outcome{r.pass, w.take()};
    };
    return p;
}

Prepared prepare_kl(const ConfigFile& file, const CommandOptions& o) {
    KlRunConfig c = kl_config_from(file);
    if (o.seed) c.seed = *o.seed;
    if (o.threads) c.threads = *o.threads;
    Prepared p{c.seed, hash_with_seed(file, c.seed), {}};
    p.run = [c, hash = p.config_hash](Writer& w, std::ostream& log) {
        const TimeGrid grid = make_grid(0.0, c.horizon, c.n_steps);
        const std::size_t p_cov = c.model0.mask.size();
        CovariatePanel panel = CovariatePanel::none(grid);
        if (p_cov > 0) {
            Rng coef(derive_seed(c.seed, 1));
            const auto specs = study_covariate_specs(p_cov, c.covariate_coef_sd, coef);
            Rng paths(derive_seed(c.seed, 2));
            panel = standardize(simulate_covariates(specs, grid, paths));
        }
        const SdeModel model0{c.model0, Diffusion::constant(c.sigma)};
        Rng rng(derive_seed(c.seed, 3));
        const DeltaEstimate d =
            delta_min(model0, ParamVector::from_flat(c.model0, c.theta0), c.model1,
                      ParamGrid::box(c.lower, c.upper, c.grid_points), panel, c.x0, grid, c.n_paths, rng);
        nlohmann::json j = d;
        j["seed"] = c.seed;
        j["config_hash"] = hash;
        j["model0"] = {{"family", to_string(c.model0.family)}, {"mask", c.model0.mask.to_string()},
                       {"theta0", c.theta0}, {"sigma", c.sigma}};
        j["model1"] = {{"family", to_string(c.model1.family)}, {"mask", c.model1.mask.to_string()}};
        w.write("delta.json", j.dump(2) + "\n");
        log << "delta = " << format_real(d.delta) << " (se " << format_real(d.se_at_argmin) << ") at xi "
            << nlohmann::json(d.argmin_theta.xi).dump() << " beta " << nlohmann::json(d.argmin_theta.beta).dump()
            << "\n";
        return Outcome{true, w.take()};
    };
    return p;
}

Prepared prepare_market(const ConfigFile& file, const CommandOptions& o) {
    MarketRunConfig c = market_config_from(file);
    if (o.seed) c.market.seed = *o.seed;
    if (o.threads) c.market.threads = *o.threads;
    if (c.synthetic == 0) {
        if (!std::filesystem::is_regular_file(c.covariate_file)) {
            throw IoError("covariate file '" + c.covariate_file + "' does not exist");
        }
        for (const auto& f : c.price_files) {
            if (!std::filesystem::is_regular_file(f)) throw IoError("price file '" + f + "' does not exist");
        }
    }
    Prepared p{c.market.seed, hash_with_seed(file, c.market.seed), {}};
    p.run = [c](Writer& w, std::ostream& log) {
        // Every input is read and validated before any fitting starts.
        std::vector<SeriesBundle> bundles;
        if (c.synthetic > 0) {
            for (std::size_t j = 0; j < c.synthetic; ++j) {
                SeriesBundle b = synthetic_bundle(c.synthetic_spec, derive_seed(c.market.seed, 100 + j));
                b.company = "synthetic_" + std::to_string(j + 1);
                bundles.push_back(std::move(b));
            }
        } else {
            for (std::size_t j = 0; j < c.price_files.size(); ++j) {
                bundles.push_back(load_series(c.price_files[j], c.covariate_file, c.dt, c.companies[j]));
            }
        }
        const auto reports = analyze_companies(bundles, c.market);
        bool pass = true;
        for (const auto& r : reports) {
            w.write("company_" + file_safe(r.company) + ".json", nlohmann::json(r).dump(2) + "\n");
            log << r.company << ": best family " << to_string(r.fits.front().family) << ", winner "
                << r.winner.to_string() << "\n";
            // Synthetic bundles have a known truth mask.
            if (c.synthetic > 0) pass = pass && r.winner == c.synthetic_spec.mask;
        }
        w.write("table.csv", market_table_csv(reports));
        return Outcome{pass, w.take()};
    };
    return p;
}

Prepared prepare(const std::string& command, const ConfigFile& file, const CommandOptions& o) {
    if (command == "simulate") return prepare_simulate(file, o);
    if (command == "select") return prepare_select(file, o);
    if (command == "kl") return prepare_kl(file, o);
    if (command == "market") return prepare_market(file, o);
    throw InvalidArgument("unknown command '" + command + "'");
}

}  // namespace

const std::vector<std::string>& command_names() {
    static const std::vector<std::string> names{"simulate", "select", "kl", "market"};
    return names;
}

std::string resolve_out_dir(const std::string& requested) {
    if (!requested.empty()) return requested;
    if (const char* env = std::getenv(kOutDirEnv); env != nullptr && *env != '\0') return env;
    return "sdebf_out";
}

int run_command(const std::string& command, const CommandOptions& options, std::ostream& log) {
    const auto start = std::chrono::steady_clock::now();
    const std::string dir = resolve_out_dir(options.out_dir);
    RunManifest m;
    m.command = command;
    m.config_path = options.config_path;
    m.seed = options.seed.value_or(0);
    m.error = "run did not complete";
    auto elapsed = [&] {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    };
    try {
        write_manifest(dir, m);
    } catch (const Error& e) {
        log << "error: " << e.what() << "\n";
        return kExitError;
    }
    try {
        const Prepared p = prepare(command, ConfigFile::load(options.config_path), options);
        m.seed = p.seed;
        m.config_hash = p.config_hash;
        if (options.dry_run) {
            m.status = RunManifest::Status::DryRun;
            m.error.clear();
            m.wall_clock_seconds = elapsed();
            write_manifest(dir, m);
            log << "dry run: config valid, manifest written to " << dir << "\n";
            return kExitPass;
        }
        write_manifest(dir, m);
        Writer w(dir);
        const Outcome out = p.run(w, log);
        m.artifacts = out.artifacts;
        m.pass = out.pass;
        m.status = RunManifest::Status::Ok;
        m.error.clear();
        m.wall_clock_seconds = elapsed();
        write_manifest(dir, m);
        return out.pass ? kExitPass : kExitCriterionFailed;
    } catch (const std::exception& e) {
        m.status = RunManifest::Status::Failed;
        m.error = e.what();
        m.wall_clock_seconds = elapsed();
        log << "error: " << e.what() << "\n";
        try {
            write_manifest(dir, m);
        } catch (const Error&) {
        }
        return kExitError;
    }
}

}  // namespace sdebf
