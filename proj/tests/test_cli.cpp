#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <sstream>

#include <nlohmann/json.hpp>

#include "sdebf/commands.hpp"
#include "sdebf/config.hpp"
#include "sdebf/errors.hpp"
#include "sdebf/io.hpp"
#include "test_util.hpp"

using namespace sdebf;
using sdebf::testing::TempDir;

namespace {

namespace fs = std::filesystem;

std::vector<std::string> lines_of(const std::string& text) {
    std::vector<std::string> out;
    std::stringstream ss(text);
    std::string line;
    while (std::getline(ss, line)) out.push_back(line);
    return out;
}

std::vector<std::string> listing(const std::string& dir) {
    std::vector<std::string> out;
    for (const auto& e : fs::directory_iterator(dir)) out.push_back(e.path().filename().string());
    std::sort(out.begin(), out.end());
    return out;
}

int run(const std::string& command, const std::string& config, const std::string& out, bool dry_run = false) {
    CommandOptions o;
    o.config_path = config;
    o.out_dir = out;
    o.dry_run = dry_run;
    std::ostringstream log;
    return run_command(command, o, log);
}

const char* kSmallCase1 = R"(
[study]
kind = case1
seed = 3
[data]
n = 15
horizon = 1
n_steps = 500
[mc]
m_draws = 2000
anneal_max_evaluations = 4000
)";

}  // namespace

TEST_CASE("config: sections, lists and typed values") {
    const auto f = ConfigFile::parse("# comment\n[data]\nn = 4\nhorizon=2.5\n[model]\ntheta0 = 1, 2 ,3\n"
                                     "[study]\nflag = yes\n");
    CHECK(f.count_or("data.n", 0) == 4);
    CHECK(f.number_or("data.horizon", 0.0) == 2.5);
    CHECK(f.number_or("data.missing", 7.0) == 7.0);
    CHECK(*f.numbers("model.theta0") == std::vector<double>{1, 2, 3});
    CHECK(f.flag_or("study.flag", false));
    CHECK(f.canonical() == "data.horizon=2.5\ndata.n=4\nmodel.theta0=1, 2 ,3\nstudy.flag=yes\n");

    CHECK_THROWS_WITH_AS(f.count_or("data.horizon", 0), "config key 'data.horizon': expected a non-negative integer, got '2.5'",
                         ConfigError);
    CHECK_THROWS_AS(ConfigFile::parse("[other]\nx = 1\n"), ConfigError);
    CHECK_THROWS_AS(ConfigFile::parse("x = 1\n"), ConfigError);
    CHECK_THROWS_AS(ConfigFile::parse("[data]\nn = 1\nn = 2\n"), ParseError);
    CHECK_THROWS_AS(ConfigFile::load("/nonexistent/config.ini"), ParseError);
}

TEST_CASE("config: study presets with overrides, unknown keys named") {
    const auto c = study_config_from(ConfigFile::parse(
        "[study]\nkind = averaged\nseed = 9\n[mc]\nreplications = 7\nanneal_cooling = 0.9\n[prior]\nsd_fixed = 0.5\n"));
    CHECK(c.kind == StudyKind::Averaged);
    CHECK(c.n == 1);
    CHECK(c.horizon == 5.0);
    CHECK(c.seed == 9);
    CHECK(c.replications == 7);
    CHECK(c.anneal.cooling == 0.9);
    CHECK(c.prior_sd_fixed == 0.5);

    try {
        study_config_from(ConfigFile::parse("[study]\nkind = case1\n[mc]\nm_drawz = 5\n"));
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(e.key() == "mc.m_drawz");
        CHECK(std::string(e.what()).find("m_drawz") != std::string::npos);
    }
    CHECK_THROWS_AS(study_config_from(ConfigFile::parse("[data]\nn = 3\n")), ConfigError);
    CHECK_THROWS_AS(study_config_from(ConfigFile::parse("[study]\nkind = case9\n")), ConfigError);
    // Library validation surfaces as a config error.
    CHECK_THROWS_AS(study_config_from(ConfigFile::parse("[study]\nkind = case1\n[data]\nn_steps = 10\n")),
                    ConfigError);
}

TEST_CASE("config: kl and market sections") {
    const auto k = kl_config_from(ConfigFile::parse(
        "[model]\nfamily0 = constant\nmask0 = ()\ntheta0 = 1, 1\nlower = 1, 0\nupper = 1, 3\n[mc]\ngrid_points = 7\n"));
    CHECK(k.model0.family == DriftFamily::Constant);
    CHECK(k.model1.family == DriftFamily::Constant);
    CHECK(k.model1.mask.size() == 0);
    CHECK(k.grid_points == 7);
    CHECK_THROWS_AS(kl_config_from(ConfigFile::parse("[model]\ntheta0 = 1\n")), ConfigError);
    CHECK_THROWS_AS(kl_config_from(ConfigFile::parse("[model]\nfamily0 = unit\ntheta0 = 1, 2\nlower = 0\nupper = 1\n")),
                    ConfigError);

    const auto m = market_config_from(ConfigFile::parse(
        "[data]\nprices = a.csv, /abs/b.csv\ncovariates = cov.csv\n[prior]\nsd = 2\n", "/base"));
    REQUIRE(m.price_files.size() == 2);
    CHECK(m.price_files[0] == "/base/a.csv");
    CHECK(m.price_files[1] == "/abs/b.csv");
    CHECK(m.companies == std::vector<std::string>{"a", "b"});
    CHECK(m.covariate_file == "/base/cov.csv");
    CHECK(m.market.prior_sd == 2.0);
    CHECK_THROWS_AS(market_config_from(ConfigFile::parse("[data]\nprices = a.csv\n")), ConfigError);
    CHECK_THROWS_AS(market_config_from(ConfigFile::parse("[data]\nsynthetic = 1\n[model]\nsynthetic_mask = (1,0)\n")),
                    ConfigError);
}

TEST_CASE("io: path and panel csv at full precision") {
    const TimeGrid grid = make_grid(0.0, 1.0, 3);
    const Path path{grid, {0.1, 1.0 / 3.0, -2.0, 1e-300}};
    const auto lines = lines_of(path_csv(path));
    REQUIRE(lines.size() == 5);
    CHECK(lines[0] == "t,x");
    CHECK(lines[1] == "0,0.10000000000000001");
    CHECK(lines[2] == "0.33333333333333331,0.33333333333333331");
    CHECK(lines[4] == "1,1e-300");
    for (std::size_t k = 1; k < lines.size(); ++k) {
        CHECK(std::stod(lines[k].substr(lines[k].find(',') + 1)) == path.values[k - 1]);
    }

    const CovariatePanel panel(grid, {{1, 2, 3, 4}, {0.5, 0.25, 0.125, 0.0625}});
    const auto p = lines_of(panel_csv(panel));
    CHECK(p[0] == "t,z1,z2");
    CHECK(p[2] == "0.33333333333333331,2,0.25");
}

TEST_CASE("io: manifest round trip") {
    TempDir dir;
    RunManifest m;
    m.command = "select";
    m.config_hash = "abc";
    m.seed = 18446744073709551615ULL;
    m.artifacts = {"report.json"};
    m.status = RunManifest::Status::Ok;
    m.pass = true;
    write_manifest(dir.path.string(), m);
    const auto r = read_manifest(dir.path.string());
    CHECK(r.seed == m.seed);
    CHECK(r.artifacts == m.artifacts);
    CHECK(r.status == RunManifest::Status::Ok);
    CHECK(r.pass);
    CHECK(r.version == version());
    CHECK_THROWS_AS(write_file("/proc/sdebf/nope.txt", "x"), IoError);
}

TEST_CASE("cli simulate: 15 paths, one panel, truth record, byte-identical rerun") {
    TempDir dir;
    write_file(dir.file("sim.ini"), "[study]\nkind = case1\nseed = 5\n[data]\nn = 15\nhorizon = 1\nn_steps = 500\n");
    REQUIRE(run("simulate", dir.file("sim.ini"), dir.file("a")) == kExitPass);
    const auto files = listing(dir.file("a"));
    CHECK(files.size() == 15 + 1 + 1 + 1);
    CHECK(std::count_if(files.begin(), files.end(), [](const auto& f) { return f.starts_with("path_"); }) == 15);
    CHECK(fs::exists(dir.file("a/panel.csv")));
    const auto path = lines_of(read_file(dir.file("a/path_01.csv")));
    CHECK(path.size() == 502);
    CHECK(path[0] == "t,x");
    CHECK(lines_of(read_file(dir.file("a/panel.csv")))[0] == "t,z1,z2,z3");
    const auto truth = nlohmann::json::parse(read_file(dir.file("a/truth.json")));
    CHECK(truth["truth"]["individuals"].size() == 15);
    CHECK(truth["seed"] == 5);

    const auto m = read_manifest(dir.file("a"));
    CHECK(m.status == RunManifest::Status::Ok);
    CHECK(m.artifacts.size() == 17);
    CHECK(m.config_hash == config_hash(study_config_from(ConfigFile::load(dir.file("sim.ini")))));

    REQUIRE(run("simulate", dir.file("sim.ini"), dir.file("b")) == kExitPass);
    for (const auto& f : files) {
        if (f == "manifest.json") continue;
        CHECK_MESSAGE(read_file(dir.file("a/" + f)) == read_file(dir.file("b/" + f)), f);
    }

    write_file(dir.file("one.ini"), "[study]\nkind = case1\n[data]\nn = 1\n");
    REQUIRE(run("simulate", dir.file("one.ini"), dir.file("c")) == kExitPass);
    CHECK(listing(dir.file("c")) == std::vector<std::string>{"manifest.json", "panel.csv", "path_01.csv", "truth.json"});

    write_file(dir.file("pi.ini"), "[study]\nkind = per-individual\n[data]\nn = 3\n");
    REQUIRE(run("simulate", dir.file("pi.ini"), dir.file("d")) == kExitPass);
    CHECK(fs::exists(dir.file("d/panel_03.csv")));
    CHECK(!fs::exists(dir.file("d/panel.csv")));
}

TEST_CASE("cli select: case1 and case2 tables, exit code follows the pass flag") {
    TempDir dir;
    write_file(dir.file("c1.ini"), kSmallCase1);
    const int code = run("select", dir.file("c1.ini"), dir.file("c1"));
    const auto report = nlohmann::json::parse(read_file(dir.file("c1/report.json")));
    REQUIRE(report["tables"].size() == 1);
    CHECK(report["tables"][0]["rows"].size() == 7);
    const bool pass = report["pass"].get<bool>();
    CHECK(code == (pass ? kExitPass : kExitCriterionFailed));
    bool all_negative = true;
    for (const auto& row : report["tables"][0]["rows"]) all_negative = all_negative && row["log_value"].get<double>() < 0;
    CHECK(pass == all_negative);
    CHECK(lines_of(read_file(dir.file("c1/report.csv"))).size() == 8);
    CHECK(read_manifest(dir.file("c1")).pass == pass);

    write_file(dir.file("c2.ini"), std::string(kSmallCase1).replace(std::string(kSmallCase1).find("case1"), 5, "case2"));
    const int code2 = run("select", dir.file("c2.ini"), dir.file("c2"));
    const auto r2 = nlohmann::json::parse(read_file(dir.file("c2/report.json")));
    REQUIRE(r2["tables"].size() == 1);
    const auto& t = r2["tables"][0];
    CHECK(t["rows"].size() == 8);
    std::size_t truth_rows = 0;
    bool winner_listed = false;
    for (const auto& row : t["rows"]) {
        truth_rows += row["truth"].get<bool>() ? 1 : 0;
        winner_listed = winner_listed || row["model_mask"] == t["winner"];
    }
    CHECK(truth_rows == 1);
    CHECK(winner_listed);
    CHECK(code2 == (r2["pass"].get<bool>() ? kExitPass : kExitCriterionFailed));

    // Same config, same bytes.
    REQUIRE(run("select", dir.file("c1.ini"), dir.file("c1b")) == code);
    CHECK(read_file(dir.file("c1/report.json")) == read_file(dir.file("c1b/report.json")));
    CHECK(read_file(dir.file("c1/report.csv")) == read_file(dir.file("c1b/report.csv")));
}

TEST_CASE("cli: invalid key fails with the key named and a failed manifest") {
    TempDir dir;
    write_file(dir.file("bad.ini"), "[study]\nkind = case1\n[mc]\nm_drawz = 5\n");
    CommandOptions o;
    o.config_path = dir.file("bad.ini");
    o.out_dir = dir.file("out");
    std::ostringstream log;
    CHECK(run_command("select", o, log) == kExitError);
    CHECK(log.str().find("mc.m_drawz") != std::string::npos);
    const auto m = read_manifest(dir.file("out"));
    CHECK(m.status == RunManifest::Status::Failed);
    CHECK(m.error.find("mc.m_drawz") != std::string::npos);
    CHECK(listing(dir.file("out")) == std::vector<std::string>{"manifest.json"});

    // Missing config file: the manifest is still written first.
    CHECK(run("select", dir.file("none.ini"), dir.file("out2")) == kExitError);
    CHECK(read_manifest(dir.file("out2")).status == RunManifest::Status::Failed);
    CHECK(run("bogus", dir.file("bad.ini"), dir.file("out3")) == kExitError);
}

TEST_CASE("cli kl: delta 0 on a grid containing theta0, positive when misspecified") {
    TempDir dir;
    write_file(dir.file("k0.ini"),
               "[data]\nn_steps = 100\n[model]\nfamily0 = constant\nmask0 = ()\ntheta0 = 1, 1\n"
               "lower = 1, 0\nupper = 1, 3\n[mc]\nn_paths = 200\ngrid_points = 7\n");
    REQUIRE(run("kl", dir.file("k0.ini"), dir.file("k0")) == kExitPass);
    const auto d0 = nlohmann::json::parse(read_file(dir.file("k0/delta.json")));
    CHECK(d0["delta"].get<double>() == 0.0);
    CHECK(d0["argmin"]["xi"] == nlohmann::json::array({1.0}));
    CHECK(d0["argmin"]["beta"] == nlohmann::json::array({1.0}));
    CHECK(d0["n_paths"] == 200);
    CHECK(d0.contains("grid"));

    write_file(dir.file("k1.ini"),
               "[data]\nn_steps = 200\n[model]\nmask0 = (1)\ntheta0 = 1, 0.8, 0.5, 0.5\nmask1 = (0)\n"
               "lower = 1, -1, -1\nupper = 1, 2, 2\n[mc]\nn_paths = 300\ngrid_points = 13\n");
    REQUIRE(run("kl", dir.file("k1.ini"), dir.file("k1")) == kExitPass);
    const auto d1 = nlohmann::json::parse(read_file(dir.file("k1/delta.json")));
    CHECK(d1["delta"].get<double>() > 3.0 * d1["se_at_argmin"].get<double>());
    CHECK(d1["argmin"]["beta"].size() == 2);

    write_file(dir.file("big.ini"),
               "[model]\nmask0 = (1,1,1)\ntheta0 = 1, 1, 1, 1, 1, 1\nlower = 0,0,0,0,0,0\nupper = 1,1,1,1,1,1\n");
    CHECK(run("kl", dir.file("big.ini"), dir.file("big")) == kExitError);
}

TEST_CASE("cli market: fail fast on a missing covariate file, dry run writes only the manifest") {
    TempDir dir;
    write_file(dir.file("p.csv"), "date,close\n2020-01-01,1\n2020-01-02,1.1\n");
    write_file(dir.file("m.ini"), "[data]\nprices = p.csv\ncovariates = missing.csv\n");
    CommandOptions o;
    o.config_path = dir.file("m.ini");
    o.out_dir = dir.file("out");
    std::ostringstream log;
    CHECK(run_command("market", o, log) == kExitError);
    CHECK(log.str().find("missing.csv") != std::string::npos);
    CHECK(listing(dir.file("out")) == std::vector<std::string>{"manifest.json"});
    CHECK(read_manifest(dir.file("out")).status == RunManifest::Status::Failed);

    write_file(dir.file("s.ini"), "[data]\nsynthetic = 1\n[mc]\nm_draws = 1000\n");
    CHECK(run("market", dir.file("s.ini"), dir.file("dry"), true) == kExitPass);
    CHECK(listing(dir.file("dry")) == std::vector<std::string>{"manifest.json"});
    const auto m = read_manifest(dir.file("dry"));
    CHECK(m.status == RunManifest::Status::DryRun);
    CHECK(m.artifacts.empty());
}

TEST_CASE("cli market: synthetic bundle emits reports and the winner mask") {
    TempDir dir;
    write_file(dir.file("s.ini"), "[study]\nseed = 2\n[data]\nsynthetic = 1\n");
    const int code = run("market", dir.file("s.ini"), dir.file("out"));
    CHECK(code != kExitError);
    const auto table = lines_of(read_file(dir.file("out/table.csv")));
    REQUIRE(table.size() == 2);
    CHECK(table[0] == "company,n_obs,best_family,diffusion_a,diffusion_b,winner_mask,covariates");
    const auto report = nlohmann::json::parse(read_file(dir.file("out/company_synthetic_1.json")));
    CHECK(report.contains("winner_mask"));
    CHECK(code == (report["winner_mask"] == "(1,0,1)" ? kExitPass : kExitCriterionFailed));
}

TEST_CASE("cli: output directory from the environment") {
    TempDir dir;
    CHECK(resolve_out_dir("given") == "given");
    ::setenv(kOutDirEnv, dir.file("env").c_str(), 1);
    CHECK(resolve_out_dir("") == dir.file("env"));
    write_file(dir.file("sim.ini"), "[study]\nkind = case1\n[data]\nn = 1\n");
    CHECK(run("simulate", dir.file("sim.ini"), "") == kExitPass);
    CHECK(fs::exists(dir.file("env/path_01.csv")));
    ::unsetenv(kOutDirEnv);
    CHECK(resolve_out_dir("") == "sdebf_out");
}
