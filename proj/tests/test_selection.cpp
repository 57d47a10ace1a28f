#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include <nlohmann/json.hpp>

#include "sdebf/errors.hpp"
#include "sdebf/selection.hpp"

using namespace sdebf;

namespace {

// Desk-sized study settings so each run takes a fraction of a second.
StudyConfig small(StudyConfig c) {
    c.n = 4;
    c.n_steps = 200;
    c.m_draws = 2000;
    c.anneal.max_evaluations = 4000;
    return c;
}

ScoreRow row(const std::string& mask, double score, double se = 0.0, bool truth = false) {
    ScoreRow r;
    r.label = mask;
    r.masks = {ModelMask::parse(mask)};
    r.score = score;
    r.se = se;
    r.truth = truth;
    return r;
}

std::string dump(const SelectionReport& r) { return nlohmann::json(r).dump() + to_csv(r); }

}  // namespace

TEST_CASE("enumerate_masks lists every mask in binary counting order") {
    const auto m3 = enumerate_masks(3);
    REQUIRE(m3.size() == 8);
    CHECK(m3.front() == ModelMask::none(3));
    CHECK(m3.back() == ModelMask::full(3));
    CHECK(m3[1].to_string() == "(0,0,1)");
    CHECK(m3[6].to_string() == "(1,1,0)");

    const auto m1 = enumerate_masks(1);
    REQUIRE(m1.size() == 2);
    CHECK(m1[0].to_string() == "(0)");
    CHECK(m1[1].to_string() == "(1)");

    std::set<std::string> seen;
    for (const auto& m : enumerate_masks(4)) seen.insert(m.to_string());
    CHECK(seen.size() == 16);

    CHECK_THROWS_AS(enumerate_masks(0), InvalidArgument);
    CHECK_THROWS_AS(enumerate_masks(17), InvalidArgument);
}

TEST_CASE("study kinds round-trip through their names") {
    for (auto k : {StudyKind::Case1, StudyKind::Case2, StudyKind::Averaged, StudyKind::PerIndividual}) {
        CHECK(study_kind_from_string(to_string(k)) == k);
    }
    CHECK_THROWS_AS(study_kind_from_string("case3"), InvalidArgument);
}

TEST_CASE("study config validation") {
    CHECK_NOTHROW(StudyConfig::case1().validate());
    CHECK_NOTHROW(StudyConfig::averaged().validate());
    auto c = StudyConfig::case1();
    c.sigma_first = 10.0;
    c.sigma_increment = -1.0;
    CHECK_THROWS_AS(c.validate(), InvalidArgument);
    c = StudyConfig::case1();
    c.theta0 = std::vector<double>{1.0, 2.0};
    CHECK_THROWS_AS(c.validate(), InvalidArgument);
    c = StudyConfig::case1();
    c.column_order = std::vector<std::size_t>{0, 0, 1};
    CHECK_THROWS_AS(c.validate(), InvalidArgument);
    c = StudyConfig::averaged();
    c.replications = 1;
    CHECK_THROWS_AS(c.validate(), InvalidArgument);
    c = StudyConfig::case2();
    CHECK_THROWS_AS(run_case1(c), InvalidArgument);
}

TEST_CASE("config hash is stable and ignores the thread count") {
    auto a = StudyConfig::case1();
    auto b = a;
    b.threads = 7;
    CHECK(config_hash(a) == config_hash(b));
    CHECK(config_hash(a).size() == 16);
    b.seed = 2;
    CHECK(config_hash(a) != config_hash(b));
    CHECK(fnv1a_hex("") == "cbf29ce484222325");
    CHECK(fnv1a_hex("a") == "af63dc4c8601ec8c");
}

TEST_CASE("score table: all-negative criterion ignores truth rows") {
    ScoreTable t;
    t.criterion = ScoreTable::Criterion::AllNegative;
    t.rows = {row("(0,0)", -1.0), row("(0,1)", -0.5), row("(1,1)", 0.0, 0.0, true)};
    t.finalize();
    CHECK(t.pass);
    CHECK(t.winner == 2);
    CHECK(t.margin == doctest::Approx(0.5));
    t.rows[1].score = 0.0;
    t.finalize();
    CHECK_FALSE(t.pass);
}

TEST_CASE("score table: truth-max criterion with SE margin") {
    ScoreTable t;
    t.criterion = ScoreTable::Criterion::TruthMax;
    t.se_factor = 3.0;
    t.rows = {row("(0,0)", 1.0, 0.1), row("(0,1)", 2.0, 0.1), row("(1,1)", 3.0, 0.1, true)};
    t.finalize();
    CHECK(t.pass);
    CHECK(t.rows[t.winner].label == "(1,1)");
    CHECK(t.margin == doctest::Approx(1.0));
    CHECK(t.margin_se == doctest::Approx(std::hypot(0.1, 0.1)));

    t.rows[1].score = 2.9;  // within 3 combined SE
    t.finalize();
    CHECK_FALSE(t.pass);
    CHECK(t.margin >= 0.0);

    t.rows[1].score = 3.5;
    t.finalize();
    CHECK_FALSE(t.pass);
    CHECK(t.winner == 1);
}

TEST_CASE("score table ties go to fewer covariates, then the earlier row") {
    ScoreTable t;
    t.rows = {row("(1,1)", 1.0), row("(0,1)", 1.0), row("(1,0)", 1.0)};
    t.finalize();
    CHECK(t.winner == 1);
    CHECK(t.margin == 0.0);
}

TEST_CASE("truth-max skips rows identical to the truth combination") {
    ScoreTable t;
    t.criterion = ScoreTable::Criterion::TruthMax;
    t.rows = {row("(1,0)", 2.0, 0.0, true), row("(1,0)", 2.0), row("(0,0)", 1.0)};
    t.finalize();
    CHECK(t.pass);
    CHECK(t.margin == doctest::Approx(1.0));
}

TEST_CASE("case 1: self comparison with a point prior is exactly zero") {
    auto c = small(StudyConfig::case1());
    c.include_truth_row = true;
    const auto r = run_case1(c);
    REQUIRE(r.tables.size() == 1);
    const auto& t = r.tables[0];
    REQUIRE(t.rows.size() == 8);
    CHECK(t.rows.back().truth);
    CHECK(t.rows.back().label == "(1,1,1)");
    CHECK(t.rows.back().score == 0.0);
    CHECK(t.rows.back().se == 0.0);
    for (std::size_t i = 0; i + 1 < t.rows.size(); ++i) CHECK_FALSE(t.rows[i].truth);
}

TEST_CASE("case 1 report lists the seven wrong models and its provenance") {
    const auto c = small(StudyConfig::case1());
    const auto r = run_case1(c);
    REQUIRE(r.tables.at(0).rows.size() == 7);
    CHECK(r.seed == c.seed);
    CHECK(r.config_hash == config_hash(c));
    CHECK(r.truth["individuals"].size() == c.n);
    bool all_negative = true;
    for (const auto& row : r.tables[0].rows) all_negative = all_negative && row.score < 0.0;
    CHECK(r.pass == all_negative);

    const auto j = nlohmann::json(r);
    const auto& first = j["tables"][0]["rows"][0];
    for (const char* key : {"study", "model_mask", "log_value", "mc_se", "m_draws", "seed"}) {
        CHECK(first.contains(key));
    }
    CHECK(to_csv(r).rfind("table,mask,score,se,truth\n", 0) == 0);
}

TEST_CASE("studies are deterministic and independent of the thread count") {
    auto c = small(StudyConfig::case2());
    const auto a = dump(run_case2(c));
    CHECK(a == dump(run_case2(c)));
    c.threads = 3;
    CHECK(a == dump(run_case2(c)));

    auto p = small(StudyConfig::per_individual());
    p.alternatives = 3;
    const auto b = dump(run_per_individual_study(p));
    p.threads = 2;
    CHECK(b == dump(run_per_individual_study(p)));
}

TEST_CASE("case 2: winner follows a relabeling of the covariate columns") {
    auto c = small(StudyConfig::case2());
    c.n = 6;
    c.seed = 4;
    const auto base = run_case2(c);
    const std::vector<std::size_t> order{2, 0, 1};
    c.column_order = order;
    const auto perm = run_case2(c);

    const auto& t0 = base.tables[0];
    const auto& t1 = perm.tables[0];
    const ModelMask w0 = t0.rows[t0.winner].masks[0];
    const ModelMask w1 = t1.rows[t1.winner].masks[0];
    for (std::size_t j = 0; j < 3; ++j) CHECK(w1[j] == w0[order[j]]);

    // Scores agree up to Monte-Carlo error once the masks are matched.
    for (const auto& r0 : t0.rows) {
        const ModelMask m0 = r0.masks[0];
        std::vector<bool> bits(3);
        for (std::size_t j = 0; j < 3; ++j) bits[j] = m0[order[j]];
        const auto it = std::find_if(t1.rows.begin(), t1.rows.end(),
                                     [&](const ScoreRow& r) { return r.masks[0] == ModelMask(bits); });
        REQUIRE(it != t1.rows.end());
        CHECK(std::abs(r0.score - it->score) <= 5.0 * std::hypot(r0.se, it->se) + 1e-9 * std::abs(r0.score));
    }
}

TEST_CASE("case 2: a null covariate carries no signal") {
    auto c = small(StudyConfig::case2());
    c.p = 1;
    c.n = 15;
    c.m_draws = 20000;
    c.sigma_first = 1.0;
    c.sigma_increment = 0.2;
    c.horizon = 5.0;
    c.n_steps = 500;
    const double nt = static_cast<double>(c.n) * c.horizon;
    // xi_0, xi_1, beta_1, beta_2
    c.theta0 = std::vector<double>{0.8, 0.0, 0.6, -0.4};
    const auto null_rows = run_case2(c).tables[0].rows;
    c.theta0 = std::vector<double>{0.8, 1.5, 0.6, -0.4};
    const auto signal_rows = run_case2(c).tables[0].rows;
    REQUIRE(null_rows.size() == 2);

    // Without signal the masks differ only by the extra coordinate's Occam term,
    // well under one nat over the whole dataset.
    const double gap = std::abs(null_rows[1].score - null_rows[0].score) * nt;
    const double se = std::hypot(null_rows[0].se, null_rows[1].se) * nt;
    CHECK(gap <= 1.0 + 3.0 * se);
    CHECK((signal_rows[1].score - signal_rows[0].score) * nt > 10.0);
}

TEST_CASE("averaged study: R = 2 smoke run reports SEs") {
    auto c = small(StudyConfig::averaged());
    c.n = 1;
    c.replications = 2;
    const auto r = run_averaged_study(c);
    REQUIRE(r.tables.size() == 2);
    CHECK(r.tables[0].rows.size() == 7);
    CHECK(r.tables[1].rows.size() == 8);
    for (const auto& t : r.tables) {
        for (const auto& row : t.rows) {
            CHECK(std::isfinite(row.score));
            CHECK(row.se > 0.0);
        }
    }
    CHECK(r.truth["failed_replications"] == 0);
}

TEST_CASE("averaged study: doubling R shrinks the SE by about sqrt 2") {
    auto c = small(StudyConfig::averaged());
    c.horizon = 1.0;
    c.sigma_first = 1.0;
    c.m_draws = 500;
    c.anneal.max_evaluations = 1500;
    c.theta0 = std::vector<double>{1.0, 0.5, -0.5, 0.3, 0.5, -0.2};
    c.replications = 400;
    const auto r1 = run_averaged_study(c);
    c.replications = 800;
    const auto r2 = run_averaged_study(c);
    // The (0,0,0) marginal row: light-tailed per-replication values.
    const double ratio = r1.tables[1].rows[0].se / r2.tables[1].rows[0].se;
    CHECK(ratio == doctest::Approx(std::sqrt(2.0)).epsilon(0.2));
}

TEST_CASE("per-individual study: tables, alternatives and truth record") {
    auto c = small(StudyConfig::per_individual());
    c.alternatives = 5;
    const auto r = run_per_individual_study(c);
    REQUIRE(r.tables.size() == 2);
    const auto& marginal = r.tables[0];
    REQUIRE(marginal.rows.size() == 6);
    CHECK(marginal.rows[0].truth);
    CHECK(marginal.rows[0].masks.size() == c.n);
    CHECK(r.truth["alternatives"].size() == 5);
    CHECK(r.truth["individuals"].size() == c.n);
    for (std::size_t i = 0; i < c.n; ++i) {
        CHECK(r.truth["individuals"][i]["mask"] == marginal.rows[0].masks[i].to_string());
    }
}

TEST_CASE("per-individual study: an alternative equal to the truth scores identically") {
    auto c = small(StudyConfig::per_individual());
    c.p = 1;
    c.n = 1;
    c.alternatives = 8;
    const auto r = run_per_individual_study(c);
    const auto& rows = r.tables[0].rows;
    std::size_t duplicates = 0;
    for (std::size_t j = 1; j < rows.size(); ++j) {
        if (rows[j].masks == rows[0].masks) {
            ++duplicates;
            CHECK(rows[j].score == rows[0].score);
            CHECK(rows[0].score - rows[j].score == 0.0);
        }
    }
    CHECK(duplicates > 0);
}
