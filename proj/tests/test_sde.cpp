#include <doctest.h>

#include <cmath>
#include <sstream>

#include "sdebf/errors.hpp"
#include "sdebf/sde.hpp"
#include "sdebf/stats.hpp"
#include "test_util.hpp"

using namespace sdebf;

TEST_CASE("make_grid arithmetic") {
    const auto g = make_grid(0.0, 1.0, 500);
    CHECK(g.size() == 501);
    CHECK(g.dt() == doctest::Approx(0.002));
    CHECK(g.point(500) == 1.0);

    const auto g5 = make_grid(0.0, 5.0, 500);
    CHECK(g5.dt() == doctest::Approx(0.01));
    CHECK(g5.size() == 501);

    const auto g1 = make_grid(0.0, 1.0, 1);
    CHECK(g1.point(0) == 0.0);
    CHECK(g1.point(1) == 1.0);

    CHECK_THROWS_AS(make_grid(0.0, 0.0, 10), InvalidArgument);
    CHECK_THROWS_AS(make_grid(0.0, -1.0, 10), InvalidArgument);
    CHECK_THROWS_AS(make_grid(0.0, 1.0, 0), InvalidArgument);
}

TEST_CASE("grid end point within accumulated epsilon") {
    const auto g = make_grid(0.3, 7.1, 997);
    for (std::size_t k = 0; k < g.size(); ++k) {
        CHECK(std::abs(g.point(k) - (0.3 + 7.1 * static_cast<double>(k) / 997.0)) <=
              1e-15 * static_cast<double>(k + 1) * 8.0);
    }
}

TEST_CASE("wiener increments are deterministic and have variance dt") {
    const auto g = make_grid(0.0, 1.0, 500);
    Rng a(7), b(7);
    CHECK(sample_wiener_increments(g, a) == sample_wiener_increments(g, b));

    const auto big = make_grid(0.0, 10000.0, 1000000);
    Rng r(11);
    const auto inc = sample_wiener_increments(big, r);
    RunningStats s, sq;
    for (double d : inc) {
        s.push(d);
        sq.push(d * d);
    }
    // Variance oracle: mean of squares (true mean 0) vs dt, SE from the squares.
    CHECK(std::abs(sq.mean() - 0.01) <= 3.0 * sq.standard_error());
    CHECK(std::abs(s.variance() - 0.01) <= 3.0 * sq.standard_error() + 1e-6);
}

TEST_CASE("brownian endpoint variance equals T") {
    const auto g = make_grid(0.0, 2.0, 50);
    Rng r(3);
    RunningStats sq;
    for (int i = 0; i < 10000; ++i) {
        double sum = 0.0;
        for (double d : sample_wiener_increments(g, r)) sum += d;
        sq.push(sum * sum);
    }
    CHECK(std::abs(sq.mean() - 2.0) <= 3.0 * sq.standard_error());
}

TEST_CASE("simulate_path: no dynamics gives a constant path") {
    const auto g = make_grid(0.0, 1.0, 100);
    const SdeModel m{DriftModel{DriftFamily::Affine, ModelMask::none(0)}, Diffusion::constant(0.0)};
    const ParamVector th{{0.0, 0.0}, {0.0}};
    Rng r(1);
    const auto p = simulate_path(m, th, CovariatePanel::none(g), 2.5, g, r);
    for (double v : p.values) CHECK(v == 2.5);
}

TEST_CASE("simulate_path: decay ODE converges at first order") {
    const SdeModel m{DriftModel{DriftFamily::Affine, ModelMask::none(0)}, Diffusion::constant(0.0)};
    const ParamVector th{{0.0, -1.0}, {1.0}};
    double prev = 0.0;
    for (std::size_t n : {50u, 100u, 200u, 400u}) {
        const auto g = make_grid(0.0, 1.0, n);
        Rng r(1);
        const auto p = simulate_path(m, th, CovariatePanel::none(g), 1.0, g, r);
        const double err = std::abs(p.terminal() - std::exp(-1.0));
        CHECK(err <= 1.0 * g.dt());
        if (prev > 0.0) CHECK(prev / err >= 1.9);
        prev = err;
    }
}

TEST_CASE("simulate_path: OU mean") {
    const auto g = make_grid(0.0, 1.0, 200);
    const SdeModel m{DriftModel{DriftFamily::Affine, ModelMask::none(0)}, Diffusion::constant(1.0)};
    const ParamVector th{{0.0, -1.0}, {1.0}};
    Rng r(5);
    RunningStats s;
    for (int i = 0; i < 10000; ++i) s.push(simulate_path(m, th, CovariatePanel::none(g), 2.0, g, r).terminal());
    // Euler mean is x0 (1 - dt)^n; the exact OU mean differs from it by O(dt).
    CHECK(std::abs(s.mean() - 2.0 * std::exp(-1.0)) <= 3.0 * s.standard_error() + 2.0 * g.dt());
}

TEST_CASE("simulate_path: divergence is reported with the step") {
    const auto g = make_grid(0.0, 1.0, 100);
    const SdeModel m{DriftModel{DriftFamily::Linear, ModelMask::none(0)}, Diffusion::constant(0.0)};
    const ParamVector th{{1e305}, {1e305}};
    Rng r(1);
    CHECK_THROWS_AS(simulate_path(m, th, CovariatePanel::none(g), 1.0, g, r), SimulationDiverged);
}

TEST_CASE("simulate_covariates") {
    const auto g = make_grid(0.0, 1.0, 500);
    SUBCASE("zero coefficients give brownian columns") {
        std::vector<CovariateSdeSpec> specs = {CovariateSdeSpec::affine(0, 0), CovariateSdeSpec::constant(0),
                                               CovariateSdeSpec::linear(0)};
        Rng r(2);
        const auto panel = simulate_covariates(specs, g, r);
        REQUIRE(panel.p() == 3);
        Rng r2(2);
        const auto w = sample_wiener_increments(g, r2);
        CHECK(panel.raw(0, 0) == 0.0);
        CHECK(panel.raw(0, 1) == doctest::Approx(w[0]).epsilon(1e-12));
        CHECK_FALSE(panel.standardized());
    }
    SUBCASE("constant drift with zero diffusion integrates to t") {
        auto spec = CovariateSdeSpec::constant(1.0);
        spec.diffusion = 0.0;
        Rng r(2);
        const auto panel = simulate_covariates(std::span<const CovariateSdeSpec>(&spec, 1), g, r);
        for (std::size_t k = 0; k < g.size(); ++k) CHECK(panel.raw(0, k) == doctest::Approx(g.point(k)).epsilon(1e-12));
    }
    SUBCASE("study affine spec is finite") {
        Rng r(4);
        std::vector<CovariateSdeSpec> specs = {CovariateSdeSpec::affine(0.01 * r.normal(), 0.01 * r.normal())};
        const auto panel = simulate_covariates(specs, g, r);
        for (double v : panel.column(0)) CHECK(std::isfinite(v));
    }
}

TEST_CASE("standardize") {
    const auto g = make_grid(0.0, 1.0, 2);
    const auto s = standardize(CovariatePanel(g, {{1.0, 2.0, 3.0}}));
    double mean = 0.0, var = 0.0;
    for (double v : s.column(0)) mean += v / 3.0;
    for (double v : s.column(0)) var += (v - mean) * (v - mean) / 3.0;
    CHECK(std::abs(mean) <= 1e-12);
    CHECK(std::abs(var - 1.0) <= 1e-12);
    CHECK(s.standardized());

    const auto again = standardize(s);
    for (std::size_t k = 0; k < 3; ++k) CHECK(std::abs(again.raw(0, k) - s.raw(0, k)) <= 1e-12);

    CHECK_THROWS_AS(standardize(CovariatePanel(g, {{1.0, 2.0, 3.0}, {4.0, 4.0, 4.0}})), DegenerateCovariate);
    try {
        standardize(CovariatePanel(g, {{1.0, 2.0, 3.0}, {4.0, 4.0, 4.0}}));
    } catch (const DegenerateCovariate& e) {
        CHECK(e.column() == 1);
    }
}

TEST_CASE("study panels are standardized to 1e-9") {
    const auto g = make_grid(0.0, 1.0, 500);
    Rng r(8);
    const auto panel = testing::study_panel(g, r);
    for (std::size_t l = 0; l < panel.p(); ++l) {
        double mean = 0.0, var = 0.0;
        for (double v : panel.column(l)) mean += v;
        mean /= static_cast<double>(g.size());
        for (double v : panel.column(l)) var += (v - mean) * (v - mean);
        var /= static_cast<double>(g.size());
        CHECK(std::abs(mean) <= 1e-9);
        CHECK(std::abs(var - 1.0) <= 1e-9);
    }
}

TEST_CASE("cross-sectional covariate averages shrink like 1/n") {
    const auto g = make_grid(0.0, 1.0, 100);
    const std::size_t k = 37;
    std::vector<double> variances;
    for (std::size_t n : {10u, 100u, 1000u}) {
        RunningStats across;
        for (int rep = 0; rep < 200; ++rep) {
            Rng r(derive_seed(n, rep));
            double avg = 0.0;
            for (std::size_t i = 0; i < n; ++i) avg += testing::study_panel(g, r).raw(0, k);
            across.push(avg / static_cast<double>(n));
        }
        variances.push_back(across.variance() * static_cast<double>(n));
    }
    // n * Var(avg) stays roughly constant (it would grow like n without averaging).
    for (double v : variances) {
        CHECK(v > 0.3);
        CHECK(v < 3.0);
    }
}

TEST_CASE("simulation is deterministic per seed") {
    const auto g = make_grid(0.0, 1.0, 500);
    Rng r1(99), r2(99);
    const auto p1 = testing::study_panel(g, r1);
    const auto p2 = testing::study_panel(g, r2);
    CHECK(p1.columns() == p2.columns());
    const auto m = testing::affine_model(ModelMask::full(3), 10.0);
    const ParamVector th{{0.3, -0.2}, {1.0, 0.5, -0.4, 0.2}};
    Rng a(5), b(5);
    CHECK(simulate_path(m, th, p1, 0.0, g, a).values == simulate_path(m, th, p2, 0.0, g, b).values);
}

TEST_CASE("derived seeds are stable under appending") {
    CHECK(derive_seed(42, 3) == (42ULL ^ splitmix64(3)));
    CHECK(derive_seed(42, 0) != derive_seed(42, 1));
}
