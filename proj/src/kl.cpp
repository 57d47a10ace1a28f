#include "sdebf/kl.hpp"

#include <cmath>
#include <limits>

#include <nlohmann/json.hpp>

#include "sdebf/errors.hpp"
#include "sdebf/stats.hpp"

namespace sdebf {

namespace {

void check_common(const SdeModel& model0, const DriftModel& model1,
                  const CovariatePanel& covariates) {
    if (model0.drift.mask.size() != covariates.p() || model1.mask.size() != covariates.p()) {
        throw InvalidArgument("mask length differs from covariate count");
    }
}

double inverse_variance(const Diffusion& diffusion, double x, std::size_t k) {
    const double s = diffusion(x);
    if (!(std::abs(s) >= kSigmaFloor)) throw DiffusionDegenerate(k, x);
    return 1.0 / (s * s);
}

// 1/2 sum_k (a0 - a1)^2 / sigma^2 dt on one path.
double pathwise_kl(const Path& path, const SdeModel& model0, const ParamVector& theta0,
                   const DriftModel& model1, const ParamVector& theta1,
                   const CovariatePanel& covariates) {
    const double dt = path.grid.dt();
    const auto& x = path.values;
    double acc = 0.0;
    for (std::size_t k = 0; k + 1 < x.size(); ++k) {
        const double iv = inverse_variance(model0.diffusion, x[k], k);
        const double d = drift_value(model0.drift, theta0, covariates, k, x[k]) -
                         drift_value(model1, theta1, covariates, k, x[k]);
        acc += d * d * iv * dt;
    }
    return 0.5 * acc;
}

std::vector<Path> simulate_paths(const SdeModel& model, const ParamVector& theta,
                                 const CovariatePanel& covariates, double x0,
                                 const TimeGrid& grid, std::size_t n_paths, Rng& rng) {
    const std::uint64_t base = rng.next_u64();
    std::vector<Path> paths;
    paths.reserve(n_paths);
    for (std::size_t i = 0; i < n_paths; ++i) {
        Rng path_rng(derive_seed(base, i));
        paths.push_back(simulate_path(model, theta, covariates, x0, grid, path_rng));
    }
    return paths;
}

}  // namespace

KlEstimate kl_on_paths(const std::vector<Path>& paths, const SdeModel& model0,
                       const ParamVector& theta0, const DriftModel& model1,
                       const ParamVector& theta1, const CovariatePanel& covariates) {
    check_common(model0, model1, covariates);
    check_params(model0.drift, theta0);
    check_params(model1, theta1);
    RunningStats acc;
    for (const auto& path : paths) {
        if (!(path.grid == covariates.grid())) {
            throw InvalidArgument("path and covariates are on different grids");
        }
        acc.push(pathwise_kl(path, model0, theta0, model1, theta1, covariates));
    }
    return {acc.mean(), acc.standard_error(), paths.size()};
}

KlEstimate kl_mc(const SdeModel& model0, const ParamVector& theta0, const DriftModel& model1,
                 const ParamVector& theta1, const CovariatePanel& covariates, double x0,
                 const TimeGrid& grid, std::size_t n_paths, Rng& rng) {
    if (n_paths < 100) throw InvalidArgument("kl_mc: need at least 100 paths");
    check_common(model0, model1, covariates);
    const auto paths = simulate_paths(model0, theta0, covariates, x0, grid, n_paths, rng);
    return kl_on_paths(paths, model0, theta0, model1, theta1, covariates);
}

ParamGrid ParamGrid::box(const std::vector<double>& lower, const std::vector<double>& upper,
                         std::size_t points_per_dim) {
    if (lower.size() != upper.size()) throw InvalidArgument("box bounds differ in dimension");
    if (points_per_dim == 0) throw InvalidArgument("box needs at least one point per axis");
    ParamGrid g;
    for (std::size_t d = 0; d < lower.size(); ++d) {
        if (!(lower[d] <= upper[d])) throw InvalidArgument("box lower bound exceeds upper");
        std::vector<double> axis(points_per_dim);
        for (std::size_t i = 0; i < points_per_dim; ++i) {
            axis[i] = points_per_dim == 1
                          ? lower[d]
                          : lower[d] + (upper[d] - lower[d]) * static_cast<double>(i) /
                                           static_cast<double>(points_per_dim - 1);
        }
        g.axes.push_back(std::move(axis));
    }
    return g;
}

std::size_t ParamGrid::size() const noexcept {
    if (axes.empty()) return 0;
    std::size_t n = 1;
    for (const auto& a : axes) n *= a.size();
    return n;
}

std::vector<double> ParamGrid::point(std::size_t index) const {
    std::vector<double> p(axes.size());
    for (std::size_t d = axes.size(); d-- > 0;) {
        p[d] = axes[d][index % axes[d].size()];
        index /= axes[d].size();
    }
    return p;
}

void to_json(nlohmann::json& j, const DeltaEstimate& d) {
    j = nlohmann::json{{"delta", d.delta},
                       {"argmin", {{"xi", d.argmin_theta.xi}, {"beta", d.argmin_theta.beta}}},
                       {"grid", d.grid.axes},
                       {"n_paths", d.n_paths},
                       {"se_at_argmin", d.se_at_argmin}};
}

DeltaEstimate delta_min(const SdeModel& model0, const ParamVector& theta0,
                        const DriftModel& model1, const ParamGrid& param_grid,
                        const CovariatePanel& covariates, double x0, const TimeGrid& grid,
                        std::size_t n_paths, Rng& rng) {
    if (param_grid.size() == 0) throw InvalidArgument("delta_min: empty parameter grid");
    if (param_grid.dim() != model1.free_count()) {
        throw InvalidArgument("delta_min: grid dimension differs from the model's parameter count");
    }
    if (n_paths < 100) throw InvalidArgument("delta_min: need at least 100 paths");
    check_common(model0, model1, covariates);
    check_params(model0.drift, theta0);
    const auto paths = simulate_paths(model0, theta0, covariates, x0, grid, n_paths, rng);

    // Pooled sufficient statistics of 1/2 sum (a0 - gamma . w)^2 / sigma^2 dt over the
    // path set: 1/2 (s0 - 2 gamma . c + gamma' G gamma).
    const auto m = static_cast<Eigen::Index>(feature_count(model1));
    double s0 = 0.0;
    Eigen::VectorXd c = Eigen::VectorXd::Zero(m);
    Eigen::MatrixXd G = Eigen::MatrixXd::Zero(m, m);
    Eigen::VectorXd w(m);
    for (const auto& path : paths) {
        const auto& x = path.values;
        const double dt = grid.dt();
        for (std::size_t k = 0; k + 1 < x.size(); ++k) {
            const double iv = inverse_variance(model0.diffusion, x[k], k) * dt;
            const double a0 = drift_value(model0.drift, theta0, covariates, k, x[k]);
            drift_features(model1, covariates, k, x[k], std::span<double>(w.data(), w.size()));
            s0 += a0 * a0 * iv;
            c.noalias() += w * (a0 * iv);
            G.selfadjointView<Eigen::Lower>().rankUpdate(w, iv);
        }
    }
    G = G.selfadjointView<Eigen::Lower>();
    const double inv_n = 1.0 / static_cast<double>(n_paths);

    double best = std::numeric_limits<double>::infinity();
    std::size_t best_index = 0;
    Eigen::VectorXd gamma(m);
    for (std::size_t i = 0; i < param_grid.size(); ++i) {
        const auto flat = param_grid.point(i);
        drift_gamma(model1, flat, std::span<double>(gamma.data(), gamma.size()));
        const double kl = 0.5 * inv_n * (s0 - 2.0 * gamma.dot(c) + gamma.dot(G * gamma));
        if (kl < best) {
            best = kl;
            best_index = i;
        }
    }

    DeltaEstimate out;
    const auto flat = param_grid.point(best_index);
    out.argmin_theta = ParamVector::from_flat(model1, flat);
    // Exact pathwise value (and its SE) at the minimizer.
    const auto at_min = kl_on_paths(paths, model0, theta0, model1, out.argmin_theta, covariates);
    out.delta = at_min.value;
    out.se_at_argmin = at_min.se;
    out.grid = param_grid;
    out.n_paths = n_paths;
    return out;
}

CovariatePanel LimitProfile::as_panel(double horizon) const {
    const double steps = horizon / grid.dt();
    const auto n = static_cast<std::size_t>(std::llround(steps));
    if (n == 0 || n > grid.n_steps() || std::abs(steps - static_cast<double>(n)) > 1e-6) {
        throw InvalidArgument("profile horizon must be a positive grid point within the profile");
    }
    const TimeGrid sub = n == grid.n_steps() ? grid : make_grid(grid.t0(), grid.dt() * n, n);
    std::vector<std::vector<double>> cols;
    for (const auto& c : means) cols.emplace_back(c.begin(), c.begin() + static_cast<long>(n + 1));
    return CovariatePanel(sub, std::move(cols));
}

LimitProfile limit_profile(const std::vector<CovariatePanel>& panels) {
    if (panels.empty()) throw InvalidArgument("limit_profile: no panels");
    const auto& first = panels.front();
    for (const auto& panel : panels) {
        if (!(panel.grid() == first.grid()) || panel.p() != first.p()) {
            throw InvalidArgument("limit_profile: panels differ in grid or covariate count");
        }
    }
    const std::size_t p = first.p();
    const std::size_t K = first.grid().size();
    const double inv_n = 1.0 / static_cast<double>(panels.size());
    LimitProfile prof;
    prof.grid = first.grid();
    prof.means.assign(p, std::vector<double>(K, 0.0));
    prof.product_means.assign(p, std::vector<std::vector<double>>(p, std::vector<double>(K, 0.0)));
    std::vector<double> g(p);
    for (const auto& panel : panels) {
        for (std::size_t k = 0; k < K; ++k) {
            for (std::size_t l = 0; l < p; ++l) g[l] = panel.transformed(l, k);
            for (std::size_t l = 0; l < p; ++l) {
                prof.means[l][k] += g[l];
                for (std::size_t m = 0; m < p; ++m) prof.product_means[l][m][k] += g[l] * g[m];
            }
        }
    }
    for (std::size_t l = 0; l < p; ++l) {
        for (std::size_t k = 0; k < K; ++k) {
            prof.means[l][k] *= inv_n;
            for (std::size_t m = 0; m < p; ++m) prof.product_means[l][m][k] *= inv_n;
        }
    }
    return prof;
}

KlEstimate kl_limit_noniid(const SdeModel& model0, const ParamVector& theta0,
                           const DriftModel& model1, const ParamVector& theta1,
                           const LimitProfile& profile, double x_inf, double t_inf,
                           std::size_t n_paths, Rng& rng) {
    const CovariatePanel panel = profile.as_panel(t_inf);
    return kl_mc(model0, theta0, model1, theta1, panel, x_inf, panel.grid(), n_paths, rng);
}

}  // namespace sdebf
