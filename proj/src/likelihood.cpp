#include "sdebf/likelihood.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "sdebf/errors.hpp"
#include "sdebf/stats.hpp"

namespace sdebf {

namespace {

void check_shapes(const Path& path, const CovariatePanel& covariates, const DriftModel& model,
                  const ParamVector& theta) {
    if (!(path.grid == covariates.grid())) {
        throw InvalidArgument("path and covariates are on different grids");
    }
    if (path.values.size() != path.grid.size()) {
        throw InvalidArgument("path length differs from its grid");
    }
    if (model.mask.size() != covariates.p()) {
        throw InvalidArgument("mask length differs from covariate count");
    }
    check_params(model, theta);
}

// 1 / sigma^2(x), guarded by the floor.
double inverse_variance(const Diffusion& diffusion, double x, std::size_t k) {
    const double s = diffusion(x);
    if (!(std::abs(s) >= kSigmaFloor)) throw DiffusionDegenerate(k, x);
    return 1.0 / (s * s);
}

}  // namespace

GirsanovStats girsanov_stats(const Path& path, const CovariatePanel& covariates,
                             const SdeModel& model, const ParamVector& theta) {
    check_shapes(path, covariates, model.drift, theta);
    const double dt = path.grid.dt();
    const auto& x = path.values;
    GirsanovStats s;
    for (std::size_t k = 0; k + 1 < x.size(); ++k) {
        const double w = inverse_variance(model.diffusion, x[k], k);
        const double a = drift_value(model.drift, theta, covariates, k, x[k]);
        s.u += a * w * (x[k + 1] - x[k]);
        s.v += a * a * w * dt;
    }
    return s;
}

PairStats pair_stats(const Path& path, const CovariatePanel& covariates, const SdeModel& model0,
                     const ParamVector& theta0, const SdeModel& model1,
                     const ParamVector& theta1) {
    check_shapes(path, covariates, model0.drift, theta0);
    check_shapes(path, covariates, model1.drift, theta1);
    if (!(model0.diffusion == model1.diffusion)) {
        throw InvalidArgument("cross variation requires a shared diffusion");
    }
    const double dt = path.grid.dt();
    const auto& x = path.values;
    PairStats s;
    for (std::size_t k = 0; k + 1 < x.size(); ++k) {
        const double w = inverse_variance(model0.diffusion, x[k], k);
        const double a0 = drift_value(model0.drift, theta0, covariates, k, x[k]);
        const double a1 = drift_value(model1.drift, theta1, covariates, k, x[k]);
        const double dx = x[k + 1] - x[k];
        s.first.u += a0 * w * dx;
        s.first.v += a0 * a0 * w * dt;
        s.second.u += a1 * w * dx;
        s.second.v += a1 * a1 * w * dt;
        s.v_cross += a0 * a1 * w * dt;
    }
    return s;
}

CrossVariation cross_variation(const Path& path, const CovariatePanel& covariates,
                               const SdeModel& model0, const ParamVector& theta0,
                               const SdeModel& model1, const ParamVector& theta1) {
    return {pair_stats(path, covariates, model0, theta0, model1, theta1).v_cross};
}

double log_density(const Path& path, const CovariatePanel& covariates, const SdeModel& model,
                   const ParamVector& theta) {
    const auto s = girsanov_stats(path, covariates, model, theta);
    return s.u - 0.5 * s.v;
}

double log_likelihood_ratio(const Path& path, const CovariatePanel& covariates,
                            const SdeModel& model1, const ParamVector& theta1,
                            const SdeModel& model0, const ParamVector& theta0) {
    return log_density(path, covariates, model1, theta1) -
           log_density(path, covariates, model0, theta0);
}

double GirsanovReport::combined_se() const { return std::hypot(se_u, se_vcross); }

void to_json(nlohmann::json& j, const GirsanovReport& r) {
    j = nlohmann::json{{"mean_u", r.mean_u},       {"mean_vcross", r.mean_vcross},
                       {"se_u", r.se_u},           {"se_vcross", r.se_vcross},
                       {"n_paths", r.n_paths},     {"pass", r.pass}};
}

GirsanovReport check_girsanov_identity(const SdeModel& model0, const ParamVector& theta0,
                                       const DriftModel& model1, const ParamVector& theta1,
                                       std::size_t n_paths, const CovariatePanel& covariates,
                                       double x0, const TimeGrid& grid, Rng& rng) {
    if (n_paths < 100) throw InvalidArgument("check_girsanov_identity: need at least 100 paths");
    const SdeModel other{model1, model0.diffusion};
    const std::uint64_t base = rng.next_u64();
    RunningStats u_stats;
    RunningStats v_stats;
    for (std::size_t i = 0; i < n_paths; ++i) {
        Rng path_rng(derive_seed(base, i));
        const Path path = simulate_path(model0, theta0, covariates, x0, grid, path_rng);
        const auto s = pair_stats(path, covariates, model0, theta0, other, theta1);
        u_stats.push(s.second.u);
        v_stats.push(s.v_cross);
    }
    GirsanovReport r;
    r.mean_u = u_stats.mean();
    r.mean_vcross = v_stats.mean();
    r.se_u = u_stats.standard_error();
    r.se_vcross = v_stats.standard_error();
    r.n_paths = n_paths;
    r.pass = std::abs(r.mean_u - r.mean_vcross) <= 3.0 * r.combined_se();
    return r;
}

double dataset_log_likelihood(const Dataset& data, const DriftModel& model,
                              const ParamVector& theta) {
    double total = 0.0;
    for (const auto& ind : data) {
        total += log_density(ind.path, *ind.covariates, SdeModel{model, ind.diffusion}, theta);
    }
    return total;
}

std::size_t feature_count(const DriftModel& model) noexcept {
    return model.xi_count() * std::max<std::size_t>(1, beta_count(model.family));
}

void drift_features(const DriftModel& model, const CovariatePanel& covariates, std::size_t k,
                    double x, std::span<double> out) {
    const std::size_t nb = beta_count(model.family);
    double psi[2] = {1.0, 1.0};
    if (nb > 0) drift_basis(model.family, x, std::span<double>(psi, nb));
    const std::size_t stride = std::max<std::size_t>(1, nb);
    std::size_t a = 0;
    auto put = [&](double u) {
        for (std::size_t b = 0; b < stride; ++b) out[a * stride + b] = u * psi[b];
        ++a;
    };
    put(1.0);
    for (std::size_t l = 0; l < model.mask.size(); ++l) {
        if (model.mask[l]) put(covariates.transformed(l, k));
    }
}

void drift_gamma(const DriftModel& model, std::span<const double> flat, std::span<double> out) {
    const std::size_t nxi = model.xi_count();
    const std::size_t nb = beta_count(model.family);
    const std::size_t stride = std::max<std::size_t>(1, nb);
    for (std::size_t a = 0; a < nxi; ++a) {
        for (std::size_t b = 0; b < stride; ++b) {
            out[a * stride + b] = flat[a] * (nb == 0 ? 1.0 : flat[nxi + b]);
        }
    }
}

LikelihoodKernel::LikelihoodKernel(const Dataset& data, const DriftModel& model)
    : model_(model) {
    const auto m = static_cast<Eigen::Index>(feature_count(model));
    h_ = Eigen::VectorXd::Zero(m);
    G_ = Eigen::MatrixXd::Zero(m, m);
    for (const auto& ind : data) accumulate(ind);
    G_ = G_.selfadjointView<Eigen::Lower>();
}

LikelihoodKernel::LikelihoodKernel(const Individual& individual, const DriftModel& model)
    : LikelihoodKernel(Dataset{individual}, model) {}

void LikelihoodKernel::accumulate(const Individual& ind) {
    const auto& cov = *ind.covariates;
    if (!(ind.path.grid == cov.grid())) {
        throw InvalidArgument("path and covariates are on different grids");
    }
    if (model_.mask.size() != cov.p()) {
        throw InvalidArgument("mask length differs from covariate count");
    }
    const auto& x = ind.path.values;
    const double dt = ind.path.grid.dt();
    Eigen::VectorXd w(h_.size());
    for (std::size_t k = 0; k + 1 < x.size(); ++k) {
        const double iv = inverse_variance(ind.diffusion, x[k], k);
        drift_features(model_, cov, k, x[k], std::span<double>(w.data(), w.size()));
        h_.noalias() += w * (iv * (x[k + 1] - x[k]));
        G_.selfadjointView<Eigen::Lower>().rankUpdate(w, iv * dt);
    }
}

GirsanovStats LikelihoodKernel::stats(std::span<const double> flat) const {
    if (flat.size() != dim()) throw InvalidArgument("parameter vector has the wrong size");
    const auto m = static_cast<std::size_t>(h_.size());
    // Evaluated millions of times inside the optimizer: avoid heap traffic for the
    // usual small feature counts.
    double small[64];
    std::vector<double> large;
    double* g = small;
    if (m > 64) {
        large.resize(m);
        g = large.data();
    }
    drift_gamma(model_, flat, std::span<double>(g, m));
    double u = 0.0;
    double v = 0.0;
    for (std::size_t a = 0; a < m; ++a) {
        u += g[a] * h_[static_cast<Eigen::Index>(a)];
        double row = 0.0;
        for (std::size_t b = 0; b < m; ++b) {
            row += G_(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) * g[b];
        }
        v += g[a] * row;
    }
    return {u, v};
}

double LikelihoodKernel::log_likelihood(std::span<const double> flat) const {
    const auto s = stats(flat);
    return s.u - 0.5 * s.v;
}

double LikelihoodKernel::log_likelihood(const ParamVector& theta) const {
    check_params(model_, theta);
    const auto flat = theta.flat();
    return log_likelihood(std::span<const double>(flat));
}

}  // namespace sdebf
