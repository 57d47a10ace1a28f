#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "sdebf/likelihood.hpp"

namespace sdebf {

struct KlEstimate {
    double value = 0.0;
    double se = 0.0;
    std::size_t n_paths = 0;
};

// Monte-Carlo K(f_theta0, f_theta1) under paths simulated from (model0, theta0),
// averaging the pathwise quadratic form 1/2 V0 - V_cross + 1/2 V1, evaluated as
// 1/2 int (phi0 b0 - phi1 b1)^2 / sigma^2 ds so it is zero whenever the drifts coincide.
KlEstimate kl_mc(const SdeModel& model0, const ParamVector& theta0, const DriftModel& model1,
                 const ParamVector& theta1, const CovariatePanel& covariates, double x0,
                 const TimeGrid& grid, std::size_t n_paths, Rng& rng);

// Same estimator on a caller-supplied path set (common random numbers).
KlEstimate kl_on_paths(const std::vector<Path>& paths, const SdeModel& model0,
                       const ParamVector& theta0, const DriftModel& model1,
                       const ParamVector& theta1, const CovariatePanel& covariates);

// Cartesian grid over the flat parameters of a model ([xi..., beta...]).
struct ParamGrid {
    std::vector<std::vector<double>> axes;

    // points_per_dim equispaced values on [lower_d, upper_d].
    static ParamGrid box(const std::vector<double>& lower, const std::vector<double>& upper,
                         std::size_t points_per_dim = 21);

    std::size_t size() const noexcept;
    std::size_t dim() const noexcept { return axes.size(); }
    // Lexicographic enumeration; the last axis varies fastest.
    std::vector<double> point(std::size_t index) const;
};

struct DeltaEstimate {
    double delta = 0.0;
    double se_at_argmin = 0.0;
    ParamVector argmin_theta;
    ParamGrid grid;
    std::size_t n_paths = 0;
};

void to_json(nlohmann::json& j, const DeltaEstimate& d);

// delta = min over the grid of K(f_theta0, f_theta1), one shared path set for every
// candidate. Ties go to the lexicographically first grid point.
DeltaEstimate delta_min(const SdeModel& model0, const ParamVector& theta0,
                        const DriftModel& model1, const ParamGrid& param_grid,
                        const CovariatePanel& covariates, double x0, const TimeGrid& grid,
                        std::size_t n_paths, Rng& rng);

// Cross-sectional averages c_l(t_k) = (1/n) sum_i g_l(z_il(t_k)) and
// m_lm(t_k) = (1/n) sum_i g_l(z_il) g_m(z_im).
struct LimitProfile {
    TimeGrid grid;
    std::vector<std::vector<double>> means;  // [l][k]
    std::vector<std::vector<std::vector<double>>> product_means;  // [l][m][k]

    std::size_t p() const noexcept { return means.size(); }
    // Panel whose columns are c_l(t), restricted to [t0, t0 + horizon].
    CovariatePanel as_panel(double horizon) const;
};

LimitProfile limit_profile(const std::vector<CovariatePanel>& panels);

// kl_mc with the covariates replaced by the profile c_l(t), initial value x_inf and
// horizon T_inf (a grid point of the profile).
KlEstimate kl_limit_noniid(const SdeModel& model0, const ParamVector& theta0,
                           const DriftModel& model1, const ParamVector& theta1,
                           const LimitProfile& profile, double x_inf, double t_inf,
                           std::size_t n_paths, Rng& rng);

}  // namespace sdebf
