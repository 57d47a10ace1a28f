#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json_fwd.hpp>

#include "sdebf/model.hpp"
#include "sdebf/rng.hpp"
#include "sdebf/sde.hpp"

namespace sdebf {

// U = int phi b / sigma^2 dX (left-point Ito sum), V = int phi^2 b^2 / sigma^2 ds.
struct GirsanovStats {
    double u = 0.0;
    double v = 0.0;
};

// V_{theta0,theta1} = int phi0 phi1 b0 b1 / sigma^2 ds.
struct CrossVariation {
    double v_cross = 0.0;
};

// Everything one walk over a path yields for a (theta0, theta1) pair.
struct PairStats {
    GirsanovStats first;
    GirsanovStats second;
    double v_cross = 0.0;
};

// All functions here throw DiffusionDegenerate when |sigma(X(t_k))| < kSigmaFloor
// and InvalidArgument when path and covariates live on different grids.
GirsanovStats girsanov_stats(const Path& path, const CovariatePanel& covariates,
                             const SdeModel& model, const ParamVector& theta);

// Both models must share the diffusion.
CrossVariation cross_variation(const Path& path, const CovariatePanel& covariates,
                               const SdeModel& model0, const ParamVector& theta0,
                               const SdeModel& model1, const ParamVector& theta1);

PairStats pair_stats(const Path& path, const CovariatePanel& covariates, const SdeModel& model0,
                     const ParamVector& theta0, const SdeModel& model1,
                     const ParamVector& theta1);

// log of the density w.r.t. the null-drift law: U - V/2.
double log_density(const Path& path, const CovariatePanel& covariates, const SdeModel& model,
                   const ParamVector& theta);

// log f_{theta1} - log f_{theta0}.
double log_likelihood_ratio(const Path& path, const CovariatePanel& covariates,
                            const SdeModel& model1, const ParamVector& theta1,
                            const SdeModel& model0, const ParamVector& theta0);

struct GirsanovReport {
    double mean_u = 0.0;
    double mean_vcross = 0.0;
    double se_u = 0.0;
    double se_vcross = 0.0;
    std::size_t n_paths = 0;
    bool pass = false;

    double combined_se() const;
};

void to_json(nlohmann::json& j, const GirsanovReport& report);

// Monte-Carlo check of E_{theta0}[U_{theta1}] = E_{theta0}[V_{theta0,theta1}] with paths
// simulated under (model0, theta0). Passes iff the means agree within 3 combined SE.
GirsanovReport check_girsanov_identity(const SdeModel& model0, const ParamVector& theta0,
                                       const DriftModel& model1, const ParamVector& theta1,
                                       std::size_t n_paths, const CovariatePanel& covariates,
                                       double x0, const TimeGrid& grid, Rng& rng);

// One observed trajectory with its covariates and known diffusion.
struct Individual {
    Path path;
    std::shared_ptr<const CovariatePanel> covariates;
    Diffusion diffusion = Diffusion::constant(1.0);
};

using Dataset = std::vector<Individual>;

// sum_i log f_{i,theta}(X_i), walking every path.
double dataset_log_likelihood(const Dataset& data, const DriftModel& model,
                              const ParamVector& theta);

// Bilinear representation of the drift: phi_xi(z(t_k)) b_beta(x) = gamma(theta) . w(k, x)
// with gamma = xi (x) beta and w = (1, g_l(z_l) for active l) (x) psi(x).
std::size_t feature_count(const DriftModel& model) noexcept;
void drift_features(const DriftModel& model, const CovariatePanel& covariates, std::size_t k,
                    double x, std::span<double> out);
void drift_gamma(const DriftModel& model, std::span<const double> flat, std::span<double> out);

// Sufficient statistics for sum_i (U_i - V_i/2) under a fixed drift structure:
// U = gamma . h and V = gamma' G gamma with
//   h = sum_k w_k dX_k / sigma_k^2,  G = sum_k w_k w_k' dt / sigma_k^2.
// Built once per (dataset, model); each evaluation is then O(dim^2) instead of
// a walk over every path.
class LikelihoodKernel {
public:
    LikelihoodKernel(const Dataset& data, const DriftModel& model);
    LikelihoodKernel(const Individual& individual, const DriftModel& model);

    const DriftModel& model() const noexcept { return model_; }
    std::size_t dim() const noexcept { return model_.free_count(); }

    GirsanovStats stats(std::span<const double> flat) const;
    double log_likelihood(std::span<const double> flat) const;
    double log_likelihood(const ParamVector& theta) const;

    const Eigen::VectorXd& linear_term() const noexcept { return h_; }
    const Eigen::MatrixXd& quadratic_term() const noexcept { return G_; }

private:
    void accumulate(const Individual& individual);

    DriftModel model_;
    Eigen::VectorXd h_;
    Eigen::MatrixXd G_;
};

}  // namespace sdebf
