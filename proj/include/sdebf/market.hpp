#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sdebf/selection.hpp"

namespace sdebf {

// One company's close prices and the covariate series on the same dates.
struct SeriesBundle {
    std::string company;
    std::vector<std::string> dates;  // ISO yyyy-mm-dd, ascending
    std::vector<double> prices;      // strictly positive
    std::vector<std::string> covariate_names;
    // Standardized over time, one unit step of dt per observation.
    std::shared_ptr<const CovariatePanel> covariates;
    double dt = 1.0 / 252.0;

    std::size_t size() const noexcept { return prices.size(); }
    Path path() const;
};

// Reads `date,close` and `date,c1,...,cp` files and joins them on the date.
// Rows may appear in any order; both files must cover the same dates.
// Throws ParseError (with the 1-based data row where one applies).
SeriesBundle load_series(const std::string& price_csv, const std::string& covariate_csv,
                         double dt = 1.0 / 252.0, const std::string& company = "");

// Bundle from in-memory data (prices in date order); same validation as load_series.
SeriesBundle make_bundle(std::string company, std::vector<std::string> dates, std::vector<double> prices,
                         std::vector<std::string> covariate_names,
                         std::vector<std::vector<double>> covariates, double dt);

// dX = (t1 + t2 X) dt + t3 X^t4 dW and its restrictions.
enum class SdeFamily { Vasicek, Cir, Gbm, Ckls };

std::string to_string(SdeFamily family);
SdeFamily sde_family_from_string(const std::string& name);
// Free parameters: Vasicek (t1, t2, t3), CIR (t1, t2, t3), GBM (t2, t3), CKLS (t1..t4).
std::size_t parameter_count(SdeFamily family) noexcept;
// Full (t1, t2, t3, t4) from the family's free parameters.
std::vector<double> expand_params(SdeFamily family, std::span<const double> free);

// sum_k log N(dX_k; (t1 + t2 X_k) dt, (t3 X_k^t4)^2 dt) with full parameters.
// Throws DiffusionDegenerate when |sigma(X_k)| < kSigmaFloor and InvalidArgument for a
// non-positive state under t4 != 0.
double euler_pseudo_loglik(std::span<const double> values, std::span<const double> full, double dt);
double euler_pseudo_loglik(std::span<const double> values, SdeFamily family,
                           std::span<const double> free, double dt);

struct SdeFamilyFit {
    SdeFamily family = SdeFamily::Ckls;
    std::vector<double> params;  // full (t1, t2, t3, t4)
    double log_likelihood = 0.0;
    double bic = 0.0;
    std::size_t k = 0;
    std::size_t n_increments = 0;
};

void to_json(nlohmann::json& j, const SdeFamilyFit& f);

// Maximizes the pseudo-likelihood. For fixed t4 the drift and t3 have closed-form
// weighted least-squares maximizers, so only CKLS needs a search (annealing over t4).
SdeFamilyFit fit_family(std::span<const double> values, SdeFamily family, double dt,
                        const AnnealConfig& anneal);
// All four families, ordered by BIC ascending (ties keep the family order).
std::vector<SdeFamilyFit> fit_families(std::span<const double> values, double dt,
                                       const AnnealConfig& anneal);

// Marginal log-likelihood of every covariate mask for the bundle under the drift
// (xi_0 + sum xi_l c_l)(b_1 + b_2 X) and the fixed diffusion A X^B, with an
// isotropic normal prior of sd `prior_sd` at each mask's MLE. Normalized by T.
SelectionReport select_covariates_real(const SeriesBundle& bundle, double a, double b, double prior_sd,
                                       std::size_t m_draws, const AnnealConfig& anneal,
                                       std::uint64_t seed, std::size_t threads = 1);

// Euler path of CKLS with full parameters; throws SimulationDiverged when the state
// leaves (0, inf).
std::vector<double> simulate_ckls(std::span<const double> full, double x0, double dt, std::size_t n,
                                  Rng& rng);

struct SyntheticMarketSpec {
    ModelMask mask = ModelMask::parse("(1,0,1)");
    std::vector<double> xi{0.5, 0.6, 0.6, 0.6};  // xi_0, then one per covariate
    std::vector<double> beta{0.0, 0.5};
    double a = 0.2;
    double b = 1.0;
    double x0 = 1.0;
    double dt = 0.01;
    std::size_t n = 2000;  // observations
};

// Bundle whose prices follow the covariate drift model with diffusion a X^b, using
// the study covariate processes with the given mask's coefficients active.
SeriesBundle synthetic_bundle(const SyntheticMarketSpec& spec, std::uint64_t seed);

struct CompanyReport {
    std::string company;
    std::size_t n_obs = 0;
    std::vector<SdeFamilyFit> fits;  // BIC ascending
    double diffusion_a = 0.0;
    double diffusion_b = 0.0;
    std::string diffusion_hash;
    SelectionReport selection;
    ModelMask winner;
    std::vector<std::string> winner_covariates;
};

void to_json(nlohmann::json& j, const CompanyReport& r);

struct MarketConfig {
    double prior_sd = 1.0;
    // The unit-sd prior is wide against the likelihood, so the prior average needs
    // more draws than the simulation studies.
    std::size_t m_draws = 100000;
    // One-dimensional exponent search of the CKLS fit.
    AnnealConfig family_anneal = [] {
        AnnealConfig a;
        a.max_evaluations = 2000;
        a.restarts = 1;
        return a;
    }();
    AnnealConfig selection_anneal;
    std::uint64_t seed = 1;
    std::size_t threads = 1;
};

// Family fits, CKLS diffusion fixed at its fitted (t3, t4), then covariate selection.
CompanyReport analyze_company(const SeriesBundle& bundle, const MarketConfig& config,
                              std::size_t company_index = 0);
std::vector<CompanyReport> analyze_companies(const std::vector<SeriesBundle>& bundles,
                                             const MarketConfig& config);

// company,n_obs,best_family,diffusion_a,diffusion_b,winner_mask,covariates
std::string market_table_csv(const std::vector<CompanyReport>& reports);

}  // namespace sdebf
