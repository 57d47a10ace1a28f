#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "sdebf/likelihood.hpp"

namespace sdebf {

// Independent normal components over a model's flat parameters. sd = 0 on every
// component is a point mass at the mean.
struct Prior {
    std::vector<double> mean;
    std::vector<double> sd;

    static Prior isotropic(std::vector<double> mean, double sd);
    static Prior point(std::vector<double> mean) { return isotropic(std::move(mean), 0.0); }

    std::size_t dim() const noexcept { return mean.size(); }
    void validate(std::size_t expected_dim) const;
};

std::vector<double> sample_prior(const Prior& prior, Rng& rng);
ParamVector sample_prior(const Prior& prior, const DriftModel& model, Rng& rng);

struct AnnealConfig {
    double initial_temperature = 1.0;
    double cooling = 0.95;
    std::size_t iterations_per_temperature = 60;
    // Initial proposal sd of every coordinate. Each coordinate's sd is then retuned
    // after every temperature stage towards a 40-60% acceptance rate, so it shrinks
    // as the temperature falls. Zero disables moves.
    double proposal_scale = 0.5;
    std::size_t max_evaluations = 20000;
    // Independent chains; chain c > 0 starts from init + N(0, 1) jitter.
    std::size_t restarts = 2;
    std::uint64_t seed = 1;
    // Starting point (flat parameters); default_start(model) when absent.
    std::optional<std::vector<double>> init;
    // Drift MLE only. The drift is linear in xi for fixed beta, so the annealer can
    // walk over beta alone with every visited beta completed by the exact conditional
    // maximizer over xi. The result is then rescaled to the equivalent point
    // (c xi, beta / c) with |c xi| = |beta / c|. Families without beta always anneal
    // over xi directly.
    bool profile_xi = true;

    void validate() const;
};

struct AnnealResult {
    std::vector<double> best;
    double best_value = 0.0;
    double start_value = 0.0;
    std::size_t evaluations = 0;
};

// Maximizes `objective` by simulated annealing: componentwise Gaussian proposals
// cycling over the coordinates, uphill moves always accepted, downhill with
// probability exp(delta / temperature), geometric cooling after every stage of
// iterations_per_temperature proposals. Returns the best point visited (never worse
// than `init`). Non-finite objective values are rejected moves.
AnnealResult anneal_maximize(const std::function<double(std::span<const double>)>& objective,
                             std::vector<double> init, const AnnealConfig& config);

// Default starting point: 1 for the intercept xi_0 and the first beta, 0 elsewhere.
std::vector<double> default_start(const DriftModel& model);

// Conditional maximizer over xi of the kernel's log-likelihood at fixed beta
// (minimum-norm solution when the normal equations are singular).
std::vector<double> conditional_xi(const LikelihoodKernel& kernel, std::span<const double> beta);

// MLE of theta maximizing sum_i log f_{i,theta} over the dataset.
ParamVector mle_simulated_annealing(const Dataset& dataset, const DriftModel& model,
                                    const AnnealConfig& config);
AnnealResult mle_simulated_annealing(const LikelihoodKernel& kernel, const AnnealConfig& config);

// Normalized log of a Monte-Carlo mean of exp(log_weights):
//   value = (logsumexp(w) - log m) / normalizer,
// se by the delta method on the shifted exp-scale weights.
struct LogMeanEstimate {
    double value = 0.0;
    double se = 0.0;
    std::size_t m_draws = 0;
    double max_log_weight = 0.0;
};

// Throws NumericalUnderflow when every weight is -inf or NaN.
LogMeanEstimate log_mean_exp(std::span<const double> log_weights, double normalizer = 1.0);

struct BayesFactorEstimate {
    double log_value = 0.0;
    double mc_se = 0.0;
    std::size_t m_draws = 0;
    std::size_t n_individuals = 0;
    double horizon = 0.0;
};

void to_json(nlohmann::json& j, const BayesFactorEstimate& e);

// (1/normalizer) [logsumexp_j sum_i log f_{i,theta(j)} - log m], theta(j) ~ prior.
LogMeanEstimate log_marginal_likelihood(const LikelihoodKernel& kernel, const Prior& prior,
                                        std::size_t m_draws, double normalizer, Rng& rng);
LogMeanEstimate log_marginal_likelihood(const Dataset& dataset, const DriftModel& model,
                                        const Prior& prior, std::size_t m_draws,
                                        double normalizer, Rng& rng);

// (1/normalizer) log of the prior average of prod_i f_{i,theta1} / f_{i,theta0}.
// `log_density0` is sum_i log f_{i,theta0}.
LogMeanEstimate log_bayes_factor_fixed_truth(const LikelihoodKernel& kernel1, const Prior& prior1,
                                             double log_density0, std::size_t m_draws,
                                             double normalizer, Rng& rng);
BayesFactorEstimate log_bayes_factor_fixed_truth(const Dataset& dataset, const DriftModel& model1,
                                                 const Prior& prior1, const ParamVector& theta0,
                                                 const DriftModel& model0, std::size_t m_draws,
                                                 Rng& rng);

// Mean over replications of a per-replication (1/T) log I_T.
struct AveragedEstimate {
    double mean = 0.0;
    double se = 0.0;
    std::size_t replications = 0;
    std::size_t failures = 0;
};

// One synthetic dataset drawn from the truth.
struct Replicate {
    Dataset data;
    DriftModel model0;
    ParamVector theta0;
    double horizon = 1.0;
};

using TruthGenerator = std::function<Replicate(Rng&)>;

// How a candidate's prior is built from each replicate's data.
struct PriorSpec {
    double sd = 0.8;
    // Fixed prior mean (flat parameters); the candidate's MLE when absent.
    std::optional<std::vector<double>> mean;
};

// Replication-averaged (1/T) log I_T of model1 against the fixed truth. Replication r
// uses Rng(derive_seed(base, r)) with base drawn from `rng`. Replications failing with
// an sdebf::Error are recorded; more than 1% failures fails the run.
AveragedEstimate averaged_log_bf(const TruthGenerator& truth, const DriftModel& model1,
                                 const PriorSpec& prior1, const AnnealConfig& anneal,
                                 std::size_t m_draws, std::size_t replications, Rng& rng);

// Mean and SE of per-replication values, applying the 1% failure rule.
AveragedEstimate average_replications(const std::function<double(std::size_t, Rng&)>& replicate,
                                      std::size_t replications, Rng& rng);

// One individual's factor of the per-individual Bayes factor. The denominator is
// either a fixed log f_{i,theta0} or a prior-marginalized true model.
struct IndividualTerm {
    LikelihoodKernel numerator;
    Prior numerator_prior;
    std::optional<double> log_density0;
    std::optional<LikelihoodKernel> denominator;
    std::optional<Prior> denominator_prior;
};

// log of one individual's factor (not normalized); se by the delta method.
LogMeanEstimate individual_log_bf(const IndividualTerm& term, std::size_t m_draws, Rng& rng);

// (1/(n T)) sum_i log factor_i. Term i draws from Rng(derive_seed(base, i)).
BayesFactorEstimate per_individual_log_bf(const std::vector<IndividualTerm>& terms,
                                          double horizon, std::size_t m_draws, Rng& rng);

}  // namespace sdebf
