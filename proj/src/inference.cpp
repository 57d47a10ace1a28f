#include "sdebf/inference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <nlohmann/json.hpp>

#include "sdebf/errors.hpp"
#include "sdebf/stats.hpp"

namespace sdebf {

namespace {

std::string format_point(std::span<const double> x) {
    std::ostringstream os;
    os.precision(17);
    os << '(';
    for (std::size_t i = 0; i < x.size(); ++i) os << (i ? ", " : "") << x[i];
    os << ')';
    return os.str();
}

double max_horizon(const Dataset& data) {
    double t = 0.0;
    for (const auto& ind : data) t = std::max(t, ind.path.grid.horizon());
    return t;
}

}  // namespace

Prior Prior::isotropic(std::vector<double> mean, double sd) {
    Prior p;
    p.sd.assign(mean.size(), sd);
    p.mean = std::move(mean);
    return p;
}

void Prior::validate(std::size_t expected_dim) const {
    if (mean.size() != sd.size()) throw InvalidArgument("prior mean and sd differ in length");
    if (mean.size() != expected_dim) {
        throw InvalidArgument("prior dimension " + std::to_string(mean.size()) +
                              " differs from the model's " + std::to_string(expected_dim) +
                              " free parameters");
    }
    for (std::size_t i = 0; i < sd.size(); ++i) {
        if (!(sd[i] >= 0.0) || !std::isfinite(sd[i]) || !std::isfinite(mean[i])) {
            throw InvalidArgument("prior component " + std::to_string(i) +
                                  " needs a finite mean and a finite sd >= 0");
        }
    }
}

std::vector<double> sample_prior(const Prior& prior, Rng& rng) {
    prior.validate(prior.dim());
    std::vector<double> x(prior.dim());
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = rng.normal(prior.mean[i], prior.sd[i]);
    return x;
}

ParamVector sample_prior(const Prior& prior, const DriftModel& model, Rng& rng) {
    prior.validate(model.free_count());
    const auto flat = sample_prior(prior, rng);
    return ParamVector::from_flat(model, flat);
}

void AnnealConfig::validate() const {
    if (!(initial_temperature > 0.0)) throw InvalidArgument("anneal: initial temperature must be > 0");
    if (!(cooling > 0.0 && cooling < 1.0)) throw InvalidArgument("anneal: cooling must lie in (0, 1)");
    if (iterations_per_temperature < 1 || max_evaluations < 1 || restarts < 1) {
        throw InvalidArgument("anneal: counts must be >= 1");
    }
    if (!(proposal_scale >= 0.0)) throw InvalidArgument("anneal: proposal scale must be >= 0");
}

AnnealResult anneal_maximize(const std::function<double(std::span<const double>)>& objective,
                             std::vector<double> init, const AnnealConfig& config) {
    config.validate();
    if (init.empty()) throw InvalidArgument("anneal: empty starting point");
    const std::size_t dim = init.size();

    std::size_t evals = 0;
    auto eval = [&](const std::vector<double>& x) {
        ++evals;
        double f;
        try {
            f = objective(std::span<const double>(x));
        } catch (const Error& e) {
            throw Error(std::string(e.what()) + " [at theta = " + format_point(x) + "]");
        }
        return std::isfinite(f) ? f : -std::numeric_limits<double>::infinity();
    };

    AnnealResult out;
    out.best = init;
    out.start_value = eval(init);
    out.best_value = out.start_value;

    const std::size_t budget = std::max<std::size_t>(1, config.max_evaluations / config.restarts);
    for (std::size_t chain = 0; chain < config.restarts; ++chain) {
        Rng rng(derive_seed(config.seed, chain));
        std::vector<double> cur = init;
        if (chain > 0) {
            for (auto& v : cur) v += rng.normal();
        }
        double f_cur = chain > 0 ? eval(cur) : out.start_value;
        if (f_cur > out.best_value) {
            out.best_value = f_cur;
            out.best = cur;
        }
        // Per-coordinate step lengths, retuned after every temperature stage towards
        // an acceptance rate between 0.4 and 0.6.
        std::vector<double> step(dim, config.proposal_scale);
        std::vector<std::size_t> tried(dim), accepted(dim);
        double temp = config.initial_temperature;
        std::size_t used = 0;
        std::size_t j = 0;
        while (used < budget) {
            std::fill(tried.begin(), tried.end(), 0);
            std::fill(accepted.begin(), accepted.end(), 0);
            for (std::size_t it = 0; it < config.iterations_per_temperature && used < budget; ++it) {
                const double old = cur[j];
                cur[j] = old + step[j] * rng.normal();
                const double f = eval(cur);
                ++used;
                ++tried[j];
                const double delta = f - f_cur;
                if (delta >= 0.0 || rng.uniform() < std::exp(delta / temp)) {
                    ++accepted[j];
                    f_cur = f;
                    if (f_cur > out.best_value) {
                        out.best_value = f_cur;
                        out.best = cur;
                    }
                } else {
                    cur[j] = old;
                }
                j = (j + 1) % dim;
            }
            for (std::size_t d = 0; d < dim; ++d) {
                if (tried[d] == 0) continue;
                const double rate = static_cast<double>(accepted[d]) / static_cast<double>(tried[d]);
                if (rate > 0.6) {
                    step[d] *= 1.0 + 2.0 * (rate - 0.6) / 0.4;
                } else if (rate < 0.4) {
                    step[d] /= 1.0 + 2.0 * (0.4 - rate) / 0.4;
                }
            }
            temp *= config.cooling;
        }
    }
    out.evaluations = evals;
    return out;
}

std::vector<double> default_start(const DriftModel& model) {
    std::vector<double> x(model.free_count(), 0.0);
    x[0] = 1.0;
    if (beta_count(model.family) > 0) x[model.xi_count()] = 1.0;
    return x;
}

std::vector<double> conditional_xi(const LikelihoodKernel& kernel, std::span<const double> beta) {
    const DriftModel& model = kernel.model();
    const auto nxi = static_cast<Eigen::Index>(model.xi_count());
    const auto nb = static_cast<Eigen::Index>(beta_count(model.family));
    if (static_cast<Eigen::Index>(beta.size()) != nb) throw InvalidArgument("beta has the wrong size");
    const auto stride = std::max<Eigen::Index>(1, nb);
    // gamma = B xi with B(a * stride + b, a) = beta_b.
    Eigen::MatrixXd B = Eigen::MatrixXd::Zero(nxi * stride, nxi);
    for (Eigen::Index a = 0; a < nxi; ++a) {
        for (Eigen::Index b = 0; b < stride; ++b) {
            B(a * stride + b, a) = nb == 0 ? 1.0 : beta[static_cast<std::size_t>(b)];
        }
    }
    const Eigen::MatrixXd A = B.transpose() * kernel.quadratic_term() * B;
    const Eigen::VectorXd r = B.transpose() * kernel.linear_term();
    const Eigen::VectorXd xi = A.completeOrthogonalDecomposition().solve(r);
    return {xi.data(), xi.data() + xi.size()};
}

AnnealResult mle_simulated_annealing(const LikelihoodKernel& kernel, const AnnealConfig& config) {
    const DriftModel& model = kernel.model();
    std::vector<double> init = config.init ? *config.init : default_start(model);
    if (init.size() != kernel.dim()) throw InvalidArgument("anneal: starting point has the wrong size");
    const std::size_t nxi = model.xi_count();
    const std::size_t nb = beta_count(model.family);
    if (!config.profile_xi || nb == 0) {
        return anneal_maximize([&](std::span<const double> x) { return kernel.log_likelihood(x); },
                               std::move(init), config);
    }

    auto complete = [&](std::span<const double> beta) {
        std::vector<double> flat = conditional_xi(kernel, beta);
        flat.insert(flat.end(), beta.begin(), beta.end());
        return flat;
    };
    const double start_value = kernel.log_likelihood(std::span<const double>(init));
    std::vector<double> beta0(init.begin() + static_cast<long>(nxi), init.end());
    const auto inner = anneal_maximize(
        [&](std::span<const double> beta) {
            const auto flat = complete(beta);
            return kernel.log_likelihood(std::span<const double>(flat));
        },
        std::move(beta0), config);

    AnnealResult out;
    out.start_value = start_value;
    out.evaluations = inner.evaluations + 1;
    out.best = init;
    out.best_value = start_value;
    if (inner.best_value > start_value) {
        out.best = complete(inner.best);
        out.best_value = inner.best_value;
        double nx = 0.0, nbeta = 0.0;
        for (std::size_t i = 0; i < nxi; ++i) nx += out.best[i] * out.best[i];
        for (std::size_t i = nxi; i < nxi + nb; ++i) nbeta += out.best[i] * out.best[i];
        if (nx > 0.0 && nbeta > 0.0) {
            const double c = std::pow(nbeta / nx, 0.25);
            for (std::size_t i = 0; i < nxi; ++i) out.best[i] *= c;
            for (std::size_t i = nxi; i < nxi + nb; ++i) out.best[i] /= c;
            // Rescaling leaves the drift unchanged up to rounding; keep the value exact.
            const double v = kernel.log_likelihood(std::span<const double>(out.best));
            if (std::isfinite(v)) out.best_value = v;
        }
    }
    return out;
}

ParamVector mle_simulated_annealing(const Dataset& dataset, const DriftModel& model,
                                    const AnnealConfig& config) {
    if (dataset.empty()) throw InvalidArgument("mle_simulated_annealing: empty dataset");
    const LikelihoodKernel kernel(dataset, model);
    const auto r = mle_simulated_annealing(kernel, config);
    return ParamVector::from_flat(model, r.best);
}

LogMeanEstimate log_mean_exp(std::span<const double> log_weights, double normalizer) {
    if (log_weights.size() < 2) throw InvalidArgument("log_mean_exp: need at least 2 draws");
    if (!(normalizer > 0.0)) throw InvalidArgument("log_mean_exp: normalizer must be > 0");
    double mx = -std::numeric_limits<double>::infinity();
    for (double w : log_weights) {
        if (w > mx) mx = w;  // NaN never compares greater
    }
    if (!std::isfinite(mx)) throw NumericalUnderflow(mx);
    std::vector<double> clean(log_weights.begin(), log_weights.end());
    for (auto& w : clean) {
        if (std::isnan(w)) w = -std::numeric_limits<double>::infinity();
    }
    RunningStats shifted;
    for (double w : clean) shifted.push(std::exp(w - mx));
    const double m = static_cast<double>(clean.size());
    LogMeanEstimate e;
    e.m_draws = clean.size();
    e.max_log_weight = mx;
    e.value = (logsumexp(clean) - std::log(m)) / normalizer;
    e.se = std::sqrt(shifted.variance()) / (shifted.mean() * std::sqrt(m)) / normalizer;
    return e;
}

void to_json(nlohmann::json& j, const BayesFactorEstimate& e) {
    j = nlohmann::json{{"log_value", e.log_value},
                       {"mc_se", e.mc_se},
                       {"m_draws", e.m_draws},
                       {"n_individuals", e.n_individuals},
                       {"horizon", e.horizon}};
}

namespace {

std::vector<double> draw_log_likelihoods(const LikelihoodKernel& kernel, const Prior& prior,
                                         std::size_t m_draws, double offset, Rng& rng) {
    prior.validate(kernel.dim());
    if (m_draws < 2) throw InvalidArgument("need m_draws >= 2");
    std::vector<double> w(m_draws);
    for (std::size_t j = 0; j < m_draws; ++j) {
        const auto theta = sample_prior(prior, rng);
        w[j] = kernel.log_likelihood(std::span<const double>(theta)) - offset;
    }
    return w;
}

}  // namespace

LogMeanEstimate log_marginal_likelihood(const LikelihoodKernel& kernel, const Prior& prior,
                                        std::size_t m_draws, double normalizer, Rng& rng) {
    const auto w = draw_log_likelihoods(kernel, prior, m_draws, 0.0, rng);
    return log_mean_exp(w, normalizer);
}

LogMeanEstimate log_marginal_likelihood(const Dataset& dataset, const DriftModel& model,
                                        const Prior& prior, std::size_t m_draws,
                                        double normalizer, Rng& rng) {
    if (dataset.empty()) throw InvalidArgument("log_marginal_likelihood: empty dataset");
    return log_marginal_likelihood(LikelihoodKernel(dataset, model), prior, m_draws, normalizer,
                                   rng);
}

LogMeanEstimate log_bayes_factor_fixed_truth(const LikelihoodKernel& kernel1, const Prior& prior1,
                                             double log_density0, std::size_t m_draws,
                                             double normalizer, Rng& rng) {
    const auto w = draw_log_likelihoods(kernel1, prior1, m_draws, log_density0, rng);
    return log_mean_exp(w, normalizer);
}

BayesFactorEstimate log_bayes_factor_fixed_truth(const Dataset& dataset, const DriftModel& model1,
                                                 const Prior& prior1, const ParamVector& theta0,
                                                 const DriftModel& model0, std::size_t m_draws,
                                                 Rng& rng) {
    if (dataset.empty()) throw InvalidArgument("log_bayes_factor_fixed_truth: empty dataset");
    const LikelihoodKernel k0(dataset, model0);
    const LikelihoodKernel k1(dataset, model1);
    const double n = static_cast<double>(dataset.size());
    const auto e = log_bayes_factor_fixed_truth(k1, prior1, k0.log_likelihood(theta0), m_draws, n,
                                                rng);
    return {e.value, e.se, e.m_draws, dataset.size(), max_horizon(dataset)};
}

AveragedEstimate average_replications(const std::function<double(std::size_t, Rng&)>& replicate,
                                      std::size_t replications, Rng& rng) {
    if (replications < 2) throw InvalidArgument("need at least 2 replications");
    const std::uint64_t base = rng.next_u64();
    RunningStats acc;
    std::size_t failures = 0;
    std::string last_error;
    for (std::size_t r = 0; r < replications; ++r) {
        Rng rr(derive_seed(base, r));
        try {
            acc.push(replicate(r, rr));
        } catch (const Error& e) {
            ++failures;
            last_error = e.what();
        }
    }
    if (failures * 100 > replications) {
        throw Error(std::to_string(failures) + " of " + std::to_string(replications) +
                    " replications failed (last: " + last_error + ")");
    }
    if (acc.count() < 2) throw Error("fewer than 2 successful replications");
    return {acc.mean(), acc.standard_error(), replications, failures};
}

AveragedEstimate averaged_log_bf(const TruthGenerator& truth, const DriftModel& model1,
                                 const PriorSpec& prior1, const AnnealConfig& anneal,
                                 std::size_t m_draws, std::size_t replications, Rng& rng) {
    return average_replications(
        [&](std::size_t, Rng& rr) {
            Replicate rep = truth(rr);
            if (rep.data.empty()) throw InvalidArgument("truth generator returned no data");
            const LikelihoodKernel k0(rep.data, rep.model0);
            const LikelihoodKernel k1(rep.data, model1);
            std::vector<double> mean;
            if (prior1.mean) {
                mean = *prior1.mean;
            } else {
                AnnealConfig cfg = anneal;
                cfg.seed = rr.next_u64();
                mean = mle_simulated_annealing(k1, cfg).best;
            }
            const Prior prior = Prior::isotropic(std::move(mean), prior1.sd);
            const double norm = static_cast<double>(rep.data.size()) * rep.horizon;
            return log_bayes_factor_fixed_truth(k1, prior, k0.log_likelihood(rep.theta0), m_draws,
                                                norm, rr)
                .value;
        },
        replications, rng);
}

LogMeanEstimate individual_log_bf(const IndividualTerm& term, std::size_t m_draws, Rng& rng) {
    if (term.log_density0) {
        return log_bayes_factor_fixed_truth(term.numerator, term.numerator_prior, *term.log_density0,
                                            m_draws, 1.0, rng);
    }
    if (!term.denominator || !term.denominator_prior) {
        throw InvalidArgument("individual term needs a fixed log-density or a denominator model");
    }
    const auto num = log_marginal_likelihood(term.numerator, term.numerator_prior, m_draws, 1.0, rng);
    const auto den =
        log_marginal_likelihood(*term.denominator, *term.denominator_prior, m_draws, 1.0, rng);
    LogMeanEstimate e;
    e.value = num.value - den.value;
    e.se = std::hypot(num.se, den.se);
    e.m_draws = m_draws;
    e.max_log_weight = num.max_log_weight;
    return e;
}

BayesFactorEstimate per_individual_log_bf(const std::vector<IndividualTerm>& terms,
                                          double horizon, std::size_t m_draws, Rng& rng) {
    if (terms.empty()) throw InvalidArgument("per_individual_log_bf: no individuals");
    if (!(horizon > 0.0)) throw InvalidArgument("per_individual_log_bf: horizon must be > 0");
    const std::uint64_t base = rng.next_u64();
    double sum = 0.0;
    double var = 0.0;
    for (std::size_t i = 0; i < terms.size(); ++i) {
        Rng ri(derive_seed(base, i));
        const auto e = individual_log_bf(terms[i], m_draws, ri);
        sum += e.value;
        var += e.se * e.se;
    }
    const double norm = static_cast<double>(terms.size()) * horizon;
    return {sum / norm, std::sqrt(var) / norm, m_draws, terms.size(), horizon};
}

}  // namespace sdebf
