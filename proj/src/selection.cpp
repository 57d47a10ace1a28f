#include "sdebf/selection.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <memory>
#include <sstream>

#include "sdebf/errors.hpp"
#include "sdebf/parallel.hpp"
#include "sdebf/stats.hpp"

namespace sdebf {

namespace {

// Independent random streams of a study, keyed by purpose and index.
enum Stream : std::uint64_t {
    kTruth = 1,
    kCovariateCoefs = 2,
    kCovariatePaths = 3,
    kDataPaths = 4,
    kAnneal = 5,
    kPriorDraws = 6,
    kReplication = 7,
    kAlternatives = 8,
    kTrueMasks = 9,
};

std::uint64_t stream_seed(const StudyConfig& c, Stream s, std::uint64_t index) {
    return derive_seed(derive_seed(c.seed, s), index);
}

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

double normalizer(const StudyConfig& c) { return static_cast<double>(c.n) * c.horizon; }

DriftModel affine(const ModelMask& mask) { return DriftModel{DriftFamily::Affine, mask}; }

// Restricts a full-mask flat vector [xi_0, xi_1..xi_p, beta...] to `mask`.
ParamVector restrict_truth(const std::vector<double>& full, const ModelMask& mask) {
    const std::size_t p = mask.size();
    ParamVector th;
    th.xi.push_back(full[0]);
    for (std::size_t l = 0; l < p; ++l) {
        if (mask[l]) th.xi.push_back(full[1 + l]);
    }
    th.beta.assign(full.begin() + static_cast<long>(1 + p), full.end());
    return th;
}

Diffusion sigma_of(const StudyConfig& c, std::size_t i) {
    return Diffusion::constant(c.sigma_first + static_cast<double>(i) * c.sigma_increment);
}

CovariatePanel make_panel(const StudyConfig& c, const std::vector<CovariateSdeSpec>& specs,
                          const TimeGrid& grid, std::size_t i) {
    Rng rng(stream_seed(c, kCovariatePaths, i));
    CovariatePanel panel = standardize(simulate_covariates(specs, grid, rng));
    if (c.column_order) panel = panel.permuted(*c.column_order);
    return panel;
}

// Applies the configured column order to the covariate coefficients of a full-mask
// flat truth so the drift stays attached to the same covariate processes.
std::vector<double> permute_truth(const StudyConfig& c, std::vector<double> full) {
    if (!c.column_order) return full;
    std::vector<double> out = full;
    for (std::size_t j = 0; j < c.p; ++j) out[1 + j] = full[1 + (*c.column_order)[j]];
    return out;
}

AnnealConfig anneal_for(const StudyConfig& c, std::uint64_t index) {
    AnnealConfig a = c.anneal;
    a.seed = stream_seed(c, kAnneal, index);
    return a;
}

ScoreRow mask_row(const ModelMask& mask, const LogMeanEstimate& e, bool truth, std::size_t m) {
    ScoreRow row;
    row.label = mask.to_string();
    row.masks = {mask};
    row.score = e.value;
    row.se = e.se;
    row.truth = truth;
    row.m_draws = m;
    return row;
}

SelectionReport make_report(const StudyConfig& c) {
    SelectionReport r;
    r.study = to_string(c.kind);
    r.seed = c.seed;
    r.config = c;
    r.config_hash = config_hash(c);
    return r;
}

void finish(SelectionReport& r) {
    r.pass = !r.tables.empty();
    for (auto& t : r.tables) {
        t.finalize();
        r.pass = r.pass && t.pass;
    }
}

const char* criterion_name(ScoreTable::Criterion c) {
    switch (c) {
        case ScoreTable::Criterion::AllNegative: return "all_negative";
        case ScoreTable::Criterion::TruthMax: return "truth_max";
        case ScoreTable::Criterion::None: return "none";
    }
    return "unknown";
}

std::size_t active_total(const ScoreRow& row) {
    std::size_t n = 0;
    for (const auto& m : row.masks) n += m.active_count();
    return n;
}

}  // namespace

std::vector<ModelMask> enumerate_masks(std::size_t p) {
    if (p < 1 || p > 16) throw InvalidArgument("enumerate_masks: p must lie in [1, 16]");
    std::vector<ModelMask> out;
    out.reserve(std::size_t{1} << p);
    for (unsigned code = 0; code < (1u << p); ++code) out.push_back(ModelMask::from_code(code, p));
    return out;
}

std::string to_string(StudyKind kind) {
    switch (kind) {
        case StudyKind::Case1: return "case1";
        case StudyKind::Case2: return "case2";
        case StudyKind::Averaged: return "averaged";
        case StudyKind::PerIndividual: return "per-individual";
    }
    return "unknown";
}

StudyKind study_kind_from_string(const std::string& name) {
    if (name == "case1" || name == "case1-fixed-truth") return StudyKind::Case1;
    if (name == "case2" || name == "case2-marginal") return StudyKind::Case2;
    if (name == "averaged" || name == "averaged-T") return StudyKind::Averaged;
    if (name == "per-individual" || name == "per_individual") return StudyKind::PerIndividual;
    throw InvalidArgument("unknown study kind '" + name + "'");
}

StudyConfig StudyConfig::case1() { return StudyConfig{}; }

StudyConfig StudyConfig::case2() {
    StudyConfig c;
    c.kind = StudyKind::Case2;
    return c;
}

StudyConfig StudyConfig::averaged() {
    StudyConfig c;
    c.kind = StudyKind::Averaged;
    c.n = 1;
    c.horizon = 5.0;
    c.sigma_first = 20.0;
    c.replications = 100;
    return c;
}

StudyConfig StudyConfig::per_individual() {
    StudyConfig c;
    c.kind = StudyKind::PerIndividual;
    c.horizon = 5.0;
    c.prior_sd_fixed = 1.0;
    c.prior_sd_marginal = 0.1;
    c.alternatives = 10;
    return c;
}

void StudyConfig::validate() const {
    if (n < 1) throw InvalidArgument("study: n must be >= 1");
    if (!(horizon > 0.0)) throw InvalidArgument("study: horizon must be > 0");
    if (n_steps < 100) throw InvalidArgument("study: n_steps must be >= 100");
    if (p < 1 || p > 16) throw InvalidArgument("study: p must lie in [1, 16]");
    for (std::size_t i = 0; i < n; ++i) {
        if (!(sigma_first + static_cast<double>(i) * sigma_increment > 0.0)) {
            throw InvalidArgument("study: sigma schedule must stay positive");
        }
    }
    if (m_draws < 2) throw InvalidArgument("study: m_draws must be >= 2");
    if (kind == StudyKind::Averaged && replications < 2) {
        throw InvalidArgument("study: replications must be >= 2");
    }
    if (kind == StudyKind::PerIndividual && alternatives < 1) {
        throw InvalidArgument("study: alternatives must be >= 1");
    }
    if (!(prior_sd_fixed >= 0.0) || !(prior_sd_marginal >= 0.0)) {
        throw InvalidArgument("study: prior sd must be >= 0");
    }
    if (theta0 && theta0->size() != p + 3) {
        throw InvalidArgument("study: theta0 needs p + 3 entries");
    }
    if (column_order) {
        std::vector<std::size_t> sorted = *column_order;
        std::sort(sorted.begin(), sorted.end());
        for (std::size_t j = 0; j < sorted.size(); ++j) {
            if (sorted[j] != j || sorted.size() != p) {
                throw InvalidArgument("study: column_order must be a permutation of 0..p-1");
            }
        }
    }
    anneal.validate();
}

void to_json(nlohmann::json& j, const StudyConfig& c) {
    j = nlohmann::json{
        {"kind", to_string(c.kind)},
        {"n", c.n},
        {"horizon", c.horizon},
        {"n_steps", c.n_steps},
        {"sigma_first", c.sigma_first},
        {"sigma_increment", c.sigma_increment},
        {"x0", c.x0},
        {"p", c.p},
        {"truth", {{"mu_sd", c.truth.mu_sd}, {"xi_sd", c.truth.xi_sd},
                   {"covariate_coef_sd", c.truth.covariate_coef_sd}}},
        {"prior_sd_fixed", c.prior_sd_fixed},
        {"prior_sd_marginal", c.prior_sd_marginal},
        {"m_draws", c.m_draws},
        {"replications", c.replications},
        {"alternatives", c.alternatives},
        {"anneal", {{"initial_temperature", c.anneal.initial_temperature},
                    {"cooling", c.anneal.cooling},
                    {"iterations_per_temperature", c.anneal.iterations_per_temperature},
                    {"proposal_scale", c.anneal.proposal_scale},
                    {"max_evaluations", c.anneal.max_evaluations},
                    {"restarts", c.anneal.restarts},
                    {"profile_xi", c.anneal.profile_xi}}},
        {"seed", c.seed},
    };
    if (c.theta0) j["theta0"] = *c.theta0;
    if (c.column_order) j["column_order"] = *c.column_order;
    if (c.include_truth_row) j["include_truth_row"] = true;
}

std::string fnv1a_hex(const std::string& text) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : text) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

// Thread count is excluded: it never changes results.
std::string config_hash(const StudyConfig& config) {
    return fnv1a_hex(nlohmann::json(config).dump());
}

void ScoreTable::finalize() {
    if (rows.empty()) throw InvalidArgument("score table '" + name + "' has no rows");
    std::vector<std::size_t> order(rows.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (rows[a].score != rows[b].score) return rows[a].score > rows[b].score;
        return active_total(rows[a]) < active_total(rows[b]);
    });
    winner = order[0];
    margin = order.size() > 1 ? rows[order[0]].score - rows[order[1]].score : 0.0;
    margin_se = order.size() > 1 ? std::hypot(rows[order[0]].se, rows[order[1]].se) : rows[order[0]].se;

    if (criterion == Criterion::None) {
        pass = true;
        return;
    }
    if (criterion == Criterion::AllNegative) {
        pass = true;
        for (const auto& r : rows) {
            if (!r.truth && !(r.score < 0.0)) pass = false;
        }
        return;
    }
    const auto truth = std::find_if(rows.begin(), rows.end(), [](const ScoreRow& r) { return r.truth; });
    if (truth == rows.end()) {
        pass = false;
        return;
    }
    pass = true;
    bool any_rival = false;
    double best_rival = -std::numeric_limits<double>::infinity();
    double best_rival_se = 0.0;
    for (const auto& r : rows) {
        if (r.truth || r.masks == truth->masks) continue;
        any_rival = true;
        const double need = se_factor * std::hypot(truth->se, r.se);
        if (!(truth->score - r.score > need)) pass = false;
        if (r.score > best_rival) {
            best_rival = r.score;
            best_rival_se = r.se;
        }
    }
    if (any_rival) {
        margin = truth->score - best_rival;
        margin_se = std::hypot(truth->se, best_rival_se);
    }
}

void to_json(nlohmann::json& j, const SelectionReport& r) {
    nlohmann::json tables = nlohmann::json::array();
    for (const auto& t : r.tables) {
        nlohmann::json rows = nlohmann::json::array();
        for (const auto& row : t.rows) {
            nlohmann::json masks = nlohmann::json::array();
            for (const auto& m : row.masks) masks.push_back(m.to_string());
            rows.push_back({{"study", r.study},
                            {"model_mask", row.label},
                            {"masks", masks},
                            {"log_value", row.score},
                            {"mc_se", row.se},
                            {"m_draws", row.m_draws},
                            {"seed", r.seed},
                            {"truth", row.truth}});
        }
        tables.push_back({{"name", t.name},
                          {"score", t.score_label},
                          {"criterion", criterion_name(t.criterion)},
                          {"se_factor", t.se_factor},
                          {"rows", rows},
                          {"winner", t.rows.empty() ? "" : t.rows[t.winner].label},
                          {"margin", t.margin},
                          {"margin_se", t.margin_se},
                          {"pass", t.pass}});
    }
    j = nlohmann::json{{"study", r.study},     {"seed", r.seed},   {"config_hash", r.config_hash},
                       {"pass", r.pass},       {"config", r.config}, {"truth", r.truth},
                       {"tables", tables}};
}

std::string to_csv(const SelectionReport& r) {
    std::ostringstream os;
    os << "table,mask,score,se,truth\n";
    for (const auto& t : r.tables) {
        for (const auto& row : t.rows) {
            os << t.name << ",\"" << row.label << "\"," << format_double(row.score) << ','
               << format_double(row.se) << ',' << (row.truth ? 1 : 0) << '\n';
        }
    }
    return os.str();
}

nlohmann::json StudyData::to_json() const {
    nlohmann::json inds = nlohmann::json::array();
    for (std::size_t i = 0; i < theta0.size(); ++i) {
        nlohmann::json ind{{"mask", true_masks[i].to_string()},
                           {"xi", theta0[i].xi},
                           {"beta", theta0[i].beta},
                           {"sigma", data.empty() ? 0.0 : data[i].diffusion.scale()}};
        if (i < mu.size()) ind["mu"] = mu[i];
        inds.push_back(ind);
    }
    return {{"individuals", inds}, {"covariate_coefficients", covariate_coefficients}};
}

std::vector<CovariateSdeSpec> study_covariate_specs(std::size_t p, double coef_sd, Rng& rng) {
    std::vector<CovariateSdeSpec> specs;
    for (std::size_t l = 0; l < p; ++l) {
        switch (l % 3) {
            case 0: {
                const double a = rng.normal(0.0, coef_sd);
                const double b = rng.normal(0.0, coef_sd);
                specs.push_back(CovariateSdeSpec::affine(a, b));
                break;
            }
            case 1: specs.push_back(CovariateSdeSpec::constant(rng.normal(0.0, coef_sd))); break;
            default: specs.push_back(CovariateSdeSpec::linear(rng.normal(0.0, coef_sd))); break;
        }
    }
    return specs;
}

std::vector<double> draw_truth(std::size_t p, const TruthSpec& spec, Rng& rng,
                               std::vector<double>* mu) {
    std::vector<double> means(p + 3);
    for (auto& m : means) m = rng.normal(0.0, spec.mu_sd);
    std::vector<double> xi(p + 3);
    for (std::size_t j = 0; j < xi.size(); ++j) xi[j] = rng.normal(means[j], spec.xi_sd);
    if (mu) *mu = means;
    return xi;
}

namespace {

std::vector<double> spec_coefficients(const std::vector<CovariateSdeSpec>& specs) {
    std::vector<double> out;
    for (const auto& s : specs) out.insert(out.end(), s.coefficients.begin(), s.coefficients.end());
    return out;
}

// Truth and covariate processes shared by every replication of a shared-truth study.
struct SharedTruth {
    std::vector<double> full;
    std::vector<double> mu;
    std::vector<CovariateSdeSpec> specs;
    std::shared_ptr<const CovariatePanel> panel;
};

SharedTruth shared_truth(const StudyConfig& c) {
    SharedTruth t;
    if (c.theta0) {
        t.full = *c.theta0;
    } else {
        Rng rng(stream_seed(c, kTruth, 0));
        t.full = draw_truth(c.p, c.truth, rng, &t.mu);
    }
    t.full = permute_truth(c, t.full);
    Rng coef(stream_seed(c, kCovariateCoefs, 0));
    t.specs = study_covariate_specs(c.p, c.truth.covariate_coef_sd, coef);
    const TimeGrid grid = make_grid(0.0, c.horizon, c.n_steps);
    // One covariate panel shared by every individual and replication.
    t.panel = std::make_shared<const CovariatePanel>(make_panel(c, t.specs, grid, 0));
    return t;
}

Dataset simulate_dataset(const StudyConfig& c, const SharedTruth& t, std::uint64_t replication) {
    const ModelMask full = ModelMask::full(c.p);
    const ParamVector theta0 = restrict_truth(t.full, full);
    const TimeGrid grid = make_grid(0.0, c.horizon, c.n_steps);
    Dataset data;
    for (std::size_t i = 0; i < c.n; ++i) {
        Rng rng(derive_seed(stream_seed(c, kDataPaths, replication), i));
        const Diffusion d = sigma_of(c, i);
        data.push_back({simulate_path({affine(full), d}, theta0, *t.panel, c.x0, grid, rng), t.panel, d});
    }
    return data;
}

StudyData as_study_data(const StudyConfig& c, const SharedTruth& t, Dataset data) {
    StudyData s;
    s.data = std::move(data);
    const ModelMask full = ModelMask::full(c.p);
    s.true_masks.assign(c.n, full);
    s.theta0.assign(c.n, restrict_truth(t.full, full));
    if (!t.mu.empty()) s.mu.assign(c.n, t.mu);
    s.covariate_coefficients = spec_coefficients(t.specs);
    return s;
}

// Per-mask quantities for one dataset.
struct MaskFit {
    std::vector<double> mle;
    double max_log_likelihood = 0.0;
    LogMeanEstimate fixed;     // fixed-truth Bayes factor
    LogMeanEstimate marginal;  // marginal log-likelihood
};

enum Needs : unsigned { kFixed = 1, kMarginal = 2 };

MaskFit fit_mask(const StudyConfig& c, const Dataset& data, const ModelMask& mask,
                 double log_density0, double norm, unsigned needs, std::uint64_t stream_index) {
    MaskFit f;
    const LikelihoodKernel k(data, affine(mask));
    const auto mle = mle_simulated_annealing(k, anneal_for(c, stream_index));
    f.mle = mle.best;
    f.max_log_likelihood = mle.best_value;
    Rng draws(stream_seed(c, kPriorDraws, stream_index));
    if (needs & kFixed) {
        f.fixed = log_bayes_factor_fixed_truth(k, Prior::isotropic(f.mle, c.prior_sd_fixed),
                                               log_density0, c.m_draws, norm, draws);
    }
    if (needs & kMarginal) {
        f.marginal = log_marginal_likelihood(k, Prior::isotropic(f.mle, c.prior_sd_marginal),
                                             c.m_draws, norm, draws);
    }
    return f;
}

void check_kind(const StudyConfig& c, StudyKind kind) {
    c.validate();
    if (c.kind != kind) {
        throw InvalidArgument("study kind is '" + to_string(c.kind) + "', expected '" +
                              to_string(kind) + "'");
    }
}

}  // namespace

StudyData generate_shared_truth_data(const StudyConfig& config) {
    config.validate();
    const SharedTruth t = shared_truth(config);
    return as_study_data(config, t, simulate_dataset(config, t, 0));
}

SelectionReport run_case1(const StudyConfig& c) {
    check_kind(c, StudyKind::Case1);
    const SharedTruth t = shared_truth(c);
    const Dataset data = simulate_dataset(c, t, 0);
    const ModelMask full = ModelMask::full(c.p);
    const ParamVector theta0 = restrict_truth(t.full, full);
    const double ld0 = LikelihoodKernel(data, affine(full)).log_likelihood(theta0);
    const auto masks = enumerate_masks(c.p);
    const double norm = normalizer(c);

    std::vector<MaskFit> fits(masks.size());
    parallel_for(masks.size() - 1, c.threads, [&](std::size_t m) {
        fits[m] = fit_mask(c, data, masks[m], ld0, norm, kFixed, m);
    });

    SelectionReport r = make_report(c);
    r.truth = as_study_data(c, t, {}).to_json();
    ScoreTable table;
    table.name = "fixed_truth";
    table.score_label = "(1/(nT)) log I";
    table.criterion = ScoreTable::Criterion::AllNegative;
    for (std::size_t m = 0; m + 1 < masks.size(); ++m) {
        table.rows.push_back(mask_row(masks[m], fits[m].fixed, false, c.m_draws));
    }
    if (c.include_truth_row) {
        Rng draws(stream_seed(c, kPriorDraws, masks.size() - 1));
        const LikelihoodKernel k(data, affine(full));
        const auto e = log_bayes_factor_fixed_truth(k, Prior::point(theta0.flat()), ld0, c.m_draws,
                                                    norm, draws);
        table.rows.push_back(mask_row(full, e, true, c.m_draws));
    }
    r.tables.push_back(std::move(table));
    finish(r);
    return r;
}

SelectionReport run_case2(const StudyConfig& c) {
    check_kind(c, StudyKind::Case2);
    const SharedTruth t = shared_truth(c);
    const Dataset data = simulate_dataset(c, t, 0);
    const auto masks = enumerate_masks(c.p);
    const double norm = normalizer(c);

    std::vector<MaskFit> fits(masks.size());
    parallel_for(masks.size(), c.threads, [&](std::size_t m) {
        fits[m] = fit_mask(c, data, masks[m], 0.0, norm, kMarginal, m);
    });

    SelectionReport r = make_report(c);
    r.truth = as_study_data(c, t, {}).to_json();
    ScoreTable table;
    table.name = "marginal";
    table.score_label = "(1/(nT)) marginal log-likelihood";
    table.criterion = ScoreTable::Criterion::TruthMax;
    table.se_factor = 3.0;
    for (std::size_t m = 0; m < masks.size(); ++m) {
        table.rows.push_back(mask_row(masks[m], fits[m].marginal, m + 1 == masks.size(), c.m_draws));
    }
    r.tables.push_back(std::move(table));
    finish(r);
    return r;
}

SelectionReport run_averaged_study(const StudyConfig& c) {
    check_kind(c, StudyKind::Averaged);
    const SharedTruth t = shared_truth(c);
    const ModelMask full = ModelMask::full(c.p);
    const ParamVector theta0 = restrict_truth(t.full, full);
    const auto masks = enumerate_masks(c.p);
    const std::size_t nm = masks.size();
    const double norm = normalizer(c);

    // Per replication: fixed-truth values then marginal values, one per mask; empty on failure.
    std::vector<std::vector<double>> values(c.replications);
    std::vector<std::string> errors(c.replications);
    parallel_for(c.replications, c.threads, [&](std::size_t rep) {
        try {
            const Dataset data = simulate_dataset(c, t, rep);
            const double ld0 = LikelihoodKernel(data, affine(full)).log_likelihood(theta0);
            std::vector<double> v(2 * nm);
            for (std::size_t m = 0; m < nm; ++m) {
                const auto f = fit_mask(c, data, masks[m], ld0, norm, kFixed | kMarginal, rep * nm + m);
                v[m] = f.fixed.value;
                v[nm + m] = f.marginal.value;
            }
            values[rep] = std::move(v);
        } catch (const Error& e) {
            errors[rep] = e.what();
        }
    });

    std::size_t failures = 0;
    std::vector<RunningStats> acc(2 * nm);
    for (std::size_t rep = 0; rep < c.replications; ++rep) {
        if (values[rep].empty()) {
            ++failures;
            continue;
        }
        for (std::size_t k = 0; k < 2 * nm; ++k) acc[k].push(values[rep][k]);
    }
    if (failures * 100 > c.replications) {
        throw Error(std::to_string(failures) + " of " + std::to_string(c.replications) +
                    " replications failed");
    }

    SelectionReport r = make_report(c);
    r.truth = as_study_data(c, t, {}).to_json();
    r.truth["failed_replications"] = failures;
    ScoreTable fixed;
    fixed.name = "averaged_fixed_truth";
    fixed.score_label = "mean (1/(nT)) log I";
    fixed.criterion = ScoreTable::Criterion::AllNegative;
    ScoreTable marginal;
    marginal.name = "averaged_marginal";
    marginal.score_label = "mean (1/(nT)) marginal log-likelihood";
    marginal.criterion = ScoreTable::Criterion::TruthMax;
    for (std::size_t m = 0; m < nm; ++m) {
        const bool truth = m + 1 == nm;
        if (!truth) {
            ScoreRow row = mask_row(masks[m], {acc[m].mean(), acc[m].standard_error(), c.m_draws, 0}, false,
                                    c.m_draws);
            fixed.rows.push_back(row);
        }
        marginal.rows.push_back(mask_row(masks[m],
                                         {acc[nm + m].mean(), acc[nm + m].standard_error(), c.m_draws, 0},
                                         truth, c.m_draws));
    }
    r.tables.push_back(std::move(fixed));
    r.tables.push_back(std::move(marginal));
    finish(r);
    return r;
}

StudyData generate_per_individual_data(const StudyConfig& c) {
    check_kind(c, StudyKind::PerIndividual);
    const auto masks = enumerate_masks(c.p);
    const std::size_t nm = masks.size();
    const TimeGrid grid = make_grid(0.0, c.horizon, c.n_steps);

    Rng coef(stream_seed(c, kCovariateCoefs, 0));
    const auto specs = study_covariate_specs(c.p, c.truth.covariate_coef_sd, coef);

    StudyData sd;
    sd.covariate_coefficients = spec_coefficients(specs);
    for (std::size_t i = 0; i < c.n; ++i) {
        std::vector<double> full;
        std::vector<double> mu;
        if (c.theta0) {
            full = *c.theta0;
        } else {
            Rng rng(stream_seed(c, kTruth, i));
            full = draw_truth(c.p, c.truth, rng, &mu);
        }
        full = permute_truth(c, full);
        Rng mask_rng(stream_seed(c, kTrueMasks, i));
        const ModelMask mask = masks[mask_rng.next_u64() % nm];
        const ParamVector theta0 = restrict_truth(full, mask);
        auto panel = std::make_shared<const CovariatePanel>(make_panel(c, specs, grid, i));
        Rng path_rng(derive_seed(stream_seed(c, kDataPaths, 0), i));
        const Diffusion d = sigma_of(c, i);
        sd.data.push_back({simulate_path({affine(mask), d}, theta0, *panel, c.x0, grid, path_rng), panel, d});
        sd.true_masks.push_back(mask);
        sd.theta0.push_back(theta0);
        if (!mu.empty()) sd.mu.push_back(mu);
    }
    return sd;
}

SelectionReport run_per_individual_study(const StudyConfig& c) {
    const StudyData sd = generate_per_individual_data(c);
    const auto masks = enumerate_masks(c.p);
    const std::size_t nm = masks.size();

    // Unnormalized per-(individual, mask) estimates.
    std::vector<MaskFit> fits(c.n * nm);
    parallel_for(fits.size(), c.threads, [&](std::size_t job) {
        const std::size_t i = job / nm;
        const std::size_t m = job % nm;
        const Dataset one{sd.data[i]};
        const double ld0 = LikelihoodKernel(one, affine(sd.true_masks[i])).log_likelihood(sd.theta0[i]);
        fits[job] = fit_mask(c, one, masks[m], ld0, 1.0, kFixed | kMarginal, job);
    });

    // Alternative combinations: one uniformly drawn mask per individual.
    std::vector<std::vector<std::size_t>> combos;
    std::vector<std::size_t> truth_combo(c.n);
    for (std::size_t i = 0; i < c.n; ++i) truth_combo[i] = sd.true_masks[i].code();
    Rng alt(stream_seed(c, kAlternatives, 0));
    for (std::size_t j = 0; j < c.alternatives; ++j) {
        std::vector<std::size_t> combo(c.n);
        for (auto& m : combo) m = alt.next_u64() % nm;
        combos.push_back(std::move(combo));
    }

    const double norm = normalizer(c);
    auto combo_row = [&](const std::vector<std::size_t>& combo, bool truth, bool marginal) {
        ScoreRow row;
        double sum = 0.0, var = 0.0;
        for (std::size_t i = 0; i < c.n; ++i) {
            const auto& f = fits[i * nm + combo[i]];
            const auto& e = marginal ? f.marginal : f.fixed;
            sum += e.value;
            var += e.se * e.se;
            row.masks.push_back(masks[combo[i]]);
            row.label += (i ? ";" : "") + masks[combo[i]].to_string();
        }
        row.score = sum / norm;
        row.se = std::sqrt(var) / norm;
        row.truth = truth;
        row.m_draws = c.m_draws;
        return row;
    };

    SelectionReport r = make_report(c);
    r.truth = sd.to_json();
    nlohmann::json drawn = nlohmann::json::array();
    for (const auto& combo : combos) {
        nlohmann::json one = nlohmann::json::array();
        for (auto m : combo) one.push_back(masks[m].to_string());
        drawn.push_back(one);
    }
    r.truth["alternatives"] = drawn;

    ScoreTable marginal;
    marginal.name = "per_individual_marginal";
    marginal.score_label = "(1/(nT)) sum_i marginal log-likelihood";
    marginal.criterion = ScoreTable::Criterion::TruthMax;
    marginal.rows.push_back(combo_row(truth_combo, true, true));
    for (const auto& combo : combos) marginal.rows.push_back(combo_row(combo, false, true));

    ScoreTable fixed;
    fixed.name = "per_individual_fixed_truth";
    fixed.score_label = "(1/(nT)) log I";
    fixed.criterion = ScoreTable::Criterion::AllNegative;
    fixed.rows.push_back(combo_row(truth_combo, true, false));
    for (const auto& combo : combos) fixed.rows.push_back(combo_row(combo, false, false));

    r.tables.push_back(std::move(marginal));
    r.tables.push_back(std::move(fixed));
    finish(r);
    return r;
}

SelectionReport run_study(const StudyConfig& config) {
    switch (config.kind) {
        case StudyKind::Case1: return run_case1(config);
        case StudyKind::Case2: return run_case2(config);
        case StudyKind::Averaged: return run_averaged_study(config);
        case StudyKind::PerIndividual: return run_per_individual_study(config);
    }
    throw InvalidArgument("unknown study kind");
}

}  // namespace sdebf
