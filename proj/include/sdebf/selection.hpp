#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sdebf/inference.hpp"

namespace sdebf {

// All 2^p masks in binary counting order, (0,...,0) first. 1 <= p <= 16.
std::vector<ModelMask> enumerate_masks(std::size_t p);

enum class StudyKind { Case1, Case2, Averaged, PerIndividual };

std::string to_string(StudyKind kind);
StudyKind study_kind_from_string(const std::string& name);

// Two-stage truth recipe: mu_j ~ N(0, mu_sd^2), xi_j ~ N(mu_j, xi_sd^2), and
// covariate-process coefficients ~ N(0, covariate_coef_sd^2).
struct TruthSpec {
    double mu_sd = 1.0;
    double xi_sd = 0.001;
    double covariate_coef_sd = 0.01;
};

struct StudyConfig {
    StudyKind kind = StudyKind::Case1;
    std::size_t n = 15;
    double horizon = 1.0;
    std::size_t n_steps = 500;
    // sigma_i = sigma_first + (i - 1) * sigma_increment.
    double sigma_first = 10.0;
    double sigma_increment = 5.0;
    double x0 = 0.0;
    std::size_t p = 3;
    TruthSpec truth;
    // Prior sd of the fixed-truth Bayes factors (Case 1 table, Table-3 table,
    // per-individual fixed-truth table).
    double prior_sd_fixed = 0.8;
    // Prior sd of the marginal likelihoods (Case 2 table, Table-4 table,
    // per-individual marginal table).
    double prior_sd_marginal = 0.1;
    std::size_t m_draws = 10000;
    std::size_t replications = 100;
    std::size_t alternatives = 10;
    AnnealConfig anneal;
    std::uint64_t seed = 1;
    std::size_t threads = 1;

    // Test hooks.
    // Fixed truth (flat, full-mask layout) instead of the two-stage recipe.
    std::optional<std::vector<double>> theta0;
    // Column order applied to every generated panel (new column j = old order[j]);
    // the truth coefficients follow their columns.
    std::optional<std::vector<std::size_t>> column_order;
    // Case 1: add the true mask with a point prior at theta0 (value exactly 0).
    bool include_truth_row = false;

    static StudyConfig case1();
    static StudyConfig case2();
    static StudyConfig averaged();
    static StudyConfig per_individual();

    void validate() const;
};

void to_json(nlohmann::json& j, const StudyConfig& c);

// Stable 16-hex-digit FNV-1a hash of a text.
std::string fnv1a_hex(const std::string& text);
std::string config_hash(const StudyConfig& config);

struct ScoreRow {
    std::string label;
    // One mask per individual for per-individual combinations, otherwise one mask.
    std::vector<ModelMask> masks;
    double score = 0.0;
    double se = 0.0;
    bool truth = false;
    std::size_t m_draws = 0;
};

struct ScoreTable {
    enum class Criterion {
        AllNegative,  // every non-truth row < 0
        TruthMax,     // truth row strictly above every row that differs from it
        None,         // ranking only; always passes
    };

    std::string name;
    std::string score_label;
    Criterion criterion = Criterion::AllNegative;
    // TruthMax additionally needs margin > se_factor * combined SE.
    double se_factor = 0.0;
    std::vector<ScoreRow> rows;
    std::size_t winner = 0;
    double margin = 0.0;
    double margin_se = 0.0;
    bool pass = false;

    // Fills winner, margin, margin_se and pass. Ties go to fewer active covariates,
    // then to the earlier row.
    void finalize();
};

struct SelectionReport {
    std::string study;
    std::vector<ScoreTable> tables;
    bool pass = false;
    std::uint64_t seed = 0;
    std::string config_hash;
    nlohmann::json config;
    nlohmann::json truth;
};

void to_json(nlohmann::json& j, const SelectionReport& r);
// mask,score,se,truth rows of every table, tables separated by a `table` column.
std::string to_csv(const SelectionReport& r);

// One generated study dataset.
struct StudyData {
    Dataset data;
    std::vector<ModelMask> true_masks;     // per individual
    std::vector<ParamVector> theta0;       // per individual
    std::vector<std::vector<double>> mu;   // per individual truth-recipe means
    std::vector<double> covariate_coefficients;
    nlohmann::json to_json() const;
};

// Covariate process specs for p covariates, cycling affine, constant, linear and
// drawing their coefficients from `rng`.
std::vector<CovariateSdeSpec> study_covariate_specs(std::size_t p, double coef_sd, Rng& rng);

// Truth draw for a full-mask affine model with p covariates (flat layout).
std::vector<double> draw_truth(std::size_t p, const TruthSpec& spec, Rng& rng,
                               std::vector<double>* mu = nullptr);

// Data of the Case 1 / Case 2 / averaged studies: one shared theta0, every individual
// generated from the full model on one shared covariate panel with its own sigma_i.
StudyData generate_shared_truth_data(const StudyConfig& config);
// Data of the per-individual study: own theta0, true mask and covariate panel per individual.
StudyData generate_per_individual_data(const StudyConfig& config);

SelectionReport run_case1(const StudyConfig& config);
SelectionReport run_case2(const StudyConfig& config);
SelectionReport run_averaged_study(const StudyConfig& config);
SelectionReport run_per_individual_study(const StudyConfig& config);
SelectionReport run_study(const StudyConfig& config);

}  // namespace sdebf
