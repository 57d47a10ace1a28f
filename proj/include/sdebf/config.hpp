#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "sdebf/kl.hpp"
#include "sdebf/market.hpp"
#include "sdebf/selection.hpp"

namespace sdebf {

// Sectioned key-value text:
//
//   [study]
//   kind = case2
//   seed = 7
//
// Allowed sections are [data], [model], [prior], [mc] and [study]. Keys are
// addressed as "section.key". Errors are ConfigError naming the offending key.
class ConfigFile {
public:
    using Schema = std::map<std::string, std::set<std::string>>;

    static ConfigFile parse(const std::string& text, const std::string& base_dir = ".");
    // Relative paths inside the file resolve against the file's directory.
    static ConfigFile load(const std::string& path);

    bool has(const std::string& key) const;
    std::optional<std::string> text(const std::string& key) const;
    std::string string_or(const std::string& key, const std::string& fallback) const;
    double number_or(const std::string& key, double fallback) const;
    std::size_t count_or(const std::string& key, std::size_t fallback) const;
    std::uint64_t seed_or(const std::string& key, std::uint64_t fallback) const;
    bool flag_or(const std::string& key, bool fallback) const;
    // Comma-separated lists.
    std::optional<std::vector<double>> numbers(const std::string& key) const;
    std::optional<std::vector<std::string>> strings(const std::string& key) const;
    // A path value resolved against base_dir().
    std::optional<std::string> path(const std::string& key) const;

    // Throws ConfigError for the first key (in sorted order) outside the schema.
    void check(const Schema& schema) const;

    const std::string& base_dir() const noexcept { return base_dir_; }
    // "section.key=value" lines in sorted order.
    std::string canonical() const;

private:
    std::map<std::string, std::string> values_;  // "section.key" -> value
    std::string base_dir_ = ".";
};

// [study] kind, seed, threads, include_truth_row
// [data]  n, horizon, n_steps, sigma_first, sigma_increment, x0
// [model] p, mu_sd, xi_sd, covariate_coef_sd, theta0, column_order
// [prior] sd_fixed, sd_marginal
// [mc]    m_draws, replications, alternatives, anneal_*
// Unset keys take the preset of the study kind.
StudyConfig study_config_from(const ConfigFile& file);

// Kullback-Leibler minimization over a parameter box.
struct KlRunConfig {
    std::uint64_t seed = 1;
    std::size_t threads = 1;
    double horizon = 1.0;
    std::size_t n_steps = 500;
    double x0 = 0.0;
    double sigma = 1.0;
    double covariate_coef_sd = 0.01;
    DriftModel model0;
    std::vector<double> theta0;  // flat, model0 layout
    DriftModel model1;
    std::vector<double> lower;   // flat, model1 layout
    std::vector<double> upper;
    std::size_t grid_points = 21;
    std::size_t n_paths = 1000;

    static constexpr double kMaxGridPoints = 1e7;

    void validate() const;
};

// [study] seed, threads
// [data]  horizon, n_steps, x0, sigma, covariate_coef_sd
// [model] family0, mask0, theta0, family1, mask1, lower, upper
// [mc]    n_paths, grid_points
KlRunConfig kl_config_from(const ConfigFile& file);

// Market pipeline inputs: either price files plus one covariate file, or synthetic bundles.
struct MarketRunConfig {
    MarketConfig market;
    std::vector<std::string> companies;
    std::vector<std::string> price_files;
    std::string covariate_file;
    double dt = 1.0 / 252.0;
    std::size_t synthetic = 0;  // number of synthetic bundles; 0 reads files
    SyntheticMarketSpec synthetic_spec;

    void validate() const;
};

// [study] seed, threads
// [data]  companies, prices, covariates, dt, synthetic
// [model] synthetic_mask
// [prior] sd
// [mc]    m_draws, family_anneal_max_evaluations, family_anneal_restarts, anneal_*
MarketRunConfig market_config_from(const ConfigFile& file);

}  // namespace sdebf
