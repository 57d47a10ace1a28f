#include "sdebf/config.hpp"

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "sdebf/errors.hpp"

namespace sdebf {

namespace {

using Schema = ConfigFile::Schema;

const std::set<std::string> kSections{"data", "model", "prior", "mc", "study"};

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(trim(item));
    return out;
}

double to_number(const std::string& key, const std::string& s) {
    double v = 0.0;
    const auto* end = s.data() + s.size();
    const auto [ptr, ec] = std::from_chars(s.data(), end, v);
    if (s.empty() || ec != std::errc() || ptr != end || !std::isfinite(v)) {
        throw ConfigError(key, "expected a finite number, got '" + s + "'");
    }
    return v;
}

std::uint64_t to_unsigned(const std::string& key, const std::string& s) {
    std::uint64_t v = 0;
    const auto* end = s.data() + s.size();
    const auto [ptr, ec] = std::from_chars(s.data(), end, v);
    if (s.empty() || ec != std::errc() || ptr != end) {
        throw ConfigError(key, "expected a non-negative integer, got '" + s + "'");
    }
    return v;
}

const std::set<std::string> kAnnealKeys{
    "anneal_initial_temperature", "anneal_cooling", "anneal_iterations_per_temperature",
    "anneal_proposal_scale", "anneal_max_evaluations", "anneal_restarts", "anneal_profile_xi"};

AnnealConfig read_anneal(const ConfigFile& f, const std::string& prefix, AnnealConfig a) {
    a.initial_temperature = f.number_or(prefix + "initial_temperature", a.initial_temperature);
    a.cooling = f.number_or(prefix + "cooling", a.cooling);
    a.iterations_per_temperature =
        f.count_or(prefix + "iterations_per_temperature", a.iterations_per_temperature);
    a.proposal_scale = f.number_or(prefix + "proposal_scale", a.proposal_scale);
    a.max_evaluations = f.count_or(prefix + "max_evaluations", a.max_evaluations);
    a.restarts = f.count_or(prefix + "restarts", a.restarts);
    a.profile_xi = f.flag_or(prefix + "profile_xi", a.profile_xi);
    return a;
}

// Wraps library validation errors so they name the config file's context.
template <typename F>
void validated(const std::string& what, F&& f) {
    try {
        f();
    } catch (const ConfigError&) {
        throw;
    } catch (const Error& e) {
        throw ConfigError(what, e.what());
    }
}

}  // namespace

ConfigFile ConfigFile::parse(const std::string& text, const std::string& base_dir) {
    boost::property_tree::ptree tree;
    std::istringstream in(text);
    try {
        boost::property_tree::ini_parser::read_ini(in, tree);
    } catch (const boost::property_tree::ini_parser_error& e) {
        throw ParseError(e.line(), "config: " + e.message());
    }
    ConfigFile f;
    f.base_dir_ = base_dir;
    for (const auto& [section, body] : tree) {
        if (body.empty() && !body.data().empty()) {
            throw ConfigError(section, "key outside of any section");
        }
        if (!kSections.contains(section)) {
            throw ConfigError(section, "unknown section (expected data, model, prior, mc or study)");
        }
        for (const auto& [key, value] : body) {
            f.values_[section + "." + key] = trim(value.data());
        }
    }
    return f;
}

ConfigFile ConfigFile::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError(0, "cannot open config file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    auto dir = std::filesystem::path(path).parent_path();
    return parse(ss.str(), dir.empty() ? "." : dir.string());
}

bool ConfigFile::has(const std::string& key) const { return values_.contains(key); }

std::optional<std::string> ConfigFile::text(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return std::nullopt;
    return it->second;
}

std::string ConfigFile::string_or(const std::string& key, const std::string& fallback) const {
    return text(key).value_or(fallback);
}

double ConfigFile::number_or(const std::string& key, double fallback) const {
    const auto t = text(key);
    return t ? to_number(key, *t) : fallback;
}

std::size_t ConfigFile::count_or(const std::string& key, std::size_t fallback) const {
    const auto t = text(key);
    return t ? static_cast<std::size_t>(to_unsigned(key, *t)) : fallback;
}

std::uint64_t ConfigFile::seed_or(const std::string& key, std::uint64_t fallback) const {
    const auto t = text(key);
    return t ? to_unsigned(key, *t) : fallback;
}

bool ConfigFile::flag_or(const std::string& key, bool fallback) const {
    const auto t = text(key);
    if (!t) return fallback;
    if (*t == "1" || *t == "true" || *t == "yes") return true;
    if (*t == "0" || *t == "false" || *t == "no") return false;
    throw ConfigError(key, "expected true or false, got '" + *t + "'");
}

std::optional<std::vector<double>> ConfigFile::numbers(const std::string& key) const {
    const auto t = text(key);
    if (!t) return std::nullopt;
    std::vector<double> out;
    for (const auto& item : split_list(*t)) out.push_back(to_number(key, item));
    return out;
}

std::optional<std::vector<std::string>> ConfigFile::strings(const std::string& key) const {
    const auto t = text(key);
    if (!t) return std::nullopt;
    auto out = split_list(*t);
    for (const auto& s : out) {
        if (s.empty()) throw ConfigError(key, "empty list entry");
    }
    return out;
}

std::optional<std::string> ConfigFile::path(const std::string& key) const {
    const auto t = text(key);
    if (!t) return std::nullopt;
    if (t->empty()) throw ConfigError(key, "empty path");
    const std::filesystem::path p(*t);
    return p.is_absolute() ? p.string() : (std::filesystem::path(base_dir_) / p).string();
}

void ConfigFile::check(const Schema& schema) const {
    for (const auto& [key, value] : values_) {
        const auto dot = key.find('.');
        const auto section = key.substr(0, dot);
        const auto name = key.substr(dot + 1);
        const auto it = schema.find(section);
        if (it == schema.end() || !it->second.contains(name)) {
            throw ConfigError(key, "unknown key");
        }
    }
}

std::string ConfigFile::canonical() const {
    std::string out;
    for (const auto& [key, value] : values_) out += key + "=" + value + "\n";
    return out;
}

StudyConfig study_config_from(const ConfigFile& f) {
    std::set<std::string> mc{"m_draws", "replications", "alternatives"};
    mc.insert(kAnnealKeys.begin(), kAnnealKeys.end());
    f.check({
        {"study", {"kind", "seed", "threads", "include_truth_row"}},
        {"data", {"n", "horizon", "n_steps", "sigma_first", "sigma_increment", "x0"}},
        {"model", {"p", "mu_sd", "xi_sd", "covariate_coef_sd", "theta0", "column_order"}},
        {"prior", {"sd_fixed", "sd_marginal"}},
        {"mc", mc},
    });
    const auto kind_text = f.text("study.kind");
    if (!kind_text) throw ConfigError("study.kind", "missing (case1, case2, averaged or per-individual)");
    StudyConfig c;
    validated("study.kind", [&] {
        switch (study_kind_from_string(*kind_text)) {
            case StudyKind::Case1: c = StudyConfig::case1(); break;
            case StudyKind::Case2: c = StudyConfig::case2(); break;
            case StudyKind::Averaged: c = StudyConfig::averaged(); break;
            case StudyKind::PerIndividual: c = StudyConfig::per_individual(); break;
        }
    });
    c.seed = f.seed_or("study.seed", c.seed);
    c.threads = f.count_or("study.threads", c.threads);
    c.include_truth_row = f.flag_or("study.include_truth_row", c.include_truth_row);
    c.n = f.count_or("data.n", c.n);
    c.horizon = f.number_or("data.horizon", c.horizon);
    c.n_steps = f.count_or("data.n_steps", c.n_steps);
    c.sigma_first = f.number_or("data.sigma_first", c.sigma_first);
    c.sigma_increment = f.number_or("data.sigma_increment", c.sigma_increment);
    c.x0 = f.number_or("data.x0", c.x0);
    c.p = f.count_or("model.p", c.p);
    c.truth.mu_sd = f.number_or("model.mu_sd", c.truth.mu_sd);
    c.truth.xi_sd = f.number_or("model.xi_sd", c.truth.xi_sd);
    c.truth.covariate_coef_sd = f.number_or("model.covariate_coef_sd", c.truth.covariate_coef_sd);
    if (auto t = f.numbers("model.theta0")) c.theta0 = *t;
    if (auto order = f.numbers("model.column_order")) {
        std::vector<std::size_t> idx;
        for (double v : *order) {
            if (v < 0 || v != std::floor(v)) {
                throw ConfigError("model.column_order", "expected column indices");
            }
            idx.push_back(static_cast<std::size_t>(v));
        }
        c.column_order = idx;
    }
    c.prior_sd_fixed = f.number_or("prior.sd_fixed", c.prior_sd_fixed);
    c.prior_sd_marginal = f.number_or("prior.sd_marginal", c.prior_sd_marginal);
    c.m_draws = f.count_or("mc.m_draws", c.m_draws);
    c.replications = f.count_or("mc.replications", c.replications);
    c.alternatives = f.count_or("mc.alternatives", c.alternatives);
    c.anneal = read_anneal(f, "mc.anneal_", c.anneal);
    validated("study", [&] {
        c.validate();
        c.anneal.validate();
    });
    return c;
}

void KlRunConfig::validate() const {
    make_grid(0.0, horizon, n_steps);
    if (!(sigma > 0.0)) throw InvalidArgument("kl: sigma must be > 0");
    if (model0.mask.size() != model1.mask.size()) {
        throw InvalidArgument("kl: mask0 and mask1 must cover the same covariates");
    }
    if (theta0.size() != model0.free_count()) {
        throw InvalidArgument("kl: theta0 needs " + std::to_string(model0.free_count()) + " entries");
    }
    if (lower.size() != model1.free_count() || upper.size() != model1.free_count()) {
        throw InvalidArgument("kl: lower and upper need " + std::to_string(model1.free_count()) +
                              " entries");
    }
    for (std::size_t d = 0; d < lower.size(); ++d) {
        if (!(lower[d] <= upper[d])) throw InvalidArgument("kl: lower must not exceed upper");
    }
    if (grid_points < 1) throw InvalidArgument("kl: grid_points must be >= 1");
    double cells = 1.0;
    for (std::size_t d = 0; d < lower.size(); ++d) cells *= lower[d] == upper[d] ? 1.0 : static_cast<double>(grid_points);
    if (cells > kMaxGridPoints) {
        throw InvalidArgument("kl: parameter grid has " + std::to_string(static_cast<long long>(cells)) +
                              " points (limit " + std::to_string(static_cast<long long>(kMaxGridPoints)) +
                              "); pin axes with lower = upper or lower grid_points");
    }
    if (n_paths < 100) throw InvalidArgument("kl: n_paths must be >= 100");
}

KlRunConfig kl_config_from(const ConfigFile& f) {
    f.check({
        {"study", {"seed", "threads"}},
        {"data", {"horizon", "n_steps", "x0", "sigma", "covariate_coef_sd"}},
        {"model", {"family0", "mask0", "theta0", "family1", "mask1", "lower", "upper"}},
        {"mc", {"n_paths", "grid_points"}},
    });
    KlRunConfig c;
    c.seed = f.seed_or("study.seed", c.seed);
    c.threads = f.count_or("study.threads", c.threads);
    c.horizon = f.number_or("data.horizon", c.horizon);
    c.n_steps = f.count_or("data.n_steps", c.n_steps);
    c.x0 = f.number_or("data.x0", c.x0);
    c.sigma = f.number_or("data.sigma", c.sigma);
    c.covariate_coef_sd = f.number_or("data.covariate_coef_sd", c.covariate_coef_sd);
    validated("model.family0", [&] {
        c.model0.family = drift_family_from_string(f.string_or("model.family0", "affine"));
    });
    validated("model.family1", [&] {
        c.model1.family = drift_family_from_string(f.string_or("model.family1", to_string(c.model0.family)));
    });
    validated("model.mask0", [&] { c.model0.mask = ModelMask::parse(f.string_or("model.mask0", "")); });
    validated("model.mask1", [&] {
        c.model1.mask = ModelMask::parse(f.string_or("model.mask1", c.model0.mask.to_string()));
    });
    const auto theta0 = f.numbers("model.theta0");
    if (!theta0) throw ConfigError("model.theta0", "missing");
    c.theta0 = *theta0;
    const auto lower = f.numbers("model.lower");
    const auto upper = f.numbers("model.upper");
    if (!lower) throw ConfigError("model.lower", "missing");
    if (!upper) throw ConfigError("model.upper", "missing");
    c.lower = *lower;
    c.upper = *upper;
    c.n_paths = f.count_or("mc.n_paths", c.n_paths);
    c.grid_points = f.count_or("mc.grid_points", c.grid_points);
    validated("kl", [&] { c.validate(); });
    return c;
}

void MarketRunConfig::validate() const {
    if (!(dt > 0.0)) throw InvalidArgument("market: dt must be > 0");
    if (!(market.prior_sd > 0.0)) throw InvalidArgument("market: prior sd must be > 0");
    if (market.m_draws < 2) throw InvalidArgument("market: m_draws must be >= 2");
    market.family_anneal.validate();
    market.selection_anneal.validate();
    if (synthetic > 0) return;
    if (price_files.empty()) throw InvalidArgument("market: no price files");
    if (companies.size() != price_files.size()) {
        throw InvalidArgument("market: companies and prices must have the same length");
    }
    if (covariate_file.empty()) throw InvalidArgument("market: no covariate file");
}

MarketRunConfig market_config_from(const ConfigFile& f) {
    std::set<std::string> mc{"m_draws", "family_anneal_max_evaluations", "family_anneal_restarts"};
    mc.insert(kAnnealKeys.begin(), kAnnealKeys.end());
    f.check({
        {"study", {"seed", "threads"}},
        {"data", {"companies", "prices", "covariates", "dt", "synthetic"}},
        {"model", {"synthetic_mask"}},
        {"prior", {"sd"}},
        {"mc", mc},
    });
    MarketRunConfig c;
    c.market.seed = f.seed_or("study.seed", c.market.seed);
    c.market.threads = f.count_or("study.threads", c.market.threads);
    c.dt = f.number_or("data.dt", c.dt);
    c.synthetic = f.count_or("data.synthetic", c.synthetic);
    if (auto prices = f.strings("data.prices")) {
        for (const auto& p : *prices) {
            const std::filesystem::path path(p);
            c.price_files.push_back(path.is_absolute() ? p : (std::filesystem::path(f.base_dir()) / path).string());
        }
    }
    if (auto names = f.strings("data.companies")) {
        c.companies = *names;
    } else {
        for (const auto& p : c.price_files) c.companies.push_back(std::filesystem::path(p).stem().string());
    }
    c.covariate_file = f.path("data.covariates").value_or("");
    validated("model.synthetic_mask", [&] {
        if (auto m = f.text("model.synthetic_mask")) c.synthetic_spec.mask = ModelMask::parse(*m);
    });
    if (c.synthetic_spec.mask.size() != c.synthetic_spec.xi.size() - 1) {
        throw ConfigError("model.synthetic_mask", "needs " + std::to_string(c.synthetic_spec.xi.size() - 1) +
                                                      " entries");
    }
    c.market.prior_sd = f.number_or("prior.sd", c.market.prior_sd);
    c.market.m_draws = f.count_or("mc.m_draws", c.market.m_draws);
    c.market.family_anneal.max_evaluations =
        f.count_or("mc.family_anneal_max_evaluations", c.market.family_anneal.max_evaluations);
    c.market.family_anneal.restarts = f.count_or("mc.family_anneal_restarts", c.market.family_anneal.restarts);
    c.market.selection_anneal = read_anneal(f, "mc.anneal_", c.market.selection_anneal);
    validated("market", [&] { c.validate(); });
    return c;
}

}  // namespace sdebf
