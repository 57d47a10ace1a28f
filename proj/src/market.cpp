#include "sdebf/market.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <map>
#include <numbers>
#include <sstream>

#include <Eigen/Dense>

#include "sdebf/errors.hpp"
#include "sdebf/parallel.hpp"

namespace sdebf {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(trim(cell));
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

bool is_iso_date(const std::string& s) {
    if (s.size() != 10 || s[4] != '-' || s[7] != '-') return false;
    for (std::size_t i : {0, 1, 2, 3, 5, 6, 8, 9}) {
        if (s[i] < '0' || s[i] > '9') return false;
    }
    const std::chrono::year_month_day ymd{std::chrono::year{std::stoi(s.substr(0, 4))},
                                          std::chrono::month{static_cast<unsigned>(std::stoi(s.substr(5, 2)))},
                                          std::chrono::day{static_cast<unsigned>(std::stoi(s.substr(8, 2)))}};
    return ymd.ok();
}

double parse_number(const std::string& cell, std::size_t row, const std::string& what) {
    if (cell.empty()) throw ParseError(row, "empty " + what);
    char* end = nullptr;
    const double v = std::strtod(cell.c_str(), &end);
    if (end != cell.c_str() + cell.size() || !std::isfinite(v)) {
        throw ParseError(row, "invalid " + what + " '" + cell + "'");
    }
    return v;
}

// Rows of a CSV keyed by date; `columns` receives the header names after `date`.
std::map<std::string, std::pair<std::size_t, std::vector<double>>> read_dated_csv(
    const std::string& path, std::vector<std::string>& columns) {
    std::ifstream in(path);
    if (!in) throw ParseError(0, path + ": cannot open file");
    std::string line;
    if (!std::getline(in, line)) throw ParseError(0, path + ": empty file");
    const auto header = split(line);
    if (header.empty() || header[0] != "date") {
        throw ParseError(0, path + ": first column must be 'date'");
    }
    if (header.size() < 2) throw ParseError(0, path + ": no value columns");
    columns.assign(header.begin() + 1, header.end());

    std::map<std::string, std::pair<std::size_t, std::vector<double>>> rows;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        ++row;
        const auto cells = split(line);
        if (cells.size() != header.size()) {
            throw ParseError(row, path + ": expected " + std::to_string(header.size()) + " columns, got " +
                                      std::to_string(cells.size()));
        }
        if (!is_iso_date(cells[0])) throw ParseError(row, path + ": invalid date '" + cells[0] + "'");
        std::vector<double> values;
        for (std::size_t c = 1; c < cells.size(); ++c) {
            values.push_back(parse_number(cells[c], row, path + ": " + header[c]));
        }
        if (!rows.emplace(cells[0], std::make_pair(row, std::move(values))).second) {
            throw ParseError(row, path + ": duplicate date " + cells[0]);
        }
    }
    if (rows.empty()) throw ParseError(0, path + ": no data rows");
    return rows;
}

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

double sigma_power(double t3, double t4, double x, std::size_t k) {
    if (t4 != 0.0 && !(x > 0.0)) {
        throw InvalidArgument("power diffusion needs a positive state (step " + std::to_string(k) + ")");
    }
    const double s = t4 == 0.0 ? t3 : t3 * std::pow(x, t4);
    if (!(std::abs(s) >= kSigmaFloor)) throw DiffusionDegenerate(k, x);
    return s;
}

// Closed-form maximizer over (t1, t2, t3) at fixed t4; `with_intercept` false pins t1 = 0.
std::vector<double> profile_fit(std::span<const double> x, double t4, double dt, bool with_intercept) {
    const std::size_t n = x.size() - 1;
    Eigen::Matrix2d a = Eigen::Matrix2d::Zero();
    Eigen::Vector2d rhs = Eigen::Vector2d::Zero();
    std::vector<double> w2(n);
    for (std::size_t k = 0; k < n; ++k) {
        const double w = sigma_power(1.0, t4, x[k], k);
        w2[k] = w * w;
        const Eigen::Vector2d f(with_intercept ? dt : 0.0, x[k] * dt);
        a += f * f.transpose() / w2[k];
        rhs += f * (x[k + 1] - x[k]) / w2[k];
    }
    Eigen::Vector2d coef = Eigen::Vector2d::Zero();
    if (with_intercept) {
        coef = a.ldlt().solve(rhs);
    } else {
        coef(1) = rhs(1) / a(1, 1);
    }
    double ss = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        const double r = x[k + 1] - x[k] - (coef(0) + coef(1) * x[k]) * dt;
        ss += r * r / (w2[k] * dt);
    }
    const double t3 = std::sqrt(ss / static_cast<double>(n));
    if (!(t3 >= kSigmaFloor) || !coef.allFinite()) {
        throw InvalidArgument("pseudo-likelihood fit is degenerate at t4 = " + std::to_string(t4));
    }
    return {coef(0), coef(1), t3, t4};
}

ParamVector mask_theta(const SyntheticMarketSpec& s) {
    ParamVector th;
    th.xi.push_back(s.xi.at(0));
    for (std::size_t l = 0; l < s.mask.size(); ++l) {
        if (s.mask[l]) th.xi.push_back(s.xi.at(1 + l));
    }
    th.beta = s.beta;
    return th;
}

std::string iso_day(int offset) {
    using namespace std::chrono;
    const year_month_day d{sys_days{year{2000} / January / 1} + days{offset}};
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(d.year()), static_cast<unsigned>(d.month()),
                  static_cast<unsigned>(d.day()));
    return buf;
}

}  // namespace

Path SeriesBundle::path() const {
    return Path{covariates->grid(), prices};
}

SeriesBundle make_bundle(std::string company, std::vector<std::string> dates, std::vector<double> prices,
                         std::vector<std::string> covariate_names,
                         std::vector<std::vector<double>> covariates, double dt) {
    if (!(dt > 0.0) || !std::isfinite(dt)) throw InvalidArgument("bundle: dt must be > 0");
    const std::size_t n = prices.size();
    if (n < 3) throw ParseError(0, "bundle: need at least 3 observations");
    if (dates.size() != n) throw ParseError(0, "bundle: dates and prices differ in length");
    if (covariate_names.size() != covariates.size()) {
        throw ParseError(0, "bundle: covariate names and columns differ in count");
    }
    for (std::size_t k = 0; k < n; ++k) {
        if (!is_iso_date(dates[k])) throw ParseError(k + 1, "invalid date '" + dates[k] + "'");
        if (k > 0 && !(dates[k - 1] < dates[k])) throw ParseError(k + 1, "dates must be strictly increasing");
        if (!(prices[k] > 0.0) || !std::isfinite(prices[k])) {
            throw ParseError(k + 1, "price must be positive, got " + format_double(prices[k]));
        }
    }
    for (std::size_t l = 0; l < covariates.size(); ++l) {
        if (covariates[l].size() != n) {
            throw ParseError(0, "bundle: covariate '" + covariate_names[l] + "' has " +
                                    std::to_string(covariates[l].size()) + " values, expected " +
                                    std::to_string(n));
        }
    }
    SeriesBundle b;
    b.company = std::move(company);
    b.dates = std::move(dates);
    b.prices = std::move(prices);
    b.covariate_names = std::move(covariate_names);
    b.dt = dt;
    const TimeGrid grid = make_grid(0.0, static_cast<double>(n - 1) * dt, n - 1);
    b.covariates = std::make_shared<const CovariatePanel>(standardize(CovariatePanel(grid, std::move(covariates))));
    return b;
}

SeriesBundle load_series(const std::string& price_csv, const std::string& covariate_csv, double dt,
                         const std::string& company) {
    std::vector<std::string> price_cols, cov_cols;
    const auto prices = read_dated_csv(price_csv, price_cols);
    const auto covs = read_dated_csv(covariate_csv, cov_cols);
    const auto close = std::find(price_cols.begin(), price_cols.end(), "close");
    if (close == price_cols.end()) throw ParseError(0, price_csv + ": missing column 'close'");
    const std::size_t ci = static_cast<std::size_t>(close - price_cols.begin());

    for (const auto& [date, entry] : prices) {
        if (!(entry.second[ci] > 0.0)) {
            throw ParseError(entry.first, price_csv + ": price must be positive, got " +
                                              format_double(entry.second[ci]));
        }
        if (!covs.count(date)) {
            throw ParseError(entry.first, price_csv + ": date " + date + " has no covariate row");
        }
    }
    for (const auto& [date, entry] : covs) {
        if (!prices.count(date)) {
            throw ParseError(entry.first, covariate_csv + ": date " + date + " has no price row");
        }
    }

    std::vector<std::string> dates;
    std::vector<double> values;
    std::vector<std::vector<double>> columns(cov_cols.size());
    for (const auto& [date, entry] : prices) {
        dates.push_back(date);
        values.push_back(entry.second[ci]);
        const auto& c = covs.at(date).second;
        for (std::size_t l = 0; l < c.size(); ++l) columns[l].push_back(c[l]);
    }
    return make_bundle(company.empty() ? price_csv : company, std::move(dates), std::move(values), cov_cols,
                       std::move(columns), dt);
}

std::string to_string(SdeFamily family) {
    switch (family) {
        case SdeFamily::Vasicek: return "Vasicek";
        case SdeFamily::Cir: return "CIR";
        case SdeFamily::Gbm: return "GBM";
        case SdeFamily::Ckls: return "CKLS";
    }
    return "unknown";
}

SdeFamily sde_family_from_string(const std::string& name) {
    for (auto f : {SdeFamily::Vasicek, SdeFamily::Cir, SdeFamily::Gbm, SdeFamily::Ckls}) {
        std::string a = to_string(f), b = name;
        std::transform(a.begin(), a.end(), a.begin(), ::tolower);
        std::transform(b.begin(), b.end(), b.begin(), ::tolower);
        if (a == b) return f;
    }
    throw InvalidArgument("unknown SDE family '" + name + "'");
}

std::size_t parameter_count(SdeFamily family) noexcept {
    switch (family) {
        case SdeFamily::Vasicek:
        case SdeFamily::Cir: return 3;
        case SdeFamily::Gbm: return 2;
        case SdeFamily::Ckls: return 4;
    }
    return 0;
}

std::vector<double> expand_params(SdeFamily family, std::span<const double> free) {
    if (free.size() != parameter_count(family)) {
        throw InvalidArgument(to_string(family) + " takes " + std::to_string(parameter_count(family)) +
                              " parameters, got " + std::to_string(free.size()));
    }
    switch (family) {
        case SdeFamily::Vasicek: return {free[0], free[1], free[2], 0.0};
        case SdeFamily::Cir: return {free[0], free[1], free[2], 0.5};
        case SdeFamily::Gbm: return {0.0, free[0], free[1], 1.0};
        case SdeFamily::Ckls: return {free[0], free[1], free[2], free[3]};
    }
    return {};
}

double euler_pseudo_loglik(std::span<const double> x, std::span<const double> full, double dt) {
    if (full.size() != 4) throw InvalidArgument("euler_pseudo_loglik: need (t1, t2, t3, t4)");
    if (!(dt > 0.0)) throw InvalidArgument("euler_pseudo_loglik: dt must be > 0");
    if (x.size() < 2) throw InvalidArgument("euler_pseudo_loglik: need at least 2 observations");
    const double log_2pi_dt = std::log(2.0 * std::numbers::pi * dt);
    double ll = 0.0;
    for (std::size_t k = 0; k + 1 < x.size(); ++k) {
        const double s = sigma_power(full[2], full[3], x[k], k);
        const double r = x[k + 1] - x[k] - (full[0] + full[1] * x[k]) * dt;
        ll -= 0.5 * (log_2pi_dt + 2.0 * std::log(std::abs(s)) + r * r / (s * s * dt));
    }
    return ll;
}

double euler_pseudo_loglik(std::span<const double> values, SdeFamily family, std::span<const double> free,
                           double dt) {
    const auto full = expand_params(family, free);
    return euler_pseudo_loglik(values, full, dt);
}

void to_json(nlohmann::json& j, const SdeFamilyFit& f) {
    j = nlohmann::json{{"family", to_string(f.family)}, {"params", f.params},
                       {"log_likelihood", f.log_likelihood}, {"bic", f.bic},
                       {"k", f.k}, {"n_increments", f.n_increments}};
}

SdeFamilyFit fit_family(std::span<const double> x, SdeFamily family, double dt, const AnnealConfig& anneal) {
    if (x.size() < 3) throw InvalidArgument("fit_family: need at least 3 observations");
    std::vector<double> full;
    switch (family) {
        case SdeFamily::Vasicek: full = profile_fit(x, 0.0, dt, true); break;
        case SdeFamily::Cir: full = profile_fit(x, 0.5, dt, true); break;
        case SdeFamily::Gbm: full = profile_fit(x, 1.0, dt, false); break;
        case SdeFamily::Ckls: {
            auto profile = [&](double t4) {
                if (!(t4 >= -2.0 && t4 <= 4.0)) return -std::numeric_limits<double>::infinity();
                try {
                    return euler_pseudo_loglik(x, profile_fit(x, t4, dt, true), dt);
                } catch (const Error&) {
                    return -std::numeric_limits<double>::infinity();
                }
            };
            // Start from the best of the nested exponents so CKLS never falls below them.
            double start = 0.0, best = -std::numeric_limits<double>::infinity();
            for (double t4 : {0.0, 0.5, 1.0}) {
                const double v = profile(t4);
                if (v > best) {
                    best = v;
                    start = t4;
                }
            }
            if (!std::isfinite(best)) throw InvalidArgument("CKLS fit: no finite starting exponent");
            AnnealConfig cfg = anneal;
            cfg.init.reset();
            const auto r = anneal_maximize(
                [&](std::span<const double> p) { return profile(p[0]); }, {start}, cfg);
            full = profile_fit(x, r.best[0], dt, true);
            break;
        }
    }
    SdeFamilyFit f;
    f.family = family;
    f.params = full;
    f.k = parameter_count(family);
    f.n_increments = x.size() - 1;
    f.log_likelihood = euler_pseudo_loglik(x, full, dt);
    f.bic = -2.0 * f.log_likelihood + static_cast<double>(f.k) * std::log(static_cast<double>(f.n_increments));
    return f;
}

std::vector<SdeFamilyFit> fit_families(std::span<const double> values, double dt, const AnnealConfig& anneal) {
    std::vector<SdeFamilyFit> fits;
    for (auto f : {SdeFamily::Vasicek, SdeFamily::Cir, SdeFamily::Gbm, SdeFamily::Ckls}) {
        try {
            fits.push_back(fit_family(values, f, dt, anneal));
        } catch (const InvalidArgument&) {
            // Power families are undefined on non-positive data; Vasicek still fits.
            if (f == SdeFamily::Vasicek) throw;
        }
    }
    std::stable_sort(fits.begin(), fits.end(),
                     [](const SdeFamilyFit& a, const SdeFamilyFit& b) { return a.bic < b.bic; });
    return fits;
}

SelectionReport select_covariates_real(const SeriesBundle& bundle, double a, double b, double prior_sd,
                                       std::size_t m_draws, const AnnealConfig& anneal, std::uint64_t seed,
                                       std::size_t threads) {
    const std::size_t p = bundle.covariates->p();
    if (p < 1) throw InvalidArgument("select_covariates_real: bundle has no covariates");
    if (!(prior_sd >= 0.0)) throw InvalidArgument("select_covariates_real: prior sd must be >= 0");
    const Diffusion diffusion = Diffusion::power(a, b);
    const Dataset data{{bundle.path(), bundle.covariates, diffusion}};
    const double horizon = bundle.covariates->grid().horizon();
    const auto masks = enumerate_masks(p);

    std::vector<LogMeanEstimate> est(masks.size());
    parallel_for(masks.size(), threads, [&](std::size_t m) {
        const LikelihoodKernel k(data, DriftModel{DriftFamily::Affine, masks[m]});
        AnnealConfig cfg = anneal;
        cfg.seed = derive_seed(derive_seed(seed, 1), m);
        const auto mle = mle_simulated_annealing(k, cfg);
        Rng draws(derive_seed(derive_seed(seed, 2), m));
        est[m] = log_marginal_likelihood(k, Prior::isotropic(mle.best, prior_sd), m_draws, horizon, draws);
    });

    SelectionReport r;
    r.study = "market";
    r.seed = seed;
    const std::string diffusion_text = format_double(a) + "," + format_double(b);
    r.config = nlohmann::json{{"company", bundle.company},
                              {"n_obs", bundle.size()},
                              {"dt", bundle.dt},
                              {"covariates", bundle.covariate_names},
                              {"diffusion", {{"a", a}, {"b", b}}},
                              {"diffusion_hash", fnv1a_hex(diffusion_text)},
                              {"prior_sd", prior_sd},
                              {"m_draws", m_draws}};
    r.config_hash = fnv1a_hex(r.config.dump());
    ScoreTable t;
    t.name = "marginal";
    t.score_label = "(1/T) marginal log-likelihood";
    t.criterion = ScoreTable::Criterion::None;
    for (std::size_t m = 0; m < masks.size(); ++m) {
        ScoreRow row;
        row.label = masks[m].to_string();
        row.masks = {masks[m]};
        row.score = est[m].value;
        row.se = est[m].se;
        row.m_draws = m_draws;
        t.rows.push_back(row);
    }
    t.finalize();
    r.tables.push_back(std::move(t));
    r.pass = true;
    return r;
}

std::vector<double> simulate_ckls(std::span<const double> full, double x0, double dt, std::size_t n, Rng& rng) {
    if (full.size() != 4) throw InvalidArgument("simulate_ckls: need (t1, t2, t3, t4)");
    if (n < 2 || !(dt > 0.0)) throw InvalidArgument("simulate_ckls: need n >= 2 and dt > 0");
    if (!(x0 > 0.0)) throw InvalidArgument("simulate_ckls: x0 must be > 0");
    std::vector<double> x(n);
    x[0] = x0;
    const double sq = std::sqrt(dt);
    for (std::size_t k = 0; k + 1 < n; ++k) {
        const double s = full[2] * std::pow(x[k], full[3]);
        x[k + 1] = x[k] + (full[0] + full[1] * x[k]) * dt + s * sq * rng.normal();
        if (!(x[k + 1] > 0.0) || !std::isfinite(x[k + 1])) {
            throw SimulationDiverged(k + 1, "CKLS state left (0, inf)");
        }
    }
    return x;
}

SeriesBundle synthetic_bundle(const SyntheticMarketSpec& spec, std::uint64_t seed) {
    const std::size_t p = spec.mask.size();
    if (spec.xi.size() != p + 1) throw InvalidArgument("synthetic_bundle: xi needs p + 1 entries");
    if (spec.n < 3) throw InvalidArgument("synthetic_bundle: n must be >= 3");
    const TimeGrid grid = make_grid(0.0, static_cast<double>(spec.n - 1) * spec.dt, spec.n - 1);
    Rng coef(derive_seed(seed, 1));
    const auto specs = study_covariate_specs(p, 0.01, coef);
    Rng cov_rng(derive_seed(seed, 2));
    const CovariatePanel raw = simulate_covariates(specs, grid, cov_rng);
    const CovariatePanel panel = standardize(raw);
    const SdeModel model{DriftModel{DriftFamily::Affine, spec.mask}, Diffusion::power(spec.a, spec.b)};
    Rng path_rng(derive_seed(seed, 3));
    const Path path = simulate_path(model, mask_theta(spec), panel, spec.x0, grid, path_rng);
    std::vector<std::string> dates, names;
    for (std::size_t k = 0; k < spec.n; ++k) dates.push_back(iso_day(static_cast<int>(k)));
    for (std::size_t l = 0; l < p; ++l) names.push_back("c" + std::to_string(l + 1));
    return make_bundle("synthetic", std::move(dates), path.values, std::move(names), raw.columns(), spec.dt);
}

void to_json(nlohmann::json& j, const CompanyReport& r) {
    j = nlohmann::json{{"company", r.company},
                       {"n_obs", r.n_obs},
                       {"fits", r.fits},
                       {"best_family", r.fits.empty() ? "" : to_string(r.fits.front().family)},
                       {"diffusion", {{"a", r.diffusion_a}, {"b", r.diffusion_b}}},
                       {"diffusion_hash", r.diffusion_hash},
                       {"winner_mask", r.winner.to_string()},
                       {"winner_covariates", r.winner_covariates},
                       {"selection", r.selection}};
}

CompanyReport analyze_company(const SeriesBundle& bundle, const MarketConfig& config, std::size_t company_index) {
    CompanyReport r;
    r.company = bundle.company;
    r.n_obs = bundle.size();
    AnnealConfig fit_cfg = config.family_anneal;
    fit_cfg.seed = derive_seed(derive_seed(config.seed, 10), company_index);
    r.fits = fit_families(bundle.prices, bundle.dt, fit_cfg);
    const auto ckls = std::find_if(r.fits.begin(), r.fits.end(),
                                   [](const SdeFamilyFit& f) { return f.family == SdeFamily::Ckls; });
    if (ckls == r.fits.end()) throw InvalidArgument(bundle.company + ": CKLS fit unavailable");
    r.diffusion_a = ckls->params[2];
    r.diffusion_b = ckls->params[3];
    r.diffusion_hash = fnv1a_hex(format_double(r.diffusion_a) + "," + format_double(r.diffusion_b));
    r.selection = select_covariates_real(bundle, r.diffusion_a, r.diffusion_b, config.prior_sd, config.m_draws,
                                         config.selection_anneal, derive_seed(derive_seed(config.seed, 11), company_index),
                                         config.threads);
    const auto& t = r.selection.tables.front();
    r.winner = t.rows[t.winner].masks.front();
    for (std::size_t l = 0; l < r.winner.size(); ++l) {
        if (r.winner[l]) r.winner_covariates.push_back(bundle.covariate_names[l]);
    }
    return r;
}

std::vector<CompanyReport> analyze_companies(const std::vector<SeriesBundle>& bundles, const MarketConfig& config) {
    std::vector<CompanyReport> out(bundles.size());
    MarketConfig inner = config;
    inner.threads = 1;
    parallel_for(bundles.size(), config.threads,
                 [&](std::size_t i) { out[i] = analyze_company(bundles[i], inner, i); });
    return out;
}

std::string market_table_csv(const std::vector<CompanyReport>& reports) {
    std::ostringstream os;
    os << "company,n_obs,best_family,diffusion_a,diffusion_b,winner_mask,covariates\n";
    for (const auto& r : reports) {
        std::string covs;
        for (const auto& c : r.winner_covariates) covs += (covs.empty() ? "" : ";") + c;
        os << r.company << ',' << r.n_obs << ',' << (r.fits.empty() ? "" : to_string(r.fits.front().family)) << ','
           << format_double(r.diffusion_a) << ',' << format_double(r.diffusion_b) << ",\"" << r.winner.to_string()
           << "\"," << (covs.empty() ? "none" : covs) << '\n';
    }
    return os.str();
}

}  // namespace sdebf
