#include "sdebf/sde.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "sdebf/errors.hpp"

namespace sdebf {

CovariatePanel::CovariatePanel(TimeGrid grid, std::vector<std::vector<double>> columns)
    : CovariatePanel(grid, std::move(columns), {}) {}

CovariatePanel::CovariatePanel(TimeGrid grid, std::vector<std::vector<double>> columns,
                               std::vector<CovariateTransform> transforms)
    : grid_(grid), columns_(std::move(columns)), transforms_(std::move(transforms)) {
    for (std::size_t l = 0; l < columns_.size(); ++l) {
        if (columns_[l].size() != grid_.size()) {
            throw InvalidArgument("covariate column " + std::to_string(l) + " has " +
                                  std::to_string(columns_[l].size()) + " values, grid has " +
                                  std::to_string(grid_.size()) + " points");
        }
    }
    if (transforms_.empty()) transforms_.resize(columns_.size());
    if (transforms_.size() != columns_.size()) {
        throw InvalidArgument("one transform per covariate column required");
    }
}

CovariatePanel CovariatePanel::permuted(std::span<const std::size_t> order) const {
    if (order.size() != p()) throw InvalidArgument("permutation size differs from p");
    std::vector<std::vector<double>> cols;
    std::vector<CovariateTransform> tr;
    for (std::size_t j : order) {
        cols.push_back(columns_.at(j));
        tr.push_back(transforms_.at(j));
    }
    CovariatePanel out(grid_, std::move(cols), std::move(tr));
    out.standardized_ = standardized_;
    return out;
}

double CovariateSdeSpec::drift(double z) const {
    switch (form) {
        case Form::Affine: return coefficients.at(0) + coefficients.at(1) * z;
        case Form::Constant: return coefficients.at(0);
        case Form::Linear: return coefficients.at(0) * z;
    }
    return 0.0;
}

std::vector<double> sample_wiener_increments(const TimeGrid& grid, Rng& rng) {
    const double sd = std::sqrt(grid.dt());
    std::vector<double> dw(grid.n_steps());
    for (double& w : dw) w = sd * rng.normal();
    return dw;
}

Path simulate_path(const SdeModel& model, const ParamVector& theta,
                   const CovariatePanel& covariates, double x0, const TimeGrid& grid, Rng& rng) {
    const auto dw = sample_wiener_increments(grid, rng);
    return simulate_path(model, theta, covariates, x0, grid, dw);
}

Path simulate_path(const SdeModel& model, const ParamVector& theta,
                   const CovariatePanel& covariates, double x0, const TimeGrid& grid,
                   std::span<const double> increments) {
    check_params(model.drift, theta);
    if (!(covariates.grid() == grid)) {
        throw InvalidArgument("simulate_path: covariates are on a different grid");
    }
    if (model.drift.mask.size() != covariates.p()) {
        throw InvalidArgument("simulate_path: mask length differs from covariate count");
    }
    if (increments.size() != grid.n_steps()) {
        throw InvalidArgument("simulate_path: need one Wiener increment per step");
    }
    if (!std::isfinite(x0)) throw SimulationDiverged(0, "non-finite initial value");

    Path path{grid, std::vector<double>(grid.size())};
    const double dt = grid.dt();
    double x = x0;
    path.values[0] = x;
    for (std::size_t k = 0; k < grid.n_steps(); ++k) {
        const double drift = drift_value(model.drift, theta, covariates, k, x);
        const double sigma = model.diffusion(x);
        x += drift * dt + sigma * increments[k];
        if (!std::isfinite(x)) {
            throw SimulationDiverged(k + 1, "state is " + std::to_string(x));
        }
        path.values[k + 1] = x;
    }
    return path;
}

CovariatePanel simulate_covariates(std::span<const CovariateSdeSpec> specs, const TimeGrid& grid,
                                   Rng& rng) {
    std::vector<std::vector<double>> columns;
    columns.reserve(specs.size());
    for (const auto& spec : specs) {
        const std::size_t need = spec.form == CovariateSdeSpec::Form::Affine ? 2 : 1;
        if (spec.coefficients.size() != need) {
            throw InvalidArgument("covariate spec: form and coefficient count disagree");
        }
        const auto dw = sample_wiener_increments(grid, rng);
        std::vector<double> z(grid.size());
        z[0] = spec.z0;
        for (std::size_t k = 0; k < grid.n_steps(); ++k) {
            z[k + 1] = z[k] + spec.drift(z[k]) * grid.dt() + spec.diffusion * dw[k];
            if (!std::isfinite(z[k + 1])) throw SimulationDiverged(k + 1, "covariate state");
        }
        columns.push_back(std::move(z));
    }
    return CovariatePanel(grid, std::move(columns));
}

CovariatePanel standardize(const CovariatePanel& panel) {
    std::vector<std::vector<double>> cols = panel.columns_;
    for (std::size_t l = 0; l < cols.size(); ++l) {
        auto& c = cols[l];
        const double n = static_cast<double>(c.size());
        double mean = 0.0;
        for (double v : c) mean += v;
        mean /= n;
        double var = 0.0;
        for (double v : c) var += (v - mean) * (v - mean);
        var /= n;
        // Rounding leaves ~1e-32 relative variance on a constant column.
        if (!(var > 1e-24 * std::max(1.0, mean * mean)) || !std::isfinite(var)) {
            throw DegenerateCovariate(l);
        }
        const double sd = std::sqrt(var);
        for (double& v : c) v = (v - mean) / sd;
    }
    CovariatePanel out(panel.grid_, std::move(cols), panel.transforms_);
    out.standardized_ = true;
    return out;
}

}  // namespace sdebf
