#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "sdebf/grid.hpp"
#include "sdebf/model.hpp"
#include "sdebf/rng.hpp"

namespace sdebf {

// Sampled trajectory X(t_k) on a grid; values[0] is the initial value.
struct Path {
    TimeGrid grid;
    std::vector<double> values;

    double x0() const { return values.front(); }
    double terminal() const { return values.back(); }
};

using CovariateTransform = std::function<double(double)>;

// p time-varying covariates z_l(t_k) on a grid, with transforms g_l.
class CovariatePanel {
public:
    CovariatePanel() = default;
    // Identity transforms. Every column must have grid.size() entries.
    CovariatePanel(TimeGrid grid, std::vector<std::vector<double>> columns);
    CovariatePanel(TimeGrid grid, std::vector<std::vector<double>> columns,
                   std::vector<CovariateTransform> transforms);

    // Panel without covariates (p = 0).
    static CovariatePanel none(const TimeGrid& grid) { return CovariatePanel(grid, {}); }

    const TimeGrid& grid() const noexcept { return grid_; }
    std::size_t p() const noexcept { return columns_.size(); }
    const std::vector<double>& column(std::size_t l) const { return columns_[l]; }
    const std::vector<std::vector<double>>& columns() const noexcept { return columns_; }
    bool standardized() const noexcept { return standardized_; }

    double raw(std::size_t l, std::size_t k) const { return columns_[l][k]; }
    // g_l(z_l(t_k)).
    double transformed(std::size_t l, std::size_t k) const {
        return transforms_[l] ? transforms_[l](columns_[l][k]) : columns_[l][k];
    }

    // Copy with column order permuted: new column j is old column order[j].
    CovariatePanel permuted(std::span<const std::size_t> order) const;

private:
    friend CovariatePanel standardize(const CovariatePanel& panel);

    TimeGrid grid_;
    std::vector<std::vector<double>> columns_;
    std::vector<CovariateTransform> transforms_;
    bool standardized_ = false;
};

// Drift form of one covariate process dz = drift(z) dt + diffusion dW.
struct CovariateSdeSpec {
    enum class Form { Affine, Constant, Linear };

    Form form = Form::Affine;
    // Affine: (a, b) -> a + b z; Constant: (a); Linear: (b) -> b z.
    std::vector<double> coefficients;
    // Unit in every study; zero is a test hook for deterministic columns.
    double diffusion = 1.0;
    double z0 = 0.0;

    static CovariateSdeSpec affine(double a, double b) { return {Form::Affine, {a, b}}; }
    static CovariateSdeSpec constant(double a) { return {Form::Constant, {a}}; }
    static CovariateSdeSpec linear(double b) { return {Form::Linear, {b}}; }

    double drift(double z) const;
};

// n_steps independent N(0, dt) increments.
std::vector<double> sample_wiener_increments(const TimeGrid& grid, Rng& rng);

// Euler-Maruyama with left-endpoint coefficients:
//   X_{k+1} = X_k + phi(t_k) b(X_k) dt + sigma(X_k) dW_k.
// Throws SimulationDiverged on a non-finite state.
Path simulate_path(const SdeModel& model, const ParamVector& theta,
                   const CovariatePanel& covariates, double x0, const TimeGrid& grid, Rng& rng);

// Same scheme driven by caller-supplied increments (size n_steps).
Path simulate_path(const SdeModel& model, const ParamVector& theta,
                   const CovariatePanel& covariates, double x0, const TimeGrid& grid,
                   std::span<const double> increments);

// One column per spec, independent drivers; not standardized.
CovariatePanel simulate_covariates(std::span<const CovariateSdeSpec> specs, const TimeGrid& grid,
                                   Rng& rng);

// Rescales each column to empirical mean 0 / variance 1 over the grid points
// (population variance). Throws DegenerateCovariate for a constant column.
CovariatePanel standardize(const CovariatePanel& panel);

}  // namespace sdebf
