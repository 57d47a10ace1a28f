#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <unistd.h>

#include "sdebf/likelihood.hpp"

namespace sdebf::testing {

inline double rel_err(double a, double b) {
    const double s = std::max({std::abs(a), std::abs(b), 1e-300});
    return std::abs(a - b) / s;
}

// Three standardized covariates from the study's covariate processes.
inline CovariatePanel study_panel(const TimeGrid& grid, Rng& rng) {
    std::vector<CovariateSdeSpec> specs = {CovariateSdeSpec::affine(0.01 * rng.normal(), 0.01 * rng.normal()),
                                           CovariateSdeSpec::constant(0.01 * rng.normal()),
                                           CovariateSdeSpec::linear(0.01 * rng.normal())};
    return standardize(simulate_covariates(specs, grid, rng));
}

inline SdeModel affine_model(ModelMask mask, double sigma = 1.0) {
    return SdeModel{DriftModel{DriftFamily::Affine, std::move(mask)}, Diffusion::constant(sigma)};
}

// Scratch directory removed on destruction.
struct TempDir {
    std::filesystem::path path;
    TempDir() {
        path = std::filesystem::temp_directory_path() /
               ("sdebf_test_" + std::to_string(::getpid()) + "_" +
                std::to_string(reinterpret_cast<std::uintptr_t>(this)));
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

}  // namespace sdebf::testing
