#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace sdebf {

class CovariatePanel;

inline constexpr double kSigmaFloor = 1e-8;

// Covariate-free multiplicative part b_beta(x) of the drift. Every family is
// linear in beta: b_beta(x) = sum_j beta_j * psi_j(x).
enum class DriftFamily {
    Unit,      // b = 1 (no beta)
    Constant,  // b = beta1
    Linear,    // b = beta1 * x
    Affine,    // b = beta1 + beta2 * x  (also the CKLS drift theta1 + theta2 * x)
};

std::size_t beta_count(DriftFamily family) noexcept;
// Writes psi_j(x) into out (size beta_count(family)).
void drift_basis(DriftFamily family, double x, std::span<double> out) noexcept;
double drift_base(DriftFamily family, std::span<const double> beta, double x) noexcept;

std::string to_string(DriftFamily family);
DriftFamily drift_family_from_string(const std::string& name);

// Known diffusion sigma(x): constant c, or power A * x^B.
class Diffusion {
public:
    enum class Kind { Constant, Power };

    static Diffusion constant(double c) { return Diffusion(Kind::Constant, c, 0.0); }
    static Diffusion power(double scale, double exponent) {
        return Diffusion(Kind::Power, scale, exponent);
    }

    Kind kind() const noexcept { return kind_; }
    double scale() const noexcept { return scale_; }
    double exponent() const noexcept { return exponent_; }

    // Unguarded value; NaN for a power law at x < 0 with non-integer exponent.
    double operator()(double x) const noexcept;

    bool operator==(const Diffusion&) const = default;

private:
    Diffusion(Kind kind, double scale, double exponent)
        : kind_(kind), scale_(scale), exponent_(exponent) {}

    Kind kind_;
    double scale_;
    double exponent_;
};

// Covariate inclusion vector, e.g. (1,0,1). The intercept xi_0 is always active.
class ModelMask {
public:
    ModelMask() = default;
    explicit ModelMask(std::vector<bool> bits) : bits_(std::move(bits)) {}
    // (b_1, ..., b_p) as a binary number with b_1 most significant: code 0b011 with
    // p = 3 reads (0,1,1).
    static ModelMask from_code(unsigned code, std::size_t p);
    static ModelMask full(std::size_t p) { return ModelMask(std::vector<bool>(p, true)); }
    static ModelMask none(std::size_t p) { return ModelMask(std::vector<bool>(p, false)); }
    // Parses "(1,0,1)" or "101".
    static ModelMask parse(const std::string& text);

    std::size_t size() const noexcept { return bits_.size(); }
    bool operator[](std::size_t l) const { return bits_[l]; }
    std::size_t active_count() const noexcept;
    std::vector<std::size_t> active_indices() const;
    unsigned code() const noexcept;
    const std::vector<bool>& bits() const noexcept { return bits_; }

    // "(1,0,1)"
    std::string to_string() const;

    bool operator==(const ModelMask&) const = default;

private:
    std::vector<bool> bits_;
};

// Drift structure phi_xi(z(t)) * b_beta(x), without the diffusion.
struct DriftModel {
    DriftFamily family = DriftFamily::Affine;
    ModelMask mask;

    std::size_t xi_count() const noexcept { return 1 + mask.active_count(); }
    std::size_t free_count() const noexcept { return xi_count() + beta_count(family); }
};

struct SdeModel {
    DriftModel drift;
    Diffusion diffusion = Diffusion::constant(1.0);
};

// theta = (beta, xi); xi ordered [xi_0, xi_l for active l].
struct ParamVector {
    std::vector<double> beta;
    std::vector<double> xi;

    // Flat layout [xi..., beta...], matching (xi_1..xi_4, xi_5, xi_6) for the
    // three-covariate affine model.
    std::vector<double> flat() const;
    static ParamVector from_flat(const DriftModel& model, std::span<const double> flat);

    bool operator==(const ParamVector&) const = default;
};

// Throws InvalidArgument when theta's lengths disagree with the model.
void check_params(const DriftModel& model, const ParamVector& theta);

// phi_xi(z(t_k)) = xi_0 + sum_{active l} xi_l * g_l(z_l(t_k)).
double phi_eval(const DriftModel& model, const ParamVector& theta, const CovariatePanel& covariates,
                std::size_t k);

// Drift value phi(t_k) * b_beta(x).
double drift_value(const DriftModel& model, const ParamVector& theta,
                   const CovariatePanel& covariates, std::size_t k, double x);

}  // namespace sdebf
