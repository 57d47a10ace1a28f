#include "sdebf/model.hpp"

#include <cmath>

#include "sdebf/errors.hpp"
#include "sdebf/sde.hpp"

namespace sdebf {

std::size_t beta_count(DriftFamily family) noexcept {
    switch (family) {
        case DriftFamily::Unit: return 0;
        case DriftFamily::Constant: return 1;
        case DriftFamily::Linear: return 1;
        case DriftFamily::Affine: return 2;
    }
    return 0;
}

void drift_basis(DriftFamily family, double x, std::span<double> out) noexcept {
    switch (family) {
        case DriftFamily::Unit: break;
        case DriftFamily::Constant: out[0] = 1.0; break;
        case DriftFamily::Linear: out[0] = x; break;
        case DriftFamily::Affine:
            out[0] = 1.0;
            out[1] = x;
            break;
    }
}

double drift_base(DriftFamily family, std::span<const double> beta, double x) noexcept {
    switch (family) {
        case DriftFamily::Unit: return 1.0;
        case DriftFamily::Constant: return beta[0];
        case DriftFamily::Linear: return beta[0] * x;
        case DriftFamily::Affine: return beta[0] + beta[1] * x;
    }
    return 0.0;
}

std::string to_string(DriftFamily family) {
    switch (family) {
        case DriftFamily::Unit: return "unit";
        case DriftFamily::Constant: return "constant";
        case DriftFamily::Linear: return "linear";
        case DriftFamily::Affine: return "affine";
    }
    return "unknown";
}

DriftFamily drift_family_from_string(const std::string& name) {
    if (name == "unit") return DriftFamily::Unit;
    if (name == "constant") return DriftFamily::Constant;
    if (name == "linear") return DriftFamily::Linear;
    if (name == "affine" || name == "ckls") return DriftFamily::Affine;
    throw InvalidArgument("unknown drift family '" + name + "'");
}

double Diffusion::operator()(double x) const noexcept {
    if (kind_ == Kind::Constant) return scale_;
    if (exponent_ == 0.0) return scale_;
    return scale_ * std::pow(x, exponent_);
}

ModelMask ModelMask::from_code(unsigned code, std::size_t p) {
    std::vector<bool> bits(p);
    // (b_1, ..., b_p) read as a binary number with b_1 most significant, so
    // counting 0..2^p-1 yields (0,0,0), (0,0,1), (0,1,0), ...
    for (std::size_t l = 0; l < p; ++l) bits[l] = ((code >> (p - 1 - l)) & 1u) != 0;
    return ModelMask(std::move(bits));
}

ModelMask ModelMask::parse(const std::string& text) {
    std::vector<bool> bits;
    for (char c : text) {
        if (c == '0') bits.push_back(false);
        else if (c == '1') bits.push_back(true);
        else if (c == '(' || c == ')' || c == ',' || c == ' ') continue;
        else throw InvalidArgument("invalid mask '" + text + "'");
    }
    return ModelMask(std::move(bits));
}

std::size_t ModelMask::active_count() const noexcept {
    std::size_t n = 0;
    for (bool b : bits_) n += b ? 1 : 0;
    return n;
}

std::vector<std::size_t> ModelMask::active_indices() const {
    std::vector<std::size_t> idx;
    for (std::size_t l = 0; l < bits_.size(); ++l) {
        if (bits_[l]) idx.push_back(l);
    }
    return idx;
}

unsigned ModelMask::code() const noexcept {
    unsigned c = 0;
    for (bool b : bits_) c = (c << 1) | (b ? 1u : 0u);
    return c;
}

std::string ModelMask::to_string() const {
    std::string s = "(";
    for (std::size_t l = 0; l < bits_.size(); ++l) {
        if (l) s += ',';
        s += bits_[l] ? '1' : '0';
    }
    return s + ")";
}

std::vector<double> ParamVector::flat() const {
    std::vector<double> out(xi);
    out.insert(out.end(), beta.begin(), beta.end());
    return out;
}

ParamVector ParamVector::from_flat(const DriftModel& model, std::span<const double> flat) {
    if (flat.size() != model.free_count()) {
        throw InvalidArgument("flat parameter vector has " + std::to_string(flat.size()) +
                              " entries, model expects " + std::to_string(model.free_count()));
    }
    const std::size_t nxi = model.xi_count();
    ParamVector theta;
    theta.xi.assign(flat.begin(), flat.begin() + static_cast<std::ptrdiff_t>(nxi));
    theta.beta.assign(flat.begin() + static_cast<std::ptrdiff_t>(nxi), flat.end());
    return theta;
}

void check_params(const DriftModel& model, const ParamVector& theta) {
    if (theta.beta.size() != beta_count(model.family)) {
        throw InvalidArgument("beta has " + std::to_string(theta.beta.size()) +
                              " entries, drift family '" + to_string(model.family) +
                              "' expects " + std::to_string(beta_count(model.family)));
    }
    if (theta.xi.size() != model.xi_count()) {
        throw InvalidArgument("xi has " + std::to_string(theta.xi.size()) + " entries, mask " +
                              model.mask.to_string() + " expects " +
                              std::to_string(model.xi_count()));
    }
}

double phi_eval(const DriftModel& model, const ParamVector& theta, const CovariatePanel& covariates,
                std::size_t k) {
    double phi = theta.xi[0];
    std::size_t j = 1;
    for (std::size_t l = 0; l < model.mask.size(); ++l) {
        if (model.mask[l]) phi += theta.xi[j++] * covariates.transformed(l, k);
    }
    return phi;
}

double drift_value(const DriftModel& model, const ParamVector& theta,
                   const CovariatePanel& covariates, std::size_t k, double x) {
    return phi_eval(model, theta, covariates, k) * drift_base(model.family, theta.beta, x);
}

}  // namespace sdebf
