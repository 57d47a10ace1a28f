#pragma once

#include <cmath>
#include <cstddef>
#include <span>

namespace sdebf {

// Welford accumulator for Monte-Carlo means.
class RunningStats {
public:
    void push(double x) noexcept {
        ++n_;
        const double d = x - mean_;
        mean_ += d / static_cast<double>(n_);
        m2_ += d * (x - mean_);
    }

    std::size_t count() const noexcept { return n_; }
    double mean() const noexcept { return mean_; }
    // Sample variance (n - 1 denominator); 0 for fewer than two values.
    double variance() const noexcept {
        return n_ > 1 ? m2_ / static_cast<double>(n_ - 1) : 0.0;
    }
    double standard_error() const noexcept {
        return n_ > 1 ? std::sqrt(variance() / static_cast<double>(n_)) : 0.0;
    }

private:
    std::size_t n_ = 0;
    double mean_ = 0.0;
    double m2_ = 0.0;
};

// log(sum_j exp(x_j)); -inf for an empty or all -inf input. Never exponentiates
// an unshifted value.
double logsumexp(std::span<const double> x) noexcept;

}  // namespace sdebf
