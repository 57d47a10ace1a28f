#pragma once

#include <cstddef>

namespace sdebf {

// Equispaced discretization t_k = t0 + k*dt, k = 0..n_steps, of [t0, t0 + horizon].
class TimeGrid {
public:
    TimeGrid() = default;

    double t0() const noexcept { return t0_; }
    double horizon() const noexcept { return horizon_; }
    std::size_t n_steps() const noexcept { return n_steps_; }
    std::size_t size() const noexcept { return n_steps_ + 1; }
    double dt() const noexcept { return dt_; }
    double end() const noexcept { return t0_ + horizon_; }

    double point(std::size_t k) const noexcept {
        return k == n_steps_ ? end() : t0_ + static_cast<double>(k) * dt_;
    }

    bool operator==(const TimeGrid& other) const noexcept {
        return t0_ == other.t0_ && horizon_ == other.horizon_ && n_steps_ == other.n_steps_;
    }

private:
    friend TimeGrid make_grid(double t0, double horizon, std::size_t n_steps);

    double t0_ = 0.0;
    double horizon_ = 1.0;
    std::size_t n_steps_ = 1;
    double dt_ = 1.0;
};

// Throws InvalidArgument when horizon <= 0 (or non-finite) or n_steps == 0.
TimeGrid make_grid(double t0, double horizon, std::size_t n_steps);

}  // namespace sdebf
