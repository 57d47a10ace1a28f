#include "sdebf/grid.hpp"

#include <cmath>

#include "sdebf/errors.hpp"

namespace sdebf {

TimeGrid make_grid(double t0, double horizon, std::size_t n_steps) {
    if (!std::isfinite(t0)) throw InvalidArgument("make_grid: t0 must be finite");
    if (!(horizon > 0.0) || !std::isfinite(horizon)) {
        throw InvalidArgument("make_grid: horizon must be positive and finite");
    }
    if (n_steps == 0) throw InvalidArgument("make_grid: n_steps must be at least 1");
    TimeGrid grid;
    grid.t0_ = t0;
    grid.horizon_ = horizon;
    grid.n_steps_ = n_steps;
    grid.dt_ = horizon / static_cast<double>(n_steps);
    return grid;
}

}  // namespace sdebf
