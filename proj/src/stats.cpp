#include "sdebf/stats.hpp"

#include <algorithm>
#include <limits>

namespace sdebf {

double logsumexp(std::span<const double> x) noexcept {
    constexpr double ninf = -std::numeric_limits<double>::infinity();
    if (x.empty()) return ninf;
    const double m = *std::max_element(x.begin(), x.end());
    if (!std::isfinite(m)) return m;
    double s = 0.0;
    for (double v : x) s += std::exp(v - m);
    return m + std::log(s);
}

}  // namespace sdebf
