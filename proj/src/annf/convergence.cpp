#include "pm/annf/convergence.hpp"

#include <cmath>

#include "pm/core/error.hpp"

namespace pm {

double hit_probability(double neighborhood, double positions, double samples) {
    if (!(neighborhood > 0.0) || !(positions > 0.0) || !(samples > 0.0))
        throw InvalidArgument("convergence model inputs must be positive");
    if (neighborhood >= positions) return 1.0;
    return -std::expm1(samples * std::log1p(-neighborhood / positions));
}

double expected_convergence_iters_finite(double neighborhood, double positions, double samples) {
    return 1.0 / hit_probability(neighborhood, positions, samples) - 1.0;
}

double expected_convergence_iters(double neighborhood, double gamma) {
    if (!(neighborhood > 0.0) || !(gamma > 0.0))
        throw InvalidArgument("convergence model inputs must be positive");
    return 1.0 / -std::expm1(-neighborhood * gamma) - 1.0;
}

}  // namespace pm
