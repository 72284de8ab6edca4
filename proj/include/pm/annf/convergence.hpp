#pragma once

namespace pm {

/// Probability that at least one of `samples` uniform draws over `positions`
/// cells lands in a neighborhood of `neighborhood` cells: 1 - (1 - C/M)^m.
double hit_probability(double neighborhood, double positions, double samples);

/// Expected number of failed sweeps before a region of `samples` patches in an
/// image of `positions` patches is hit: [1 - (1 - C/M)^m]^-1 - 1.
double expected_convergence_iters_finite(double neighborhood, double positions, double samples);

/// Large-image limit of the above with gamma = m / M:
/// [1 - exp(-C * gamma)]^-1 - 1.
double expected_convergence_iters(double neighborhood, double gamma);

}  // namespace pm
