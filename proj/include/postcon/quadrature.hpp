#pragma once

#include <functional>
#include <span>
#include <vector>

namespace postcon::quadrature {

/// Gauss-Legendre rule on [-1, 1].
struct GaussLegendreRule {
    std::vector<double> nodes;
    std::vector<double> weights;
};

/// Nodes and weights of the `order`-point Gauss-Legendre rule (Newton on P_n).
GaussLegendreRule gauss_legendre(int order);

struct IntegralEstimate {
    double value = 0.0;
    double error = 0.0;
};

/// Adaptive Gauss-Kronrod (7/15) integral of f over [a, b], split at every
/// breakpoint strictly inside the interval. Throws AccuracyError when the
/// summed error estimate exceeds abs_tol.
IntegralEstimate integrate_interval(const std::function<double(double)>& f, double a, double b,
                                    std::span<const double> breakpoints = {}, double abs_tol = 1e-9);

}  // namespace postcon::quadrature
