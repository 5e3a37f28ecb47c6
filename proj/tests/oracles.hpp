#pragma once

// Independent reference computations for the unit and acceptance tests. They
// share nothing with the library's quadrature or closed forms.

#include <cmath>
#include <functional>
#include <numbers>

namespace oracle {

/// Composite Simpson rule with `panels` (even) panels.
inline double simpson(const std::function<double(double)>& f, double a, double b, int panels = 20000) {
    if (panels % 2) ++panels;
    const double h = (b - a) / panels;
    double s = f(a) + f(b);
    for (int i = 1; i < panels; ++i) s += f(a + i * h) * (i % 2 ? 4.0 : 2.0);
    return s * h / 3.0;
}

/// Simpson on [a, b] split at an interior kink c.
inline double simpson_split(const std::function<double(double)>& f, double a, double b, double c,
                            int panels = 20000) {
    if (c <= a || c >= b) return simpson(f, a, b, panels);
    return simpson(f, a, c, panels) + simpson(f, c, b, panels);
}

inline double normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi); }
inline double laplace_pdf(double z) { return 0.5 * std::exp(-std::fabs(z)); }
inline double std_normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

/// Golden-section minimizer of a unimodal function on [a, b].
inline double golden_min(const std::function<double(double)>& f, double a, double b, double tol = 1e-12) {
    const double g = (std::sqrt(5.0) - 1.0) / 2.0;
    double c = b - g * (b - a), d = a + g * (b - a);
    double fc = f(c), fd = f(d);
    while (b - a > tol) {
        if (fc < fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    return 0.5 * (a + b);
}

}  // namespace oracle
