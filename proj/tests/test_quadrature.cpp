#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "postcon/errors.hpp"
#include "postcon/quadrature.hpp"

using namespace postcon;

TEST(GaussLegendre, ExactForPolynomialsUpToDegree2nMinus1) {
    for (int n : {1, 2, 5, 8, 12}) {
        const auto rule = quadrature::gauss_legendre(n);
        ASSERT_EQ(rule.nodes.size(), static_cast<std::size_t>(n));
        for (int deg = 0; deg <= 2 * n - 1; ++deg) {
            double s = 0.0;
            for (int i = 0; i < n; ++i) s += rule.weights[i] * std::pow(rule.nodes[i], deg);
            const double exact = deg % 2 ? 0.0 : 2.0 / (deg + 1);
            EXPECT_NEAR(s, exact, 1e-13) << "n=" << n << " deg=" << deg;
        }
    }
}

TEST(AdaptiveIntegral, SmoothIntegrand) {
    const auto r = quadrature::integrate_interval([](double x) { return std::exp(x); }, 0.0, 1.0);
    EXPECT_NEAR(r.value, std::exp(1.0) - 1.0, 1e-13);
    EXPECT_LE(r.error, 1e-9);
}

TEST(AdaptiveIntegral, KinkAtBreakpoint) {
    const double bp[] = {0.3};
    const auto r = quadrature::integrate_interval([](double x) { return std::fabs(x - 0.3); }, 0.0, 1.0, bp);
    EXPECT_NEAR(r.value, 0.5 * (0.09 + 0.49), 1e-14);
}

TEST(AdaptiveIntegral, KinkWithoutBreakpointStillConverges) {
    const auto r = quadrature::integrate_interval([](double x) { return std::fabs(x - 0.3137); }, 0.0, 1.0);
    EXPECT_NEAR(r.value, 0.5 * (0.3137 * 0.3137 + 0.6863 * 0.6863), 1e-9);
}

TEST(AdaptiveIntegral, LongRangeDecayingIntegrand) {
    const double bp[] = {0.0};
    const auto r = quadrature::integrate_interval([](double z) { return 0.5 * std::exp(-std::fabs(z)); }, -40.0, 40.0,
                                                  bp, 1e-12);
    EXPECT_NEAR(r.value, 1.0 - std::exp(-40.0), 1e-12);
}

TEST(AdaptiveIntegral, NonFiniteIntegrandIsAnAccuracyError) {
    EXPECT_THROW(quadrature::integrate_interval([](double) { return std::nan(""); }, 0.0, 1.0), AccuracyError);
}

TEST(AdaptiveIntegral, UnreachableToleranceIsAnAccuracyError) {
    // 1/sqrt(x) near zero is integrable but the requested tolerance is absurd
    EXPECT_THROW(quadrature::integrate_interval([](double x) { return 1.0 / std::sqrt(x) * std::sin(1.0 / x); },
                                                1e-300, 1.0, {}, 1e-15),
                 AccuracyError);
}
