#include <cmath>
#include <numbers>
#include <numeric>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "postcon/errors.hpp"
#include "postcon/kernels.hpp"
#include "postcon/noise.hpp"

using namespace postcon;

namespace {
constexpr double kLn2 = std::numbers::ln2;

double mean(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / v.size(); }
}  // namespace

TEST(LogDensity, ClosedForms) {
    EXPECT_NEAR(NoiseModel::laplace(1.0).log_density(0.0), std::log(0.5), 1e-15);
    EXPECT_NEAR(NoiseModel::normal(1.0).log_density(0.0), -0.5 * std::log(2 * std::numbers::pi), 1e-15);
    EXPECT_NEAR(NoiseModel::laplace(2.0).log_density(3.0), -std::log(4.0) - 1.5, 1e-15);
    EXPECT_NEAR(NoiseModel::normal(2.0).log_density(1.0), std::log(oracle::normal_pdf(0.5) / 2.0), 1e-14);
}

TEST(LogDensity, SymmetricAndNormalized) {
    const NoiseModel models[] = {NoiseModel::normal(0.7), NoiseModel::laplace(1.3),
                                 NoiseModel::general(StandardPhi::logistic(), 0.9),
                                 NoiseModel::general(StandardPhi::hyperbolic_secant(), 2.0)};
    for (const auto& m : models) {
        for (double e : {0.0, 0.3, 1.7, 12.0}) {
            if (m.family() == NoiseModel::Family::General)
                EXPECT_NEAR(m.log_density(e), m.log_density(-e), 1e-12);
            else
                EXPECT_EQ(m.log_density(e), m.log_density(-e));
        }
        const double r = 40.0 * m.scale();
        const double mass = oracle::simpson_split([&](double e) { return m.density(e); }, -r, r, 0.0, 400000);
        EXPECT_NEAR(mass, 1.0, 1e-8) << m.family_name();
    }
}

TEST(StandardPhi, RejectsInvalidDensities) {
    EXPECT_THROW(StandardPhi("unnormalized", [](double z) { return -std::fabs(z); }, 1.0), InvalidModel);
    EXPECT_THROW(StandardPhi("asymmetric", [](double z) { return -std::log(2.0) - std::fabs(z - 0.1); }, 1.0),
                 InvalidModel);
    EXPECT_THROW(StandardPhi::by_name("cauchy"), InvalidArgument);
}

TEST(StandardPhi, QuantileInvertsCdf) {
    const auto phi = StandardPhi::laplace();
    for (double u : {0.01, 0.25, 0.5, 0.8, 0.999}) {
        const double q = phi.quantile(u);
        const double cdf = q < 0 ? 0.5 * std::exp(q) : 1.0 - 0.5 * std::exp(-q);
        EXPECT_NEAR(cdf, u, 1e-7);
    }
}

TEST(Sample, MomentsMatchTheFamily) {
    const auto lap = NoiseModel::laplace(1.0).sample(1'000'000, 5);
    EXPECT_NEAR(mean(lap), 0.0, 0.006);
    double abs_mean = 0.0;
    for (double e : lap) abs_mean += std::fabs(e);
    EXPECT_NEAR(abs_mean / lap.size(), 1.0, 0.005);

    const auto nor = NoiseModel::normal(2.0).sample(1'000'000, 6);
    const double m = mean(nor);
    double var = 0.0;
    for (double e : nor) var += (e - m) * (e - m);
    EXPECT_NEAR(var / (nor.size() - 1), 4.0, 0.03);
}

TEST(Sample, GeneralPhiUsesTabulatedInverseCdf) {
    const auto m = NoiseModel::general(StandardPhi::logistic(), 1.0);
    const auto x = m.sample(400'000, 9);
    double v = 0.0;
    for (double e : x) v += e * e;
    // logistic variance pi^2 / 3
    EXPECT_NEAR(v / x.size(), std::numbers::pi * std::numbers::pi / 3.0, 0.03);
}

TEST(Sample, ReproducibleAndPrefixStable) {
    const auto m = NoiseModel::laplace(1.5);
    const auto a = m.sample(1000, 42), b = m.sample(1000, 42), c = m.sample(300, 42);
    EXPECT_EQ(a, b);
    EXPECT_TRUE(std::equal(c.begin(), c.end(), a.begin()));
    EXPECT_NE(a, m.sample(1000, 43));
}

TEST(LaplaceAbsMoment, Examples) {
    EXPECT_DOUBLE_EQ(laplace_abs_moment(0.0, 1.7), 1.7);
    EXPECT_NEAR(laplace_abs_moment(1.0, 1.0), 1.0 + std::exp(-1.0), 1e-15);
    for (double d : {0.2, 1.0, 3.0}) {
        EXPECT_EQ(laplace_abs_moment(d, 0.8), laplace_abs_moment(-d, 0.8));
        EXPECT_GE(laplace_abs_moment(d, 0.8), std::max(d, 0.8 * std::exp(-d / 0.8)));
    }
}

TEST(LaplaceAbsMoment, MatchesMonteCarlo) {
    for (double d : {0.0, 0.5, 2.0}) {
        const auto mc = kernels::mc_moments(10'000'000, 77, [&](Rng& rng) { return std::fabs(rng.laplace() + d); });
        EXPECT_NEAR(mc.mean, laplace_abs_moment(d, 1.0), 0.002) << d;
    }
}

TEST(EntropyConstant, ClosedFormsAndQuadrature) {
    EXPECT_NEAR(phi_entropy_constant(NoiseModel::laplace(3.0)), -kLn2 - 1.0, 1e-15);
    EXPECT_NEAR(phi_entropy_constant(NoiseModel::normal(0.5)), -0.5 * std::log(2 * std::numbers::pi) - 0.5, 1e-15);
    EXPECT_NEAR(phi_entropy_constant_quadrature(NoiseModel::laplace(1.0)), -kLn2 - 1.0, 1e-8);
    EXPECT_NEAR(phi_entropy_constant_quadrature(NoiseModel::normal(1.0)), -0.5 * std::log(2 * std::numbers::pi) - 0.5,
                1e-8);
    // logistic entropy is 2, so c = -2
    EXPECT_NEAR(phi_entropy_constant(NoiseModel::general(StandardPhi::logistic(), 1.0)), -2.0, 1e-8);
}

TEST(ExpectedLogPhi, LaplaceExamples) {
    const auto lap = NoiseModel::laplace(1.0);
    EXPECT_NEAR(expected_log_phi_quadrature(lap, 0.0, 1.0).value, -kLn2 - 1.0, 1e-9);
    EXPECT_NEAR(expected_log_phi_quadrature(lap, 1.0, 1.0).value, -kLn2 - (1.0 + std::exp(-1.0)), 1e-9);
    EXPECT_NEAR(-kLn2 - (1.0 + std::exp(-1.0)), -2.061026, 1e-6);
}

TEST(ExpectedLogPhi, NormalMatchesGaussianMomentIntegral) {
    for (double s0 : {0.5, 1.0, 2.0})
        for (double delta : {-2.0, 0.0, 0.3, 1.5})
            for (double sigma : {0.4, 1.0, 3.0}) {
                const auto m = NoiseModel::normal(s0);
                const double closed = -0.5 * std::log(2 * std::numbers::pi) - (s0 * s0 + delta * delta) / (2 * sigma * sigma);
                EXPECT_NEAR(expected_log_phi_quadrature(m, delta, sigma).value, closed, 1e-8);
                EXPECT_NEAR(expected_log_phi(m, delta, sigma), closed, 1e-14);
            }
}

TEST(ExpectedLogPhi, GeneralAgreesWithIndependentSimpson) {
    const auto m = NoiseModel::general(StandardPhi::hyperbolic_secant(), 0.8);
    const double delta = 0.7, sigma = 1.3;
    const double ref = oracle::simpson_split(
        [&](double z) { return m.log_phi((0.8 * z + delta) / sigma) * m.phi().phi(z); }, -40.0, 40.0, -delta / 0.8,
        400000);
    EXPECT_NEAR(expected_log_phi(m, delta, sigma), ref, 1e-8);
}

TEST(Lipschitz, BuiltinsRespectTheirConstants) {
    EXPECT_TRUE(lipschitz_check(StandardPhi::laplace()).holds);
    EXPECT_TRUE(lipschitz_check(StandardPhi::logistic()).holds);
    EXPECT_TRUE(lipschitz_check(StandardPhi::hyperbolic_secant()).holds);
    const StandardPhi wrong("laplace_claimed_half", [](double z) { return -kLn2 - std::fabs(z); }, 0.5);
    EXPECT_FALSE(lipschitz_check(wrong).holds);
}

TEST(MgfCheck, LambdaZeroIsExactlyOne) {
    MgfCheckOptions opt;
    opt.draws = 10000;
    const auto rep = subexponential_mgf_check(NoiseModel::laplace(1.0), 0.0, 0.0, 0.0, 1.0, {0.0}, opt);
    EXPECT_EQ(rep.rows.at(0).estimate, 1.0);
    EXPECT_TRUE(rep.rows[0].holds);
}

TEST(MgfCheck, HoldsForLaplaceAndNormalAtTruth) {
    const auto dom = CompactDomain::unit(1);
    const auto eta0 = RegressionFunction::sine(dom, 0.5, 1.0);
    const double x[] = {0.3};
    for (const auto& m : {NoiseModel::laplace(1.0), NoiseModel::normal(1.0)}) {
        const auto rep = subexponential_mgf_check(m, eta0, eta0, 1.0, x, {-0.4, -0.2, 0.0, 0.2, 0.4});
        EXPECT_EQ(rep.status, MgfReport::Status::Holds) << m.family_name();
        EXPECT_DOUBLE_EQ(rep.s, 2.0);
        for (const auto& r : rep.rows) {
            EXPECT_TRUE(r.admissible);
            EXPECT_TRUE(r.holds) << r.lambda;
        }
        EXPECT_TRUE(rep.smallest_passing.has_value());
    }
}

TEST(MgfCheck, LaplaceEstimateMatchesClosedForm) {
    // U = -|z| + 1 for eta = eta0, sigma = sigma0 = 1: E e^{lambda U} = e^{lambda} / (1 + lambda)
    const auto rep = subexponential_mgf_check(NoiseModel::laplace(1.0), 0.0, 0.0, 0.0, 1.0, {0.2});
    EXPECT_NEAR(rep.rows[0].estimate, std::exp(0.2) / 1.2, 4 * rep.rows[0].std_error + 1e-12);
}

TEST(MgfCheck, ViolationIsDetected) {
    // a tiny s makes the bound e^{lambda^2 s^2 / 2} nearly 1, which the MGF exceeds
    MgfCheckOptions opt;
    opt.c1 = 0.0;
    opt.c2 = 0.05;
    const auto rep = subexponential_mgf_check(NoiseModel::laplace(1.0), 0.0, 0.0, 0.0, 1.0, {5.0}, opt);
    EXPECT_EQ(rep.status, MgfReport::Status::Violated);
}

TEST(A9, ClosedValues) {
    const auto lap = a9_integrability_check(NoiseModel::laplace(1.0), 1.0, 2.0);
    EXPECT_NEAR(lap.abs_moment, 1.0, 1e-6);
    EXPECT_NEAR(lap.log_phi_integral, kLn2 + 1.0, 1e-6);
    EXPECT_TRUE(lap.stable);
    ASSERT_TRUE(lap.envelope_holds.has_value());
    EXPECT_TRUE(*lap.envelope_holds);
    const auto nor = a9_integrability_check(NoiseModel::normal(1.0), 1.0);
    EXPECT_NEAR(nor.abs_moment, std::sqrt(2.0 / std::numbers::pi), 1e-6);
    EXPECT_FALSE(nor.envelope_holds.has_value());
}
