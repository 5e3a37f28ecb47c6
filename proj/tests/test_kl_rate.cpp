#include <cmath>
#include <numbers>
#include <sstream>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "postcon/errors.hpp"
#include "postcon/kl_rate.hpp"
#include "postcon/rng.hpp"

using namespace postcon;

namespace {
const CompactDomain kUnit = CompactDomain::unit(1);
constexpr double kLn2 = std::numbers::ln2;
constexpr double kPi = std::numbers::pi;

const MeasureQ& q_unit() {
    static const MeasureQ q = MeasureQ::uniform(kUnit);
    return q;
}

RegressionFunction random_eta(Rng& rng, std::size_t K = 5) {
    std::vector<double> w(K);
    for (auto& v : w) v = 0.6 * rng.normal();
    return RegressionFunction::expansion(kUnit, TrigBasis::cosine(kUnit, K), w);
}

// Projection residual of the unit step at 1/2 onto the first K cosines, in closed form.
double step_residual(std::size_t K) {
    double m = 0.25;
    for (std::size_t k = 1; k < K; ++k) {
        const double s = std::sin(kPi * k / 2.0);
        m -= 2.0 * s * s / (kPi * kPi * k * k);
    }
    return m;
}
}  // namespace

TEST(HNormal, Examples) {
    const auto eta0 = RegressionFunction::sine(kUnit, 0.8, 1.0);
    const TrueModel truth{eta0, NoiseModel::normal(1.0)};
    EXPECT_EQ(h_normal({eta0, 1.0}, truth, q_unit()).h, 0.0);
    EXPECT_NEAR(h_normal({eta0, 2.0}, truth, q_unit()).h, 0.318147, 1e-6);
    EXPECT_NEAR(h_normal({eta0, 2.0}, truth, q_unit()).h, kLn2 - 0.375, 1e-14);
    EXPECT_NEAR(h_normal({eta0.shifted(1.0), 1.0}, truth, q_unit()).h, 0.5, 1e-13);
    EXPECT_THROW(h_normal({eta0, 0.0}, truth, q_unit()), InvalidArgument);
    EXPECT_THROW(h_normal({eta0, 1.0}, TrueModel{eta0, NoiseModel::laplace(1.0)}, q_unit()), UnsupportedCombination);
}

TEST(HLaplace, Examples) {
    const auto eta0 = RegressionFunction::step(kUnit, {0.4}, {0.0, 1.0});
    const TrueModel truth{eta0, NoiseModel::laplace(1.0)};
    EXPECT_LE(std::fabs(h_laplace({eta0, 1.0}, truth, q_unit()).h), 1e-12);
    EXPECT_NEAR(h_laplace({eta0.shifted(1.0), 1.0}, truth, q_unit()).h, std::exp(-1.0), 1e-13);
    EXPECT_NEAR(h_laplace({eta0, 2.0}, truth, q_unit()).h, kLn2 - 0.5, 1e-13);
    EXPECT_NEAR(kLn2 - 0.5, 0.193147, 1e-6);
    EXPECT_THROW(h_laplace({eta0, -1.0}, truth, q_unit()), InvalidArgument);
}

TEST(HLaplace, JIsReportedAgainstTheInfimum) {
    const auto eta0 = RegressionFunction::zero(kUnit);
    const TrueModel truth{eta0, NoiseModel::laplace(1.0)};
    const auto r = h_laplace({eta0.shifted(1.0), 1.0}, truth, q_unit(), 0.1);
    ASSERT_TRUE(r.J.has_value());
    EXPECT_NEAR(*r.J, std::exp(-1.0) - 0.1, 1e-13);
}

TEST(GEtaSigma, Examples) {
    const auto eta0 = RegressionFunction::zero(kUnit);
    const double x[] = {0.5};
    const TrueModel lap{eta0, NoiseModel::laplace(1.0)};
    EXPECT_NEAR(g_eta_sigma({eta0, 1.0}, lap, x).value, -kLn2 - 1.0, 1e-9);
    EXPECT_NEAR(g_eta_sigma({eta0.shifted(-1.0), 1.0}, lap, x).value, -kLn2 - (1.0 + std::exp(-1.0)), 1e-9);
    const TrueModel nor{eta0, NoiseModel::normal(1.3)};
    for (double d : {-1.0, 0.0, 2.5})
        for (double s : {0.5, 1.7}) {
            const auto g = g_eta_sigma({eta0.shifted(-d), s}, nor, x);
            EXPECT_NEAR(g.value, -0.5 * std::log(2 * kPi) - (1.69 + d * d) / (2 * s * s), 1e-8);
        }
}

TEST(HGeneral, ZeroAtTruth) {
    const auto eta0 = RegressionFunction::sine(kUnit, 1.0, 2.0);
    for (const auto& noise : {NoiseModel::normal(0.7), NoiseModel::laplace(1.2),
                              NoiseModel::general(StandardPhi::logistic(), 0.5)}) {
        const auto r = h_general({eta0, noise.scale()}, TrueModel{eta0, noise}, q_unit());
        EXPECT_LE(std::fabs(r.h), 1e-6) << noise.family_name();
        EXPECT_EQ(r.method, KLMethod::Quadrature);
    }
}

TEST(HGeneral, ReducesToClosedForms) {
    Rng rng(2024);
    const auto eta0 = RegressionFunction::sine(kUnit, 0.7, 1.0, 0.3);
    const TrueModel nor{eta0, NoiseModel::normal(0.9)}, lap{eta0, NoiseModel::laplace(1.1)};
    for (int i = 0; i < 20; ++i) {
        const Theta th{random_eta(rng), 0.4 + 1.6 * rng.uniform()};
        EXPECT_NEAR(h_general(th, nor, q_unit()).h, h_normal(th, nor, q_unit()).h, 1e-6);
        EXPECT_NEAR(h_general(th, lap, q_unit()).h, h_laplace(th, lap, q_unit()).h, 1e-6);
    }
}

TEST(HCrossFamily, SameFamilyAtTruthIsZero) {
    const auto eta0 = RegressionFunction::sine(kUnit, 0.5, 1.0);
    const auto noise = NoiseModel::general(StandardPhi::hyperbolic_secant(), 1.0);
    EXPECT_LE(std::fabs(h_cross_family({eta0, 1.0}, noise, TrueModel{eta0, noise}, q_unit()).h), 1e-6);
}

TEST(HCrossFamily, NormalPostulateLaplaceTruthMatchesNestedOracle) {
    const auto eta0 = RegressionFunction::zero(kUnit);
    const TrueModel truth{eta0, NoiseModel::laplace(1.0)};
    const double sigma = std::sqrt(2.0);
    const auto r = h_cross_family({eta0, sigma}, NoiseModel::normal(1.0), truth, q_unit());
    // brute force: int (log f0 - log f) f0 dy with f0 Laplace(0,1), f Normal(0, sigma)
    const double ref = oracle::simpson_split(
        [&](double y) {
            const double log_f0 = -kLn2 - std::fabs(y);
            const double log_f = -0.5 * std::log(2 * kPi) - std::log(sigma) - y * y / (2 * sigma * sigma);
            return (log_f0 - log_f) * oracle::laplace_pdf(y);
        },
        -60.0, 60.0, 0.0, 600000);
    EXPECT_NEAR(r.h, ref, 1e-8);
    EXPECT_NEAR(r.h, 0.5 * std::log(4 * kPi) + 0.5 - kLn2 - 1.0, 1e-8);
    EXPECT_GT(r.h, 0.0);
    EXPECT_FALSE(r.infinite);
}

TEST(HCrossFamily, OptimalNormalScaleMatchesLaplaceSecondMoment) {
    const auto eta0 = RegressionFunction::zero(kUnit);
    const TrueModel truth{eta0, NoiseModel::laplace(0.8)};
    MeasureQ::UniformOptions coarse;
    coarse.cells_per_axis = 2;
    coarse.order = 2;
    const auto q = MeasureQ::uniform(kUnit, coarse);
    const double s_star = oracle::golden_min(
        [&](double s) { return h_cross_family({eta0, s}, NoiseModel::normal(1.0), truth, q).h; }, 0.5, 3.0, 1e-7);
    EXPECT_NEAR(s_star * s_star, 2.0 * 0.64, 1e-5);
}

TEST(HCrossFamily, NormalPostulateClosedFormAgreesWithNestedQuadrature) {
    Rng rng(31);
    for (const auto& noise : {NoiseModel::laplace(0.7), NoiseModel::general(StandardPhi::logistic(), 1.1)}) {
        const TrueModel truth{RegressionFunction::sine(kUnit, 0.4, 1.0), noise};
        for (int i = 0; i < 3; ++i) {
            const Theta th{random_eta(rng, 4), 0.5 + rng.uniform()};
            const auto closed = h_normal_postulate(th, truth, q_unit());
            EXPECT_NEAR(closed.h, h_cross_family(th, NoiseModel::normal(1.0), truth, q_unit()).h, 1e-7);
            EXPECT_EQ(kl_rate(th, NoiseModel::normal(1.0), truth, q_unit()).h, closed.h);
        }
    }
}

TEST(KlRate, DispatchesByFamily) {
    const auto eta0 = RegressionFunction::zero(kUnit);
    const Theta th{eta0.shifted(0.5), 1.3};
    const TrueModel nor{eta0, NoiseModel::normal(1.0)};
    EXPECT_EQ(kl_rate(th, NoiseModel::normal(1.0), nor, q_unit()).method, KLMethod::ClosedForm);
    EXPECT_EQ(kl_rate(th, NoiseModel::laplace(1.0), nor, q_unit()).method, KLMethod::Quadrature);
}

TEST(HInf, WellSpecifiedIsZero) {
    const auto basis = TrigBasis::cosine(kUnit, 6);
    const auto eta0 = RegressionFunction::expansion(kUnit, basis, {0.2, -0.5, 0.3, 0.0, 0.1, 0.05});
    const TrueModel nor{eta0, NoiseModel::normal(0.8)};
    const auto r = h_inf_estimate(NoiseModel::normal(1.0), basis, nor, q_unit());
    EXPECT_NEAR(r.h, 0.0, 1e-12);
    EXPECT_NEAR(r.argmin.sigma, 0.8, 1e-10);
    EXPECT_NEAR(r.coefficients[1], -0.5, 1e-10);

    const TrueModel lap{eta0, NoiseModel::laplace(0.8)};
    const auto rl = h_inf_estimate(NoiseModel::laplace(1.0), basis, lap, q_unit());
    EXPECT_TRUE(rl.converged);
    EXPECT_NEAR(rl.h, 0.0, 1e-10);
    EXPECT_NEAR(rl.argmin.sigma, 0.8, 1e-10);
}

TEST(HInf, NormalStepTruthMatchesExactProjectionResidual) {
    const auto eta0 = RegressionFunction::step(kUnit, {0.5}, {0.0, 1.0});
    const TrueModel truth{eta0, NoiseModel::normal(1.0)};
    double prev = 1.0;
    for (std::size_t K : {2u, 8u, 32u}) {
        const auto r = h_inf_estimate(NoiseModel::normal(1.0), TrigBasis::cosine(kUnit, K), truth, q_unit());
        const double m = step_residual(K);
        EXPECT_NEAR(r.h, 0.5 * std::log1p(m), 1e-10) << K;
        EXPECT_NEAR(r.argmin.sigma * r.argmin.sigma, 1.0 + m, 1e-10);
        EXPECT_LT(r.h, prev);
        prev = r.h;
        // the reported minimizer attains the value through the generic rate
        EXPECT_NEAR(h_normal(r.argmin, truth, q_unit()).h, r.h, 1e-10);
    }
}

TEST(HInf, LaplaceStepTruthIsALocalMinimum) {
    const auto eta0 = RegressionFunction::step(kUnit, {0.5}, {0.0, 1.0});
    const TrueModel truth{eta0, NoiseModel::laplace(0.5)};
    const auto basis = TrigBasis::cosine(kUnit, 6);
    const auto r = h_inf_estimate(NoiseModel::laplace(1.0), basis, truth, q_unit());
    EXPECT_TRUE(r.converged);
    EXPECT_NEAR(h_laplace(r.argmin, truth, q_unit()).h, r.h, 1e-10);
    Rng rng(4);
    for (int i = 0; i < 20; ++i) {
        auto w = r.coefficients;
        for (auto& v : w) v += 0.01 * rng.normal();
        const Theta other{RegressionFunction::expansion(kUnit, basis, w), r.argmin.sigma * (1 + 0.01 * rng.normal())};
        EXPECT_GE(h_laplace(other, truth, q_unit()).h, r.h - 1e-12);
    }
}

TEST(HInf, GeneralFamilyWellSpecified) {
    const auto basis = TrigBasis::cosine(kUnit, 3);
    const auto eta0 = RegressionFunction::expansion(kUnit, basis, {0.1, 0.4, -0.2});
    const auto noise = NoiseModel::general(StandardPhi::logistic(), 0.6);
    HInfOptions opt;
    opt.starts = 2;
    opt.max_evaluations = 1500;
    const auto r = h_inf_estimate(noise, basis, TrueModel{eta0, noise}, q_unit(), opt);
    EXPECT_LE(r.h, 1e-4);
    EXPECT_GE(r.h, -1e-6);
    EXPECT_NEAR(r.argmin.sigma, 0.6, 0.02);
}

TEST(NEpsilon, Membership) {
    EXPECT_FALSE(n_epsilon_member(0.5, 0.0, 0.3));
    EXPECT_TRUE(n_epsilon_member(0.5, 0.4, 0.1));
    EXPECT_THROW(n_epsilon_member(0.5, 0.4, 0.0), InvalidArgument);
    const auto eta0 = RegressionFunction::step(kUnit, {0.5}, {0.0, 1.0});
    const TrueModel truth{eta0, NoiseModel::normal(1.0)};
    const auto r = h_inf_estimate(NoiseModel::normal(1.0), TrigBasis::cosine(kUnit, 8), truth, q_unit());
    for (double eps : {1e-9, 1e-3, 1.0})
        EXPECT_TRUE(n_epsilon_member(r.argmin, r.h, eps, NoiseModel::normal(1.0), truth, q_unit()));
}

TEST(KlProperties, NonNegative) {
    Rng rng(8);
    const auto eta0 = RegressionFunction::step(kUnit, {0.3}, {0.5, -0.5});
    const TrueModel models[] = {{eta0, NoiseModel::normal(1.0)}, {eta0, NoiseModel::laplace(0.7)}};
    for (const auto& truth : models)
        for (int i = 0; i < 30; ++i) {
            const Theta th{random_eta(rng), 0.2 + 3.0 * rng.uniform()};
            const auto r = kl_rate(th, truth.noise, truth, q_unit());
            EXPECT_GE(r.h, -r.error - 1e-14);
        }
}

TEST(KlProperties, CoerciveAlongRaysAndInSigma) {
    const auto eta0 = RegressionFunction::sine(kUnit, 0.5, 1.0);
    const auto dir = RegressionFunction::expansion(kUnit, TrigBasis::cosine(kUnit, 3), {0.3, 1.0, -0.4});
    for (const auto& noise : {NoiseModel::normal(1.0), NoiseModel::laplace(1.0)}) {
        const TrueModel truth{eta0, noise};
        double prev = -1.0;
        for (int i = 0; i < 10; ++i) {
            const double t = std::pow(2.0, i);
            const auto* e = dir.as_expansion();
            std::vector<double> w = e->coefficients;
            for (auto& v : w) v *= t;
            const double h = kl_rate({RegressionFunction::expansion(kUnit, e->basis, w), 1.0}, noise, truth, q_unit()).h;
            EXPECT_GE(h, prev);
            prev = h;
        }
        double lo = -1.0, hi = -1.0;
        for (int i = 0; i < 10; ++i) {
            const double hs = kl_rate({eta0, std::pow(0.5, i + 1)}, noise, truth, q_unit()).h;
            const double hb = kl_rate({eta0, std::pow(2.0, i + 1)}, noise, truth, q_unit()).h;
            EXPECT_GT(hs, lo);
            EXPECT_GT(hb, hi);
            lo = hs;
            hi = hb;
        }
    }
}

TEST(KlProperties, AnalyticSigmaProfileIsOptimal) {
    Rng rng(99);
    const auto eta0 = RegressionFunction::step(kUnit, {0.5}, {0.0, 1.0});
    const TrueModel nor{eta0, NoiseModel::normal(0.8)}, lap{eta0, NoiseModel::laplace(0.8)};
    for (int i = 0; i < 5; ++i) {
        const auto eta = random_eta(rng);
        const double m = l2q_distance_sq(eta, eta0, q_unit()).value;
        const double sn = std::sqrt(0.64 + m);
        const double ab = q_expectation(q_unit().with_discontinuities(eta0.discontinuities()), [&](auto x) {
                              return laplace_abs_moment(eta0.value(x) - eta.value(x), 0.8);
                          }).value;
        const double hn = h_normal({eta, sn}, nor, q_unit()).h, hl = h_laplace({eta, ab}, lap, q_unit()).h;
        for (int g = 0; g < 100; ++g) {
            const double s = 0.05 + 0.05 * g;
            EXPECT_LE(hn, h_normal({eta, s}, nor, q_unit()).h + 1e-10);
            EXPECT_LE(hl, h_laplace({eta, s}, lap, q_unit()).h + 1e-10);
        }
    }
}

TEST(KlProperties, LipschitzOnABoundedBox) {
    Rng rng(31);
    const auto eta0 = RegressionFunction::sine(kUnit, 0.5, 1.0);
    const TrueModel truth{eta0, NoiseModel::laplace(1.0)};
    const auto basis = TrigBasis::cosine(kUnit, 3);
    double worst = 0.0;
    for (int i = 0; i < 40; ++i) {
        std::vector<double> a(3), b(3);
        for (int k = 0; k < 3; ++k) {
            a[k] = rng.uniform() - 0.5;
            b[k] = a[k] + 0.05 * (rng.uniform() - 0.5);
        }
        const double sa = 0.5 + rng.uniform(), sb = sa + 0.05 * (rng.uniform() - 0.5);
        const auto fa = RegressionFunction::expansion(kUnit, basis, a), fb = RegressionFunction::expansion(kUnit, basis, b);
        const double dist = sup_norm(RegressionFunction::expansion(kUnit, basis, {b[0] - a[0], b[1] - a[1], b[2] - a[2]}))
                                .certified_upper +
                            std::fabs(sa - sb);
        const double dh = std::fabs(h_laplace({fa, sa}, truth, q_unit()).h - h_laplace({fb, sb}, truth, q_unit()).h);
        if (dist > 0) worst = std::max(worst, dh / dist);
    }
    // on sigma >= 0.45 the partial derivatives are bounded by 1/0.45 + (2 + 1)/0.45^2
    EXPECT_LE(worst, 1.0 / 0.45 + 3.0 / (0.45 * 0.45));
}

TEST(HGridCsv, Format) {
    std::vector<HGridRow> rows{{"theta0", 1.0, {0.0, 0.0, KLMethod::ClosedForm, 0.0, false}},
                               {"shift", 1.0, {0.5, std::nullopt, KLMethod::Quadrature, 1e-9, false}}};
    std::ostringstream os;
    write_h_grid_csv(os, rows);
    EXPECT_EQ(os.str(), "theta_id,sigma,h,J,method,err\ntheta0,1,0,0,closed-form,0\nshift,1,0.5,,quadrature,1e-09\n");
}
