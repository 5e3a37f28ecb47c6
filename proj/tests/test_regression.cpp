#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "postcon/errors.hpp"
#include "postcon/regression.hpp"

using namespace postcon;

namespace {
const CompactDomain kUnit = CompactDomain::unit(1);
constexpr double kPi = std::numbers::pi;
double at(const RegressionFunction& f, double x) {
    const double p[] = {x};
    return f(p);
}
}  // namespace

TEST(Evaluate, ZeroConstantAndStep) {
    EXPECT_EQ(at(RegressionFunction::zero(kUnit), 0.37), 0.0);
    auto basis = TrigBasis::cosine(kUnit, 4);
    const auto f = RegressionFunction::expansion(kUnit, basis, {1.0, 0.0, 0.0, 0.0});
    for (double x : {0.0, 0.3, 1.0}) EXPECT_NEAR(at(f, x), 1.0, 1e-15);
    const auto s = RegressionFunction::step(kUnit, {0.5}, {0.0, 1.0});
    EXPECT_EQ(at(s, 0.25), 0.0);
    EXPECT_EQ(at(s, 0.75), 1.0);
    EXPECT_EQ(at(s, 0.5), 1.0);  // right-continuous
}

TEST(Evaluate, OutsideDomainThrows) {
    const double p[] = {1.5};
    EXPECT_THROW(RegressionFunction::zero(kUnit)(p), DomainError);
}

TEST(CosineBasis, MatchesProductOfCosines) {
    const CompactDomain d({{0.0, 2.0}, {-1.0, 1.0}});
    auto basis = TrigBasis::cosine(d, 10);
    const auto& idx = basis->cosine_indices();
    ASSERT_EQ(idx.size(), 10u);
    EXPECT_EQ(idx[0], (std::vector<int>{0, 0}));
    // ordered by total degree
    for (std::size_t k = 1; k < idx.size(); ++k) EXPECT_LE(idx[k - 1][0] + idx[k - 1][1], idx[k][0] + idx[k][1]);
    const double x[] = {0.7, -0.2};
    for (std::size_t k = 0; k < idx.size(); ++k) {
        const double expect = std::cos(kPi * idx[k][0] * (x[0] - 0.0) / 2.0) * std::cos(kPi * idx[k][1] * (x[1] + 1.0) / 2.0);
        EXPECT_NEAR(basis->term_value(k, x), expect, 1e-14);
    }
}

TEST(DesignMatrix, ParallelMatchesSerial) {
    auto basis = TrigBasis::cosine(CompactDomain::unit(2), 20);
    std::vector<double> c;
    for (int i = 0; i < 3000; ++i) c.push_back(std::fmod(0.618 * i, 1.0));
    const PointSet pts(2, c);
    EXPECT_EQ((basis->design_matrix(pts) - basis->design_matrix_serial(pts)).cwiseAbs().maxCoeff(), 0.0);
}

TEST(SupNorm, Examples) {
    EXPECT_EQ(sup_norm(RegressionFunction::constant(kUnit, -2.5)).value, 2.5);
    const auto s = RegressionFunction::sine(kUnit, 1.0, 1.0);
    const auto r = sup_norm(s, 1001);
    EXPECT_NEAR(r.value, 1.0, 1e-4);
    EXPECT_EQ(r.method, SupNormReport::Method::DenseGrid);
    EXPECT_EQ(r.resolution, 1001);
    EXPECT_GE(r.certified_upper, r.value);

    auto basis = TrigBasis::cosine(kUnit, 2);
    const auto f = RegressionFunction::expansion(kUnit, basis, {0.5, -0.25});
    EXPECT_DOUBLE_EQ(sup_norm(f).certified_upper, 0.75);
}

TEST(SupNorm, TriangleInequalityOnGrid) {
    auto basis = TrigBasis::cosine(kUnit, 6);
    const auto f = RegressionFunction::expansion(kUnit, basis, {0.1, -0.4, 0.3, 0.0, 0.2, -0.1});
    const auto g = RegressionFunction::expansion(kUnit, basis, {-0.3, 0.1, 0.3, 0.5, 0.0, 0.1});
    const auto sum = RegressionFunction::expansion(kUnit, basis, {-0.2, -0.3, 0.6, 0.5, 0.2, 0.0});
    for (int m : {2, 17, 512})
        EXPECT_LE(sup_norm(sum, m).value, sup_norm(f, m).value + sup_norm(g, m).value + 1e-15);
}

TEST(SupNorm, StepIsAnalytic) {
    const auto r = sup_norm(RegressionFunction::step(kUnit, {0.2, 0.6}, {0.5, -3.0, 1.0}));
    EXPECT_EQ(r.method, SupNormReport::Method::Analytic);
    EXPECT_EQ(r.value, 3.0);
}

TEST(PartialDerivative, ConstantAndSine) {
    const auto dc = partial_derivative(RegressionFunction::constant(kUnit, 4.0), 0);
    EXPECT_EQ(at(dc, 0.3), 0.0);
    const auto ds = partial_derivative(RegressionFunction::sine(kUnit, 1.0, 1.0), 0);
    EXPECT_NEAR(at(ds, 0.0), 2.0 * kPi, 1e-10);
    EXPECT_NEAR(at(ds, 0.3), 2.0 * kPi * std::cos(2 * kPi * 0.3), 1e-10);
    EXPECT_THROW(partial_derivative(RegressionFunction::step(kUnit, {0.5}, {0.0, 1.0}), 0), NotDifferentiable);
}

TEST(PartialDerivative, GridFiniteDifferenceIsSecondOrder) {
    double prev = 0.0;
    for (int m : {41, 81, 161}) {
        std::vector<double> xs(static_cast<std::size_t>(m)), ys(static_cast<std::size_t>(m));
        for (int i = 0; i < m; ++i) {
            xs[static_cast<std::size_t>(i)] = static_cast<double>(i) / (m - 1);
            ys[static_cast<std::size_t>(i)] = std::sin(2 * kPi * xs[static_cast<std::size_t>(i)]);
        }
        const auto d = partial_derivative(RegressionFunction::grid(kUnit, {xs}, ys), 0);
        double err = 0.0;
        for (int i = 1; i < m - 1; ++i) {
            const double x = xs[static_cast<std::size_t>(i)];
            err = std::max(err, std::fabs(at(d, x) - 2 * kPi * std::cos(2 * kPi * x)));
        }
        if (prev > 0.0) EXPECT_NEAR(prev / err, 4.0, 0.4) << m;  // halving h quarters the error
        prev = err;
    }
}

TEST(PartialDerivative, ExpansionDerivativeSupIsFinite) {
    auto basis = TrigBasis::cosine(CompactDomain::unit(2), 15);
    std::vector<double> w(15, 0.3);
    const auto f = RegressionFunction::expansion(CompactDomain::unit(2), basis, w);
    for (int j = 0; j < 2; ++j) {
        const auto r = sup_norm(partial_derivative(f, j));
        EXPECT_TRUE(std::isfinite(r.value));
        EXPECT_TRUE(std::isfinite(r.certified_upper));
    }
}

TEST(L2Distance, Examples) {
    const auto q = MeasureQ::uniform(kUnit);
    const auto f = RegressionFunction::sine(kUnit, 0.7, 2.0);
    EXPECT_EQ(l2q_distance_sq(f, f, q).value, 0.0);
    EXPECT_NEAR(l2q_distance_sq(RegressionFunction::constant(kUnit, 1.0), RegressionFunction::zero(kUnit), q).value,
                1.0, 1e-14);
    EXPECT_NEAR(l2q_distance_sq(RegressionFunction::zero(kUnit), RegressionFunction::step(kUnit, {0.5}, {0.0, 1.0}), q)
                    .value,
                0.5, 1e-14);
    // breakpoint away from cell edges
    EXPECT_NEAR(l2q_distance_sq(RegressionFunction::zero(kUnit), RegressionFunction::step(kUnit, {0.3137}, {0.0, 2.0}), q)
                    .value,
                4.0 * (1.0 - 0.3137), 1e-13);
    EXPECT_THROW(l2q_distance_sq(f, RegressionFunction::zero(CompactDomain::unit(2)), q), InvalidArgument);
}

TEST(L2Distance, ZeroIffEqualOnNodes) {
    const auto q = MeasureQ::uniform(kUnit);
    const auto f = RegressionFunction::sine(kUnit, 1.0, 1.0);
    EXPECT_GT(l2q_distance_sq(f, f.shifted(1e-6), q).value, 0.0);
    EXPECT_NEAR(l2q_distance_sq(f, f.shifted(0.5), q).value, 0.25, 1e-14);
}

TEST(Json, RoundTripsEveryRepresentation) {
    auto basis = TrigBasis::cosine(kUnit, 3);
    const RegressionFunction fs[] = {
        RegressionFunction::expansion(kUnit, basis, {0.1, 0.2, -0.3}, 0.5),
        RegressionFunction::step(kUnit, {0.5}, {0.0, 1.0}),
        RegressionFunction::constant(kUnit, 2.0),
        RegressionFunction::grid(kUnit, {{0.0, 0.5, 1.0}}, {1.0, -1.0, 2.0}),
        RegressionFunction::sine(kUnit, 1.0, 3.0, 0.2),
    };
    for (const auto& f : fs) {
        const auto g = RegressionFunction::from_json(nlohmann::json::parse(f.to_json().dump()));
        for (double x : {0.0, 0.13, 0.5, 0.77, 1.0}) EXPECT_DOUBLE_EQ(at(g, x), at(f, x));
    }
}

TEST(GridFunction, InterpolatesLinearly) {
    const auto g = RegressionFunction::grid(CompactDomain::unit(2), {{0.0, 1.0}, {0.0, 1.0}}, {0.0, 1.0, 2.0, 3.0});
    const double p[] = {0.5, 0.5};
    EXPECT_DOUBLE_EQ(g(p), 1.5);
}
