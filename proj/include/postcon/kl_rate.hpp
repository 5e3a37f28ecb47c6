#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "postcon/domain.hpp"
#include "postcon/noise.hpp"
#include "postcon/regression.hpp"

namespace postcon {

/// A parameter (eta, sigma) of the postulated regression model.
struct Theta {
    RegressionFunction eta;
    double sigma = 1.0;
};

/// The data-generating model: y = eta0(x) + eps, eps ~ noise.
struct TrueModel {
    RegressionFunction eta0;
    NoiseModel noise;
};

enum class KLMethod { ClosedForm, Quadrature, MonteCarlo };
std::string to_string(KLMethod m);

struct KLRateReport {
    double h = 0.0;
    /// h - h(Theta), filled when the infimum is supplied.
    std::optional<double> J;
    KLMethod method = KLMethod::ClosedForm;
    double error = 0.0;
    /// True when the divergence is infinite (h is then +inf).
    bool infinite = false;
};

/// Normal errors on both sides, closed form in E_Q (eta - eta0)^2.
KLRateReport h_normal(const Theta& theta, const TrueModel& truth, const MeasureQ& q,
                      std::optional<double> h_inf = std::nullopt);

/// Laplace errors on both sides, closed form in E_Q |Delta| and E_Q exp(-|Delta| / sigma0).
KLRateReport h_laplace(const Theta& theta, const TrueModel& truth, const MeasureQ& q,
                       std::optional<double> h_inf = std::nullopt);

/// g_{eta,sigma}(x) = E log phi((y - eta(x)) / sigma) under the truth at x,
/// by adaptive quadrature.
ExpectedLogPhi g_eta_sigma(const Theta& theta, const TrueModel& truth, std::span<const double> x);

/// Any symmetric phi shared by the postulated and true families:
/// log(sigma/sigma0) + c - E_Q g_{eta,sigma}. The error adds the outer
/// quadrature error to the largest inner error.
KLRateReport h_general(const Theta& theta, const TrueModel& truth, const MeasureQ& q,
                       std::optional<double> h_inf = std::nullopt);

/// Postulated family differs from the truth's. Nested quadrature of
/// E_X int (log f_theta0 - log f_theta)(y|x) f_theta0(y|x) dy. Only the
/// standardized density of `postulated` is used; its scale is ignored.
KLRateReport h_cross_family(const Theta& theta, const NoiseModel& postulated, const TrueModel& truth,
                            const MeasureQ& q, std::optional<double> h_inf = std::nullopt);

/// Normal postulate against any truth with finite variance:
/// log(sigma/sigma0) + c0 + log(2 pi)/2 + (sigma0^2 E z^2 + E_Q Delta^2) / (2 sigma^2),
/// c0 the truth's entropy constant.
KLRateReport h_normal_postulate(const Theta& theta, const TrueModel& truth, const MeasureQ& q,
                                std::optional<double> h_inf = std::nullopt);

/// Dispatch: closed forms when both sides are Normal or both Laplace, h_general
/// for a shared phi, h_normal_postulate for a Normal postulate, h_cross_family otherwise.
KLRateReport kl_rate(const Theta& theta, const NoiseModel& postulated, const TrueModel& truth, const MeasureQ& q,
                     std::optional<double> h_inf = std::nullopt);

/// True when the two models use the same standardized density.
bool same_phi(const NoiseModel& a, const NoiseModel& b);

struct HInfOptions {
    std::size_t starts = 6;
    std::size_t max_evaluations = 6000;
    std::uint64_t seed = 1;
    double tolerance = 1e-11;
};

struct HInfResult {
    double h = 0.0;
    double error = 0.0;
    Theta argmin{RegressionFunction::zero(CompactDomain::unit(1)), 1.0};
    std::vector<double> coefficients;
    /// False when the optimizer stopped on its evaluation budget; h is then an
    /// upper bound of the infimum over the search space.
    bool converged = true;
    std::string method;
};

/// Infimum of h over span(basis) x (0, inf) for the postulated family.
///   Normal postulate: L2(Q) projection of eta0, then sigma*^2 = sigma0^2 E z^2 + m*.
///   Laplace postulate with Laplace truth: Newton on the convex E_Q[|D| + s0 e^{-|D|/s0}],
///   sigma* equal to that minimum.
///   Otherwise: multistart Nelder-Mead over (coefficients, log sigma).
HInfResult h_inf_estimate(const NoiseModel& postulated, std::shared_ptr<const TrigBasis> basis,
                          const TrueModel& truth, const MeasureQ& q, const HInfOptions& opt = {});

/// theta is in N_epsilon when h(theta) <= h(Theta) + epsilon.
bool n_epsilon_member(double h_theta, double h_inf, double epsilon);
bool n_epsilon_member(const Theta& theta, double h_inf, double epsilon, const NoiseModel& postulated,
                      const TrueModel& truth, const MeasureQ& q);

struct HGridRow {
    std::string theta_id;
    double sigma = 0.0;
    KLRateReport report;
};

/// CSV with header theta_id,sigma,h,J,method,err.
void write_h_grid_csv(std::ostream& out, const std::vector<HGridRow>& rows);

}  // namespace postcon
