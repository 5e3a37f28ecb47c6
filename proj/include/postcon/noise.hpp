#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "postcon/regression.hpp"

namespace postcon {

/// A symmetric standardized density phi on R, given by its log.
///
/// Construction tabulates the CDF on [-radius, radius] (used for inverse-CDF
/// sampling) and rejects densities that are not normalized to 1e-8 there or
/// that fail log phi(z) == log phi(-z) on a probe grid.
class StandardPhi {
public:
    StandardPhi(std::string name, std::function<double(double)> log_phi, double lipschitz, double radius = 40.0);

    static StandardPhi normal();
    static StandardPhi laplace();
    /// phi(z) = e^{-z} / (1 + e^{-z})^2; log phi is 1-Lipschitz.
    static StandardPhi logistic();
    /// phi(z) = sech(pi z / 2) / 2; log phi is (pi/2)-Lipschitz.
    static StandardPhi hyperbolic_secant();
    /// Built-in by name: normal, laplace, logistic, hyperbolic_secant.
    static StandardPhi by_name(const std::string& name);

    const std::string& name() const { return name_; }
    double log_phi(double z) const { return log_phi_(z); }
    double phi(double z) const;
    double lipschitz() const { return lipschitz_; }
    double radius() const { return radius_; }
    /// Integral of phi over [-radius, radius].
    double mass() const { return mass_; }
    /// Inverse CDF from the tabulated CDF (linear interpolation), u in (0,1).
    double quantile(double u) const;

private:
    std::string name_;
    std::function<double(double)> log_phi_;
    double lipschitz_;
    double radius_;
    double mass_ = 0.0;
    std::shared_ptr<const std::vector<double>> cdf_;  // on a uniform grid of [-radius, radius]
};

/// Error distribution (1/sigma) phi(eps / sigma).
class NoiseModel {
public:
    enum class Family { Normal, Laplace, General };

    static NoiseModel normal(double sigma);
    static NoiseModel laplace(double sigma);
    static NoiseModel general(StandardPhi phi, double sigma);

    Family family() const { return family_; }
    double scale() const { return scale_; }
    const StandardPhi& phi() const { return *phi_; }
    std::string family_name() const;
    /// Same family, different scale.
    NoiseModel with_scale(double sigma) const;

    /// log phi(z) on the standardized scale; closed form for Normal/Laplace.
    double log_phi(double z) const;
    /// log of (1/sigma) phi(eps/sigma).
    double log_density(double residual) const;
    double density(double residual) const;

    /// n iid draws from the first n values of the stream seeded by `seed`, so a
    /// longer sample extends a shorter one with the same seed.
    std::vector<double> sample(std::size_t n, std::uint64_t seed) const;

private:
    NoiseModel(Family f, double sigma, std::shared_ptr<const StandardPhi> phi);

    Family family_;
    double scale_;
    std::shared_ptr<const StandardPhi> phi_;
};

/// E|eps + delta| for eps ~ Laplace(0, sigma0): |delta| + sigma0 exp(-|delta|/sigma0).
double laplace_abs_moment(double delta, double sigma0);

/// c = integral of log phi(z) phi(z) dz. Closed form for Normal and Laplace.
double phi_entropy_constant(const NoiseModel& model);
/// Same integral by adaptive quadrature for any family.
double phi_entropy_constant_quadrature(const NoiseModel& model);

/// E[log phi((sigma0 z + delta) / sigma)] with z ~ phi, by quadrature (general)
/// or closed form (Normal, Laplace, when closed_form is true).
/// This is g_{eta,sigma}(x) with delta = eta0(x) - eta(x).
double expected_log_phi(const NoiseModel& truth, double delta, double sigma, bool closed_form = true);

/// Quadrature variant of expected_log_phi that also reports its error bound.
struct ExpectedLogPhi {
    double value = 0.0;
    double error = 0.0;
};
ExpectedLogPhi expected_log_phi_quadrature(const NoiseModel& truth, double delta, double sigma, double abs_tol = 1e-9);

struct LipschitzReport {
    double max_ratio = 0.0;  // max |log phi(a) - log phi(b)| / |a - b| over probe pairs
    bool holds = false;      // max_ratio <= L (1e-9 slack)
};
/// Probe (A7) Lipschitz continuity of log phi on pairs from [-radius, radius].
LipschitzReport lipschitz_check(const StandardPhi& phi, std::size_t probes = 2001);

struct MgfRow {
    double lambda = 0.0;
    double estimate = 0.0;  // Monte Carlo E exp(lambda U)
    double std_error = 0.0;
    double bound = 0.0;     // exp(lambda^2 s^2 / 2) at the configured (c1, c2)
    bool admissible = true; // |lambda| <= 1/s
    bool holds = true;
};

struct MgfReport {
    enum class Status { Holds, Violated, Inconclusive };
    Status status = Status::Holds;
    double c1 = 1.0, c2 = 2.0;
    double s = 0.0;
    double sup_distance = 0.0;  // sup |eta - eta0| on the probe grid
    double g_value = 0.0;       // g_{eta,sigma}(x)
    std::vector<MgfRow> rows;
    /// Smallest (c1 + c2) pair on the search grid for which every admissible
    /// lambda passes; empty when none does.
    std::optional<std::pair<double, double>> smallest_passing;
};

struct MgfCheckOptions {
    double c1 = 1.0;
    double c2 = 2.0;
    std::size_t draws = 1'000'000;
    std::uint64_t seed = 1;
    /// Relative Monte Carlo error above which a row is inconclusive.
    double max_relative_se = 0.05;
};

/// Sub-exponential check of U = log phi((y - eta(x))/sigma) - g_{eta,sigma}(x)
/// for y = eta0(x) + eps, eps ~ truth. eta and eta0 are given through their
/// values at x and the sup-norm of their difference.
MgfReport subexponential_mgf_check(const NoiseModel& truth, double eta_x, double eta0_x, double sup_distance,
                                   double sigma, const std::vector<double>& lambdas, const MgfCheckOptions& opt = {});

/// Same check from the regression functions: Delta is taken at x and the
/// sup-norm of eta - eta0 on the dense default grid.
MgfReport subexponential_mgf_check(const NoiseModel& truth, const RegressionFunction& eta,
                                   const RegressionFunction& eta0, double sigma, std::span<const double> x,
                                   const std::vector<double>& lambdas, const MgfCheckOptions& opt = {});

struct A9Report {
    double log_phi_integral = 0.0;  // integral of |log phi((sigma0/sigma) z)| phi(z) dz
    double abs_moment = 0.0;        // integral of |z| phi(z) dz
    double c3_required = 0.0;       // sigma * log_phi_integral
    bool stable = true;             // both values settle as the truncation radius grows
    std::optional<bool> envelope_holds;
};

/// Integrability diagnostics of (A9) for the truth's phi, at postulated scale sigma.
A9Report a9_integrability_check(const NoiseModel& truth, double sigma, std::optional<double> c3 = std::nullopt);

}  // namespace postcon
