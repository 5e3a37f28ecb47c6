#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "postcon/equipartition.hpp"
#include "postcon/gp_prior.hpp"
#include "postcon/kl_rate.hpp"

namespace postcon {

// ---------------------------------------------------------------------------
// Exact posteriors on a finite parameter set

class DiscreteThetaSpace {
public:
    /// Prior weights must be positive and sum to one within 1e-12; h holds
    /// h(theta_k) for each atom (+inf allowed).
    DiscreteThetaSpace(std::vector<Theta> atoms, std::vector<double> prior, std::vector<double> h);

    /// Computes h for every atom with kl_rate.
    static DiscreteThetaSpace with_rates(std::vector<Theta> atoms, std::vector<double> prior,
                                         const NoiseModel& family, const TrueModel& truth, const MeasureQ& q);

    std::size_t size() const { return atoms_.size(); }
    const std::vector<Theta>& atoms() const { return atoms_; }
    const std::vector<double>& prior() const { return prior_; }
    const std::vector<double>& h() const { return h_; }
    /// h(Theta): the smallest atom rate.
    double h_inf() const;
    /// J(A) = min over A of h - h(Theta).
    double J(const std::vector<std::size_t>& subset) const;

private:
    std::vector<Theta> atoms_;
    std::vector<double> prior_;
    std::vector<double> h_;
};

struct DiscretePosterior {
    std::size_t n = 0;
    /// log prior_k + log R_n(theta_k) - logsumexp, always finite or -inf.
    std::vector<double> log_weights;
    std::vector<double> weights;
    /// Set when every weight underflows to zero; log_weights remain usable.
    bool underflow = false;

    /// log of the posterior probability of a subset of atoms.
    double log_mass(const std::vector<std::size_t>& subset) const;
};

/// Posterior weights proportional to prior_k R_n(theta_k) at every n of the
/// schedule, using prefixes of the dataset (n = 0 gives the prior). The
/// family is the postulated one; it may differ from the truth's.
std::vector<DiscretePosterior> discrete_posterior(const DiscreteThetaSpace& space, const Dataset& data,
                                                  const NoiseModel& family, const TrueModel& truth,
                                                  const std::vector<std::size_t>& n_schedule);

/// Full-data posterior.
DiscretePosterior discrete_posterior(const DiscreteThetaSpace& space, const Dataset& data, const NoiseModel& family,
                                     const TrueModel& truth);

struct RateDiagnostic {
    std::vector<std::size_t> n;
    std::vector<double> log_mass;   // log pi(A | Y_n)
    std::vector<double> statistic;  // (1/n) log pi(A | Y_n)
    double J = 0.0;
    double target = 0.0;            // -J(A)
    /// Least-squares slope of log pi(A | Y_n) against n over the largest
    /// decade of the schedule; estimates -J(A).
    double slope = 0.0;
};

RateDiagnostic posterior_rate_diagnostic(const DiscreteThetaSpace& space, const Dataset& data,
                                         const NoiseModel& family, const TrueModel& truth,
                                         const std::vector<std::size_t>& subset,
                                         const std::vector<std::size_t>& n_schedule);

/// Least-squares slope of y against x.
double least_squares_slope(std::span<const double> x, std::span<const double> y);

/// CSV with header n,log_mass,statistic,target.
void write_rate_csv(std::ostream& out, const RateDiagnostic& diag);

// ---------------------------------------------------------------------------
// MCMC over basis coefficients and sigma

struct ChainConfig {
    std::size_t length = 20000;  // iterations after burn-in
    std::size_t burnin = 2000;
    std::size_t thin = 10;
    /// Initial proposal scale multiplier; adapted during burn-in only.
    double step = 0.5;
    /// Hold sigma at this value instead of sampling it.
    std::optional<double> fix_sigma;
    /// Hold the coefficients at these values instead of sampling them.
    std::optional<std::vector<double>> fix_coefficients;
};

struct PosteriorDraw {
    std::vector<double> w;
    double sigma = 1.0;
    double log_posterior = 0.0;
};

struct PosteriorSamples {
    std::shared_ptr<const TrigBasis> basis;
    double offset = 0.0;
    CompactDomain domain = CompactDomain::unit(1);
    std::vector<PosteriorDraw> draws;
    /// Optional draw weights (empty means equal weights).
    std::vector<double> weights;
    double acceptance_rate = 0.0;        // coefficient block (sigma block when w is fixed)
    double sigma_acceptance_rate = 0.0;  // sigma block
    std::size_t burnin = 0;
    std::size_t thin = 1;
    std::uint64_t seed = 0;
    std::optional<std::string> tuning_warning;

    RegressionFunction eta(std::size_t i) const;
    /// eta_i(x) for every draw.
    std::vector<double> eta_at(std::span<const double> x) const;
};

/// Random-walk Metropolis on (w, log sigma) targeting prior x likelihood.
///
/// The coefficient block uses a Gaussian proposal whose covariance starts at
/// the Laplace approximation of the Normal-likelihood posterior and is
/// re-estimated from burn-in draws; a scalar step targets 0.234 acceptance
/// during burn-in. Sigma is updated in a separate block: a Gaussian step on
/// log sigma for continuous priors, a uniform jump to another atom for a grid
/// prior. Normal likelihoods use sufficient statistics.
PosteriorSamples mcmc_posterior(const CoefficientPrior& prior, const SigmaPrior& sigma_prior, const Dataset& data,
                                const NoiseModel& family, const ChainConfig& config, std::uint64_t seed);

/// Geyer initial-positive-sequence effective sample size.
double effective_sample_size(std::span<const double> chain);

struct SetMass {
    double probability = 0.0;
    double mc_error = 0.0;  // 0 for exact (discrete) masses
};

/// Fraction of draws satisfying the predicate, error sqrt(p(1-p)/ESS) on the indicator chain.
SetMass posterior_set_mass(const PosteriorSamples& samples, const std::function<bool(const PosteriorDraw&)>& predicate);
/// Exact sum of posterior weights over atoms satisfying the predicate.
SetMass posterior_set_mass(const DiscreteThetaSpace& space, const DiscretePosterior& post,
                           const std::function<bool(std::size_t)>& predicate);

// ---------------------------------------------------------------------------
// Posterior predictive densities

/// One mixture component (1/scale) phi((y - location)/scale) with weight.
struct PredictiveComponent {
    double location = 0.0;
    double scale = 1.0;
    double weight = 1.0;
};

std::vector<PredictiveComponent> predictive_components(const PosteriorSamples& samples, std::span<const double> x_new);
std::vector<PredictiveComponent> predictive_components(const DiscreteThetaSpace& space, const DiscretePosterior& post,
                                                       std::span<const double> x_new);

/// Uniform y-grid; integrals use the trapezoid rule.
struct YGrid {
    double lo = -10.0;
    double hi = 10.0;
    std::size_t points = 32769;

    double step() const { return (hi - lo) / static_cast<double>(points - 1); }
    double at(std::size_t i) const { return lo + step() * static_cast<double>(i); }
    /// Covers [min location - 30 max scale, max location + 30 max scale] of all components.
    static YGrid covering(const std::vector<PredictiveComponent>& components, std::size_t points = 32769);
};

struct PredictiveDensity {
    std::vector<double> values;
    /// Trapezoid integral of the values; must be within 1e-6 of 1.
    double mass = 1.0;
};

/// Weighted mixture of the postulated family on the grid. Throws
/// GridTooNarrow when the grid holds less than 1 - 1e-6 of the mass.
PredictiveDensity posterior_predictive_density(const std::vector<PredictiveComponent>& components,
                                               const NoiseModel& family, const YGrid& grid);

struct PredictiveReport {
    double hellinger_sq = 0.0;  // 1 - int sqrt(p q), computed as (1/2) int (sqrt p - sqrt q)^2
    double tv = 0.0;            // (1/2) int |p - q|
    double quadrature_error = 0.0;
    std::vector<double> x_new;
    std::size_t n = 0;
};

/// Distance between the true conditional density of y at x_new and the
/// posterior predictive. The truth's density is evaluated by the truth's family.
PredictiveReport predictive_distance(const TrueModel& truth, std::span<const double> x_new,
                                     const std::vector<PredictiveComponent>& components, const NoiseModel& family,
                                     std::optional<YGrid> grid = std::nullopt);

/// Hellinger and TV distances between two densities tabulated on the same grid.
PredictiveReport density_distance(std::span<const double> p, std::span<const double> q, const YGrid& grid);

/// CSV with header n,replicate,x_new,hellinger_sq,tv,quad_error.
struct PredictiveRow {
    std::size_t replicate = 0;
    PredictiveReport report;
};
void write_predictive_csv(std::ostream& out, const std::vector<PredictiveRow>& rows);

}  // namespace postcon
