#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "postcon/domain.hpp"
#include "postcon/regression.hpp"
#include "postcon/rng.hpp"

namespace postcon {

struct Kernel {
    enum class Type { SquaredExponential, Matern };
    Type type = Type::SquaredExponential;
    double amplitude = 1.0;    // tau^2
    double lengthscale = 0.2;  // ell
    double nu = 2.5;           // Matern smoothness; 2.5 or 3.5

    /// k(x, x') as a function of r = |x - x'|.
    double operator()(double r) const;
    double operator()(std::span<const double> x, std::span<const double> y) const;
    /// Spectral density shape S(|omega|) in d dimensions, up to a constant.
    double spectral_shape(double omega, int dim) const;
    void validate() const;
};

struct GpSpec {
    /// Prior mean mu. Coefficient-space sampling supports constant means only.
    std::optional<RegressionFunction> mean;
    Kernel kernel;
    /// Starting jitter as a fraction of tau^2; escalated x10 up to 1e-8.
    double jitter = 1e-12;
    std::size_t max_points = 4096;
};

/// Draws of the GP at a fixed finite point set, factorizing the Gram matrix once.
class GridPathSampler {
public:
    GridPathSampler(const GpSpec& spec, PointSet points);

    const PointSet& points() const { return points_; }
    /// Jitter (absolute) that made the Gram matrix factorizable.
    double jitter_used() const { return jitter_used_; }
    std::vector<double> draw(std::uint64_t seed) const;
    std::vector<double> draw(Rng& rng) const;

private:
    PointSet points_;
    Eigen::VectorXd mean_;
    Eigen::MatrixXd chol_;
    double jitter_used_ = 0.0;
};

/// One draw of N(mu(points), Gram + jitter I). Throws IllConditionedKernel
/// when factorization fails at the largest permitted jitter.
std::vector<double> sample_path_at(const GpSpec& spec, const PointSet& points, std::uint64_t seed);

/// A GP draw on a tensor grid, returned as a piecewise-linear GridFunction.
RegressionFunction sample_path_on_grid(const GpSpec& spec, const CompactDomain& domain,
                                       const std::vector<std::vector<double>>& axes, std::uint64_t seed);

enum class BasisChoice { Cosine, FourierFeatures };
enum class CoefficientTail { Gaussian, StudentT };

/// Prior over the coefficients of a fixed trigonometric basis: the
/// finite-dimensional surrogate of the GP prior.
///
/// Cosine: independent coefficients with variances proportional to
/// 2^{nz(k)} S(pi |k|), nz(k) the number of nonzero k_j, normalized so the
/// domain-averaged variance of eta(x) is tau^2 (K = 1 gives N(0, tau^2)). The
/// covariance shape follows the kernel's spectrum but its scale is set by the
/// average variance, not by k(x, x') pointwise.
/// FourierFeatures: sqrt(2) cos(omega.x + b) with omega drawn from the
/// kernel's spectral measure once (feature_seed) and w_k ~ N(0, tau^2 / K), so
/// the covariance approximates k(x, x') for large K.
class CoefficientPrior {
public:
    CoefficientPrior(std::shared_ptr<const TrigBasis> basis, std::vector<double> prior_sd, CompactDomain domain,
                     double offset = 0.0, CoefficientTail tail = CoefficientTail::Gaussian, double dof = 4.0);

    static CoefficientPrior from_gp(const GpSpec& spec, const CompactDomain& domain, std::size_t size,
                                    BasisChoice choice = BasisChoice::Cosine, std::uint64_t feature_seed = 0,
                                    CoefficientTail tail = CoefficientTail::Gaussian, double dof = 4.0);

    const std::shared_ptr<const TrigBasis>& basis() const { return basis_; }
    const std::vector<double>& prior_sd() const { return sd_; }
    const CompactDomain& domain() const { return domain_; }
    double offset() const { return offset_; }
    CoefficientTail tail() const { return tail_; }
    double dof() const { return dof_; }
    std::size_t size() const { return sd_.size(); }

    std::vector<double> sample_coefficients(Rng& rng) const;
    RegressionFunction sample(std::uint64_t seed) const;
    RegressionFunction function(std::vector<double> coefficients) const;
    /// Log prior density of the coefficient vector (normalized).
    double log_density(std::span<const double> w) const;

private:
    std::shared_ptr<const TrigBasis> basis_;
    std::vector<double> sd_;
    CompactDomain domain_;
    double offset_;
    CoefficientTail tail_;
    double dof_;
};

/// A coefficient-space path; see CoefficientPrior.
RegressionFunction sample_coefficient_path(const GpSpec& spec, const CompactDomain& domain, std::size_t size,
                                           std::uint64_t seed, BasisChoice choice = BasisChoice::Cosine,
                                           std::uint64_t feature_seed = 0);

class SigmaPrior {
public:
    enum class Family { LogNormal, InverseGammaOnVariance, Grid };

    static SigmaPrior log_normal(double location, double scale);
    static SigmaPrior inverse_gamma_on_variance(double shape, double rate);
    static SigmaPrior grid(std::vector<double> values, std::vector<double> weights);

    Family family() const { return family_; }
    std::string describe() const;
    const std::vector<double>& grid_values() const { return values_; }
    const std::vector<double>& grid_weights() const { return weights_; }
    double param1() const { return p1_; }
    double param2() const { return p2_; }

    double sample(Rng& rng) const;
    double sample(std::uint64_t seed) const;
    /// P(lo <= sigma <= hi) from the CDF (exact for every family).
    double interval_mass(double lo, double hi) const;
    /// Log density of t = log sigma (continuous families only).
    double log_density_log_sigma(double t) const;

private:
    SigmaPrior(Family f) : family_(f) {}
    Family family_;
    double p1_ = 0.0, p2_ = 0.0;
    std::vector<double> values_, weights_;
};

/// The band [exp(-(beta n)^{1/4}), exp((beta n)^{1/4})].
std::pair<double, double> sigma_band(double beta, double n);

struct BandMass {
    double mass = 0.0;
    double std_error = 0.0;  // 0 for CDF-based values
    bool monte_carlo = false;
};

/// Prior mass of the sigma band, from the CDF.
BandMass sigma_prior_band_mass(const SigmaPrior& prior, double n, double beta);
/// Prior mass of the sigma band from `draws` seeded prior draws.
BandMass sigma_prior_band_mass_mc(const SigmaPrior& prior, double n, double beta, std::size_t draws,
                                  std::uint64_t seed);

/// Standard normal CDF.
double normal_cdf(double z);

}  // namespace postcon
