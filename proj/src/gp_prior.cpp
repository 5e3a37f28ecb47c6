#include "postcon/gp_prior.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include <boost/math/special_functions/gamma.hpp>

#include "postcon/errors.hpp"

namespace postcon {

namespace {

constexpr double kLogSqrt2Pi = 0.91893853320467274178;

// Marsaglia-Tsang; shapes below one via the U^{1/a} boost.
double gamma_draw(Rng& rng, double shape) {
    if (shape < 1.0) return gamma_draw(rng, shape + 1.0) * std::pow(rng.uniform_open(), 1.0 / shape);
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
        double x, v;
        do {
            x = rng.normal();
            v = 1.0 + c * x;
        } while (v <= 0.0);
        v = v * v * v;
        const double u = rng.uniform_open();
        if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
        if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
}

}  // namespace

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

// ------------------------------------------------------------------ Kernel

void Kernel::validate() const {
    if (!(amplitude > 0.0)) throw InvalidArgument("kernel: amplitude tau^2 must be positive");
    if (!(lengthscale > 0.0)) throw InvalidArgument("kernel: lengthscale must be positive");
    if (type == Type::Matern && nu != 2.5 && nu != 3.5)
        throw InvalidArgument("kernel: Matern smoothness must be 2.5 or 3.5 (continuously differentiable paths)");
}

double Kernel::operator()(double r) const {
    r = std::fabs(r);
    if (type == Type::SquaredExponential) return amplitude * std::exp(-0.5 * r * r / (lengthscale * lengthscale));
    if (nu == 2.5) {
        const double a = std::sqrt(5.0) * r / lengthscale;
        return amplitude * (1.0 + a + a * a / 3.0) * std::exp(-a);
    }
    const double a = std::sqrt(7.0) * r / lengthscale;
    return amplitude * (1.0 + a + 0.4 * a * a + a * a * a / 15.0) * std::exp(-a);
}

double Kernel::operator()(std::span<const double> x, std::span<const double> y) const {
    double r2 = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) r2 += (x[j] - y[j]) * (x[j] - y[j]);
    return (*this)(std::sqrt(r2));
}

double Kernel::spectral_shape(double omega, int dim) const {
    if (type == Type::SquaredExponential) return std::exp(-0.5 * omega * omega * lengthscale * lengthscale);
    const double base = 2.0 * nu / (lengthscale * lengthscale);
    return std::pow(base / (base + omega * omega), nu + 0.5 * dim);
}

// --------------------------------------------------------- grid-path draws

GridPathSampler::GridPathSampler(const GpSpec& spec, PointSet points) : points_(std::move(points)) {
    spec.kernel.validate();
    const std::size_t n = points_.size();
    if (n == 0) throw InvalidArgument("GridPathSampler: no points");
    if (n > spec.max_points)
        throw InvalidArgument("GridPathSampler: " + std::to_string(n) + " points exceeds the configured maximum");
    const auto N = static_cast<Eigen::Index>(n);
    mean_ = Eigen::VectorXd::Zero(N);
    if (spec.mean)
        for (std::size_t i = 0; i < n; ++i) mean_(static_cast<Eigen::Index>(i)) = spec.mean->value(points_[i]);
    Eigen::MatrixXd gram(N, N);
    for (Eigen::Index i = 0; i < N; ++i)
        for (Eigen::Index j = 0; j <= i; ++j)
            gram(i, j) = gram(j, i) = spec.kernel(points_[static_cast<std::size_t>(i)], points_[static_cast<std::size_t>(j)]);
    const double tau2 = spec.kernel.amplitude;
    for (double rel = std::max(spec.jitter, 1e-16); rel <= 1e-8 * (1.0 + 1e-9); rel *= 10.0) {
        Eigen::MatrixXd a = gram;
        a.diagonal().array() += rel * tau2;
        Eigen::LLT<Eigen::MatrixXd> llt(a);
        if (llt.info() == Eigen::Success) {
            chol_ = llt.matrixL();
            jitter_used_ = rel * tau2;
            return;
        }
    }
    throw IllConditionedKernel("GridPathSampler: Gram matrix not factorizable with jitter <= 1e-8 tau^2");
}

std::vector<double> GridPathSampler::draw(Rng& rng) const {
    Eigen::VectorXd z(chol_.rows());
    for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = rng.normal();
    const Eigen::VectorXd v = mean_ + chol_.triangularView<Eigen::Lower>() * z;
    return {v.data(), v.data() + v.size()};
}

std::vector<double> GridPathSampler::draw(std::uint64_t seed) const {
    Rng rng(seed);
    return draw(rng);
}

std::vector<double> sample_path_at(const GpSpec& spec, const PointSet& points, std::uint64_t seed) {
    return GridPathSampler(spec, points).draw(seed);
}

RegressionFunction sample_path_on_grid(const GpSpec& spec, const CompactDomain& domain,
                                       const std::vector<std::vector<double>>& axes, std::uint64_t seed) {
    if (axes.size() != static_cast<std::size_t>(domain.dim())) throw InvalidArgument("sample_path_on_grid: axis count");
    PointSet pts;
    std::size_t total = 1;
    for (const auto& a : axes) total *= a.size();
    std::vector<double> p(axes.size());
    for (std::size_t t = 0; t < total; ++t) {
        std::size_t rem = t;
        for (std::size_t j = axes.size(); j-- > 0;) {
            p[j] = axes[j][rem % axes[j].size()];
            rem /= axes[j].size();
        }
        pts.push_back(p);
    }
    return RegressionFunction::grid(domain, axes, sample_path_at(spec, pts, seed));
}

// -------------------------------------------------------- coefficient prior

CoefficientPrior::CoefficientPrior(std::shared_ptr<const TrigBasis> basis, std::vector<double> prior_sd,
                                   CompactDomain domain, double offset, CoefficientTail tail, double dof)
    : basis_(std::move(basis)), sd_(std::move(prior_sd)), domain_(std::move(domain)), offset_(offset), tail_(tail),
      dof_(dof) {
    if (!basis_ || basis_->size() != sd_.size()) throw InvalidArgument("CoefficientPrior: one sd per basis term");
    for (double s : sd_)
        if (!(s > 0.0)) throw InvalidArgument("CoefficientPrior: prior sd must be positive");
    if (tail_ == CoefficientTail::StudentT && !(dof_ > 0.0)) throw InvalidArgument("CoefficientPrior: dof must be > 0");
}

CoefficientPrior CoefficientPrior::from_gp(const GpSpec& spec, const CompactDomain& domain, std::size_t size,
                                           BasisChoice choice, std::uint64_t feature_seed, CoefficientTail tail,
                                           double dof) {
    spec.kernel.validate();
    if (size == 0) throw InvalidArgument("CoefficientPrior: basis size must be >= 1");
    double offset = 0.0;
    if (spec.mean) {
        const auto* c = std::get_if<ClosedForm>(&spec.mean->repr());
        if (!c || c->rule != ClosedForm::Rule::Constant)
            throw UnsupportedCombination("coefficient-space prior supports constant mean functions only");
        offset = c->constant;
    }
    const double tau2 = spec.kernel.amplitude;
    const int d = domain.dim();
    if (choice == BasisChoice::Cosine) {
        auto basis = TrigBasis::cosine(domain, size);
        std::vector<double> shape(size), var(size);
        double total = 0.0;
        for (std::size_t k = 0; k < size; ++k) {
            const auto& t = basis->terms()[k];
            double w2 = 0.0;
            int nonzero = 0;
            for (double f : t.freq) {
                w2 += f * f;
                if (f != 0.0) ++nonzero;
            }
            shape[k] = spec.kernel.spectral_shape(std::sqrt(w2), d);
            total += shape[k];
            var[k] = std::ldexp(1.0, nonzero);
        }
        std::vector<double> sd(size);
        for (std::size_t k = 0; k < size; ++k) sd[k] = std::sqrt(tau2 * var[k] * shape[k] / total);
        // floor keeps every coefficient in the prior support
        for (double& s : sd) s = std::max(s, 1e-150);
        return CoefficientPrior(basis, std::move(sd), domain, offset, tail, dof);
    }
    Rng rng(derive_seed(feature_seed, 0xfeed));
    std::vector<std::vector<double>> omegas(size, std::vector<double>(static_cast<std::size_t>(d)));
    std::vector<double> phases(size);
    const double ell = spec.kernel.lengthscale;
    for (std::size_t k = 0; k < size; ++k) {
        double scale = 1.0 / ell;
        if (spec.kernel.type == Kernel::Type::Matern)  // multivariate t with 2 nu dof
            scale *= std::sqrt(2.0 * spec.kernel.nu / (2.0 * gamma_draw(rng, spec.kernel.nu)));
        for (auto& w : omegas[k]) w = rng.normal() * scale;
        phases[k] = 2.0 * std::numbers::pi * rng.uniform();
    }
    auto basis = TrigBasis::fourier_features(d, std::move(omegas), std::move(phases));
    std::vector<double> sd(size, std::sqrt(tau2 / static_cast<double>(size)));
    return CoefficientPrior(basis, std::move(sd), domain, offset, tail, dof);
}

std::vector<double> CoefficientPrior::sample_coefficients(Rng& rng) const {
    std::vector<double> w(sd_.size());
    for (std::size_t k = 0; k < w.size(); ++k) {
        double z = rng.normal();
        if (tail_ == CoefficientTail::StudentT) z *= std::sqrt(dof_ / (2.0 * gamma_draw(rng, 0.5 * dof_)));
        w[k] = sd_[k] * z;
    }
    return w;
}

RegressionFunction CoefficientPrior::sample(std::uint64_t seed) const {
    Rng rng(seed);
    return function(sample_coefficients(rng));
}

RegressionFunction CoefficientPrior::function(std::vector<double> coefficients) const {
    return RegressionFunction::expansion(domain_, basis_, std::move(coefficients), offset_);
}

double CoefficientPrior::log_density(std::span<const double> w) const {
    double lp = 0.0;
    if (tail_ == CoefficientTail::Gaussian) {
        for (std::size_t k = 0; k < w.size(); ++k) {
            const double z = w[k] / sd_[k];
            lp += -0.5 * z * z - std::log(sd_[k]) - kLogSqrt2Pi;
        }
        return lp;
    }
    const double c = std::lgamma(0.5 * (dof_ + 1.0)) - std::lgamma(0.5 * dof_) - 0.5 * std::log(dof_ * std::numbers::pi);
    for (std::size_t k = 0; k < w.size(); ++k) {
        const double z = w[k] / sd_[k];
        lp += c - std::log(sd_[k]) - 0.5 * (dof_ + 1.0) * std::log1p(z * z / dof_);
    }
    return lp;
}

RegressionFunction sample_coefficient_path(const GpSpec& spec, const CompactDomain& domain, std::size_t size,
                                           std::uint64_t seed, BasisChoice choice, std::uint64_t feature_seed) {
    return CoefficientPrior::from_gp(spec, domain, size, choice, feature_seed).sample(seed);
}

// ------------------------------------------------------------- sigma prior

SigmaPrior SigmaPrior::log_normal(double location, double scale) {
    if (!(scale > 0.0)) throw InvalidArgument("LogNormal sigma prior: scale must be positive");
    SigmaPrior p(Family::LogNormal);
    p.p1_ = location;
    p.p2_ = scale;
    return p;
}

SigmaPrior SigmaPrior::inverse_gamma_on_variance(double shape, double rate) {
    if (!(shape > 0.0) || !(rate > 0.0)) throw InvalidArgument("InverseGamma sigma prior: shape and rate must be positive");
    SigmaPrior p(Family::InverseGammaOnVariance);
    p.p1_ = shape;
    p.p2_ = rate;
    return p;
}

SigmaPrior SigmaPrior::grid(std::vector<double> values, std::vector<double> weights) {
    if (values.empty() || values.size() != weights.size())
        throw InvalidArgument("Grid sigma prior: need one weight per value");
    double total = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!(values[i] > 0.0)) throw InvalidArgument("Grid sigma prior: values must be positive");
        if (!(weights[i] > 0.0)) throw InvalidArgument("Grid sigma prior: weights must be positive");
        total += weights[i];
    }
    if (std::fabs(total - 1.0) > 1e-12) throw InvalidArgument("Grid sigma prior: weights must sum to 1");
    SigmaPrior p(Family::Grid);
    p.values_ = std::move(values);
    p.weights_ = std::move(weights);
    return p;
}

std::string SigmaPrior::describe() const {
    std::ostringstream os;
    switch (family_) {
        case Family::LogNormal: os << "lognormal(" << p1_ << "," << p2_ << ")"; break;
        case Family::InverseGammaOnVariance: os << "inverse_gamma(" << p1_ << "," << p2_ << ")"; break;
        case Family::Grid: os << "grid(" << values_.size() << " atoms)"; break;
    }
    return os.str();
}

double SigmaPrior::sample(Rng& rng) const {
    switch (family_) {
        case Family::LogNormal: return std::exp(p1_ + p2_ * rng.normal());
        case Family::InverseGammaOnVariance: return std::sqrt(p2_ / gamma_draw(rng, p1_));
        case Family::Grid: {
            double u = rng.uniform(), acc = 0.0;
            for (std::size_t i = 0; i < values_.size(); ++i) {
                acc += weights_[i];
                if (u < acc) return values_[i];
            }
            return values_.back();
        }
    }
    return 0.0;
}

double SigmaPrior::sample(std::uint64_t seed) const {
    Rng rng(seed);
    return sample(rng);
}

double SigmaPrior::interval_mass(double lo, double hi) const {
    if (!(hi >= lo)) return 0.0;
    switch (family_) {
        case Family::LogNormal: {
            const double a = lo > 0.0 ? normal_cdf((std::log(lo) - p1_) / p2_) : 0.0;
            const double b = std::isinf(hi) ? 1.0 : normal_cdf((std::log(hi) - p1_) / p2_);
            return b - a;
        }
        case Family::InverseGammaOnVariance: {
            // P(sigma <= h) = P(1/sigma^2 >= 1/h^2) = Q(shape, rate / h^2)
            auto cdf = [&](double h) {
                if (h <= 0.0) return 0.0;
                if (std::isinf(h)) return 1.0;
                return boost::math::gamma_q(p1_, p2_ / (h * h));
            };
            return cdf(hi) - cdf(lo);
        }
        case Family::Grid: {
            double m = 0.0;
            for (std::size_t i = 0; i < values_.size(); ++i)
                if (values_[i] >= lo && values_[i] <= hi) m += weights_[i];
            return m;
        }
    }
    return 0.0;
}

double SigmaPrior::log_density_log_sigma(double t) const {
    switch (family_) {
        case Family::LogNormal: {
            const double z = (t - p1_) / p2_;
            return -0.5 * z * z - std::log(p2_) - kLogSqrt2Pi;
        }
        case Family::InverseGammaOnVariance: {
            const double v = std::exp(2.0 * t);
            return p1_ * std::log(p2_) - std::lgamma(p1_) - p1_ * std::log(v) - p2_ / v + std::numbers::ln2;
        }
        case Family::Grid:
            throw UnsupportedCombination("grid sigma prior has no density on log sigma");
    }
    return 0.0;
}

std::pair<double, double> sigma_band(double beta, double n) {
    if (!(beta > 0.0) || !(n >= 1.0)) throw InvalidArgument("sigma_band: need beta > 0 and n >= 1");
    const double e = std::pow(beta * n, 0.25);
    return {std::exp(-e), std::exp(e)};
}

BandMass sigma_prior_band_mass(const SigmaPrior& prior, double n, double beta) {
    const auto [lo, hi] = sigma_band(beta, n);
    return {prior.interval_mass(lo, hi), 0.0, false};
}

BandMass sigma_prior_band_mass_mc(const SigmaPrior& prior, double n, double beta, std::size_t draws,
                                  std::uint64_t seed) {
    if (draws == 0) throw InvalidArgument("sigma_prior_band_mass_mc: draws must be >= 1");
    const auto [lo, hi] = sigma_band(beta, n);
    std::size_t hits = 0;
    Rng rng(seed);
    for (std::size_t i = 0; i < draws; ++i) {
        const double s = prior.sample(rng);
        if (s >= lo && s <= hi) ++hits;
    }
    const double p = static_cast<double>(hits) / static_cast<double>(draws);
    return {p, std::sqrt(p * (1.0 - p) / static_cast<double>(draws)), true};
}

}  // namespace postcon
