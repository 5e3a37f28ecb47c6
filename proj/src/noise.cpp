#include "postcon/noise.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "postcon/errors.hpp"
#include "postcon/kernels.hpp"
#include "postcon/quadrature.hpp"
#include "postcon/rng.hpp"

namespace postcon {

namespace {

constexpr double kLogSqrt2Pi = 0.91893853320467274178;  // log(2 pi) / 2
constexpr std::size_t kCdfCells = 1u << 18;

}  // namespace

// ------------------------------------------------------------- StandardPhi

StandardPhi::StandardPhi(std::string name, std::function<double(double)> log_phi, double lipschitz, double radius)
    : name_(std::move(name)), log_phi_(std::move(log_phi)), lipschitz_(lipschitz), radius_(radius) {
    if (!(radius_ > 0.0)) throw InvalidModel("StandardPhi: radius must be positive");
    for (int i = 0; i <= 400; ++i) {
        const double z = radius_ * i / 400.0;
        const double a = log_phi_(z), b = log_phi_(-z);
        if (std::fabs(a - b) > 1e-12 * std::max(1.0, std::fabs(a)))
            throw InvalidModel("StandardPhi " + name_ + ": phi is not symmetric about zero");
    }
    // CDF on a uniform grid by 4-point Gauss-Legendre per cell
    const auto gl = quadrature::gauss_legendre(4);
    auto cdf = std::make_shared<std::vector<double>>(kCdfCells + 1);
    const double h = 2.0 * radius_ / kCdfCells;
    kernels::CompensatedSum acc;
    (*cdf)[0] = 0.0;
    for (std::size_t c = 0; c < kCdfCells; ++c) {
        const double mid = -radius_ + (c + 0.5) * h;
        double cell = 0.0;
        for (int k = 0; k < 4; ++k) cell += gl.weights[k] * std::exp(log_phi_(mid + 0.5 * h * gl.nodes[k]));
        acc.add(0.5 * h * cell);
        (*cdf)[c + 1] = acc.value();
    }
    mass_ = cdf->back();
    if (!(std::fabs(mass_ - 1.0) <= 1e-8))
        throw InvalidModel("StandardPhi " + name_ + ": density integrates to " + std::to_string(mass_) +
                           " on the truncated range, not 1");
    cdf_ = std::move(cdf);
}

StandardPhi StandardPhi::normal() {
    // Not globally Lipschitz; L reports the slope at the truncation radius.
    return StandardPhi("normal", [](double z) { return -kLogSqrt2Pi - 0.5 * z * z; }, 40.0, 40.0);
}

StandardPhi StandardPhi::laplace() {
    return StandardPhi("laplace", [](double z) { return -std::numbers::ln2 - std::fabs(z); }, 1.0, 40.0);
}

StandardPhi StandardPhi::logistic() {
    return StandardPhi(
        "logistic",
        [](double z) {
            const double a = std::fabs(z);
            return -a - 2.0 * std::log1p(std::exp(-a));
        },
        1.0, 40.0);
}

StandardPhi StandardPhi::hyperbolic_secant() {
    return StandardPhi(
        "hyperbolic_secant",
        [](double z) {
            // log(sech(t)/2) = -t - log(1 + e^{-2t}), t = pi |z| / 2
            const double t = 0.5 * std::numbers::pi * std::fabs(z);
            return -t - std::log1p(std::exp(-2.0 * t));
        },
        std::numbers::pi / 2, 40.0);
}

StandardPhi StandardPhi::by_name(const std::string& name) {
    if (name == "normal") return normal();
    if (name == "laplace") return laplace();
    if (name == "logistic") return logistic();
    if (name == "hyperbolic_secant") return hyperbolic_secant();
    throw InvalidArgument("unknown phi family: " + name);
}

double StandardPhi::phi(double z) const { return std::exp(log_phi_(z)); }

double StandardPhi::quantile(double u) const {
    const auto& cdf = *cdf_;
    const double target = u * mass_;
    auto it = std::upper_bound(cdf.begin(), cdf.end(), target);
    std::size_t i = it == cdf.begin() ? 0 : static_cast<std::size_t>(it - cdf.begin()) - 1;
    i = std::min(i, kCdfCells - 1);
    const double h = 2.0 * radius_ / kCdfCells;
    const double span = cdf[i + 1] - cdf[i];
    const double t = span > 0.0 ? (target - cdf[i]) / span : 0.5;
    return -radius_ + (static_cast<double>(i) + std::clamp(t, 0.0, 1.0)) * h;
}

// -------------------------------------------------------------- NoiseModel

NoiseModel::NoiseModel(Family f, double sigma, std::shared_ptr<const StandardPhi> phi)
    : family_(f), scale_(sigma), phi_(std::move(phi)) {
    if (!(sigma > 0.0) || !std::isfinite(sigma)) throw InvalidArgument("NoiseModel: scale must be positive");
}

NoiseModel NoiseModel::normal(double sigma) {
    static const auto phi = std::make_shared<const StandardPhi>(StandardPhi::normal());
    return NoiseModel(Family::Normal, sigma, phi);
}

NoiseModel NoiseModel::laplace(double sigma) {
    static const auto phi = std::make_shared<const StandardPhi>(StandardPhi::laplace());
    return NoiseModel(Family::Laplace, sigma, phi);
}

NoiseModel NoiseModel::general(StandardPhi phi, double sigma) {
    return NoiseModel(Family::General, sigma, std::make_shared<const StandardPhi>(std::move(phi)));
}

std::string NoiseModel::family_name() const {
    switch (family_) {
        case Family::Normal: return "normal";
        case Family::Laplace: return "laplace";
        default: return "general:" + phi_->name();
    }
}

NoiseModel NoiseModel::with_scale(double sigma) const { return NoiseModel(family_, sigma, phi_); }

double NoiseModel::log_phi(double z) const {
    switch (family_) {
        case Family::Normal: return -kLogSqrt2Pi - 0.5 * z * z;
        case Family::Laplace: return -std::numbers::ln2 - std::fabs(z);
        default: return phi_->log_phi(z);
    }
}

double NoiseModel::log_density(double residual) const { return log_phi(residual / scale_) - std::log(scale_); }

double NoiseModel::density(double residual) const { return std::exp(log_density(residual)); }

std::vector<double> NoiseModel::sample(std::size_t n, std::uint64_t seed) const {
    if (n == 0) throw InvalidArgument("NoiseModel::sample: n must be >= 1");
    std::vector<double> out(n);
    Rng rng(seed);
    switch (family_) {
        case Family::Normal:
            for (double& e : out) e = scale_ * rng.normal();
            break;
        case Family::Laplace:
            for (double& e : out) e = scale_ * rng.laplace();
            break;
        default:
            for (double& e : out) e = scale_ * phi_->quantile(rng.uniform_open());
    }
    return out;
}

// ------------------------------------------------------- moments/constants

double laplace_abs_moment(double delta, double sigma0) {
    if (!(sigma0 > 0.0)) throw InvalidArgument("laplace_abs_moment: sigma0 must be positive");
    const double a = std::fabs(delta);
    return a + sigma0 * std::exp(-a / sigma0);
}

double phi_entropy_constant(const NoiseModel& model) {
    switch (model.family()) {
        case NoiseModel::Family::Normal: return -kLogSqrt2Pi - 0.5;
        case NoiseModel::Family::Laplace: return -std::numbers::ln2 - 1.0;
        default: return phi_entropy_constant_quadrature(model);
    }
}

double phi_entropy_constant_quadrature(const NoiseModel& model) {
    const double r = model.phi().radius();
    const double bp[] = {0.0};
    const auto est = quadrature::integrate_interval(
        [&](double z) {
            const double lp = model.log_phi(z);
            return lp * std::exp(lp);
        },
        -r, r, bp, 1e-10);
    return est.value;
}

ExpectedLogPhi expected_log_phi_quadrature(const NoiseModel& truth, double delta, double sigma, double abs_tol) {
    if (!(sigma > 0.0)) throw InvalidArgument("expected_log_phi: sigma must be positive");
    const double s0 = truth.scale();
    const double r = truth.phi().radius();
    // kinks of phi(z) at 0 and of log phi((s0 z + delta)/sigma) at z = -delta/s0
    const double bp[] = {0.0, -delta / s0};
    const auto est = quadrature::integrate_interval(
        [&](double z) { return truth.log_phi((s0 * z + delta) / sigma) * std::exp(truth.log_phi(z)); }, -r, r, bp,
        abs_tol);
    return {est.value, est.error};
}

double expected_log_phi(const NoiseModel& truth, double delta, double sigma, bool closed_form) {
    if (!(sigma > 0.0)) throw InvalidArgument("expected_log_phi: sigma must be positive");
    const double s0 = truth.scale();
    if (closed_form && truth.family() == NoiseModel::Family::Normal)
        return -kLogSqrt2Pi - (s0 * s0 + delta * delta) / (2.0 * sigma * sigma);
    if (closed_form && truth.family() == NoiseModel::Family::Laplace)
        return -std::numbers::ln2 - laplace_abs_moment(delta, s0) / sigma;
    return expected_log_phi_quadrature(truth, delta, sigma).value;
}

// -------------------------------------------------------------- diagnostics

LipschitzReport lipschitz_check(const StandardPhi& phi, std::size_t probes) {
    LipschitzReport r;
    const double R = phi.radius();
    std::vector<double> z(probes), lp(probes);
    for (std::size_t i = 0; i < probes; ++i) {
        z[i] = -R + 2.0 * R * static_cast<double>(i) / static_cast<double>(probes - 1);
        lp[i] = phi.log_phi(z[i]);
    }
    // adjacent pairs bound the ratio over all pairs for piecewise-smooth log phi
    for (std::size_t i = 1; i < probes; ++i)
        r.max_ratio = std::max(r.max_ratio, std::fabs(lp[i] - lp[i - 1]) / (z[i] - z[i - 1]));
    // plus a sweep of long-range pairs
    for (std::size_t i = 0; i < probes; i += 37)
        for (std::size_t j = i + 1; j < probes; j += 53)
            r.max_ratio = std::max(r.max_ratio, std::fabs(lp[j] - lp[i]) / (z[j] - z[i]));
    r.holds = r.max_ratio <= phi.lipschitz() * (1.0 + 1e-9);
    return r;
}

MgfReport subexponential_mgf_check(const NoiseModel& truth, double eta_x, double eta0_x, double sup_distance,
                                   double sigma, const std::vector<double>& lambdas, const MgfCheckOptions& opt) {
    if (!(sigma > 0.0)) throw InvalidArgument("subexponential_mgf_check: sigma must be positive");
    MgfReport rep;
    rep.c1 = opt.c1;
    rep.c2 = opt.c2;
    rep.sup_distance = sup_distance;
    const double delta = eta0_x - eta_x;
    const double s0 = truth.scale();
    rep.g_value = expected_log_phi(truth, delta, sigma);
    auto s_of = [&](double c1, double c2) { return (c1 * sup_distance + c2) / sigma; };
    rep.s = s_of(opt.c1, opt.c2);

    // common random numbers across lambda: every row reuses the same seed
    std::vector<kernels::MonteCarloMoments> mc;
    for (double lam : lambdas) {
        mc.push_back(kernels::mc_moments(opt.draws, opt.seed, [&](Rng& rng) {
            double z;
            switch (truth.family()) {
                case NoiseModel::Family::Normal: z = rng.normal(); break;
                case NoiseModel::Family::Laplace: z = rng.laplace(); break;
                default: z = truth.phi().quantile(rng.uniform_open());
            }
            const double u = truth.log_phi((s0 * z + delta) / sigma) - rep.g_value;
            return std::exp(lam * u);
        }));
    }

    auto row_holds = [](double est, double se, double bound) { return est <= bound + 3.0 * se; };

    bool inconclusive = false, violated = false;
    for (std::size_t i = 0; i < lambdas.size(); ++i) {
        MgfRow row;
        row.lambda = lambdas[i];
        row.estimate = mc[i].mean;
        row.std_error = mc[i].standard_error();
        row.admissible = std::fabs(row.lambda) <= 1.0 / rep.s;
        row.bound = std::exp(0.5 * row.lambda * row.lambda * rep.s * rep.s);
        row.holds = !row.admissible || row_holds(row.estimate, row.std_error, row.bound);
        if (row.admissible && row.estimate > 0 && row.std_error / row.estimate > opt.max_relative_se)
            inconclusive = true;
        else if (!row.holds)
            violated = true;
        rep.rows.push_back(row);
    }
    rep.status = violated ? MgfReport::Status::Violated
                          : (inconclusive ? MgfReport::Status::Inconclusive : MgfReport::Status::Holds);

    static constexpr double kGrid[] = {0.25, 0.5, 1.0, 2.0, 4.0};
    double best = std::numeric_limits<double>::infinity();
    for (double c1 : kGrid)
        for (double c2 : kGrid) {
            const double s = s_of(c1, c2);
            bool any = false, ok = true;
            for (std::size_t i = 0; i < lambdas.size() && ok; ++i) {
                if (std::fabs(lambdas[i]) > 1.0 / s) continue;
                if (lambdas[i] != 0.0) any = true;
                ok = row_holds(mc[i].mean, mc[i].standard_error(), std::exp(0.5 * lambdas[i] * lambdas[i] * s * s));
            }
            if (ok && any && c1 + c2 < best) {
                best = c1 + c2;
                rep.smallest_passing = std::make_pair(c1, c2);
            }
        }
    return rep;
}

MgfReport subexponential_mgf_check(const NoiseModel& truth, const RegressionFunction& eta,
                                   const RegressionFunction& eta0, double sigma, std::span<const double> x,
                                   const std::vector<double>& lambdas, const MgfCheckOptions& opt) {
    const auto& dom = eta.domain();
    const int m = default_sup_resolution(dom.dim());
    // sup |eta - eta0| on the dense grid, plus the discontinuity positions themselves
    std::size_t total = 1;
    for (int j = 0; j < dom.dim(); ++j) total *= static_cast<std::size_t>(m);
    double sup = 0.0;
    std::vector<double> p(static_cast<std::size_t>(dom.dim()));
    for (std::size_t t = 0; t < total; ++t) {
        std::size_t rem = t;
        for (int j = dom.dim() - 1; j >= 0; --j) {
            const auto i = rem % static_cast<std::size_t>(m);
            rem /= static_cast<std::size_t>(m);
            p[static_cast<std::size_t>(j)] = dom.axis(j).lo + dom.axis(j).width() * static_cast<double>(i) / (m - 1);
        }
        sup = std::max(sup, std::fabs(eta.value(p) - eta0.value(p)));
    }
    return subexponential_mgf_check(truth, eta(x), eta0(x), sup, sigma, lambdas, opt);
}

A9Report a9_integrability_check(const NoiseModel& truth, double sigma, std::optional<double> c3) {
    if (!(sigma > 0.0)) throw InvalidArgument("a9_integrability_check: sigma must be positive");
    const double ratio = truth.scale() / sigma;
    const double R = truth.phi().radius();
    const double bp[] = {0.0};
    auto at_radius = [&](double r) {
        const double a = quadrature::integrate_interval(
                             [&](double z) { return std::fabs(truth.log_phi(ratio * z)) * std::exp(truth.log_phi(z)); },
                             -r, r, bp, 1e-10)
                             .value;
        const double b =
            quadrature::integrate_interval([&](double z) { return std::fabs(z) * std::exp(truth.log_phi(z)); }, -r, r,
                                           bp, 1e-10)
                .value;
        return std::pair{a, b};
    };
    const auto inner = at_radius(0.75 * R);
    const auto full = at_radius(R);
    A9Report rep;
    rep.log_phi_integral = full.first;
    rep.abs_moment = full.second;
    rep.c3_required = sigma * full.first;
    rep.stable = std::fabs(full.first - inner.first) <= 1e-8 * std::max(1.0, std::fabs(full.first)) &&
                 std::fabs(full.second - inner.second) <= 1e-8 * std::max(1.0, std::fabs(full.second));
    if (c3) rep.envelope_holds = full.first <= *c3 / sigma;
    return rep;
}

}  // namespace postcon
