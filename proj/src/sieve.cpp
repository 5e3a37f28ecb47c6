#include "postcon/sieve.hpp"

#include <cmath>
#include <variant>

#include "postcon/errors.hpp"
#include "postcon/kernels.hpp"

namespace postcon {

namespace {

/// Certified sup-norm bound where the representation gives one.
SieveCheck sup_check(const RegressionFunction& f, std::string quantity, double T, int resolution) {
    SieveCheck c;
    c.quantity = std::move(quantity);
    c.lo = 0.0;
    c.hi = T;
    const auto r = sup_norm(f, resolution > 0 ? resolution : 2);
    if (std::isfinite(r.certified_upper)) {
        c.value = r.certified_upper;
    } else {
        c.value = sup_norm(f, resolution).value;
        c.approximate = true;
    }
    c.passed = c.value <= T;
    return c;
}

}  // namespace

SieveSpec sieve_thresholds(double beta, double n) {
    if (!(beta > 0.0) || !(n >= 1.0)) throw InvalidArgument("sieve_thresholds: need beta > 0 and n >= 1");
    SieveSpec s;
    s.beta = beta;
    s.n = n;
    const double e = std::pow(beta * n, 0.25);
    s.T = std::exp(e);
    s.sigma_lo = std::exp(-e);
    s.sigma_hi = s.T;
    return s;
}

SieveMembership sieve_member(const Theta& theta, const SieveSpec& spec, int resolution) {
    SieveMembership m;
    m.evidence.push_back(sup_check(theta.eta, "sup|eta|", spec.T, resolution));
    for (int j = 0; j < theta.eta.domain().dim(); ++j) {
        const std::string name = "sup|d eta/dx_" + std::to_string(j + 1) + "|";
        try {
            m.evidence.push_back(sup_check(partial_derivative(theta.eta, j), name, spec.T, resolution));
        } catch (const NotDifferentiable& e) {
            m.status = SieveMembership::Status::Indeterminate;
            m.note = name + ": " + e.what();
        }
    }
    SieveCheck s;
    s.quantity = "sigma";
    s.value = theta.sigma;
    s.lo = spec.sigma_lo;
    s.hi = spec.sigma_hi;
    s.passed = theta.sigma >= spec.sigma_lo && theta.sigma <= spec.sigma_hi;
    m.evidence.push_back(s);

    bool all = true;
    for (const auto& c : m.evidence) all = all && c.passed;
    // a failed check is decisive even when another one could not be evaluated
    if (!all)
        m.status = SieveMembership::Status::NotMember;
    else if (m.status != SieveMembership::Status::Indeterminate)
        m.status = SieveMembership::Status::Member;
    return m;
}

SieveMassReport prior_sieve_complement_mass(const CoefficientPrior& prior, const SigmaPrior& sigma_prior,
                                            const SieveSpec& spec, std::size_t draws, std::uint64_t seed) {
    if (draws < 10000) throw InvalidArgument("prior_sieve_complement_mass: need at least 1e4 draws");
    const auto& terms = prior.basis()->terms();
    const int d = prior.basis()->dim();
    const std::size_t K = terms.size();
    // amplitude of psi_k and of d psi_k / d x_j
    std::vector<double> amp(K);
    std::vector<std::vector<double>> damp(static_cast<std::size_t>(d), std::vector<double>(K));
    for (std::size_t k = 0; k < K; ++k) {
        amp[k] = std::fabs(terms[k].amplitude);
        for (int j = 0; j < d; ++j)
            damp[static_cast<std::size_t>(j)][k] = std::fabs(terms[k].amplitude * terms[k].freq[static_cast<std::size_t>(j)]);
    }

    const std::size_t nb = kernels::block_count(draws);
    std::vector<std::size_t> fails(nb, 0), sigma_fails(nb, 0);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t b = 0; b < static_cast<std::ptrdiff_t>(nb); ++b) {
        const std::size_t lo = static_cast<std::size_t>(b) * kernels::kBlock;
        const std::size_t hi = std::min(draws, lo + kernels::kBlock);
        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(b)));
        for (std::size_t i = lo; i < hi; ++i) {
            const auto w = prior.sample_coefficients(rng);
            const double sigma = sigma_prior.sample(rng);
            double sup = std::fabs(prior.offset());
            for (std::size_t k = 0; k < K; ++k) sup += std::fabs(w[k]) * amp[k];
            bool inside = sup <= spec.T;
            for (int j = 0; j < d && inside; ++j) {
                double ds = 0.0;
                for (std::size_t k = 0; k < K; ++k) ds += std::fabs(w[k]) * damp[static_cast<std::size_t>(j)][k];
                inside = ds <= spec.T;
            }
            const bool sigma_in = sigma >= spec.sigma_lo && sigma <= spec.sigma_hi;
            if (!sigma_in) ++sigma_fails[static_cast<std::size_t>(b)];
            if (!(inside && sigma_in)) ++fails[static_cast<std::size_t>(b)];
        }
    }
    std::size_t f = 0, sf = 0;
    for (std::size_t b = 0; b < nb; ++b) {
        f += fails[b];
        sf += sigma_fails[b];
    }
    SieveMassReport r;
    r.spec = spec;
    r.draws = draws;
    const double n = static_cast<double>(draws);
    r.estimate = static_cast<double>(f) / n;
    r.std_error = std::sqrt(r.estimate * (1.0 - r.estimate) / n);
    r.sigma_failure = static_cast<double>(sf) / n;
    r.zero_failures = f == 0;
    if (r.zero_failures) r.upper_bound = 3.0 / n;
    return r;
}

nlohmann::json to_json(const SieveMassReport& r) {
    nlohmann::json j;
    j["beta"] = r.spec.beta;
    j["n"] = r.spec.n;
    j["T"] = r.spec.T;
    j["sigma_band"] = {r.spec.sigma_lo, r.spec.sigma_hi};
    j["estimate"] = r.estimate;
    j["stderr"] = r.std_error;
    j["draws"] = r.draws;
    j["sigma_failure"] = r.sigma_failure;
    if (r.zero_failures) j["upper_bound_95"] = r.upper_bound;
    return j;
}

}  // namespace postcon
