#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "postcon/gp_prior.hpp"
#include "postcon/kl_rate.hpp"

namespace postcon {

/// Sieve G_n = { (eta, sigma) : ||eta|| <= T, ||d eta / d x_j|| <= T for all j,
/// 1/T <= sigma <= T } with T = exp((beta n)^{1/4}).
struct SieveSpec {
    double beta = 1.0;
    double n = 1.0;
    double T = 1.0;
    double sigma_lo = 1.0;
    double sigma_hi = 1.0;
};

SieveSpec sieve_thresholds(double beta, double n);

struct SieveCheck {
    std::string quantity;  // "sup|eta|", "sup|d eta/dx_1|", ..., "sigma"
    double value = 0.0;
    double lo = 0.0;
    double hi = 0.0;
    bool passed = false;
    /// True when the value is a dense-grid lower bound rather than a certified bound.
    bool approximate = false;
};

struct SieveMembership {
    enum class Status { Member, NotMember, Indeterminate };
    Status status = Status::Member;
    std::vector<SieveCheck> evidence;
    std::string note;  // reason for Indeterminate
    bool member() const { return status == Status::Member; }
};

/// Membership with one evidence row per check. Sup-norms use the certified
/// bound (basis expansions, grid functions, closed forms) when finite, else
/// the dense-grid value with `approximate` set. A non-differentiable eta
/// makes the result Indeterminate.
SieveMembership sieve_member(const Theta& theta, const SieveSpec& spec, int resolution = 0);

struct SieveMassReport {
    SieveSpec spec;
    std::size_t draws = 0;
    double estimate = 0.0;
    double std_error = 0.0;
    /// One-sided 95% upper bound 3/draws, set when no draw fails.
    double upper_bound = 0.0;
    bool zero_failures = false;
    /// Fraction of draws whose sigma alone falls outside the band.
    double sigma_failure = 0.0;
};

/// Fraction of prior draws (coefficient path, sigma) outside G_n. Draw i uses
/// generator derive_seed(seed, i / kBlock), so reports for different n with
/// the same seed share their draws and are therefore nested.
SieveMassReport prior_sieve_complement_mass(const CoefficientPrior& prior, const SigmaPrior& sigma_prior,
                                            const SieveSpec& spec, std::size_t draws, std::uint64_t seed);

/// {beta, n, T, sigma_band, estimate, stderr} plus draws and the sigma-only failure rate.
nlohmann::json to_json(const SieveMassReport& r);

}  // namespace postcon
