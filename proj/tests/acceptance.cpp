// Acceptance run: one PASS/FAIL line per criterion, each with its runtime
// budget. Exit status is nonzero when any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <numbers>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "postcon/errors.hpp"
#include "postcon/experiment.hpp"
#include "postcon/kl_rate.hpp"
#include "postcon/noise.hpp"
#include "postcon/posterior.hpp"
#include "postcon/sieve.hpp"

using namespace postcon;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

class Report {
public:
    void check(bool ok, const std::string& what) {
        pass_ = pass_ && ok;
        if (!detail_.empty()) detail_ += "; ";
        detail_ += (ok ? "" : "FAILED ") + what;
    }
    Outcome outcome() const { return {pass_, detail_}; }

private:
    bool pass_ = true;
    std::string detail_;
};

std::string fmt(double v, int digits = 6) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*g", digits, v);
    return buf;
}

const CompactDomain kUnit = CompactDomain::unit(1);

MeasureQ q_for(const RegressionFunction& eta0) {
    return MeasureQ::uniform(kUnit).with_discontinuities(eta0.discontinuities());
}

RegressionFunction random_eta(Rng& rng, std::size_t K = 4, double scale = 0.5) {
    std::vector<double> w(K);
    for (double& v : w) v = scale * (2.0 * rng.uniform() - 1.0);
    return RegressionFunction::expansion(kUnit, TrigBasis::cosine(kUnit, K), w);
}

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("postcon_acceptance_" + name);
    fs::remove_all(p);
    return p;
}

RunManifest run_stage(const std::string& scenario, Stage stage, ConfigOverrides extra = {}) {
    extra.emplace_back("output.dir", scratch(scenario + "_" + to_string(stage)).string());
    RunOptions opt;
    opt.stages = {stage};
    auto m = run_scenario(parse_config("scenario = " + scenario, extra), opt);
    if (!m.ok()) throw Error("scenario stage failed: " + m.error);
    return m;
}

// 1 ------------------------------------------------------------------------
Outcome closed_form_zero() {
    Report rep;
    const auto cosine = RegressionFunction::sine(kUnit, 0.5, 1.0, std::numbers::pi / 2);
    const auto step = RegressionFunction::step(kUnit, {0.5}, {0.0, 1.0});
    double worst_closed = 0.0, worst_general = 0.0;
    for (const auto& eta0 : {cosine, step}) {
        const auto q = q_for(eta0);
        const TrueModel nor{eta0, NoiseModel::normal(0.5)}, lap{eta0, NoiseModel::laplace(0.5)};
        const TrueModel logi{eta0, NoiseModel::general(StandardPhi::logistic(), 0.5)};
        worst_closed = std::max({worst_closed, std::fabs(h_normal({eta0, 0.5}, nor, q).h),
                                 std::fabs(h_laplace({eta0, 0.5}, lap, q).h)});
        for (const auto& t : {nor, lap, logi})
            worst_general = std::max(worst_general, std::fabs(h_general({eta0, 0.5}, t, q).h));
    }
    rep.check(worst_closed <= 1e-12, "max |h_normal|, |h_laplace| at theta0 = " + fmt(worst_closed));
    rep.check(worst_general <= 1e-6, "max |h_general| at theta0 = " + fmt(worst_general));
    return rep.outcome();
}

// 2 ------------------------------------------------------------------------
Outcome reduction_identities() {
    Report rep;
    Rng rng(20240602);
    const auto eta0 = RegressionFunction::sine(kUnit, 0.5, 1.0, std::numbers::pi / 2);
    const auto q = q_for(eta0);
    const TrueModel nor{eta0, NoiseModel::normal(0.5)}, lap{eta0, NoiseModel::laplace(0.5)};
    double dn = 0.0, dl = 0.0;
    for (int i = 0; i < 100; ++i) {
        const Theta a{random_eta(rng), 0.3 + 1.2 * rng.uniform()};
        dn = std::max(dn, std::fabs(h_general(a, nor, q).h - h_normal(a, nor, q).h));
        const Theta b{random_eta(rng), 0.3 + 1.2 * rng.uniform()};
        dl = std::max(dl, std::fabs(h_general(b, lap, q).h - h_laplace(b, lap, q).h));
    }
    rep.check(dn <= 1e-6, "max |h_general - h_normal| over 100 theta = " + fmt(dn));
    rep.check(dl <= 1e-6, "max |h_general - h_laplace| over 100 theta = " + fmt(dl));
    return rep.outcome();
}

// 3 ------------------------------------------------------------------------
Outcome equipartition() {
    Report rep;
    const double expected[] = {std::numbers::ln2 - 0.375, std::exp(-1.0)};
    const char* scenarios[] = {"well_specified_normal", "laplace_errors"};
    for (int s = 0; s < 2; ++s) {
        const auto m = run_stage(scenarios[s], Stage::Equipartition, {{"uniform.grid", "1"}});
        const auto& eq = m.summary["equipartition"];
        const double h = eq["h_theta"].get<double>();
        rep.check(std::fabs(h - expected[s]) <= 1e-12, std::string(scenarios[s]) + " h(theta) = " + fmt(h, 9));
        const auto& last = eq["by_n"].back();
        const double gap = last["mean_gap"].get<double>();
        rep.check(last["n"].get<std::size_t>() == 50000 && std::fabs(gap) <= 0.01,
                  "mean gap at n=50000 = " + fmt(gap, 3));
        std::string med;
        for (const auto& row : eq["by_n"]) med += (med.empty() ? "" : " > ") + fmt(row["median_abs_gap"].get<double>(), 3);
        rep.check(eq["median_abs_gap_strictly_decreasing"].get<bool>(), "median |gap| " + med);
    }
    rep.check(std::fabs(expected[0] - 0.318147) <= 1e-6 && std::fabs(expected[1] - 0.367879) <= 1e-6,
              "targets 0.318147 and 0.367879");
    return rep.outcome();
}

// 4 ------------------------------------------------------------------------
Outcome posterior_rate() {
    Report rep;
    const auto m = run_stage("well_specified_normal", Stage::Rate);
    const auto& r = m.summary["rate"];
    const double J = r["J"].get<double>(), slope = r["mean_slope"].get<double>();
    rep.check(std::fabs(J - 0.5) <= 1e-9, "J(A) = " + fmt(J, 9));
    rep.check(slope >= -0.55 && slope <= -0.45, "mean LS slope over n in [1e3, 1e4], 20 replicates = " + fmt(slope, 4));
    return rep.outcome();
}

// 5 ------------------------------------------------------------------------
Outcome sigma_profile() {
    Report rep;
    Rng rng(55);
    const auto eta0 = RegressionFunction::sine(kUnit, 0.5, 1.0, std::numbers::pi / 2);
    const auto q = q_for(eta0);
    const double s0 = 0.5;
    const TrueModel nor{eta0, NoiseModel::normal(s0)}, lap{eta0, NoiseModel::laplace(s0)};
    std::vector<double> grid(100);
    for (int g = 0; g < 100; ++g) grid[static_cast<std::size_t>(g)] = 0.05 * std::pow(100.0, g / 99.0);
    double worst_n = -1.0, worst_l = -1.0, golden = 0.0;
    for (int i = 0; i < 20; ++i) {
        const auto eta = random_eta(rng, 6, 0.6);
        const double m = l2q_distance_sq(eta, eta0, q).value;
        const double sn = std::sqrt(s0 * s0 + m);
        const double sl = q_expectation(q, [&](auto x) { return laplace_abs_moment(eta0(x) - eta(x), s0); }).value;
        const double hn = h_normal({eta, sn}, nor, q).h, hl = h_laplace({eta, sl}, lap, q).h;
        for (double s : grid) {
            worst_n = std::max(worst_n, hn - h_normal({eta, s}, nor, q).h);
            worst_l = std::max(worst_l, hl - h_laplace({eta, s}, lap, q).h);
        }
        const double sg = oracle::golden_min([&](double s) { return h_laplace({eta, s}, lap, q).h; }, 0.05, 5.0, 1e-10);
        golden = std::max(golden, std::fabs(sg - sl) / sl);
    }
    rep.check(worst_n <= 1e-10, "Normal: max h(sigma*) - h(grid sigma) = " + fmt(worst_n, 3));
    rep.check(worst_l <= 1e-10, "Laplace: max h(sigma*) - h(grid sigma) = " + fmt(worst_l, 3));
    rep.check(golden <= 1e-6, "Laplace sigma* vs golden-section minimizer, rel = " + fmt(golden, 3));
    return rep.outcome();
}

/// Residual of the L2 projection of 1{x >= b} on span{cos(pi k x), k < K}.
double step_projection_residual(double b, std::size_t K) {
    double m = (1.0 - b) - (1.0 - b) * (1.0 - b);
    for (std::size_t k = 1; k < K; ++k) {
        const double ck = -2.0 * std::sin(std::numbers::pi * static_cast<double>(k) * b) /
                          (std::numbers::pi * static_cast<double>(k));
        m -= 0.5 * ck * ck;
    }
    return m;
}

// 6 ------------------------------------------------------------------------
Outcome misspecified_predictive() {
    Report rep;
    const auto cfg = parse_config("scenario = step_truth_normal");
    rep.check(cfg.prior.K >= 32 && cfg.truth.eta0 == "step" && cfg.replicates == 20,
              "K = " + std::to_string(cfg.prior.K) + ", " + std::to_string(cfg.replicates) + " replicates");
    const double m_star = step_projection_residual(cfg.truth.breakpoint, cfg.prior.K) *
                          std::pow(cfg.truth.high - cfg.truth.low, 2);
    const double h_theta = 0.5 * std::log1p(m_star / (cfg.truth.sigma0 * cfg.truth.sigma0));
    const auto m = run_stage("step_truth_normal", Stage::Predictive);
    const auto& p = m.summary["predictive"];
    rep.check(std::fabs(p["h_inf"].get<double>() - h_theta) <= 1e-6,
              "h(Theta_K) = " + fmt(h_theta) + " (pipeline " + fmt(p["h_inf"].get<double>()) + ")");
    std::vector<double> rho;
    std::string trace;
    for (const auto& row : p["by_n"]) {
        rho.push_back(row["median_hellinger"].get<double>());
        trace += (trace.empty() ? "" : " > ") + fmt(rho.back(), 3) + "@" + std::to_string(row["n"].get<std::size_t>());
    }
    bool decreasing = rho.size() == 3;
    for (std::size_t i = 1; i < rho.size(); ++i) decreasing = decreasing && rho[i] < rho[i - 1];
    rep.check(decreasing, "median rho_H " + trace);
    const double big = p["by_n"].back()["median_hellinger_sq"].get<double>();
    rep.check(big <= h_theta + 0.05, "median rho_H^2 at n=2000 = " + fmt(big, 3) + " <= " + fmt(h_theta + 0.05, 3));
    return rep.outcome();
}

// 7 ------------------------------------------------------------------------
Outcome mcmc_oracles() {
    Report rep;
    {
        const TrueModel t{RegressionFunction::constant(kUnit, 0.4), NoiseModel::normal(1.0)};
        const auto d = simulate(t, make_design(kUnit, DesignKind::IidFromQ, 50, 5), 105);
        GpSpec gp;
        gp.kernel.amplitude = 2.0;
        const auto prior = CoefficientPrior::from_gp(gp, kUnit, 1);
        ChainConfig cfg;
        cfg.fix_sigma = 1.0;
        cfg.length = 40000;
        cfg.thin = 1;
        const auto smp = mcmc_posterior(prior, SigmaPrior::log_normal(0, 1), d, t.noise, cfg, 7);
        const double s2 = prior.prior_sd()[0] * prior.prior_sd()[0];
        const double prec = 50.0 + 1.0 / s2;
        const double closed = std::accumulate(d.y.begin(), d.y.end(), 0.0) / prec;
        std::vector<double> w;
        for (const auto& dr : smp.draws) w.push_back(dr.w[0]);
        const double mean = std::accumulate(w.begin(), w.end(), 0.0) / static_cast<double>(w.size());
        const double ess = effective_sample_size(w);
        const double tol = 3.0 / std::sqrt(prec) / std::sqrt(ess);
        rep.check(std::fabs(mean - closed) <= tol,
                  "conjugate mean error " + fmt(std::fabs(mean - closed), 3) + " <= " + fmt(tol, 3) + " (ESS " +
                      fmt(ess, 4) + ")");
    }
    {
        const TrueModel t{RegressionFunction::zero(kUnit), NoiseModel::normal(1.0)};
        const auto d = simulate(t, make_design(kUnit, DesignKind::IidFromQ, 20, 6), 106);
        const auto prior = CoefficientPrior::from_gp(GpSpec{}, kUnit, 1);
        const std::vector<double> sig{0.7, 1.0, 1.4}, pw{0.3, 0.4, 0.3};
        ChainConfig cfg;
        cfg.fix_coefficients = std::vector<double>{0.0};
        cfg.length = 60000;
        cfg.burnin = 1000;
        cfg.thin = 1;
        const auto smp = mcmc_posterior(prior, SigmaPrior::grid(sig, pw), d, t.noise, cfg, 11);
        std::vector<Theta> atoms;
        for (double s : sig) atoms.push_back({prior.function({0.0}), s});
        const auto exact = discrete_posterior(DiscreteThetaSpace(atoms, pw, {0, 0, 0}), d, t.noise, t);
        std::vector<double> freq(3, 0.0);
        for (const auto& dr : smp.draws)
            for (std::size_t k = 0; k < 3; ++k)
                if (dr.sigma == sig[k]) freq[k] += 1.0 / static_cast<double>(smp.draws.size());
        double tv = 0.0;
        for (std::size_t k = 0; k < 3; ++k) tv += 0.5 * std::fabs(freq[k] - exact.weights[k]);
        rep.check(tv <= 0.05, "3-atom sigma marginal TV = " + fmt(tv, 3));
    }
    return rep.outcome();
}

// 8 ------------------------------------------------------------------------
Outcome sieve_and_tails() {
    Report rep;
    Rng rng(808);
    const auto basis = TrigBasis::cosine(kUnit, 6);
    std::size_t violations = 0, members = 0;
    for (int t = 0; t < 1000; ++t) {
        std::vector<double> w(6);
        for (double& v : w) v = 0.8 * rng.normal();
        const Theta theta{RegressionFunction::expansion(kUnit, basis, w), std::exp(1.5 * rng.normal())};
        bool prev = false;
        for (double n = 1.0; n <= 40.0; n += 1.0) {
            const bool here = sieve_member(theta, sieve_thresholds(0.5, n)).member();
            violations += prev && !here;
            members += here;
            prev = here;
        }
    }
    rep.check(violations == 0 && members > 0,
              "nesting violations over 1000 theta x 40 n: " + std::to_string(violations));

    const auto cfg = parse_config("");
    const auto prior = cfg.coefficient_prior();
    std::vector<double> est;
    std::string trace;
    for (double n : cfg.sieve_n) {
        est.push_back(prior_sieve_complement_mass(prior, cfg.sigma_prior(), sieve_thresholds(cfg.sieve_beta, n), cfg.sieve_draws, 8).estimate);
        trace += (trace.empty() ? "" : " >= ") + fmt(est.back(), 4);
    }
    rep.check(est[1] <= est[0] && est[2] <= est[1] && est[0] > 0.0, "prior mass outside G_n " + trace);

    const auto mc = sigma_prior_band_mass_mc(SigmaPrior::log_normal(0.0, 1.0), 1.0, 1.0, 1000000, 81);
    const double target = oracle::std_normal_cdf(1.0) - oracle::std_normal_cdf(-1.0);
    rep.check(std::fabs(mc.mass - target) <= 0.003 && std::fabs(target - 0.6827) <= 1e-4,
              "LogNormal(0,1) band mass " + fmt(mc.mass, 5) + " vs " + fmt(target, 5));
    return rep.outcome();
}

// 9 ------------------------------------------------------------------------
Outcome assumption_diagnostics() {
    Report rep;
    const auto eta0 = RegressionFunction::sine(kUnit, 0.5, 1.0, std::numbers::pi / 2);
    const auto eta = eta0.shifted(0.2);
    const double x[] = {0.3};
    for (const auto& noise : {NoiseModel::laplace(0.5), NoiseModel::normal(0.5)}) {
        for (const auto& [e, sigma] : {std::pair{eta0, 0.5}, std::pair{eta, 0.6}}) {
            const double s = (sup_norm(RegressionFunction::constant(kUnit, e(x) - eta0(x))).value + 2.0) / sigma;
            std::vector<double> lambdas;
            for (double f : {-1.0, -0.5, -0.25, 0.0, 0.25, 0.5, 1.0}) lambdas.push_back(f / s);
            MgfCheckOptions opt;
            opt.draws = 1000000;
            const auto r = subexponential_mgf_check(noise, e, eta0, sigma, x, lambdas, opt);
            double worst = -1e300;
            for (const auto& row : r.rows) worst = std::max(worst, row.estimate - row.bound - 3.0 * row.std_error);
            rep.check(r.status == MgfReport::Status::Holds,
                      "A8 " + noise.family_name() + " sigma=" + fmt(sigma, 2) + " max(est - bound - 3se) = " +
                          fmt(worst, 3));
        }
    }
    const auto lap = a9_integrability_check(NoiseModel::laplace(1.0), 1.0);
    const auto nor = a9_integrability_check(NoiseModel::normal(1.0), 1.0);
    rep.check(std::fabs(lap.abs_moment - 1.0) <= 1e-6, "A9 Laplace int|z|phi = " + fmt(lap.abs_moment, 10));
    rep.check(std::fabs(nor.abs_moment - std::sqrt(2.0 / std::numbers::pi)) <= 1e-6,
              "A9 Normal int|z|phi = " + fmt(nor.abs_moment, 10));
    return rep.outcome();
}

}  // namespace

int main() {
    configure_workers_from_env();
    struct Criterion {
        int id;
        const char* title;
        double budget_s;
        std::function<Outcome()> run;
    };
    const std::vector<Criterion> criteria{
        {1, "closed-form zero at theta0", 1.0, closed_form_zero},
        {2, "general rate reduces to the closed forms", 30.0, reduction_identities},
        {3, "equipartition (Normal and Laplace)", 120.0, equipartition},
        {4, "posterior rate of the two-atom surrogate", 60.0, posterior_rate},
        {5, "sigma-profile optimality", 10.0, sigma_profile},
        {6, "misspecified predictive approximation, step truth", 600.0, misspecified_predictive},
        {7, "MCMC correctness oracles", 120.0, mcmc_oracles},
        {8, "sieve nesting and prior tails", 60.0, sieve_and_tails},
        {9, "assumption diagnostics A8 and A9", 60.0, assumption_diagnostics},
    };
    int failures = 0;
    for (const auto& c : criteria) {
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        const bool in_budget = secs <= c.budget_s;
        const bool pass = o.pass && in_budget;
        failures += !pass;
        std::cout << (pass ? "PASS" : "FAIL") << " criterion " << c.id << " (" << c.title << "): " << o.detail << " ["
                  << fmt(secs, 3) << " s, budget " << fmt(c.budget_s, 4) << " s" << (in_budget ? "" : ", OVER BUDGET")
                  << "]" << std::endl;
    }
    std::cout << (failures ? "ACCEPTANCE FAILED: " + std::to_string(failures) + " criterion(s)" : "ALL 9 CRITERIA PASS")
              << std::endl;
    return failures ? 1 : 0;
}
