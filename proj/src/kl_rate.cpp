#include "postcon/kl_rate.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <exception>
#include <limits>
#include <numeric>
#include <ostream>

#include <Eigen/Dense>

#include "postcon/csv.hpp"
#include "postcon/errors.hpp"
#include "postcon/kernels.hpp"
#include "postcon/quadrature.hpp"
#include "postcon/rng.hpp"

namespace postcon {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void check_theta(const Theta& theta, const TrueModel& truth, const MeasureQ& q) {
    if (!(theta.sigma > 0.0) || !std::isfinite(theta.sigma))
        throw InvalidArgument("theta: sigma must be positive and finite");
    if (!(theta.eta.domain() == truth.eta0.domain()) || !(q.domain() == truth.eta0.domain()))
        throw InvalidArgument("theta, truth and Q must share a domain");
}

MeasureQ split_for(const MeasureQ& q, const RegressionFunction& a, const RegressionFunction& b) {
    auto breaks = a.discontinuities();
    for (const auto& d : b.discontinuities()) breaks.push_back(d);
    return breaks.empty() ? q : q.with_discontinuities(breaks);
}

void attach_j(KLRateReport& r, std::optional<double> h_inf) {
    if (h_inf) r.J = r.h - *h_inf;
}

// Per-node values of a function that also reports a per-node error.
struct NodeValues {
    std::vector<double> values;
    double max_error = 0.0;
};

template <class F>
NodeValues evaluate_with_error(const PointSet& points, F&& f) {
    const auto n = static_cast<std::ptrdiff_t>(points.size());
    NodeValues out;
    out.values.resize(points.size());
    std::vector<double> err(points.size());
    std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic, 8)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        try {
            const auto e = f(points[static_cast<std::size_t>(i)]);
            out.values[static_cast<std::size_t>(i)] = e.value;
            err[static_cast<std::size_t>(i)] = e.error;
        } catch (...) {
#pragma omp critical(postcon_kl_nodes)
            if (!failure) failure = std::current_exception();
        }
    }
    if (failure) std::rethrow_exception(failure);
    out.max_error = err.empty() ? 0.0 : *std::max_element(err.begin(), err.end());
    return out;
}

// E_Q of a node function with inner errors: coarse value, error = |fine - coarse| + max inner error.
template <class F>
QuadratureValue q_expectation_nested(const MeasureQ& q, F&& f) {
    const auto coarse = evaluate_with_error(q.nodes(), f);
    const double v = kernels::parallel::dot(q.weights(), coarse.values);
    double err = coarse.max_error;
    if (q.kind() == MeasureQ::Kind::UniformLebesgue) {
        const auto fine = evaluate_with_error(q.refined_nodes(), f);
        err += std::fabs(kernels::parallel::dot(q.refined_weights(), fine.values) - v);
        err = std::max(err, coarse.max_error + fine.max_error);
    }
    return {v, err};
}

// E z^2 under the standardized density.
double second_moment(const NoiseModel& m) {
    switch (m.family()) {
        case NoiseModel::Family::Normal: return 1.0;
        case NoiseModel::Family::Laplace: return 2.0;
        default: {
            const double r = m.phi().radius();
            const double bp[] = {0.0};
            return quadrature::integrate_interval([&](double z) { return z * z * std::exp(m.log_phi(z)); }, -r, r,
                                                 bp, 1e-11)
                .value;
        }
    }
}

struct NmResult {
    std::vector<double> x;
    double f = kInf;
    std::size_t evaluations = 0;
    bool converged = false;
};

// Nelder-Mead with the standard coefficients; stops when the simplex values
// agree to `tol` or the evaluation budget is spent.
template <class F>
NmResult nelder_mead(F&& f, std::vector<double> x0, const std::vector<double>& step, std::size_t budget, double tol) {
    const std::size_t n = x0.size();
    std::vector<std::vector<double>> pts(n + 1, x0);
    std::vector<double> val(n + 1);
    for (std::size_t i = 0; i < n; ++i) pts[i + 1][i] += step[i];
    NmResult res;
    auto eval = [&](const std::vector<double>& x) {
        ++res.evaluations;
        const double v = f(x);
        return std::isfinite(v) ? v : kInf;
    };
    for (std::size_t i = 0; i <= n; ++i) val[i] = eval(pts[i]);
    std::vector<std::size_t> order(n + 1);
    while (res.evaluations < budget) {
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](auto a, auto b) { return val[a] < val[b]; });
        const std::size_t best = order.front(), worst = order.back(), second = order[n - 1];
        if (std::fabs(val[worst] - val[best]) <= tol * (1.0 + std::fabs(val[best]))) {
            res.converged = true;
            break;
        }
        std::vector<double> centroid(n, 0.0);
        for (std::size_t i = 0; i <= n; ++i)
            if (i != worst)
                for (std::size_t j = 0; j < n; ++j) centroid[j] += pts[i][j] / static_cast<double>(n);
        auto along = [&](double t) {
            std::vector<double> x(n);
            for (std::size_t j = 0; j < n; ++j) x[j] = centroid[j] + t * (pts[worst][j] - centroid[j]);
            return x;
        };
        auto xr = along(-1.0);
        const double fr = eval(xr);
        if (fr < val[best]) {
            auto xe = along(-2.0);
            const double fe = eval(xe);
            if (fe < fr) {
                pts[worst] = std::move(xe);
                val[worst] = fe;
            } else {
                pts[worst] = std::move(xr);
                val[worst] = fr;
            }
        } else if (fr < val[second]) {
            pts[worst] = std::move(xr);
            val[worst] = fr;
        } else {
            auto xc = fr < val[worst] ? along(-0.5) : along(0.5);
            const double fc = eval(xc);
            if (fc < std::min(fr, val[worst])) {
                pts[worst] = std::move(xc);
                val[worst] = fc;
            } else {
                for (std::size_t i = 0; i <= n; ++i) {
                    if (i == best) continue;
                    for (std::size_t j = 0; j < n; ++j) pts[i][j] = pts[best][j] + 0.5 * (pts[i][j] - pts[best][j]);
                    val[i] = eval(pts[i]);
                }
            }
        }
    }
    const auto it = std::min_element(val.begin(), val.end());
    res.x = pts[static_cast<std::size_t>(it - val.begin())];
    res.f = *it;
    return res;
}

// Weighted least-squares projection of eta0 on the basis over the Q nodes.
std::vector<double> l2_projection(const Eigen::MatrixXd& phi, const std::vector<double>& target,
                                  const std::vector<double>& weights) {
    const auto n = phi.rows();
    Eigen::VectorXd sw(n), y(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        sw(i) = std::sqrt(weights[static_cast<std::size_t>(i)]);
        y(i) = sw(i) * target[static_cast<std::size_t>(i)];
    }
    const Eigen::MatrixXd a = sw.asDiagonal() * phi;
    const Eigen::VectorXd c = a.colPivHouseholderQr().solve(y);
    return {c.data(), c.data() + c.size()};
}

}  // namespace

std::string to_string(KLMethod m) {
    switch (m) {
        case KLMethod::ClosedForm: return "closed-form";
        case KLMethod::Quadrature: return "quadrature";
        case KLMethod::MonteCarlo: return "monte-carlo";
    }
    return "unknown";
}

bool same_phi(const NoiseModel& a, const NoiseModel& b) {
    if (a.family() != b.family()) return false;
    return a.family() != NoiseModel::Family::General || a.phi().name() == b.phi().name();
}

KLRateReport h_normal(const Theta& theta, const TrueModel& truth, const MeasureQ& q, std::optional<double> h_inf) {
    check_theta(theta, truth, q);
    if (truth.noise.family() != NoiseModel::Family::Normal)
        throw UnsupportedCombination("h_normal requires Normal true errors");
    const double s = theta.sigma, s0 = truth.noise.scale();
    const auto m = l2q_distance_sq(theta.eta, truth.eta0, q);
    KLRateReport r;
    r.h = std::log(s / s0) - 0.5 + s0 * s0 / (2.0 * s * s) + m.value / (2.0 * s * s);
    r.error = m.error / (2.0 * s * s);
    r.method = KLMethod::ClosedForm;
    attach_j(r, h_inf);
    return r;
}

KLRateReport h_laplace(const Theta& theta, const TrueModel& truth, const MeasureQ& q, std::optional<double> h_inf) {
    check_theta(theta, truth, q);
    if (truth.noise.family() != NoiseModel::Family::Laplace)
        throw UnsupportedCombination("h_laplace requires Laplace true errors");
    const double s = theta.sigma, s0 = truth.noise.scale();
    const auto m = q_expectation(split_for(q, theta.eta, truth.eta0), [&](std::span<const double> x) {
        return laplace_abs_moment(truth.eta0.value(x) - theta.eta.value(x), s0);
    });
    KLRateReport r;
    r.h = std::log(s / s0) - 1.0 + m.value / s;
    r.error = m.error / s;
    r.method = KLMethod::ClosedForm;
    attach_j(r, h_inf);
    return r;
}

ExpectedLogPhi g_eta_sigma(const Theta& theta, const TrueModel& truth, std::span<const double> x) {
    if (!(theta.sigma > 0.0)) throw InvalidArgument("g_eta_sigma: sigma must be positive");
    return expected_log_phi_quadrature(truth.noise, truth.eta0(x) - theta.eta(x), theta.sigma);
}

KLRateReport h_general(const Theta& theta, const TrueModel& truth, const MeasureQ& q, std::optional<double> h_inf) {
    check_theta(theta, truth, q);
    const double s = theta.sigma, s0 = truth.noise.scale();
    const double c = phi_entropy_constant_quadrature(truth.noise);
    const auto eg = q_expectation_nested(split_for(q, theta.eta, truth.eta0), [&](std::span<const double> x) {
        return expected_log_phi_quadrature(truth.noise, truth.eta0.value(x) - theta.eta.value(x), s);
    });
    KLRateReport r;
    r.h = std::log(s / s0) + c - eg.value;
    r.error = eg.error + 1e-10;
    r.method = KLMethod::Quadrature;
    attach_j(r, h_inf);
    return r;
}

KLRateReport h_cross_family(const Theta& theta, const NoiseModel& postulated, const TrueModel& truth,
                            const MeasureQ& q, std::optional<double> h_inf) {
    check_theta(theta, truth, q);
    const double s = theta.sigma, s0 = truth.noise.scale();
    const double r_true = truth.noise.phi().radius();
    KLRateReport r;
    r.method = KLMethod::Quadrature;
    try {
        const double c = phi_entropy_constant_quadrature(truth.noise);
        const auto eg = q_expectation_nested(split_for(q, theta.eta, truth.eta0), [&](std::span<const double> x) {
            const double delta = truth.eta0.value(x) - theta.eta.value(x);
            const double bp[] = {0.0, -delta / s0};
            const auto est = quadrature::integrate_interval(
                [&](double z) { return postulated.log_phi((s0 * z + delta) / s) * std::exp(truth.noise.log_phi(z)); },
                -r_true, r_true, bp, 1e-9);
            return ExpectedLogPhi{est.value, est.error};
        });
        r.h = std::log(s / s0) + c - eg.value;
        r.error = eg.error + 1e-10;
    } catch (const AccuracyError&) {
        r.infinite = true;
    } catch (const EvaluationError&) {
        r.infinite = true;
    }
    if (r.infinite || !std::isfinite(r.h)) {
        r.infinite = true;
        r.h = kInf;
        r.error = 0.0;
    }
    attach_j(r, h_inf);
    return r;
}

KLRateReport h_normal_postulate(const Theta& theta, const TrueModel& truth, const MeasureQ& q,
                                std::optional<double> h_inf) {
    check_theta(theta, truth, q);
    const double s = theta.sigma, s0 = truth.noise.scale();
    const auto m = l2q_distance_sq(theta.eta, truth.eta0, q);
    KLRateReport r;
    r.h = std::log(s / s0) + phi_entropy_constant(truth.noise) + 0.5 * std::log(2.0 * std::numbers::pi) +
          (s0 * s0 * second_moment(truth.noise) + m.value) / (2.0 * s * s);
    r.error = m.error / (2.0 * s * s);
    r.method = truth.noise.family() == NoiseModel::Family::General ? KLMethod::Quadrature : KLMethod::ClosedForm;
    attach_j(r, h_inf);
    return r;
}

KLRateReport kl_rate(const Theta& theta, const NoiseModel& postulated, const TrueModel& truth, const MeasureQ& q,
                     std::optional<double> h_inf) {
    if (!same_phi(postulated, truth.noise)) {
        if (postulated.family() == NoiseModel::Family::Normal) return h_normal_postulate(theta, truth, q, h_inf);
        return h_cross_family(theta, postulated, truth, q, h_inf);
    }
    switch (truth.noise.family()) {
        case NoiseModel::Family::Normal: return h_normal(theta, truth, q, h_inf);
        case NoiseModel::Family::Laplace: return h_laplace(theta, truth, q, h_inf);
        default: return h_general(theta, truth, q, h_inf);
    }
}

HInfResult h_inf_estimate(const NoiseModel& postulated, std::shared_ptr<const TrigBasis> basis,
                          const TrueModel& truth, const MeasureQ& q, const HInfOptions& opt) {
    if (!basis || basis->size() == 0) throw InvalidArgument("h_inf_estimate: empty basis");
    if (!(q.domain() == truth.eta0.domain())) throw InvalidArgument("h_inf_estimate: Q and truth domains differ");
    const auto& domain = truth.eta0.domain();
    const MeasureQ qs = split_for(q, truth.eta0, truth.eta0);
    const Eigen::MatrixXd phi = basis->design_matrix(qs.nodes());
    const auto target = truth.eta0.values(qs.nodes());
    const auto& w = qs.weights();
    const double s0 = truth.noise.scale();
    const auto K = static_cast<Eigen::Index>(basis->size());

    HInfResult res;
    std::vector<double> coef = l2_projection(phi, target, w);

    if (postulated.family() == NoiseModel::Family::Normal) {
        const auto eta = RegressionFunction::expansion(domain, basis, coef);
        const auto m = l2q_distance_sq(eta, truth.eta0, q);
        const double sigma = std::sqrt(s0 * s0 * second_moment(truth.noise) + m.value);
        res.argmin = Theta{eta, sigma};
        res.coefficients = coef;
        res.method = "l2-projection";
        if (truth.noise.family() == NoiseModel::Family::Normal) {
            res.h = 0.5 * std::log1p(m.value / (s0 * s0));
            res.error = m.error / (2.0 * s0 * s0);
        } else {
            const auto rep = kl_rate(res.argmin, postulated, truth, q);
            res.h = rep.h;
            res.error = rep.error;
        }
        return res;
    }

    if (postulated.family() == NoiseModel::Family::Laplace && truth.noise.family() == NoiseModel::Family::Laplace) {
        Eigen::VectorXd c = Eigen::Map<const Eigen::VectorXd>(coef.data(), K);
        const Eigen::Map<const Eigen::VectorXd> y(target.data(), static_cast<Eigen::Index>(target.size()));
        const Eigen::Map<const Eigen::VectorXd> wv(w.data(), static_cast<Eigen::Index>(w.size()));
        auto objective = [&](const Eigen::VectorXd& cc) {
            const Eigen::VectorXd d = y - phi * cc;
            double f = 0.0;
            for (Eigen::Index i = 0; i < d.size(); ++i) f += wv(i) * laplace_abs_moment(d(i), s0);
            return f;
        };
        double f = objective(c);
        res.converged = false;
        for (int iter = 0; iter < 200; ++iter) {
            const Eigen::VectorXd d = y - phi * c;
            Eigen::VectorXd psi(d.size()), curv(d.size());
            for (Eigen::Index i = 0; i < d.size(); ++i) {
                const double e = std::exp(-std::fabs(d(i)) / s0);
                psi(i) = wv(i) * std::copysign(1.0 - e, d(i));
                curv(i) = wv(i) * e / s0;
            }
            const Eigen::VectorXd grad = -phi.transpose() * psi;
            if (grad.lpNorm<Eigen::Infinity>() < 1e-13) {
                res.converged = true;
                break;
            }
            Eigen::MatrixXd hess = phi.transpose() * curv.asDiagonal() * phi;
            hess.diagonal().array() += 1e-12 * (1.0 + hess.diagonal().maxCoeff());
            const Eigen::VectorXd dir = -hess.ldlt().solve(grad);
            double t = 1.0, fnew = objective(c + dir);
            while (fnew > f + 1e-4 * t * grad.dot(dir) && t > 1e-12) {
                t *= 0.5;
                fnew = objective(c + t * dir);
            }
            if (!(fnew <= f)) {
                res.converged = grad.lpNorm<Eigen::Infinity>() < 1e-9;
                break;
            }
            const double change = f - fnew;
            c += t * dir;
            f = fnew;
            if (change <= 1e-16 * (1.0 + f)) {
                res.converged = true;
                break;
            }
        }
        coef.assign(c.data(), c.data() + c.size());
        const auto eta = RegressionFunction::expansion(domain, basis, coef);
        const auto m = q_expectation(split_for(q, eta, truth.eta0), [&](std::span<const double> x) {
            return laplace_abs_moment(truth.eta0.value(x) - eta.value(x), s0);
        });
        res.argmin = Theta{eta, m.value};
        res.coefficients = coef;
        res.h = std::log(m.value / s0);
        res.error = m.error / m.value;
        res.method = "newton";
        return res;
    }

    // General: sample-average surrogate of E_X g with stratified quantile nodes
    // of the truth's phi, minimized by multistart Nelder-Mead.
    constexpr std::size_t kInner = 128;
    std::vector<double> z(kInner);
    for (std::size_t j = 0; j < kInner; ++j)
        z[j] = truth.noise.phi().quantile((static_cast<double>(j) + 0.5) / static_cast<double>(kInner));
    const double c_true = phi_entropy_constant_quadrature(truth.noise);
    const Eigen::Map<const Eigen::VectorXd> y(target.data(), static_cast<Eigen::Index>(target.size()));
    auto surrogate = [&](const std::vector<double>& p) {
        const Eigen::Map<const Eigen::VectorXd> cc(p.data(), K);
        const double t = p.back();
        if (std::fabs(t) > 50.0) return kInf;
        const double s = std::exp(t);
        const Eigen::VectorXd d = y - phi * cc;
        std::vector<double> terms(static_cast<std::size_t>(d.size()));
#pragma omp parallel for schedule(static)
        for (Eigen::Index i = 0; i < d.size(); ++i) {
            double acc = 0.0;
            for (double zj : z) acc += postulated.log_phi((s0 * zj + d(i)) / s);
            terms[static_cast<std::size_t>(i)] = w[static_cast<std::size_t>(i)] * acc / static_cast<double>(kInner);
        }
        return t - std::log(s0) + c_true - kernels::serial::sum(terms);
    };
    std::vector<double> start(coef);
    double resid2 = 0.0;
    {
        const Eigen::Map<const Eigen::VectorXd> cc(coef.data(), K);
        const Eigen::VectorXd d = y - phi * cc;
        for (Eigen::Index i = 0; i < d.size(); ++i) resid2 += w[static_cast<std::size_t>(i)] * d(i) * d(i);
    }
    start.push_back(0.5 * std::log(s0 * s0 + resid2));
    std::vector<double> step(start.size(), 0.25);
    Rng rng(opt.seed);
    NmResult best;
    bool all_converged = true;
    const std::size_t per_start = std::max<std::size_t>(opt.max_evaluations / std::max<std::size_t>(opt.starts, 1), 50);
    for (std::size_t k = 0; k < std::max<std::size_t>(opt.starts, 1); ++k) {
        std::vector<double> x0 = start;
        if (k > 0)
            for (auto& v : x0) v += 0.5 * rng.normal();
        auto r = nelder_mead(surrogate, x0, step, per_start, opt.tolerance);
        // one restart from the found point guards against simplex collapse
        r = nelder_mead(surrogate, r.x, step, per_start, opt.tolerance);
        all_converged = all_converged && r.converged;
        if (r.f < best.f) best = r;
    }
    std::vector<double> cbest(best.x.begin(), best.x.end() - 1);
    const auto eta = RegressionFunction::expansion(domain, basis, cbest);
    res.argmin = Theta{eta, std::exp(best.x.back())};
    res.coefficients = cbest;
    const auto rep = kl_rate(res.argmin, postulated, truth, q);
    res.h = rep.h;
    res.error = rep.error;
    res.converged = all_converged;
    res.method = "nelder-mead";
    return res;
}

bool n_epsilon_member(double h_theta, double h_inf, double epsilon) {
    if (!(epsilon > 0.0)) throw InvalidArgument("n_epsilon_member: epsilon must be positive");
    return h_theta <= h_inf + epsilon;
}

bool n_epsilon_member(const Theta& theta, double h_inf, double epsilon, const NoiseModel& postulated,
                      const TrueModel& truth, const MeasureQ& q) {
    return n_epsilon_member(kl_rate(theta, postulated, truth, q).h, h_inf, epsilon);
}

void write_h_grid_csv(std::ostream& out, const std::vector<HGridRow>& rows) {
    CsvWriter csv(out, {"theta_id", "sigma", "h", "J", "method", "err"});
    for (const auto& r : rows) {
        csv.row_begin();
        csv.field(r.theta_id).field(r.sigma).field(r.report.h);
        if (r.report.J)
            csv.field(*r.report.J);
        else
            csv.field(std::string_view(""));
        csv.field(to_string(r.report.method)).field(r.report.error);
        csv.row_end();
    }
}

}  // namespace postcon
