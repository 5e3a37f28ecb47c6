#include "postcon/equipartition.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <ostream>
#include <sstream>

#include "postcon/csv.hpp"
#include "postcon/errors.hpp"
#include "postcon/kernels.hpp"

namespace postcon {

namespace {

PointSet rows_of(const PointSet& points, std::size_t begin, std::size_t end) {
    const auto d = static_cast<std::size_t>(points.dim());
    std::vector<double> c(points.coords().begin() + static_cast<std::ptrdiff_t>(begin * d),
                          points.coords().begin() + static_cast<std::ptrdiff_t>(end * d));
    return PointSet(points.dim(), std::move(c));
}

double residual_loss_sum(std::span<const double> y, std::span<const double> fit, kernels::Loss loss, Execution exec) {
    return exec == Execution::Serial ? kernels::serial::loss_sum(y, fit, loss)
                                     : kernels::parallel::loss_sum(y, fit, loss);
}

template <class LogPhi>
double residual_log_phi_sum(std::span<const double> y, std::span<const double> fit, double scale,
                            const LogPhi& log_phi, Execution exec) {
    return exec == Execution::Serial ? kernels::serial::log_phi_sum(y, fit, scale, log_phi)
                                     : kernels::parallel::log_phi_sum(y, fit, scale, log_phi);
}

void check_sizes(const Dataset& data) {
    if (data.y.size() != data.design.points.size())
        throw InvalidArgument("dataset: response and design lengths differ");
}

std::vector<std::size_t> checked_schedule(const std::vector<std::size_t>& ns, std::size_t replicates) {
    if (ns.empty()) throw InvalidArgument("n-schedule is empty");
    if (ns.front() == 0) throw InvalidArgument("n-schedule entries must be positive");
    for (std::size_t i = 1; i < ns.size(); ++i)
        if (ns[i] <= ns[i - 1]) throw InvalidArgument("n-schedule must be strictly increasing");
    if (replicates == 0) throw InvalidArgument("replicates must be >= 1");
    return ns;
}

/// (1/n) log R_n(theta) on `data`, exact closed-form path when the families agree.
double statistic(const Dataset& data, const Theta& theta, const NoiseModel& family, const TrueModel& truth,
                 Execution exec) {
    const double n = static_cast<double>(data.size());
    if (same_phi(family, truth.noise)) return log_ratio(data, theta, truth, family, exec) / n;
    const auto terms = log_ratio_terms(data, theta, family, truth);
    return (exec == Execution::Serial ? kernels::serial::sum(terms) : kernels::parallel::sum(terms)) / n;
}

/// Datasets of one replicate for every n of the schedule.
template <class Visit>
void for_each_prefix(const TrueModel& truth, const MeasureQ& q, const std::vector<std::size_t>& ns,
                     std::uint64_t replicate_seed, DesignKind kind, const Visit& visit) {
    const std::uint64_t design_seed = derive_seed(replicate_seed, 1);
    const std::uint64_t noise_seed = derive_seed(replicate_seed, 2);
    if (kind == DesignKind::IidFromQ) {
        const auto full = simulate(truth, make_design(q, kind, ns.back(), design_seed), noise_seed);
        for (std::size_t i = 0; i < ns.size(); ++i) visit(i, full.prefix(ns[i]));
    } else {
        for (std::size_t i = 0; i < ns.size(); ++i)
            visit(i, simulate(truth, make_design(q, kind, ns[i], design_seed), noise_seed));
    }
}

/// Runs body(r) for every replicate concurrently and rethrows the first failure.
template <class Body>
void parallel_replicates(std::size_t replicates, const Body& body) {
    std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t r = 0; r < static_cast<std::ptrdiff_t>(replicates); ++r) {
        try {
            body(static_cast<std::size_t>(r));
        } catch (...) {
#pragma omp critical(postcon_replicate_failure)
            if (!failure) failure = std::current_exception();
        }
    }
    if (failure) std::rethrow_exception(failure);
}

}  // namespace

Dataset Dataset::prefix(std::size_t count) const { return slice(0, count); }

Dataset Dataset::slice(std::size_t begin, std::size_t end) const {
    if (begin > end || end > size()) throw InvalidArgument("dataset: slice out of range");
    Dataset out;
    out.design.kind = design.kind;
    out.design.seed = design.seed;
    out.design.points = rows_of(design.points, begin, end);
    if (!design.cell_measures.empty())
        out.design.cell_measures.assign(design.cell_measures.begin() + static_cast<std::ptrdiff_t>(begin),
                                        design.cell_measures.begin() + static_cast<std::ptrdiff_t>(end));
    out.y.assign(y.begin() + static_cast<std::ptrdiff_t>(begin), y.begin() + static_cast<std::ptrdiff_t>(end));
    out.true_model_id = true_model_id;
    out.seed = seed;
    return out;
}

std::string describe(const TrueModel& truth) {
    std::ostringstream os;
    os << truth.noise.family_name() << "(sigma0=" << format_number(truth.noise.scale()) << ")";
    return os.str();
}

Dataset simulate(const TrueModel& truth, const CovariateDesign& design, std::uint64_t seed) {
    if (design.points.empty()) throw InvalidArgument("simulate: empty design");
    Dataset data;
    data.design = design;
    data.seed = seed;
    data.true_model_id = describe(truth);
    data.y = truth.eta0.values(design.points);
    const auto eps = truth.noise.sample(data.y.size(), seed);
    for (std::size_t i = 0; i < data.y.size(); ++i) data.y[i] += eps[i];
    return data;
}

double log_ratio(const Dataset& data, const Theta& theta, const TrueModel& truth, const NoiseModel& family,
                 Execution exec) {
    check_sizes(data);
    if (!same_phi(family, truth.noise))
        throw InvalidArgument("log_ratio: postulated family " + family.family_name() + " differs from the truth's " +
                              truth.noise.family_name());
    if (!(theta.sigma > 0.0)) throw InvalidArgument("log_ratio: sigma must be positive");
    const double s0 = truth.noise.scale(), s = theta.sigma;
    const double n = static_cast<double>(data.size());
    const auto fit0 = truth.eta0.values(data.design.points);
    const auto fit = theta.eta.values(data.design.points);
    const double base = n * std::log(s0 / s);
    switch (truth.noise.family()) {
        case NoiseModel::Family::Normal: {
            const double a = residual_loss_sum(data.y, fit0, kernels::Loss::Square, exec);
            const double b = residual_loss_sum(data.y, fit, kernels::Loss::Square, exec);
            return base + a / (2.0 * s0 * s0) - b / (2.0 * s * s);
        }
        case NoiseModel::Family::Laplace: {
            const double a = residual_loss_sum(data.y, fit0, kernels::Loss::Absolute, exec);
            const double b = residual_loss_sum(data.y, fit, kernels::Loss::Absolute, exec);
            return base + a / s0 - b / s;
        }
        case NoiseModel::Family::General: {
            const auto& phi = truth.noise.phi();
            auto lp = [&phi](double z) { return phi.log_phi(z); };
            const double a = residual_log_phi_sum(data.y, fit0, s0, lp, exec);
            const double b = residual_log_phi_sum(data.y, fit, s, lp, exec);
            return base + b - a;
        }
    }
    return 0.0;
}

double log_likelihood(const Dataset& data, const RegressionFunction& eta, const NoiseModel& model, Execution exec) {
    check_sizes(data);
    const auto fit = eta.values(data.design.points);
    const double n = static_cast<double>(data.size());
    const double s = model.scale();
    auto lp = [&model](double z) { return model.log_phi(z); };
    return residual_log_phi_sum(data.y, fit, s, lp, exec) - n * std::log(s);
}

std::vector<double> log_ratio_terms(const Dataset& data, const Theta& theta, const NoiseModel& family,
                                    const TrueModel& truth) {
    check_sizes(data);
    const auto post = family.with_scale(theta.sigma);
    const auto fit0 = truth.eta0.values(data.design.points);
    const auto fit = theta.eta.values(data.design.points);
    std::vector<double> t(data.size());
    for (std::size_t i = 0; i < t.size(); ++i)
        t[i] = post.log_density(data.y[i] - fit[i]) - truth.noise.log_density(data.y[i] - fit0[i]);
    return t;
}

std::vector<EquipartitionRow> EquipartitionTrace::at(std::size_t n) const {
    std::vector<EquipartitionRow> out;
    for (const auto& r : rows)
        if (r.n == n) out.push_back(r);
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.replicate < b.replicate; });
    return out;
}

EquipartitionTrace equipartition_trace(const Theta& theta, const NoiseModel& family, const TrueModel& truth,
                                       const MeasureQ& q, const std::vector<std::size_t>& n_schedule,
                                       std::size_t replicates, std::uint64_t seed, const TraceOptions& opt) {
    const auto ns = checked_schedule(n_schedule, replicates);
    EquipartitionTrace trace;
    trace.family = family.family_name();
    trace.h = kl_rate(theta, family, truth, q).h;
    trace.rows.resize(ns.size() * replicates);
    parallel_replicates(replicates, [&](std::size_t r) {
        for_each_prefix(truth, q, ns, derive_seed(seed, r), opt.design, [&](std::size_t i, const Dataset& data) {
            auto& row = trace.rows[i * replicates + r];
            row.n = ns[i];
            row.replicate = r;
            row.statistic = statistic(data, theta, family, truth, opt.exec);
            row.target = -trace.h;
            row.gap = row.statistic + trace.h;
        });
    });
    return trace;
}

void write_equipartition_csv(std::ostream& out, const EquipartitionTrace& trace) {
    CsvWriter csv(out, {"family", "n", "replicate", "statistic", "target", "gap"});
    for (const auto& r : trace.rows) {
        csv.row_begin();
        csv.field(trace.family).field(r.n).field(r.replicate).field(r.statistic).field(r.target).field(r.gap);
        csv.row_end();
    }
}

std::vector<UniformGapRow> uniform_gap_on_compact(const std::vector<Theta>& grid, const NoiseModel& family,
                                                  const TrueModel& truth, const MeasureQ& q,
                                                  const std::vector<std::size_t>& n_schedule, std::size_t replicates,
                                                  std::uint64_t seed, const TraceOptions& opt) {
    if (grid.empty()) throw InvalidArgument("uniform_gap_on_compact: empty grid");
    const auto ns = checked_schedule(n_schedule, replicates);
    std::vector<double> h(grid.size());
    for (std::size_t g = 0; g < grid.size(); ++g) h[g] = kl_rate(grid[g], family, truth, q).h;
    std::vector<UniformGapRow> rows(ns.size() * replicates);
    parallel_replicates(replicates, [&](std::size_t r) {
        for_each_prefix(truth, q, ns, derive_seed(seed, r), opt.design, [&](std::size_t i, const Dataset& data) {
            auto& row = rows[i * replicates + r];
            row.n = ns[i];
            row.replicate = r;
            for (std::size_t g = 0; g < grid.size(); ++g) {
                const double gap = std::fabs(statistic(data, grid[g], family, truth, opt.exec) + h[g]);
                if (g == 0 || gap > row.sup_gap) {
                    row.sup_gap = gap;
                    row.argmax = g;
                }
            }
        });
    });
    return rows;
}

void write_uniform_gap_csv(std::ostream& out, const std::vector<UniformGapRow>& rows) {
    CsvWriter csv(out, {"n", "replicate", "sup_gap", "argmax"});
    for (const auto& r : rows) {
        csv.row_begin();
        csv.field(r.n).field(r.replicate).field(r.sup_gap).field(r.argmax);
        csv.row_end();
    }
}

double median(std::vector<double> v) {
    if (v.empty()) throw InvalidArgument("median of an empty sample");
    const std::size_t m = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(m), v.end());
    const double hi = v[m];
    if (v.size() % 2 == 1) return hi;
    const double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(m));
    return 0.5 * (lo + hi);
}

}  // namespace postcon
