#include "postcon/domain.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <ostream>
#include <string>

#include "postcon/csv.hpp"
#include "postcon/errors.hpp"
#include "postcon/kernels.hpp"
#include "postcon/quadrature.hpp"
#include "postcon/rng.hpp"

namespace postcon {

CompactDomain::CompactDomain(std::vector<Interval> bounds) : bounds_(std::move(bounds)) {
    if (bounds_.empty()) throw InvalidArgument("CompactDomain: dimension must be >= 1");
    for (const auto& b : bounds_)
        if (!(b.lo < b.hi) || !std::isfinite(b.lo) || !std::isfinite(b.hi))
            throw InvalidArgument("CompactDomain: each axis needs finite a_j < b_j");
}

CompactDomain CompactDomain::unit(int dim) {
    if (dim < 1) throw InvalidArgument("CompactDomain: dimension must be >= 1");
    return CompactDomain(std::vector<Interval>(static_cast<std::size_t>(dim), Interval{0.0, 1.0}));
}

double CompactDomain::volume() const {
    double v = 1.0;
    for (const auto& b : bounds_) v *= b.width();
    return v;
}

bool CompactDomain::contains(std::span<const double> x) const {
    if (x.size() != bounds_.size()) return false;
    for (std::size_t j = 0; j < x.size(); ++j)
        if (!(x[j] >= bounds_[j].lo && x[j] <= bounds_[j].hi)) return false;
    return true;
}

bool CompactDomain::operator==(const CompactDomain& o) const {
    if (bounds_.size() != o.bounds_.size()) return false;
    for (std::size_t j = 0; j < bounds_.size(); ++j)
        if (bounds_[j].lo != o.bounds_[j].lo || bounds_[j].hi != o.bounds_[j].hi) return false;
    return true;
}

PointSet::PointSet(int dim, std::vector<double> coords) : dim_(dim), coords_(std::move(coords)) {
    if (dim_ < 1 || coords_.size() % static_cast<std::size_t>(dim_) != 0)
        throw InvalidArgument("PointSet: coordinate count is not a multiple of the dimension");
}

void PointSet::push_back(std::span<const double> x) {
    if (dim_ == 0) dim_ = static_cast<int>(x.size());
    if (static_cast<int>(x.size()) != dim_) throw InvalidArgument("PointSet: dimension mismatch");
    coords_.insert(coords_.end(), x.begin(), x.end());
}

PointSet PointSet::prefix(std::size_t count) const {
    count = std::min(count, size());
    return PointSet(dim_ == 0 ? 1 : dim_,
                    std::vector<double>(coords_.begin(),
                                        coords_.begin() + static_cast<std::ptrdiff_t>(count * static_cast<std::size_t>(dim_))));
}

namespace {

int default_cells(int dim) {
    switch (dim) {
        case 1: return 64;
        case 2: return 16;
        default: return 6;
    }
}

// One-dimensional composite Gauss-Legendre rule on [lo, hi] with `cells`
// equal cells further split at the given cut positions.
void axis_rule(const Interval& iv, int cells, int order, const std::vector<double>& cuts, std::vector<double>& x,
               std::vector<double>& w) {
    std::vector<double> edges;
    for (int c = 0; c <= cells; ++c) edges.push_back(iv.lo + iv.width() * c / cells);
    for (double c : cuts)
        if (c > iv.lo && c < iv.hi) edges.push_back(c);
    std::sort(edges.begin(), edges.end());
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
    const auto gl = quadrature::gauss_legendre(order);
    x.clear();
    w.clear();
    for (std::size_t e = 0; e + 1 < edges.size(); ++e) {
        const double mid = 0.5 * (edges[e] + edges[e + 1]);
        const double half = 0.5 * (edges[e + 1] - edges[e]);
        for (int k = 0; k < order; ++k) {
            x.push_back(mid + half * gl.nodes[static_cast<std::size_t>(k)]);
            w.push_back(half * gl.weights[static_cast<std::size_t>(k)] / iv.width());
        }
    }
}

void tensor_rule(const CompactDomain& domain, int cells, int order, const std::vector<Discontinuity>& breaks,
                 PointSet& nodes, std::vector<double>& weights) {
    const int d = domain.dim();
    std::vector<std::vector<double>> ax(static_cast<std::size_t>(d)), aw(static_cast<std::size_t>(d));
    for (int j = 0; j < d; ++j) {
        std::vector<double> cuts;
        for (const auto& b : breaks)
            if (b.axis == j) cuts.push_back(b.position);
        axis_rule(domain.axis(j), cells, order, cuts, ax[static_cast<std::size_t>(j)], aw[static_cast<std::size_t>(j)]);
    }
    std::size_t total = 1;
    for (const auto& a : ax) total *= a.size();
    std::vector<double> coords;
    coords.reserve(total * static_cast<std::size_t>(d));
    weights.assign(total, 0.0);
    std::vector<std::size_t> idx(static_cast<std::size_t>(d), 0);
    for (std::size_t t = 0; t < total; ++t) {
        double wt = 1.0;
        for (int j = 0; j < d; ++j) {
            coords.push_back(ax[static_cast<std::size_t>(j)][idx[static_cast<std::size_t>(j)]]);
            wt *= aw[static_cast<std::size_t>(j)][idx[static_cast<std::size_t>(j)]];
        }
        weights[t] = wt;
        for (int j = d - 1; j >= 0; --j) {
            auto& i = idx[static_cast<std::size_t>(j)];
            if (++i < ax[static_cast<std::size_t>(j)].size()) break;
            i = 0;
        }
    }
    nodes = PointSet(d, std::move(coords));
}

double radical_inverse(std::size_t i, unsigned base) {
    double inv = 1.0 / base, f = inv, r = 0.0;
    while (i > 0) {
        r += f * static_cast<double>(i % base);
        i /= base;
        f *= inv;
    }
    return r;
}

void halton_rule(const CompactDomain& domain, std::size_t count, PointSet& nodes, std::vector<double>& weights) {
    static constexpr unsigned kPrimes[] = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53};
    const int d = domain.dim();
    if (d > static_cast<int>(std::size(kPrimes)))
        throw UnsupportedCombination("MeasureQ: quasi-Monte Carlo rule supports d <= 16");
    std::vector<double> coords;
    coords.reserve(count * static_cast<std::size_t>(d));
    for (std::size_t i = 1; i <= count; ++i)
        for (int j = 0; j < d; ++j)
            coords.push_back(domain.axis(j).lo + domain.axis(j).width() * radical_inverse(i, kPrimes[j]));
    nodes = PointSet(d, std::move(coords));
    weights.assign(count, 1.0 / static_cast<double>(count));
}

}  // namespace

MeasureQ MeasureQ::uniform(const CompactDomain& domain) { return uniform(domain, UniformOptions{}); }

MeasureQ MeasureQ::uniform(const CompactDomain& domain, UniformOptions options) {
    MeasureQ q(domain);
    q.kind_ = Kind::UniformLebesgue;
    if (options.cells_per_axis <= 0) options.cells_per_axis = default_cells(domain.dim());
    if (options.order < 1) throw InvalidArgument("MeasureQ: quadrature order must be >= 1");
    for (const auto& b : options.discontinuities)
        if (b.axis < 0 || b.axis >= domain.dim()) throw InvalidArgument("MeasureQ: discontinuity axis out of range");
    q.options_ = options;
    if (domain.dim() <= 3) {
        tensor_rule(domain, options.cells_per_axis, options.order, options.discontinuities, q.nodes_, q.weights_);
        tensor_rule(domain, 2 * options.cells_per_axis, options.order, options.discontinuities, q.refined_nodes_,
                    q.refined_weights_);
    } else {
        halton_rule(domain, options.qmc_points, q.nodes_, q.weights_);
        halton_rule(domain, 2 * options.qmc_points, q.refined_nodes_, q.refined_weights_);
    }
    return q;
}

MeasureQ MeasureQ::density_on_grid(const CompactDomain& domain, PointSet nodes, std::vector<double> weights) {
    if (nodes.size() != weights.size() || nodes.empty())
        throw InvalidArgument("MeasureQ: need one weight per node and at least one node");
    if (nodes.dim() != domain.dim()) throw InvalidArgument("MeasureQ: node dimension differs from domain");
    double total = 0.0;
    for (double w : weights) {
        if (!(w >= 0.0) || !std::isfinite(w)) throw InvalidArgument("MeasureQ: weights must be nonnegative");
        total += w;
    }
    if (!(total > 0.0)) throw InvalidArgument("MeasureQ: weights sum to zero");
    for (std::size_t i = 0; i < nodes.size(); ++i)
        if (!domain.contains(nodes[i])) throw DomainError("MeasureQ: node " + std::to_string(i) + " outside domain");
    for (double& w : weights) w /= total;
    MeasureQ q(domain);
    q.kind_ = Kind::DensityOnGrid;
    q.nodes_ = nodes;
    q.weights_ = weights;
    q.refined_nodes_ = std::move(nodes);
    q.refined_weights_ = std::move(weights);
    return q;
}

MeasureQ MeasureQ::with_discontinuities(std::span<const Discontinuity> extra) const {
    if (kind_ != Kind::UniformLebesgue || extra.empty()) return *this;
    UniformOptions opts = options_;
    for (const auto& d : extra)
        if (std::find(opts.discontinuities.begin(), opts.discontinuities.end(), d) == opts.discontinuities.end())
            opts.discontinuities.push_back(d);
    return uniform(domain_, opts);
}

double MeasureQ::integrate_values(std::span<const double> values) const {
    return kernels::parallel::dot(weights_, values);
}

std::vector<double> evaluate_on(const PointSet& points, const DomainFunction& f) {
    const auto n = static_cast<std::ptrdiff_t>(points.size());
    std::vector<double> out(points.size());
    std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic, 16)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        try {
            out[static_cast<std::size_t>(i)] = f(points[static_cast<std::size_t>(i)]);
        } catch (...) {
#pragma omp critical(postcon_evaluate_on)
            if (!failure) failure = std::current_exception();
        }
    }
    if (failure) std::rethrow_exception(failure);
    for (std::size_t i = 0; i < out.size(); ++i)
        if (!std::isfinite(out[i]))
            throw EvaluationError("non-finite function value at node " + std::to_string(i), i);
    return out;
}

QuadratureValue q_expectation(const MeasureQ& q, const DomainFunction& f) {
    const auto coarse = evaluate_on(q.nodes(), f);
    const double v = kernels::parallel::dot(q.weights(), coarse);
    if (q.kind() == MeasureQ::Kind::DensityOnGrid) return {v, 0.0};
    const auto fine = evaluate_on(q.refined_nodes(), f);
    const double vf = kernels::parallel::dot(q.refined_weights(), fine);
    return {v, std::fabs(vf - v)};
}

namespace {

// Partition `count` equal-measure cells of the box [lo, hi] over axes j..d-1.
// Slab widths are proportional to the number of cells they hold, so every
// cell has measure volume/count while diameters shrink like count^(-1/d).
void partition_cells(std::vector<Interval> box, int axis, std::size_t count, std::vector<double>& centers,
                     std::vector<double>& measures) {
    const int d = static_cast<int>(box.size());
    if (axis == d - 1) {
        const Interval iv = box[static_cast<std::size_t>(axis)];
        for (std::size_t c = 0; c < count; ++c) {
            box[static_cast<std::size_t>(axis)] = {iv.lo + iv.width() * c / count, iv.lo + iv.width() * (c + 1) / count};
            double vol = 1.0;
            for (const auto& b : box) {
                centers.push_back(0.5 * (b.lo + b.hi));
                vol *= b.width();
            }
            measures.push_back(vol);
        }
        return;
    }
    const int remaining = d - axis;
    auto slabs = static_cast<std::size_t>(std::llround(std::pow(static_cast<double>(count), 1.0 / remaining)));
    slabs = std::clamp<std::size_t>(slabs, 1, count);
    const Interval iv = box[static_cast<std::size_t>(axis)];
    std::size_t done = 0;
    for (std::size_t s = 0; s < slabs; ++s) {
        const std::size_t in_slab = count / slabs + (s < count % slabs ? 1 : 0);
        const double lo = iv.lo + iv.width() * static_cast<double>(done) / static_cast<double>(count);
        const double hi = iv.lo + iv.width() * static_cast<double>(done + in_slab) / static_cast<double>(count);
        box[static_cast<std::size_t>(axis)] = {lo, hi};
        partition_cells(box, axis + 1, in_slab, centers, measures);
        done += in_slab;
    }
}

}  // namespace

CovariateDesign make_design(const MeasureQ& q, DesignKind kind, std::size_t n, std::uint64_t seed) {
    if (n == 0) throw InvalidArgument("make_design: n must be >= 1");
    const auto& dom = q.domain();
    CovariateDesign design;
    design.kind = kind;
    design.seed = seed;
    if (kind == DesignKind::DeterministicPartition) {
        if (q.kind() != MeasureQ::Kind::UniformLebesgue)
            throw UnsupportedCombination("make_design: deterministic partition requires uniform Q");
        std::vector<double> centers;
        partition_cells(dom.bounds(), 0, n, centers, design.cell_measures);
        design.points = PointSet(dom.dim(), std::move(centers));
        return design;
    }
    Rng rng(seed);
    std::vector<double> coords;
    coords.reserve(n * static_cast<std::size_t>(dom.dim()));
    if (q.kind() == MeasureQ::Kind::UniformLebesgue) {
        for (std::size_t i = 0; i < n; ++i)
            for (int j = 0; j < dom.dim(); ++j) coords.push_back(dom.axis(j).lo + dom.axis(j).width() * rng.uniform());
    } else {
        std::vector<double> cdf(q.weights().size());
        double acc = 0.0;
        for (std::size_t k = 0; k < cdf.size(); ++k) cdf[k] = (acc += q.weights()[k]);
        for (std::size_t i = 0; i < n; ++i) {
            const double u = rng.uniform() * acc;
            auto k = static_cast<std::size_t>(std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
            k = std::min(k, cdf.size() - 1);
            const auto p = q.nodes()[k];
            coords.insert(coords.end(), p.begin(), p.end());
        }
    }
    design.points = PointSet(dom.dim(), std::move(coords));
    return design;
}

CovariateDesign make_design(const CompactDomain& domain, DesignKind kind, std::size_t n, std::uint64_t seed) {
    return make_design(MeasureQ::uniform(domain), kind, n, seed);
}

double empirical_q_average(const CovariateDesign& design, const DomainFunction& f) {
    if (design.points.empty()) throw InvalidArgument("empirical_q_average: empty design");
    const auto v = evaluate_on(design.points, f);
    return kernels::parallel::sum(v) / static_cast<double>(v.size());
}

void write_design_csv(std::ostream& out, const CovariateDesign& design) {
    std::vector<std::string> header{"index"};
    for (int j = 1; j <= design.points.dim(); ++j) header.push_back("x_" + std::to_string(j));
    CsvWriter csv(out, header);
    for (std::size_t i = 0; i < design.points.size(); ++i) {
        csv.row_begin();
        csv.field(i);
        for (double x : design.points[i]) csv.field(x);
        csv.row_end();
    }
}

}  // namespace postcon
