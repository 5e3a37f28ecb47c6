#include "postcon/regression.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "postcon/errors.hpp"

namespace postcon {

using nlohmann::json;

// ---------------------------------------------------------------- TrigBasis

TrigBasis::TrigBasis(Form form, int dim, std::vector<Term> terms, std::string label)
    : form_(form), dim_(dim), terms_(std::move(terms)), label_(std::move(label)) {
    if (dim_ < 1) throw InvalidArgument("TrigBasis: dimension must be >= 1");
    for (const auto& t : terms_) {
        const std::size_t nphase = form_ == Form::Product ? static_cast<std::size_t>(dim_) : 1;
        if (t.freq.size() != static_cast<std::size_t>(dim_) || t.phase.size() != nphase)
            throw InvalidArgument("TrigBasis: term shape does not match dimension");
    }
}

std::shared_ptr<const TrigBasis> TrigBasis::cosine(const CompactDomain& domain, std::size_t size) {
    if (size == 0) throw InvalidArgument("TrigBasis::cosine: size must be >= 1");
    const int d = domain.dim();
    // enumerate multi-indices by total degree, lexicographic within a degree
    std::vector<std::vector<int>> idx;
    for (int total = 0; idx.size() < size; ++total) {
        std::vector<int> k(static_cast<std::size_t>(d), 0);
        // all compositions of `total` into d nonnegative parts, lexicographically descending in k_0
        std::vector<std::vector<int>> level;
        auto rec = [&](auto&& self, int axis, int left) -> void {
            if (axis == d - 1) {
                k[static_cast<std::size_t>(axis)] = left;
                level.push_back(k);
                return;
            }
            for (int v = left; v >= 0; --v) {
                k[static_cast<std::size_t>(axis)] = v;
                self(self, axis + 1, left - v);
            }
        };
        rec(rec, 0, total);
        std::sort(level.begin(), level.end());
        for (auto& m : level) {
            if (idx.size() == size) break;
            idx.push_back(std::move(m));
        }
    }
    std::vector<Term> terms;
    for (const auto& k : idx) {
        Term t;
        for (int j = 0; j < d; ++j) {
            const auto& iv = domain.axis(j);
            const double f = std::numbers::pi * k[static_cast<std::size_t>(j)] / iv.width();
            t.freq.push_back(f);
            t.phase.push_back(-f * iv.lo);
        }
        terms.push_back(std::move(t));
    }
    auto b = std::make_shared<TrigBasis>(Form::Product, d, std::move(terms), "cosine");
    b->cosine_indices_ = std::move(idx);
    return b;
}

std::shared_ptr<const TrigBasis> TrigBasis::fourier_features(int dim, std::vector<std::vector<double>> omegas,
                                                             std::vector<double> phases) {
    if (omegas.size() != phases.size()) throw InvalidArgument("fourier_features: one phase per frequency");
    std::vector<Term> terms;
    for (std::size_t k = 0; k < omegas.size(); ++k)
        terms.push_back(Term{std::numbers::sqrt2, std::move(omegas[k]), {phases[k]}});
    return std::make_shared<TrigBasis>(Form::PlaneWave, dim, std::move(terms), "fourier_features");
}

double TrigBasis::term_value(std::size_t k, std::span<const double> x) const {
    const Term& t = terms_[k];
    if (form_ == Form::Product) {
        double v = t.amplitude;
        for (int j = 0; j < dim_; ++j) {
            const auto jj = static_cast<std::size_t>(j);
            if (t.freq[jj] == 0.0 && t.phase[jj] == 0.0) continue;
            v *= std::cos(t.freq[jj] * x[jj] + t.phase[jj]);
        }
        return v;
    }
    double arg = t.phase[0];
    for (int j = 0; j < dim_; ++j) arg += t.freq[static_cast<std::size_t>(j)] * x[static_cast<std::size_t>(j)];
    return t.amplitude * std::cos(arg);
}

void TrigBasis::values(std::span<const double> x, std::span<double> out) const {
    for (std::size_t k = 0; k < terms_.size(); ++k) out[k] = term_value(k, x);
}

std::shared_ptr<const TrigBasis> TrigBasis::derivative(int axis) const {
    if (axis < 0 || axis >= dim_) throw InvalidArgument("TrigBasis::derivative: axis out of range");
    const auto a = static_cast<std::size_t>(axis);
    std::vector<Term> out;
    out.reserve(terms_.size());
    for (const auto& t : terms_) {
        Term d = t;
        // d/dx cos(f x + p) = f cos(f x + p + pi/2)
        d.amplitude = t.amplitude * t.freq[a];
        if (form_ == Form::Product)
            d.phase[a] += std::numbers::pi / 2;
        else
            d.phase[0] += std::numbers::pi / 2;
        out.push_back(std::move(d));
    }
    auto b = std::make_shared<TrigBasis>(form_, dim_, std::move(out), label_ + "_d" + std::to_string(axis + 1));
    return b;
}

Eigen::MatrixXd TrigBasis::design_matrix_serial(const PointSet& points) const {
    Eigen::MatrixXd m(static_cast<Eigen::Index>(points.size()), static_cast<Eigen::Index>(terms_.size()));
    for (std::size_t i = 0; i < points.size(); ++i)
        for (std::size_t k = 0; k < terms_.size(); ++k)
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = term_value(k, points[i]);
    return m;
}

Eigen::MatrixXd TrigBasis::design_matrix(const PointSet& points) const {
    const auto n = static_cast<std::ptrdiff_t>(points.size());
    Eigen::MatrixXd m(n, static_cast<Eigen::Index>(terms_.size()));
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < terms_.size(); ++k)
            m(i, static_cast<Eigen::Index>(k)) = term_value(k, points[static_cast<std::size_t>(i)]);
    return m;
}

// --------------------------------------------------------- RegressionFunction

namespace {

void validate_grid(const CompactDomain& dom, const GridFunction& g) {
    if (g.axes.size() != static_cast<std::size_t>(dom.dim()))
        throw InvalidArgument("GridFunction: need one axis per dimension");
    std::size_t total = 1;
    for (const auto& ax : g.axes) {
        if (ax.size() < 2) throw InvalidArgument("GridFunction: each axis needs >= 2 nodes");
        for (std::size_t i = 1; i < ax.size(); ++i)
            if (!(ax[i] > ax[i - 1])) throw InvalidArgument("GridFunction: axis nodes must be strictly increasing");
        total *= ax.size();
    }
    if (g.values.size() != total) throw InvalidArgument("GridFunction: value count does not match grid");
}

double grid_value(const GridFunction& g, std::span<const double> x) {
    const std::size_t d = g.axes.size();
    std::vector<std::size_t> lo(d);
    std::vector<double> t(d);
    for (std::size_t j = 0; j < d; ++j) {
        const auto& ax = g.axes[j];
        const double xj = std::clamp(x[j], ax.front(), ax.back());
        auto it = std::upper_bound(ax.begin(), ax.end(), xj);
        std::size_t i = it == ax.begin() ? 0 : static_cast<std::size_t>(it - ax.begin()) - 1;
        i = std::min(i, ax.size() - 2);
        lo[j] = i;
        t[j] = (xj - ax[i]) / (ax[i + 1] - ax[i]);
    }
    // multilinear: sum over the 2^d cell corners
    double v = 0.0;
    for (std::size_t corner = 0; corner < (std::size_t{1} << d); ++corner) {
        double w = 1.0;
        std::size_t flat = 0;
        for (std::size_t j = 0; j < d; ++j) {
            const bool up = (corner >> j) & 1u;
            w *= up ? t[j] : 1.0 - t[j];
            flat = flat * g.axes[j].size() + lo[j] + (up ? 1 : 0);
        }
        if (w != 0.0) v += w * g.values[flat];
    }
    return v;
}

double closed_value(const ClosedForm& c, std::span<const double> x) {
    if (c.rule == ClosedForm::Rule::Constant) return c.constant;
    const double xa = x[static_cast<std::size_t>(c.axis)];
    const auto it = std::upper_bound(c.breakpoints.begin(), c.breakpoints.end(), xa);
    return c.heights[static_cast<std::size_t>(it - c.breakpoints.begin())];
}

double expansion_value(const BasisExpansion& e, std::span<const double> x) {
    double v = e.offset;
    for (std::size_t k = 0; k < e.coefficients.size(); ++k)
        if (e.coefficients[k] != 0.0) v += e.coefficients[k] * e.basis->term_value(k, x);
    return v;
}

}  // namespace

RegressionFunction::RegressionFunction(CompactDomain domain, Repr repr) : domain_(std::move(domain)), repr_(std::move(repr)) {
    if (auto* e = std::get_if<BasisExpansion>(&repr_)) {
        if (!e->basis) throw InvalidArgument("BasisExpansion: missing basis");
        if (e->basis->dim() != domain_.dim()) throw InvalidArgument("BasisExpansion: basis dimension mismatch");
        if (e->coefficients.size() != e->basis->size())
            throw InvalidArgument("BasisExpansion: coefficient count differs from basis size");
    } else if (auto* g = std::get_if<GridFunction>(&repr_)) {
        validate_grid(domain_, *g);
    } else {
        const auto& c = std::get<ClosedForm>(repr_);
        if (c.rule == ClosedForm::Rule::Step) {
            if (c.axis < 0 || c.axis >= domain_.dim()) throw InvalidArgument("step: axis out of range");
            if (c.heights.size() != c.breakpoints.size() + 1)
                throw InvalidArgument("step: need breakpoints.size() + 1 heights");
            for (std::size_t i = 1; i < c.breakpoints.size(); ++i)
                if (!(c.breakpoints[i] > c.breakpoints[i - 1]))
                    throw InvalidArgument("step: breakpoints must be strictly increasing");
        }
    }
}

RegressionFunction RegressionFunction::zero(const CompactDomain& domain) { return constant(domain, 0.0); }

RegressionFunction RegressionFunction::constant(const CompactDomain& domain, double c) {
    ClosedForm cf;
    cf.rule = ClosedForm::Rule::Constant;
    cf.constant = c;
    return RegressionFunction(domain, cf);
}

RegressionFunction RegressionFunction::step(const CompactDomain& domain, std::vector<double> breakpoints,
                                            std::vector<double> heights, int axis) {
    ClosedForm cf;
    cf.rule = ClosedForm::Rule::Step;
    cf.axis = axis;
    cf.breakpoints = std::move(breakpoints);
    cf.heights = std::move(heights);
    return RegressionFunction(domain, cf);
}

RegressionFunction RegressionFunction::sine(const CompactDomain& domain, double amplitude, double frequency,
                                            double phase, int axis) {
    if (axis < 0 || axis >= domain.dim()) throw InvalidArgument("sine: axis out of range");
    TrigBasis::Term t;
    t.amplitude = 1.0;
    t.freq.assign(static_cast<std::size_t>(domain.dim()), 0.0);
    t.freq[static_cast<std::size_t>(axis)] = 2.0 * std::numbers::pi * frequency;
    t.phase = {phase - std::numbers::pi / 2};
    auto basis = std::make_shared<TrigBasis>(TrigBasis::Form::PlaneWave, domain.dim(), std::vector{t}, "sine");
    return expansion(domain, basis, {amplitude});
}

RegressionFunction RegressionFunction::expansion(const CompactDomain& domain, std::shared_ptr<const TrigBasis> basis,
                                                 std::vector<double> coefficients, double offset) {
    return RegressionFunction(domain, BasisExpansion{std::move(basis), std::move(coefficients), offset});
}

RegressionFunction RegressionFunction::grid(const CompactDomain& domain, std::vector<std::vector<double>> axes,
                                            std::vector<double> values) {
    return RegressionFunction(domain, GridFunction{std::move(axes), std::move(values)});
}

double RegressionFunction::value(std::span<const double> x) const {
    return std::visit(
        [&](const auto& r) -> double {
            using T = std::decay_t<decltype(r)>;
            if constexpr (std::is_same_v<T, BasisExpansion>)
                return expansion_value(r, x);
            else if constexpr (std::is_same_v<T, GridFunction>)
                return grid_value(r, x);
            else
                return closed_value(r, x);
        },
        repr_);
}

double RegressionFunction::operator()(std::span<const double> x) const {
    if (!domain_.contains(x)) throw DomainError("RegressionFunction: point outside domain");
    return value(x);
}

std::vector<double> RegressionFunction::values(const PointSet& points) const {
    std::vector<double> out(points.size());
    if (const auto* e = as_expansion(); e && points.size() > 256) {
        const Eigen::MatrixXd phi = e->basis->design_matrix(points);
        const Eigen::Map<const Eigen::VectorXd> w(e->coefficients.data(), static_cast<Eigen::Index>(e->coefficients.size()));
        Eigen::Map<Eigen::VectorXd>(out.data(), static_cast<Eigen::Index>(out.size())) =
            (phi * w).array() + e->offset;
        return out;
    }
    const auto n = static_cast<std::ptrdiff_t>(points.size());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = value(points[static_cast<std::size_t>(i)]);
    return out;
}

std::vector<Discontinuity> RegressionFunction::discontinuities() const {
    std::vector<Discontinuity> out;
    if (const auto* c = std::get_if<ClosedForm>(&repr_); c && c->rule == ClosedForm::Rule::Step)
        for (double b : c->breakpoints) out.push_back({c->axis, b});
    return out;
}

RegressionFunction RegressionFunction::shifted(double c) const {
    Repr r = repr_;
    std::visit(
        [&](auto& v) {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, BasisExpansion>)
                v.offset += c;
            else if constexpr (std::is_same_v<T, GridFunction>)
                for (double& y : v.values) y += c;
            else {
                v.constant += c;
                for (double& h : v.heights) h += c;
            }
        },
        r);
    return RegressionFunction(domain_, std::move(r));
}

// -------------------------------------------------------------------- JSON

namespace {

json domain_json(const CompactDomain& d) {
    json arr = json::array();
    for (const auto& b : d.bounds()) arr.push_back({b.lo, b.hi});
    return arr;
}

CompactDomain domain_from_json(const json& j) {
    std::vector<Interval> bounds;
    for (const auto& b : j) bounds.push_back({b.at(0).get<double>(), b.at(1).get<double>()});
    return CompactDomain(std::move(bounds));
}

}  // namespace

json RegressionFunction::to_json() const {
    json j;
    j["domain"] = domain_json(domain_);
    std::visit(
        [&](const auto& r) {
            using T = std::decay_t<decltype(r)>;
            if constexpr (std::is_same_v<T, BasisExpansion>) {
                j["repr"] = "basis";
                j["form"] = r.basis->form() == TrigBasis::Form::Product ? "product" : "plane_wave";
                j["label"] = r.basis->label();
                json terms = json::array();
                for (const auto& t : r.basis->terms())
                    terms.push_back({{"amplitude", t.amplitude}, {"freq", t.freq}, {"phase", t.phase}});
                j["terms"] = std::move(terms);
                j["coefficients"] = r.coefficients;
                j["offset"] = r.offset;
            } else if constexpr (std::is_same_v<T, GridFunction>) {
                j["repr"] = "grid";
                j["axes"] = r.axes;
                j["values"] = r.values;
            } else {
                j["repr"] = "closed_form";
                if (r.rule == ClosedForm::Rule::Constant) {
                    j["rule"] = "constant";
                    j["constant"] = r.constant;
                } else {
                    j["rule"] = "step";
                    j["axis"] = r.axis;
                    j["breakpoints"] = r.breakpoints;
                    j["heights"] = r.heights;
                }
            }
        },
        repr_);
    return j;
}

RegressionFunction RegressionFunction::from_json(const json& j) {
    const CompactDomain dom = domain_from_json(j.at("domain"));
    const auto kind = j.at("repr").get<std::string>();
    if (kind == "basis") {
        const auto form = j.at("form").get<std::string>() == "product" ? TrigBasis::Form::Product
                                                                       : TrigBasis::Form::PlaneWave;
        std::vector<TrigBasis::Term> terms;
        for (const auto& t : j.at("terms"))
            terms.push_back({t.at("amplitude").get<double>(), t.at("freq").get<std::vector<double>>(),
                             t.at("phase").get<std::vector<double>>()});
        auto basis = std::make_shared<TrigBasis>(form, dom.dim(), std::move(terms), j.value("label", std::string{}));
        return expansion(dom, basis, j.at("coefficients").get<std::vector<double>>(), j.value("offset", 0.0));
    }
    if (kind == "grid")
        return grid(dom, j.at("axes").get<std::vector<std::vector<double>>>(), j.at("values").get<std::vector<double>>());
    if (kind == "closed_form") {
        const auto rule = j.at("rule").get<std::string>();
        if (rule == "constant") return constant(dom, j.at("constant").get<double>());
        if (rule == "step")
            return step(dom, j.at("breakpoints").get<std::vector<double>>(), j.at("heights").get<std::vector<double>>(),
                        j.value("axis", 0));
        throw InvalidArgument("RegressionFunction::from_json: unknown rule " + rule);
    }
    throw InvalidArgument("RegressionFunction::from_json: unknown repr " + kind);
}

// -------------------------------------------------------------- operations

int default_sup_resolution(int dim) {
    switch (dim) {
        case 1: return 2048;
        case 2: return 256;
        default: return 64;
    }
}

SupNormReport sup_norm(const RegressionFunction& f, int per_axis) {
    if (per_axis == 0) per_axis = default_sup_resolution(f.domain().dim());
    if (per_axis < 2) throw InvalidArgument("sup_norm: need at least 2 grid points per axis");

    if (const auto* c = std::get_if<ClosedForm>(&f.repr())) {
        double v = std::fabs(c->constant);
        if (c->rule == ClosedForm::Rule::Step) {
            v = 0.0;
            for (double h : c->heights) v = std::max(v, std::fabs(h));
        }
        return {v, SupNormReport::Method::Analytic, 0, v};
    }

    const auto& dom = f.domain();
    const int d = dom.dim();
    std::size_t total = 1;
    for (int j = 0; j < d; ++j) total *= static_cast<std::size_t>(per_axis);
    double best = 0.0;
#pragma omp parallel for reduction(max : best) schedule(static)
    for (std::ptrdiff_t t = 0; t < static_cast<std::ptrdiff_t>(total); ++t) {
        double x[16];
        auto rem = static_cast<std::size_t>(t);
        for (int j = d - 1; j >= 0; --j) {
            const auto i = rem % static_cast<std::size_t>(per_axis);
            rem /= static_cast<std::size_t>(per_axis);
            const auto& iv = dom.axis(j);
            x[j] = iv.lo + iv.width() * static_cast<double>(i) / (per_axis - 1);
        }
        best = std::max(best, std::fabs(f.value(std::span<const double>(x, static_cast<std::size_t>(d)))));
    }

    SupNormReport r{best, SupNormReport::Method::DenseGrid, per_axis, std::numeric_limits<double>::infinity()};
    if (const auto* e = f.as_expansion()) {
        double bound = std::fabs(e->offset);
        for (std::size_t k = 0; k < e->coefficients.size(); ++k)
            bound += std::fabs(e->coefficients[k] * e->basis->terms()[k].amplitude);
        r.certified_upper = bound;
    } else if (const auto* g = std::get_if<GridFunction>(&f.repr())) {
        // multilinear interpolation never leaves the range of the node values
        double m = 0.0;
        for (double v : g->values) m = std::max(m, std::fabs(v));
        r.certified_upper = m;
    }
    return r;
}

RegressionFunction partial_derivative(const RegressionFunction& f, int axis) {
    const auto& dom = f.domain();
    if (axis < 0 || axis >= dom.dim()) throw InvalidArgument("partial_derivative: axis out of range");
    if (const auto* e = f.as_expansion())
        return RegressionFunction::expansion(dom, e->basis->derivative(axis), e->coefficients, 0.0);
    if (const auto* c = std::get_if<ClosedForm>(&f.repr())) {
        if (c->rule == ClosedForm::Rule::Constant) return RegressionFunction::zero(dom);
        throw NotDifferentiable("partial_derivative: step function has jumps");
    }
    const auto& g = std::get<GridFunction>(f.repr());
    const std::size_t d = g.axes.size();
    const auto a = static_cast<std::size_t>(axis);
    std::vector<std::size_t> stride(d, 1);
    for (std::size_t j = d - 1; j-- > 0;) stride[j] = stride[j + 1] * g.axes[j + 1].size();
    const auto& ax = g.axes[a];
    const std::size_t m = ax.size();
    std::vector<double> out(g.values.size());
    for (std::size_t flat = 0; flat < g.values.size(); ++flat) {
        const std::size_t i = (flat / stride[a]) % m;
        const double* v = g.values.data();
        if (i == 0) {
            out[flat] = (v[flat + stride[a]] - v[flat]) / (ax[1] - ax[0]);
            if (m >= 3) {  // second-order one-sided difference
                const double h1 = ax[1] - ax[0], h2 = ax[2] - ax[1];
                const double f0 = v[flat], f1 = v[flat + stride[a]], f2 = v[flat + 2 * stride[a]];
                out[flat] = -(2 * h1 + h2) / (h1 * (h1 + h2)) * f0 + (h1 + h2) / (h1 * h2) * f1 - h1 / (h2 * (h1 + h2)) * f2;
            }
        } else if (i == m - 1) {
            out[flat] = (v[flat] - v[flat - stride[a]]) / (ax[m - 1] - ax[m - 2]);
            if (m >= 3) {
                const double h1 = ax[m - 2] - ax[m - 3], h2 = ax[m - 1] - ax[m - 2];
                const double f0 = v[flat - 2 * stride[a]], f1 = v[flat - stride[a]], f2 = v[flat];
                out[flat] = h2 / (h1 * (h1 + h2)) * f0 - (h1 + h2) / (h1 * h2) * f1 + (2 * h2 + h1) / (h2 * (h1 + h2)) * f2;
            }
        } else {
            // three-point derivative, second order on nonuniform grids
            const double h1 = ax[i] - ax[i - 1], h2 = ax[i + 1] - ax[i];
            const double fm = v[flat - stride[a]], f0 = v[flat], fp = v[flat + stride[a]];
            out[flat] = -h2 / (h1 * (h1 + h2)) * fm + (h2 - h1) / (h1 * h2) * f0 + h1 / (h2 * (h1 + h2)) * fp;
        }
    }
    return RegressionFunction::grid(dom, g.axes, std::move(out));
}

QuadratureValue l2q_distance_sq(const RegressionFunction& f, const RegressionFunction& g, const MeasureQ& q) {
    if (!(f.domain() == g.domain()) || !(f.domain() == q.domain()))
        throw InvalidArgument("l2q_distance_sq: functions and Q must share a domain");
    auto breaks = f.discontinuities();
    for (const auto& b : g.discontinuities()) breaks.push_back(b);
    const MeasureQ qq = q.with_discontinuities(breaks);
    return q_expectation(qq, [&](std::span<const double> x) {
        const double r = f.value(x) - g.value(x);
        return r * r;
    });
}

}  // namespace postcon
