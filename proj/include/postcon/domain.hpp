#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

namespace postcon {

struct Interval {
    double lo = 0.0;
    double hi = 1.0;
    double width() const { return hi - lo; }
};

/// Box-shaped compact covariate space, [a_1,b_1] x ... x [a_d,b_d].
class CompactDomain {
public:
    explicit CompactDomain(std::vector<Interval> bounds);
    static CompactDomain unit(int dim = 1);

    int dim() const { return static_cast<int>(bounds_.size()); }
    const std::vector<Interval>& bounds() const { return bounds_; }
    const Interval& axis(int j) const { return bounds_[static_cast<std::size_t>(j)]; }
    /// Lebesgue measure L of the box.
    double volume() const;
    bool contains(std::span<const double> x) const;

    bool operator==(const CompactDomain&) const;

private:
    std::vector<Interval> bounds_;
};

/// Flat row-major storage of points in R^d.
class PointSet {
public:
    PointSet() = default;
    PointSet(int dim, std::vector<double> coords);

    int dim() const { return dim_; }
    std::size_t size() const { return dim_ == 0 ? 0 : coords_.size() / static_cast<std::size_t>(dim_); }
    bool empty() const { return size() == 0; }
    std::span<const double> operator[](std::size_t i) const {
        return {coords_.data() + i * static_cast<std::size_t>(dim_), static_cast<std::size_t>(dim_)};
    }
    void push_back(std::span<const double> x);
    const std::vector<double>& coords() const { return coords_; }

    /// First `count` points.
    PointSet prefix(std::size_t count) const;

private:
    int dim_ = 0;
    std::vector<double> coords_;
};

using DomainFunction = std::function<double(std::span<const double>)>;

/// Axis-aligned hyperplane x_axis = position where an integrand may jump.
struct Discontinuity {
    int axis = 0;
    double position = 0.0;
    bool operator==(const Discontinuity&) const = default;
};

struct QuadratureValue {
    double value = 0.0;
    double error = 0.0;
};

/// The covariate probability measure Q with a quadrature rule attached.
///
/// UniformLebesgue uses tensor-product composite Gauss-Legendre for d <= 3 and
/// a Halton quasi-Monte Carlo rule above that. DensityOnGrid is a user-supplied
/// discrete node/weight rule. The refined rule (twice the cells per axis, or
/// twice the QMC points) backs the error estimate of q_expectation.
class MeasureQ {
public:
    enum class Kind { UniformLebesgue, DensityOnGrid };

    struct UniformOptions {
        int cells_per_axis = 0;  // 0 picks 64 / 16 / 6 cells for d = 1 / 2 / 3
        int order = 8;
        std::size_t qmc_points = 1u << 14;
        std::vector<Discontinuity> discontinuities;
    };

    static MeasureQ uniform(const CompactDomain& domain);
    static MeasureQ uniform(const CompactDomain& domain, UniformOptions options);
    /// Weights are normalized to sum to one; every node must lie in the domain.
    static MeasureQ density_on_grid(const CompactDomain& domain, PointSet nodes, std::vector<double> weights);

    Kind kind() const { return kind_; }
    const CompactDomain& domain() const { return domain_; }
    const PointSet& nodes() const { return nodes_; }
    const std::vector<double>& weights() const { return weights_; }
    const PointSet& refined_nodes() const { return refined_nodes_; }
    const std::vector<double>& refined_weights() const { return refined_weights_; }
    const UniformOptions& options() const { return options_; }

    /// Same measure, quadrature cells additionally split at the given
    /// hyperplanes. Node-density measures are returned unchanged.
    MeasureQ with_discontinuities(std::span<const Discontinuity> extra) const;

    /// Sum of w_i v_i for values v_i already evaluated on nodes().
    double integrate_values(std::span<const double> values) const;

private:
    MeasureQ(const CompactDomain& domain) : domain_(domain) {}

    Kind kind_ = Kind::UniformLebesgue;
    CompactDomain domain_;
    UniformOptions options_;
    PointSet nodes_;
    std::vector<double> weights_;
    PointSet refined_nodes_;
    std::vector<double> refined_weights_;
};

/// E_Q f with error estimate |rule - refined rule|. A non-finite f value
/// raises EvaluationError naming the node.
QuadratureValue q_expectation(const MeasureQ& q, const DomainFunction& f);

/// Values of f on every point, evaluated in parallel (f must be thread-safe).
/// Throws EvaluationError naming the first node with a non-finite value.
std::vector<double> evaluate_on(const PointSet& points, const DomainFunction& f);

enum class DesignKind { IidFromQ, DeterministicPartition };

struct CovariateDesign {
    DesignKind kind = DesignKind::DeterministicPartition;
    std::uint64_t seed = 0;
    PointSet points;
    /// Lebesgue measure of each cell (DeterministicPartition only).
    std::vector<double> cell_measures;
};

/// n covariate points. IidFromQ samples Q (uniform box or node-density);
/// DeterministicPartition returns the centers of an equal-measure partition
/// whose cells shrink in every direction.
CovariateDesign make_design(const MeasureQ& q, DesignKind kind, std::size_t n, std::uint64_t seed);
/// Same, with Q uniform on the domain.
CovariateDesign make_design(const CompactDomain& domain, DesignKind kind, std::size_t n, std::uint64_t seed);

/// (1/n) sum f(x_i).
double empirical_q_average(const CovariateDesign& design, const DomainFunction& f);

/// CSV with header index,x_1,...,x_d.
void write_design_csv(std::ostream& out, const CovariateDesign& design);

}  // namespace postcon
