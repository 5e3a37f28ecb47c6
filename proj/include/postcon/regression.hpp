#pragma once

#include <memory>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "postcon/domain.hpp"

namespace postcon {

/// Finite family of trigonometric terms psi_k on R^d, closed under
/// differentiation.
///
/// Product terms:     psi_k(x) = a_k * prod_j cos(f_kj x_j + p_kj)
/// Plane-wave terms:  psi_k(x) = a_k * cos(sum_j f_kj x_j + p_k)
///
/// The tensor cosine basis on a box uses product terms with f_kj = pi k_j /
/// (b_j - a_j); random Fourier features use plane waves. |psi_k| <= |a_k|
/// everywhere, which gives the certified sup-norm bound sum |w_k a_k|.
class TrigBasis {
public:
    enum class Form { Product, PlaneWave };

    struct Term {
        double amplitude = 1.0;
        std::vector<double> freq;   // length d
        std::vector<double> phase;  // length d (Product) or 1 (PlaneWave)
    };

    TrigBasis(Form form, int dim, std::vector<Term> terms, std::string label);

    /// Tensor cosine basis prod_j cos(pi k_j (x_j - a_j)/(b_j - a_j)), the first
    /// `size` multi-indices ordered by total degree then lexicographically. k = 0
    /// is the constant function 1.
    static std::shared_ptr<const TrigBasis> cosine(const CompactDomain& domain, std::size_t size);

    /// sqrt(2) cos(omega_k . x + b_k) with given frequencies (size x d) and phases.
    static std::shared_ptr<const TrigBasis> fourier_features(int dim, std::vector<std::vector<double>> omegas,
                                                             std::vector<double> phases);

    Form form() const { return form_; }
    int dim() const { return dim_; }
    std::size_t size() const { return terms_.size(); }
    const std::vector<Term>& terms() const { return terms_; }
    const std::string& label() const { return label_; }
    /// Multi-indices of a cosine basis (empty for other bases).
    const std::vector<std::vector<int>>& cosine_indices() const { return cosine_indices_; }

    double term_value(std::size_t k, std::span<const double> x) const;
    /// Values of all terms at x.
    void values(std::span<const double> x, std::span<double> out) const;

    /// Basis of d/dx_j psi_k, term by term (same ordering).
    std::shared_ptr<const TrigBasis> derivative(int axis) const;

    /// n x K matrix of psi_k(x_i).
    Eigen::MatrixXd design_matrix(const PointSet& points) const;
    /// Serial reference of design_matrix.
    Eigen::MatrixXd design_matrix_serial(const PointSet& points) const;

private:
    Form form_;
    int dim_;
    std::vector<Term> terms_;
    std::string label_;
    std::vector<std::vector<int>> cosine_indices_;
};

struct BasisExpansion {
    std::shared_ptr<const TrigBasis> basis;
    std::vector<double> coefficients;
    double offset = 0.0;
};

/// Tensor-grid function with multilinear interpolation.
struct GridFunction {
    std::vector<std::vector<double>> axes;  // strictly increasing per axis
    std::vector<double> values;             // row-major, last axis fastest
};

/// Closed-form rules. Step functions jump along one axis and carry their
/// breakpoints explicitly.
struct ClosedForm {
    enum class Rule { Constant, Step };
    Rule rule = Rule::Constant;
    double constant = 0.0;
    int axis = 0;
    std::vector<double> breakpoints;  // increasing
    std::vector<double> heights;      // breakpoints.size() + 1 levels
};

class RegressionFunction {
public:
    using Repr = std::variant<BasisExpansion, GridFunction, ClosedForm>;

    RegressionFunction(CompactDomain domain, Repr repr);

    static RegressionFunction zero(const CompactDomain& domain);
    static RegressionFunction constant(const CompactDomain& domain, double c);
    /// Piecewise-constant function of x_axis: heights[i] on
    /// [breakpoints[i-1], breakpoints[i]); right-continuous at each jump.
    static RegressionFunction step(const CompactDomain& domain, std::vector<double> breakpoints,
                                   std::vector<double> heights, int axis = 0);
    /// amplitude * sin(2 pi frequency x_axis + phase), as a one-term plane-wave expansion.
    static RegressionFunction sine(const CompactDomain& domain, double amplitude, double frequency,
                                   double phase = 0.0, int axis = 0);
    static RegressionFunction expansion(const CompactDomain& domain, std::shared_ptr<const TrigBasis> basis,
                                        std::vector<double> coefficients, double offset = 0.0);
    static RegressionFunction grid(const CompactDomain& domain, std::vector<std::vector<double>> axes,
                                   std::vector<double> values);

    const CompactDomain& domain() const { return domain_; }
    const Repr& repr() const { return repr_; }
    bool is_expansion() const { return std::holds_alternative<BasisExpansion>(repr_); }
    const BasisExpansion* as_expansion() const { return std::get_if<BasisExpansion>(&repr_); }

    /// f(x); throws DomainError when x is outside the domain.
    double operator()(std::span<const double> x) const;
    double evaluate(std::span<const double> x) const { return (*this)(x); }
    /// f(x) with no domain check.
    double value(std::span<const double> x) const;
    std::vector<double> values(const PointSet& points) const;

    /// Hyperplanes where the function may jump.
    std::vector<Discontinuity> discontinuities() const;

    /// f + c.
    RegressionFunction shifted(double c) const;

    nlohmann::json to_json() const;
    static RegressionFunction from_json(const nlohmann::json& j);

private:
    CompactDomain domain_;
    Repr repr_;
};

struct SupNormReport {
    enum class Method { Analytic, DenseGrid };
    double value = 0.0;  // analytic value, or dense-grid lower bound
    Method method = Method::DenseGrid;
    int resolution = 0;  // grid points per axis
    /// Certified upper bound; sum |w_k||psi_k| for expansions, otherwise value
    /// for analytic reports and +inf for grids.
    double certified_upper = 0.0;
};

/// Default dense-grid resolution per axis: 2048 (d=1), 256 (d=2), 64 otherwise.
int default_sup_resolution(int dim);

SupNormReport sup_norm(const RegressionFunction& f, int per_axis = 0);

/// d f / d x_axis. Analytic for expansions and constants, central finite
/// differences on the grid for GridFunction. Step functions throw NotDifferentiable.
RegressionFunction partial_derivative(const RegressionFunction& f, int axis);

/// E_Q (f - g)^2, with quadrature cells split at the discontinuities of both.
QuadratureValue l2q_distance_sq(const RegressionFunction& f, const RegressionFunction& g, const MeasureQ& q);

}  // namespace postcon
