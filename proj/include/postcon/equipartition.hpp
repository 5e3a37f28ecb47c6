#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "postcon/domain.hpp"
#include "postcon/kl_rate.hpp"
#include "postcon/noise.hpp"

namespace postcon {

/// Observations y_i = eta0(x_i) + eps_i at the points of a design.
struct Dataset {
    CovariateDesign design;
    std::vector<double> y;
    std::string true_model_id;
    std::uint64_t seed = 0;

    std::size_t size() const { return y.size(); }
    /// First `count` observations with their covariates.
    Dataset prefix(std::size_t count) const;
    /// Rows [begin, end).
    Dataset slice(std::size_t begin, std::size_t end) const;
};

/// Short label such as "normal(sigma0=1)" for a true model.
std::string describe(const TrueModel& truth);

/// Noise comes from the first n values of the stream seeded by `seed`, so
/// simulating on a longer design with the same seed extends a shorter dataset.
Dataset simulate(const TrueModel& truth, const CovariateDesign& design, std::uint64_t seed);

enum class Execution { Serial, Parallel };

/// log R_n(theta) = sum_i [log f_theta(y_i | x_i) - log f_theta0(y_i | x_i)],
/// with the postulated family equal to the truth's (same standardized phi).
/// Throws InvalidArgument on a family mismatch.
double log_ratio(const Dataset& data, const Theta& theta, const TrueModel& truth, const NoiseModel& family,
                 Execution exec = Execution::Parallel);

/// sum_i log[(1/sigma) phi((y_i - eta(x_i)) / sigma)] for any family.
double log_likelihood(const Dataset& data, const RegressionFunction& eta, const NoiseModel& model,
                      Execution exec = Execution::Parallel);

/// Per-observation terms of the log likelihood ratio of theta (postulated
/// family) against the truth; the families may differ.
std::vector<double> log_ratio_terms(const Dataset& data, const Theta& theta, const NoiseModel& family,
                                    const TrueModel& truth);

struct EquipartitionRow {
    std::size_t n = 0;
    std::size_t replicate = 0;
    double statistic = 0.0;  // (1/n) log R_n(theta)
    double target = 0.0;     // -h(theta)
    double gap = 0.0;        // statistic + h(theta)
};

struct EquipartitionTrace {
    std::string family;
    double h = 0.0;
    std::vector<EquipartitionRow> rows;

    /// Rows for one n, ordered by replicate.
    std::vector<EquipartitionRow> at(std::size_t n) const;
};

struct TraceOptions {
    DesignKind design = DesignKind::IidFromQ;
    Execution exec = Execution::Parallel;
};

/// Replicate r uses seed derive_seed(seed, r) for both covariates and noise;
/// the datasets of one replicate are prefixes of one stream (for the
/// partition design the covariates are rebuilt per n, the noise is still a
/// prefix). The family may differ from the truth's; h is then the cross-family rate.
EquipartitionTrace equipartition_trace(const Theta& theta, const NoiseModel& family, const TrueModel& truth,
                                       const MeasureQ& q, const std::vector<std::size_t>& n_schedule,
                                       std::size_t replicates, std::uint64_t seed, const TraceOptions& opt = {});

/// CSV with header family,n,replicate,statistic,target,gap.
void write_equipartition_csv(std::ostream& out, const EquipartitionTrace& trace);

struct UniformGapRow {
    std::size_t n = 0;
    std::size_t replicate = 0;
    double sup_gap = 0.0;
    std::size_t argmax = 0;  // index of the grid point attaining the sup
};

/// max over the grid of |(1/n) log R_n(theta) + h(theta)|, every grid point
/// evaluated on the same dataset per replicate and n.
std::vector<UniformGapRow> uniform_gap_on_compact(const std::vector<Theta>& grid, const NoiseModel& family,
                                                  const TrueModel& truth, const MeasureQ& q,
                                                  const std::vector<std::size_t>& n_schedule, std::size_t replicates,
                                                  std::uint64_t seed, const TraceOptions& opt = {});

/// CSV with header n,replicate,sup_gap,argmax.
void write_uniform_gap_csv(std::ostream& out, const std::vector<UniformGapRow>& rows);

/// Median of a sample (average of the middle pair for even sizes).
double median(std::vector<double> v);

}  // namespace postcon
