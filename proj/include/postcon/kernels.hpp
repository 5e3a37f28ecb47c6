#pragma once

// Data-parallel inner loops. Each kernel exists twice: a plain serial
// reference and an OpenMP version. The OpenMP versions split work into fixed
// blocks of kBlock elements and combine block results in block order, so the
// result does not depend on the thread count and reruns are bit-identical.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "postcon/rng.hpp"

namespace postcon::kernels {

inline constexpr std::size_t kBlock = 2048;

/// Neumaier compensated accumulator.
class CompensatedSum {
public:
    void add(double v) noexcept {
        const double t = sum_ + v;
        if (std::fabs(sum_) >= std::fabs(v))
            comp_ += (sum_ - t) + v;
        else
            comp_ += (v - t) + sum_;
        sum_ = t;
    }
    double value() const noexcept { return sum_ + comp_; }

private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

enum class Loss { Square, Absolute };

inline double apply_loss(Loss loss, double r) noexcept {
    return loss == Loss::Square ? r * r : std::fabs(r);
}

inline std::size_t block_count(std::size_t n) noexcept { return (n + kBlock - 1) / kBlock; }

namespace serial {

inline double sum(std::span<const double> v) {
    CompensatedSum acc;
    for (double x : v) acc.add(x);
    return acc.value();
}

/// Sum over i of loss(y_i - fit_i).
inline double loss_sum(std::span<const double> y, std::span<const double> fit, Loss loss) {
    CompensatedSum acc;
    for (std::size_t i = 0; i < y.size(); ++i) acc.add(apply_loss(loss, y[i] - fit[i]));
    return acc.value();
}

/// Sum over i of log_phi((y_i - fit_i) / scale).
template <class LogPhi>
double log_phi_sum(std::span<const double> y, std::span<const double> fit, double scale, const LogPhi& log_phi) {
    CompensatedSum acc;
    for (std::size_t i = 0; i < y.size(); ++i) acc.add(log_phi((y[i] - fit[i]) / scale));
    return acc.value();
}

/// Sum over i of w_i * f_i.
inline double dot(std::span<const double> w, std::span<const double> f) {
    CompensatedSum acc;
    for (std::size_t i = 0; i < w.size(); ++i) acc.add(w[i] * f[i]);
    return acc.value();
}

}  // namespace serial

namespace parallel {

namespace detail {

template <class Term>
double blocked_sum(std::size_t n, const Term& term) {
    const std::size_t nb = block_count(n);
    if (nb <= 1) {
        CompensatedSum acc;
        for (std::size_t i = 0; i < n; ++i) acc.add(term(i));
        return acc.value();
    }
    std::vector<double> partial(nb);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t b = 0; b < static_cast<std::ptrdiff_t>(nb); ++b) {
        const std::size_t lo = static_cast<std::size_t>(b) * kBlock;
        const std::size_t hi = lo + kBlock < n ? lo + kBlock : n;
        CompensatedSum acc;
        for (std::size_t i = lo; i < hi; ++i) acc.add(term(i));
        partial[static_cast<std::size_t>(b)] = acc.value();
    }
    CompensatedSum total;
    for (double p : partial) total.add(p);
    return total.value();
}

}  // namespace detail

inline double sum(std::span<const double> v) {
    return detail::blocked_sum(v.size(), [&](std::size_t i) { return v[i]; });
}

inline double loss_sum(std::span<const double> y, std::span<const double> fit, Loss loss) {
    return detail::blocked_sum(y.size(), [&](std::size_t i) { return apply_loss(loss, y[i] - fit[i]); });
}

template <class LogPhi>
double log_phi_sum(std::span<const double> y, std::span<const double> fit, double scale, const LogPhi& log_phi) {
    return detail::blocked_sum(y.size(), [&](std::size_t i) { return log_phi((y[i] - fit[i]) / scale); });
}

inline double dot(std::span<const double> w, std::span<const double> f) {
    return detail::blocked_sum(w.size(), [&](std::size_t i) { return w[i] * f[i]; });
}

}  // namespace parallel

/// First two moments of a Monte Carlo statistic.
struct MonteCarloMoments {
    double mean = 0.0;
    double variance = 0.0;  // sample variance of one draw
    std::size_t draws = 0;
    double standard_error() const { return draws > 1 ? std::sqrt(variance / static_cast<double>(draws)) : 0.0; }
};

/// Monte Carlo mean of draw(rng) over `draws` samples. Block b uses its own
/// generator seeded with derive_seed(seed, b); blocks run concurrently.
template <class Draw>
MonteCarloMoments mc_moments(std::size_t draws, std::uint64_t seed, const Draw& draw) {
    const std::size_t nb = block_count(draws);
    std::vector<double> s1(nb), s2(nb);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t b = 0; b < static_cast<std::ptrdiff_t>(nb); ++b) {
        const std::size_t lo = static_cast<std::size_t>(b) * kBlock;
        const std::size_t hi = lo + kBlock < draws ? lo + kBlock : draws;
        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(b)));
        CompensatedSum a1, a2;
        for (std::size_t i = lo; i < hi; ++i) {
            const double v = draw(rng);
            a1.add(v);
            a2.add(v * v);
        }
        s1[static_cast<std::size_t>(b)] = a1.value();
        s2[static_cast<std::size_t>(b)] = a2.value();
    }
    CompensatedSum t1, t2;
    for (std::size_t b = 0; b < nb; ++b) {
        t1.add(s1[b]);
        t2.add(s2[b]);
    }
    MonteCarloMoments m;
    m.draws = draws;
    const double n = static_cast<double>(draws);
    m.mean = t1.value() / n;
    m.variance = draws > 1 ? (t2.value() - n * m.mean * m.mean) / (n - 1.0) : 0.0;
    if (m.variance < 0.0) m.variance = 0.0;
    return m;
}

}  // namespace postcon::kernels
