// Serial reference kernels against their OpenMP counterparts.
//
//   ./build/bench/postcon_bench --benchmark_filter=LossSum
//
// POSTCON_WORKERS sets the OpenMP thread count for the parallel variants.

#include <benchmark/benchmark.h>

#include <cmath>
#include <vector>

#include "postcon/domain.hpp"
#include "postcon/experiment.hpp"
#include "postcon/kernels.hpp"
#include "postcon/regression.hpp"
#include "postcon/rng.hpp"

namespace {

using namespace postcon;

struct Data {
    std::vector<double> y, fit;
};

Data make_data(std::size_t n) {
    Rng rng(42);
    Data d{std::vector<double>(n), std::vector<double>(n)};
    for (std::size_t i = 0; i < n; ++i) {
        d.fit[i] = std::cos(static_cast<double>(i) * 1e-3);
        d.y[i] = d.fit[i] + 0.5 * rng.normal();
    }
    return d;
}

const auto kLogLaplace = [](double z) { return -std::log(2.0) - std::fabs(z); };
const auto kLogNormal = [](double z) { return -0.9189385332046727 - 0.5 * z * z; };

template <bool Parallel>
void LossSum(benchmark::State& state) {
    const auto d = make_data(static_cast<std::size_t>(state.range(0)));
    for (auto _ : state) {
        const double v = Parallel ? kernels::parallel::loss_sum(d.y, d.fit, kernels::Loss::Square)
                                  : kernels::serial::loss_sum(d.y, d.fit, kernels::Loss::Square);
        benchmark::DoNotOptimize(v);
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}

template <bool Parallel, bool Laplace>
void LogPhiSum(benchmark::State& state) {
    const auto d = make_data(static_cast<std::size_t>(state.range(0)));
    for (auto _ : state) {
        double v;
        if constexpr (Laplace)
            v = Parallel ? kernels::parallel::log_phi_sum(d.y, d.fit, 0.5, kLogLaplace)
                         : kernels::serial::log_phi_sum(d.y, d.fit, 0.5, kLogLaplace);
        else
            v = Parallel ? kernels::parallel::log_phi_sum(d.y, d.fit, 0.5, kLogNormal)
                         : kernels::serial::log_phi_sum(d.y, d.fit, 0.5, kLogNormal);
        benchmark::DoNotOptimize(v);
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}

template <bool Parallel>
void DesignMatrix(benchmark::State& state) {
    const auto domain = CompactDomain::unit(1);
    const auto basis = TrigBasis::cosine(domain, 32);
    const auto design = make_design(domain, DesignKind::IidFromQ, static_cast<std::size_t>(state.range(0)), 9);
    for (auto _ : state) {
        auto m = Parallel ? basis->design_matrix(design.points) : basis->design_matrix_serial(design.points);
        benchmark::DoNotOptimize(m.data());
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}

}  // namespace

BENCHMARK(LossSum<false>)->Name("LossSum/serial")->RangeMultiplier(10)->Range(10000, 1000000);
BENCHMARK(LossSum<true>)->Name("LossSum/openmp")->RangeMultiplier(10)->Range(10000, 1000000);
BENCHMARK(LogPhiSum<false, false>)->Name("LogPhiSumNormal/serial")->RangeMultiplier(10)->Range(10000, 1000000);
BENCHMARK(LogPhiSum<true, false>)->Name("LogPhiSumNormal/openmp")->RangeMultiplier(10)->Range(10000, 1000000);
BENCHMARK(LogPhiSum<false, true>)->Name("LogPhiSumLaplace/serial")->RangeMultiplier(10)->Range(10000, 1000000);
BENCHMARK(LogPhiSum<true, true>)->Name("LogPhiSumLaplace/openmp")->RangeMultiplier(10)->Range(10000, 1000000);
BENCHMARK(DesignMatrix<false>)->Name("DesignMatrix/serial")->RangeMultiplier(10)->Range(1000, 100000);
BENCHMARK(DesignMatrix<true>)->Name("DesignMatrix/openmp")->RangeMultiplier(10)->Range(1000, 100000);

int main(int argc, char** argv) {
    postcon::configure_workers_from_env();
    benchmark::Initialize(&argc, argv);
    if (benchmark::ReportUnrecognizedArguments(argc, argv)) return 1;
    benchmark::RunSpecifiedBenchmarks();
    benchmark::Shutdown();
    return 0;
}
