#include <benchmark/benchmark.h>

#include <vector>

#include "flowcap/kernels.hpp"
#include "flowcap/rng.hpp"

namespace {

using namespace flowcap;

std::vector<float> random_values(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<float> v(n);
    for (auto& x : v) x = static_cast<float>(rng.normal());
    return v;
}

template <bool Parallel>
void BM_Matmul(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const auto a = random_values(n * n, 1), b = random_values(n * n, 2);
    std::vector<float> c(n * n);
    for (auto _ : state) {
        if constexpr (Parallel) {
            kernels::matmul(a.data(), b.data(), c.data(), n, n, n, false);
        } else {
            kernels::reference::matmul(a.data(), b.data(), c.data(), n, n, n, false);
        }
        benchmark::DoNotOptimize(c.data());
    }
    state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * n * n * n));
    state.counters["threads"] = kernels::max_threads();
}

template <bool Parallel>
void BM_MatmulNT(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const auto a = random_values(n * n, 3), b = random_values(n * n, 4);
    std::vector<float> c(n * n);
    for (auto _ : state) {
        if constexpr (Parallel) {
            kernels::matmul_nt(a.data(), b.data(), c.data(), n, n, n, false);
        } else {
            kernels::reference::matmul_nt(a.data(), b.data(), c.data(), n, n, n, false);
        }
        benchmark::DoNotOptimize(c.data());
    }
    state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * n * n * n));
}

template <bool Parallel>
void BM_Softmax(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const auto x = random_values(n * n, 5);
    std::vector<std::uint8_t> mask(n * n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j <= i; ++j) mask[i * n + j] = 1;
    std::vector<float> y(n * n);
    for (auto _ : state) {
        if constexpr (Parallel) {
            kernels::softmax_rows(x.data(), y.data(), n, n, mask.data());
        } else {
            kernels::reference::softmax_rows(x.data(), y.data(), n, n, mask.data());
        }
        benchmark::DoNotOptimize(y.data());
    }
    state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * n * n));
}

}  // namespace

BENCHMARK(BM_Matmul<false>)->Name("matmul/reference")->RangeMultiplier(2)->Range(32, 256);
BENCHMARK(BM_Matmul<true>)->Name("matmul/parallel")->RangeMultiplier(2)->Range(32, 256);
BENCHMARK(BM_MatmulNT<false>)->Name("matmul_nt/reference")->RangeMultiplier(2)->Range(32, 256);
BENCHMARK(BM_MatmulNT<true>)->Name("matmul_nt/parallel")->RangeMultiplier(2)->Range(32, 256);
BENCHMARK(BM_Softmax<false>)->Name("softmax/reference")->RangeMultiplier(4)->Range(64, 1024);
BENCHMARK(BM_Softmax<true>)->Name("softmax/parallel")->RangeMultiplier(4)->Range(64, 1024);

BENCHMARK_MAIN();
