#include <benchmark/benchmark.h>

#include <random>

#include "morsecon/chain_algebra.hpp"

using namespace morsecon;

static IntegerMatrix random_matrix(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> d(-3, 3);
    IntegerMatrix m(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) m(i, j) = d(rng);
    return m;
}

static void SmithNormalForm(benchmark::State& state) {
    const auto m = random_matrix(static_cast<std::size_t>(state.range(0)), 1);
    for (auto _ : state) benchmark::DoNotOptimize(smith_normal_form(m).rank);
    state.SetComplexityN(state.range(0));
}
BENCHMARK(SmithNormalForm)->RangeMultiplier(2)->Range(8, 64)->Complexity();

// Cellular complex of a chain of n circles: one vertex, n edges, d = 0.
static void HomologyOfWedge(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    ChainComplex cc;
    cc.groups.min_degree = 0;
    cc.groups.ranks = {n, n};
    IntegerMatrix d(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        d(i, i) = -1;
        d((i + 1) % n, i) = 1;
    }
    cc.differentials[1] = d;
    for (auto _ : state) benchmark::DoNotOptimize(homology(cc).degrees.size());
}
BENCHMARK(HomologyOfWedge)->Arg(16)->Arg(64);
