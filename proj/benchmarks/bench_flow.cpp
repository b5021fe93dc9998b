#include <benchmark/benchmark.h>

#include "morsecon/complex_builder.hpp"
#include "morsecon/cubical.hpp"
#include "morsecon/truncation.hpp"

using namespace morsecon;

static void StationaryPointsOnSphere(benchmark::State& state) {
    auto s2 = unit_sphere(3);
    FieldExpr f = parse_field("(-x1*x3, -x2*x3, 1 - x3^2)", s2);
    StationaryOptions o;
    o.seeds = static_cast<std::size_t>(state.range(0));
    for (auto _ : state) benchmark::DoNotOptimize(find_stationary_points(f, s2, o).points.size());
}
BENCHMARK(StationaryPointsOnSphere)->Arg(1000)->Arg(10000)->Unit(benchmark::kMillisecond);

static void TorusCounts(benchmark::State& state) {
    auto t2 = torus(2);
    FieldExpr f = parse_field(
        "(x2^2*(1 + 0.2*x3), -x1*x2*(1 + 0.2*x3), x4^2*(0.5 + 0.2*x1), -x3*x4*(0.5 + 0.2*x1))", t2);
    StationaryOptions o;
    o.seeds = 1000;
    auto pts = find_stationary_points(f, t2, o).points;
    for (std::size_t i = 0; i < pts.size(); ++i) pts[i].id = "p" + std::to_string(i);
    CountOptions co;
    co.shooting.density = static_cast<int>(state.range(0));
    for (auto _ : state) {
        auto p = pts;
        benchmark::DoNotOptimize(count_matrix(f, t2, p, co).n.size());
    }
}
BENCHMARK(TorusCounts)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);

static void SaddleIndexPair(benchmark::State& state) {
    Mat A = Mat::Zero(2, 2);
    A(0, 0) = 1.5;
    A(1, 1) = -1.0;
    LambdaField f(2, [A](const Vec& x) { return Vec(A * x); }, [A](const Vec&) { return A; });
    const int r = static_cast<int>(state.range(0));
    CubicalGrid g({-1, -1}, {1, 1}, {r, r});
    for (auto _ : state) benchmark::DoNotOptimize(relative_cubical_homology(build_index_pair(f, g)).degrees.size());
    state.SetComplexityN(state.range(0) * state.range(0));
}
BENCHMARK(SaddleIndexPair)->RangeMultiplier(2)->Range(32, 256)->Complexity()->Unit(benchmark::kMillisecond);

static void TruncatedFieldJacobian(benchmark::State& state) {
    auto fam = TruncationFamily::standard();
    auto c = ToyNonlinearity::standard(fam);
    TruncatedField field(fam, c, static_cast<double>(state.range(0)) + 0.5);
    Vec y = Vec::Constant(field.dim(), 0.1);
    for (auto _ : state) benchmark::DoNotOptimize(field.jacobian(y).sum());
}
BENCHMARK(TruncatedFieldJacobian)->DenseRange(5, 15, 5);
