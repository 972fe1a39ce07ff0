// Naive reference loops vs the optimized (padded, vectorized, OpenMP) kernels.
// Arguments: batch, channels (M = C), spatial side, kernel size.

#include <benchmark/benchmark.h>

#include "isonet/convops.hpp"
#include "isonet/isometry.hpp"
#include "isonet/network.hpp"
#include "isonet/reference.hpp"
#include "isonet/rng.hpp"

using namespace isonet;

namespace {

Signal random_signal(Rng& rng, int n, int c, int h, int w) {
    Signal s(n, c, h, w);
    for (double& v : s.values()) v = rng.normal();
    return s;
}

Kernel random_kernel(Rng& rng, int m, int c, int k) {
    Kernel a(m, c, k);
    for (double& v : a.values()) v = rng.normal();
    return a;
}

struct Case {
    Kernel a;
    Signal x, y;
    explicit Case(const benchmark::State& st) {
        Rng rng(42);
        const int n = static_cast<int>(st.range(0)), c = static_cast<int>(st.range(1));
        const int s = static_cast<int>(st.range(2)), k = static_cast<int>(st.range(3));
        a = random_kernel(rng, c, c, k);
        x = random_signal(rng, n, c, s, s);
        y = random_signal(rng, n, c, s, s);
    }
};

void flops(benchmark::State& st) {
    const double macs = static_cast<double>(st.range(0)) * st.range(1) * st.range(1) * st.range(2) * st.range(2) *
                        st.range(3) * st.range(3);
    st.counters["GFLOP"] = benchmark::Counter(2.0 * macs / 1e9, benchmark::Counter::kIsIterationInvariantRate);
}

void BM_operator_reference(benchmark::State& st) {
    const Case c(st);
    for (auto _ : st) benchmark::DoNotOptimize(reference::apply_operator(c.a, c.x));
    flops(st);
}
void BM_operator_optimized(benchmark::State& st) {
    const Case c(st);
    for (auto _ : st) benchmark::DoNotOptimize(apply_operator(c.a, c.x));
    flops(st);
}
void BM_adjoint_reference(benchmark::State& st) {
    const Case c(st);
    for (auto _ : st) benchmark::DoNotOptimize(reference::apply_adjoint(c.a, c.y));
    flops(st);
}
void BM_adjoint_optimized(benchmark::State& st) {
    const Case c(st);
    for (auto _ : st) benchmark::DoNotOptimize(apply_adjoint(c.a, c.y));
    flops(st);
}
void BM_weight_grad_reference(benchmark::State& st) {
    const Case c(st);
    for (auto _ : st) benchmark::DoNotOptimize(reference::conv_weight_gradient(c.x, c.y, c.a.size()));
    flops(st);
}
void BM_weight_grad_optimized(benchmark::State& st) {
    const Case c(st);
    for (auto _ : st) benchmark::DoNotOptimize(conv_weight_gradient(c.x, c.y, c.a.size()));
    flops(st);
}

void conv_args(benchmark::internal::Benchmark* b) {
    b->Args({64, 16, 16, 3})->Args({8, 32, 32, 3})->Args({8, 16, 16, 5})->Unit(benchmark::kMillisecond);
}

BENCHMARK(BM_operator_reference)->Apply(conv_args);
BENCHMARK(BM_operator_optimized)->Apply(conv_args);
BENCHMARK(BM_adjoint_reference)->Apply(conv_args);
BENCHMARK(BM_adjoint_optimized)->Apply(conv_args);
BENCHMARK(BM_weight_grad_reference)->Apply(conv_args);
BENCHMARK(BM_weight_grad_optimized)->Apply(conv_args);

void BM_ortho_penalty(benchmark::State& st) {
    Rng rng(3);
    const Kernel a = random_kernel(rng, static_cast<int>(st.range(0)), static_cast<int>(st.range(0)), 3);
    for (auto _ : st) benchmark::DoNotOptimize(ortho_penalty(a, 1e-4));
}
BENCHMARK(BM_ortho_penalty)->Arg(16)->Arg(64)->Unit(benchmark::kMicrosecond);

// One training step's worth of work on the deep synthetic-task network.
void BM_deep_forward_backward(benchmark::State& st) {
    NetworkSpec spec;
    spec.stages = {{12, 16}};
    spec.classes = 4;
    const NetworkParams net = build(spec, InitScheme::Delta, 1);
    Rng rng(5);
    const Signal x = random_signal(rng, 64, 3, 16, 16);
    for (auto _ : st) {
        ForwardResult fw = forward(net, x, Mode::Train, 1, 0);
        Signal up(fw.logits.batch(), fw.logits.channels(), 1, 1);
        for (double& v : up.values()) v = 1.0 / 64;
        benchmark::DoNotOptimize(backward(net, fw.cache, up));
    }
}
BENCHMARK(BM_deep_forward_backward)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
