// Serial reference vs OpenMP kernels. Run with OMP_NUM_THREADS to vary the team.
#include <benchmark/benchmark.h>

#include <vector>

#include "selm/kernels.hpp"
#include "selm/projection.hpp"
#include "selm/random.hpp"
#include "selm/tinylm.hpp"

using namespace selm;
using kernels::Exec;

namespace {

std::vector<double> randn(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<double> v(n);
    for (auto& x : v) x = rng.normal();
    return v;
}

Exec exec_of(const benchmark::State& st) { return st.range(0) == 0 ? Exec::serial : Exec::parallel; }

void BM_Fwht(benchmark::State& st) {
    auto x = randn(static_cast<std::size_t>(st.range(0)), 1);
    for (auto _ : st) {
        kernels::fwht(x);
        benchmark::DoNotOptimize(x.data());
    }
    st.SetItemsProcessed(st.iterations() * st.range(0));
}
BENCHMARK(BM_Fwht)->RangeMultiplier(8)->Range(1 << 7, 1 << 16);

void BM_Project(benchmark::State& st) {
    const std::size_t D = ModelConfig{}.param_count();
    const auto spec = build_projection(Key32{}, 1024, D);
    const auto x = randn(1024, 2);
    std::vector<double> out(D);
    for (auto _ : st) {
        project_into(spec, x, out, exec_of(st));
        benchmark::DoNotOptimize(out.data());
    }
}
BENCHMARK(BM_Project)->Arg(0)->Arg(1)->ArgName("parallel");

void BM_ProjectAdjoint(benchmark::State& st) {
    const std::size_t D = ModelConfig{}.param_count();
    const auto spec = build_projection(Key32{}, 1024, D);
    const auto y = randn(D, 3);
    std::vector<double> out(1024);
    for (auto _ : st) {
        project_adjoint_into(spec, y, out, exec_of(st));
        benchmark::DoNotOptimize(out.data());
    }
}
BENCHMARK(BM_ProjectAdjoint)->Arg(0)->Arg(1)->ArgName("parallel");

void BM_Matmul(benchmark::State& st) {
    const std::size_t M = 128, K = 64, N = 256;
    std::vector<float> A(M * K, 0.5f), W(K * N, 0.25f), out(M * N);
    for (auto _ : st) {
        kernels::matmul<float>(exec_of(st), A.data(), W.data(), nullptr, out.data(), M, K, N);
        benchmark::DoNotOptimize(out.data());
    }
    st.SetItemsProcessed(st.iterations() * static_cast<std::int64_t>(M * K * N));
}
BENCHMARK(BM_Matmul)->Arg(0)->Arg(1)->ArgName("parallel");

void BM_LossAndGrad(benchmark::State& st) {
    const ModelConfig cfg;
    const auto params = init_params(cfg, 1);
    TinyLM<float> lm(cfg, exec_of(st));
    Rng rng(4);
    Tokens prompt(36), chunk(92);
    for (auto& t : prompt) t = static_cast<TokenId>(rng.below(256));
    for (auto& t : chunk) t = static_cast<TokenId>(rng.below(256));
    const std::vector<Sequence> batch{Sequence::from_example(TrainingExample::from_prompt_and_chunk(prompt, chunk))};
    std::vector<float> grad(params.size());
    for (auto _ : st) {
        const auto r = lm.loss_and_grad(params, batch, grad);
        benchmark::DoNotOptimize(r);
    }
}
BENCHMARK(BM_LossAndGrad)->Arg(0)->Arg(1)->ArgName("parallel")->Unit(benchmark::kMillisecond);

} // namespace

BENCHMARK_MAIN();
