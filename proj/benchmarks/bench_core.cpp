#include "kaelspi/kae.hpp"
#include "kaelspi/klspi.hpp"
#include "kaelspi/lstdq.hpp"

#include <benchmark/benchmark.h>

#include <vector>

using namespace kaelspi;

namespace {

Matrix random_matrix(Index rows, Index cols, Rng& rng) {
    Matrix m(rows, cols);
    for (Index i = 0; i < rows; ++i) {
        for (Index j = 0; j < cols; ++j) m(i, j) = rng.normal();
    }
    return m;
}

void BM_SolveFixedPoint(benchmark::State& state) {
    const Index n = 20000;
    const Index k = state.range(0);
    Rng rng(1);
    const Matrix phi = random_matrix(n, k, rng);
    const Matrix phi_next = random_matrix(n, k, rng);
    const Matrix r = random_matrix(n, 1, rng);
    for (auto _ : state) benchmark::DoNotOptimize(solve_fixed_point(phi, phi_next, r, 0.9));
}
BENCHMARK(BM_SolveFixedPoint)->Arg(10)->Arg(30)->Arg(60)->Unit(benchmark::kMillisecond);

void BM_KoopmanForm(benchmark::State& state) {
    const Index n = 20000;
    const Index k = state.range(0);
    Rng rng(2);
    const Matrix phi = random_matrix(n, k, rng);
    const Matrix phi_next = random_matrix(n, k, rng);
    const Matrix r = random_matrix(n, 1, rng);
    for (auto _ : state) {
        const Matrix koop = estimate_koopman(phi, phi_next);
        benchmark::DoNotOptimize(solve_koopman_form(phi, r, koop, 0.9));
    }
}
BENCHMARK(BM_KoopmanForm)->Arg(10)->Arg(30)->Arg(60)->Unit(benchmark::kMillisecond);

void BM_KaeLossAndGradient(benchmark::State& state) {
    KaeHyperparams hyper = KaeHyperparams::pendulum();
    Rng rng(3);
    const KaeModel model = init_model(3, hyper, rng);
    const Matrix x = random_matrix(hyper.batch_size, 3, rng);
    const Matrix x_next = random_matrix(hyper.batch_size, 3, rng);
    KaeGradients grads = KaeGradients::zeros_like(model);
    for (auto _ : state) benchmark::DoNotOptimize(kae_loss(model, x, x_next, hyper.loss, &grads));
    state.SetItemsProcessed(state.iterations() * hyper.batch_size);
}
BENCHMARK(BM_KaeLossAndGradient)->Unit(benchmark::kMicrosecond);

void BM_AldSweep(benchmark::State& state) {
    Rng rng(4);
    std::vector<Vector> candidates;
    for (int i = 0; i < state.range(0); ++i) {
        Vector z(2);
        z << rng.uniform(0.0, 20.0), rng.uniform(0.0, 1.0);
        candidates.push_back(z);
    }
    for (auto _ : state) {
        AldDictionary dict;
        ald_sweep(dict, candidates);
        benchmark::DoNotOptimize(dict.size());
    }
}
BENCHMARK(BM_AldSweep)->Arg(1000)->Arg(20000)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
