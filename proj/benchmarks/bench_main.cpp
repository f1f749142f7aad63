#include <benchmark/benchmark.h>

#include "dcr/dynamics.hpp"
#include "dcr/model.hpp"
#include "dcr/thermal.hpp"

using namespace dcr;

namespace {

std::vector<ModeSpec> three_modes(std::size_t dim) {
    return {{"f", 3.0, dim, 1.3}, {"c1", 1.0, dim, 2.0}, {"c2", 2.0, dim, 1.3}};
}

std::vector<ModeSpec> five_modes(std::size_t dim) {
    auto m = three_modes(dim);
    m.push_back({"c3", 1.8, dim, 1.3});
    m.push_back({"c4", 1.2, dim, 1.3});
    return m;
}

HamiltonianModel model_for(std::size_t modes, std::size_t dim) {
    if (modes == 3) {
        return build_hamiltonian(three_modes(dim), {{1, 2, 0.05}});
    }
    return build_hamiltonian(five_modes(dim), {{1, 2, 0.05}, {3, 4, 0.05}});
}

void BM_BuildHamiltonian(benchmark::State& st) {
    const auto dim = static_cast<std::size_t>(st.range(0));
    for (auto _ : st) {
        benchmark::DoNotOptimize(build_hamiltonian(three_modes(dim), {{1, 2, 0.05}}));
    }
    st.SetLabel("total_dim " + std::to_string(dim * dim * dim));
}
BENCHMARK(BM_BuildHamiltonian)->Arg(8)->Arg(12)->Arg(16)->Unit(benchmark::kMillisecond);

void BM_Embed(benchmark::State& st) {
    const SpaceLayout layout(std::vector<std::size_t>(5, static_cast<std::size_t>(st.range(0))));
    const auto a = annihilation(layout.dim(2));
    for (auto _ : st) {
        benchmark::DoNotOptimize(embed(a, 2, layout));
    }
}
BENCHMARK(BM_Embed)->Arg(4)->Arg(8)->Unit(benchmark::kMillisecond);

void BM_BlockSpectrum(benchmark::State& st) {
    const auto m = model_for(static_cast<std::size_t>(st.range(0)), static_cast<std::size_t>(st.range(1)));
    for (auto _ : st) {
        BlockSpectrum spec(m.hamiltonian());
        benchmark::DoNotOptimize(spec.largest_block());
    }
}
BENCHMARK(BM_BlockSpectrum)->Args({3, 12})->Args({5, 6})->Unit(benchmark::kMillisecond);

// One pure state over 400 output times, by method.
void BM_PropagateState(benchmark::State& st) {
    const auto m = model_for(3, 12);
    PropagatorOptions opts;
    opts.method = static_cast<Method>(st.range(0));
    Propagator p(m, opts);
    const std::vector<std::size_t> occ{2, 3, 1};
    const auto psi0 = StateVector::fock(m.layout(), occ);
    const auto times = uniform_times(200.0, 400);
    for (auto _ : st) {
        benchmark::DoNotOptimize(p.evolve(psi0, times));
    }
    st.SetLabel(to_string(opts.method));
}
BENCHMARK(BM_PropagateState)
    ->Arg(static_cast<int>(Method::Eigen))
    ->Arg(static_cast<int>(Method::Krylov))
    ->Unit(benchmark::kMillisecond);

void BM_EnsembleEvolution(benchmark::State& st) {
    const auto m = model_for(static_cast<std::size_t>(st.range(0)), static_cast<std::size_t>(st.range(1)));
    const auto ens = product_ensemble(m.modes(), {.eps_tail = 1e-6});
    const auto times = uniform_times(200.0, 400);
    PropagatorOptions opts;
    opts.threads = static_cast<unsigned>(st.range(2));
    for (auto _ : st) {
        benchmark::DoNotOptimize(evolve_ensemble(m, ens, times, opts));
    }
    st.SetLabel(std::to_string(ens.members.size()) + " members");
}
BENCHMARK(BM_EnsembleEvolution)
    ->Args({3, 12, 1})
    ->Args({3, 12, 4})
    ->Args({5, 6, 1})
    ->Unit(benchmark::kMillisecond);

void BM_ProductEnsemble(benchmark::State& st) {
    const auto modes = five_modes(static_cast<std::size_t>(st.range(0)));
    for (auto _ : st) {
        benchmark::DoNotOptimize(product_ensemble(modes, {.eps_tail = 1e-6}));
    }
}
BENCHMARK(BM_ProductEnsemble)->Arg(6)->Arg(8)->Unit(benchmark::kMillisecond);

} // namespace

BENCHMARK_MAIN();
