// Serial reference kernels against the blocked OpenMP kernels on the
// modified g-computation stack.
#include <benchmark/benchmark.h>

#include "stackest/dgm.hpp"
#include "stackest/gcomp.hpp"
#include "stackest/kernels.hpp"

namespace {

using namespace stackest;

struct Fixture {
  explicit Fixture(std::size_t n)
      : data(generate(DgmSpec{DgmCase::case1, n, 11})),
        efs(build_modified([] {
          EstimatorSpec s;
          s.variant = Variant::modified;
          s.outcome_design = DesignSpec::parse("1,A,X");
          return s;
        }())),
        g(efs.bind(data)),
        theta{0.3, -0.9, -0.2, 0.5, 0.6, -0.1} {}

  Dataset data;
  EstimatingFunctionSet efs;
  RowFunction g;
  std::vector<double> theta;
};

void BM_MeanSerial(benchmark::State& state) {
  Fixture f(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(kernels::mean_equation_serial(f.g, f.data.rows(), 6, f.theta));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_MeanParallel(benchmark::State& state) {
  Fixture f(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(kernels::mean_equation(f.g, f.data.rows(), 6, f.theta));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_MeatSerial(benchmark::State& state) {
  Fixture f(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(kernels::outer_product_mean_serial(f.g, f.data.rows(), 6, f.theta));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_MeatParallel(benchmark::State& state) {
  Fixture f(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(kernels::outer_product_mean(f.g, f.data.rows(), 6, f.theta));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_Generate(benchmark::State& state) {
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        generate(DgmSpec{DgmCase::case2, static_cast<std::size_t>(state.range(0)), 3}));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

}  // namespace

BENCHMARK(BM_MeanSerial)->Arg(1000)->Arg(100000);
BENCHMARK(BM_MeanParallel)->Arg(1000)->Arg(100000);
BENCHMARK(BM_MeatSerial)->Arg(1000)->Arg(100000);
BENCHMARK(BM_MeatParallel)->Arg(1000)->Arg(100000);
BENCHMARK(BM_Generate)->Arg(100000);

BENCHMARK_MAIN();
