// Serial reference kernels against their OpenMP counterparts.

#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "rbs/kernels.hpp"

namespace {

Eigen::MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = normal(rng);
  }
  return m;
}

// Snapshot matrices: n cells by m columns.
void snapshot_shapes(benchmark::internal::Benchmark* b) {
  b->Args({4096, 200})->Args({65536, 200})->Args({100000, 50});
}

// Reconstruction: n cells, rank r.
void basis_shapes(benchmark::internal::Benchmark* b) {
  b->Args({10000, 10})->Args({100000, 10})->Args({1000000, 10});
}

template <Eigen::MatrixXd (*Gram)(const Eigen::MatrixXd&)>
void BM_Gram(benchmark::State& state) {
  const Eigen::MatrixXd x = random_matrix(state.range(0), state.range(1), 1);
  for (auto _ : state) benchmark::DoNotOptimize(Gram(x));
  state.SetItemsProcessed(state.iterations() * state.range(0) * state.range(1) * state.range(1));
}
BENCHMARK(BM_Gram<rbs::kernels::serial::gram>)->Name("gram/serial")->Apply(snapshot_shapes)->UseRealTime();
BENCHMARK(BM_Gram<rbs::kernels::omp::gram>)->Name("gram/omp")->Apply(snapshot_shapes)->UseRealTime();

template <Eigen::MatrixXd (*Project)(const Eigen::MatrixXd&, const Eigen::MatrixXd&)>
void BM_Project(benchmark::State& state) {
  const Eigen::MatrixXd basis = random_matrix(state.range(0), 10, 2);
  const Eigen::MatrixXd x = random_matrix(state.range(0), state.range(1), 3);
  for (auto _ : state) benchmark::DoNotOptimize(Project(basis, x));
}
BENCHMARK(BM_Project<rbs::kernels::serial::project>)->Name("project/serial")->Apply(snapshot_shapes)->UseRealTime();
BENCHMARK(BM_Project<rbs::kernels::omp::project>)->Name("project/omp")->Apply(snapshot_shapes)->UseRealTime();

template <void (*ReconstructInto)(const Eigen::MatrixXd&, std::span<const double>, std::span<double>)>
void BM_ReconstructInto(benchmark::State& state) {
  const Eigen::MatrixXd basis = random_matrix(state.range(0), state.range(1), 4);
  const std::vector<double> coeffs(static_cast<std::size_t>(state.range(1)), 0.5);
  std::vector<double> out(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    ReconstructInto(basis, coeffs, out);
    benchmark::DoNotOptimize(out.data());
  }
}
BENCHMARK(BM_ReconstructInto<rbs::kernels::serial::reconstruct_into>)
    ->Name("reconstruct_into/serial")
    ->Apply(basis_shapes)
    ->UseRealTime();
BENCHMARK(BM_ReconstructInto<rbs::kernels::omp::reconstruct_into>)
    ->Name("reconstruct_into/omp")
    ->Apply(basis_shapes)
    ->UseRealTime();

template <Eigen::VectorXd (*Bound)(const Eigen::MatrixXd&, std::span<const double>)>
void BM_BoundConstants(benchmark::State& state) {
  const Eigen::MatrixXd basis = random_matrix(state.range(0), state.range(1), 5);
  const std::vector<double> scales(static_cast<std::size_t>(state.range(1)), 2.0);
  for (auto _ : state) benchmark::DoNotOptimize(Bound(basis, scales));
}
BENCHMARK(BM_BoundConstants<rbs::kernels::serial::bound_constants>)
    ->Name("bound_constants/serial")
    ->Apply(basis_shapes)
    ->UseRealTime();
BENCHMARK(BM_BoundConstants<rbs::kernels::omp::bound_constants>)
    ->Name("bound_constants/omp")
    ->Apply(basis_shapes)
    ->UseRealTime();

}  // namespace

BENCHMARK_MAIN();
