#include <benchmark/benchmark.h>

#include "acss/samplers.hpp"

namespace {

acss::Vector random_vector(int n, acss::Rng& rng) {
  acss::Vector v(n);
  for (int i = 0; i < n; ++i) v[i] = rng.normal();
  return v;
}

void bm_pava(benchmark::State& state) {
  acss::Rng rng(7);
  const acss::Vector y = random_vector(static_cast<int>(state.range(0)), rng);
  for (auto _ : state) benchmark::DoNotOptimize(acss::solve_pava(y));
}
BENCHMARK(bm_pava)->Arg(100)->Arg(1000)->Arg(10000);

void bm_mixture_loss(benchmark::State& state) {
  acss::Rng rng(7);
  const acss::ModelSpec model = acss::ModelSpec::gaussian_mixture2();
  acss::Vector theta(5);
  theta << 0.5, 0.4, 0.1, -0.4, 0.1;
  const acss::Vector x = model.simulate(theta, static_cast<int>(state.range(0)), rng);
  for (auto _ : state) benchmark::DoNotOptimize(model.loss(theta, x));
}
BENCHMARK(bm_mixture_loss)->Arg(200)->Arg(2000);

void bm_exact_gaussian(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  acss::Rng rng(7);
  const acss::ModelSpec model =
      acss::ModelSpec::gaussian_linear(acss::Matrix::Identity(n, n), 1.0, 0.0);
  const acss::Vector theta0 = random_vector(n, rng);
  const acss::Vector x = theta0 + random_vector(n, rng);
  const auto problem = acss::EstimationProblem::constrained(
      model, acss::builtin_constraints(acss::ConstraintKind::monotone, n), 5.0,
      acss::SolverKind::pava);
  const acss::PerturbationVector w = acss::draw_perturbation(n, 5.0, rng);
  const acss::FitResult res = acss::fit(problem, x, w);
  const acss::ConditioningState st = acss::make_state(problem, res.certificate);
  for (auto _ : state) benchmark::DoNotOptimize(acss::sample_exact_gaussian(st, 10, rng));
}
BENCHMARK(bm_exact_gaussian)->Arg(50)->Arg(100);

}  // namespace

BENCHMARK_MAIN();
