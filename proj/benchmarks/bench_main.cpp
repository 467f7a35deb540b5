#include <benchmark/benchmark.h>

#include <random>

#include "compglm/compositional.hpp"
#include "compglm/debias.hpp"
#include "compglm/model_select.hpp"
#include "compglm/prox_solver.hpp"

using namespace compglm;

namespace {

SimulatedData make_data(Index n) {
  SimulationConfig sc;
  sc.n = n;
  sc.seed = 1;
  return simulate_dataset(sc);
}

void BM_ConstrainedProx(benchmark::State& state) {
  const SimulatedData sim = make_data(100);
  std::mt19937_64 rng(3);
  std::normal_distribution<double> nd;
  VectorXd v(sim.constraints.dim());
  for (Index j = 0; j < v.size(); ++j) v[j] = nd(rng);
  for (auto _ : state) benchmark::DoNotOptimize(constrained_prox(v, 0.5, sim.constraints));
}
BENCHMARK(BM_ConstrainedProx);

void BM_Fit(benchmark::State& state) {
  const SimulatedData sim = make_data(state.range(0));
  const double lam = 0.2 * lambda_max(sim.dataset, GlmFamily::kLogistic, sim.constraints);
  for (auto _ : state) benchmark::DoNotOptimize(fit(sim.dataset, GlmFamily::kLogistic, sim.constraints, lam));
}
BENCHMARK(BM_Fit)->Arg(100)->Arg(500)->Unit(benchmark::kMillisecond);

void BM_SelectLambda(benchmark::State& state) {
  const SimulatedData sim = make_data(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(select_lambda(sim.dataset, GlmFamily::kLogistic, sim.constraints));
}
BENCHMARK(BM_SelectLambda)->Arg(100)->Arg(500)->Unit(benchmark::kMillisecond);

void BM_DebiasRow(benchmark::State& state) {
  const SimulatedData sim = make_data(500);
  const PathResult path = select_lambda(sim.dataset, GlmFamily::kLogistic, sim.constraints);
  const MatrixXd sigma = sigma_hat(path.selected(), sim.dataset, GlmFamily::kLogistic, sim.constraints);
  const VectorXd target = sim.constraints.project(VectorXd::Unit(sigma.rows(), 0));
  const double gamma = gamma_rule(path.lambda_opt());
  for (auto _ : state) benchmark::DoNotOptimize(solve_debias_row(sigma, target, gamma));
}
BENCHMARK(BM_DebiasRow)->Unit(benchmark::kMillisecond);

void BM_Infer(benchmark::State& state) {
  const SimulatedData sim = make_data(500);
  const PathResult path = select_lambda(sim.dataset, GlmFamily::kLogistic, sim.constraints);
  DebiasOptions opts;
  opts.gamma = gamma_rule(path.lambda_opt());
  for (auto _ : state)
    benchmark::DoNotOptimize(infer(path.selected(), sim.dataset, GlmFamily::kLogistic, sim.constraints, opts));
}
BENCHMARK(BM_Infer)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
