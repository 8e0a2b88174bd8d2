#include <benchmark/benchmark.h>

#include "blipvar/inference.hpp"
#include "blipvar/learners.hpp"
#include "blipvar/math_util.hpp"
#include "blipvar/plugin_lr.hpp"
#include "blipvar/rng.hpp"
#include "blipvar/simlab.hpp"
#include "blipvar/targeting.hpp"

namespace {

using namespace blipvar;

std::pair<ObservedDataset, NuisancePredictions> targeting_input(int n) {
  std::mt19937_64 engine(make_engine(1)());
  DgpSpec spec;
  spec.kind = DgpKind::case1;
  spec.n = n;
  auto [data, dgp] = draw_dataset(spec, engine);
  const MatrixXd x = plugin_design(data.a, data.w);
  const auto mle = fit_logistic_mle(x, data.y);
  NuisancePredictions nuisance;
  nuisance.qbar1 = predict_logistic(mle.beta, plugin_design(VectorXd::Ones(n), data.w));
  nuisance.qbar0 = predict_logistic(mle.beta, plugin_design(VectorXd::Zero(n), data.w));
  nuisance.g1 = dgp.g1(data.w);
  return {std::move(data), std::move(nuisance)};
}

void BM_RunTargeting(benchmark::State& state) {
  const auto [data, nuisance] = targeting_input(static_cast<int>(state.range(0)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(run_targeting(data, nuisance));
  }
}
BENCHMARK(BM_RunTargeting)->Arg(250)->Arg(1000)->Arg(4000)->Unit(benchmark::kMillisecond);

void BM_LogisticIrls(benchmark::State& state) {
  std::mt19937_64 engine(make_engine(2)());
  DgpSpec spec;
  spec.kind = DgpKind::case1;
  spec.n = static_cast<int>(state.range(0));
  const auto [data, dgp] = draw_dataset(spec, engine);
  const MatrixXd x = plugin_design(data.a, data.w);
  for (auto _ : state) {
    benchmark::DoNotOptimize(fit_logistic_mle(x, data.y));
  }
}
BENCHMARK(BM_LogisticIrls)->Arg(1000)->Arg(4000)->Unit(benchmark::kMillisecond);

void BM_EvaluateEic(benchmark::State& state) {
  const auto [data, nuisance] = targeting_input(static_cast<int>(state.range(0)));
  const VectorXd qA = nuisance.qbar_at(data.a);
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        evaluate_eic(data, nuisance.qbar1, nuisance.qbar0, qA, nuisance.g1));
  }
}
BENCHMARK(BM_EvaluateEic)->Arg(1000)->Arg(10000)->Unit(benchmark::kMicrosecond);

void BM_SimultaneousQuantile(benchmark::State& state) {
  MatrixXd corr = MatrixXd::Identity(2, 2);
  corr(0, 1) = corr(1, 0) = 0.4;
  const long draws = state.range(0);
  for (auto _ : state) {
    benchmark::DoNotOptimize(simultaneous_quantile(corr, 0.05, draws, 5));
  }
}
BENCHMARK(BM_SimultaneousQuantile)->Arg(100000)->Arg(1000000)->Unit(benchmark::kMillisecond);

void BM_PluginFit(benchmark::State& state) {
  std::mt19937_64 engine(make_engine(3)());
  DgpSpec spec;
  spec.kind = DgpKind::case1;
  spec.n = static_cast<int>(state.range(0));
  const auto [data, dgp] = draw_dataset(spec, engine);
  for (auto _ : state) {
    benchmark::DoNotOptimize(fit_plugin(data));
  }
}
BENCHMARK(BM_PluginFit)->Arg(1000)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
