#include <benchmark/benchmark.h>

#include "mdcl/config.hpp"
#include "mdcl/metrics.hpp"
#include "mdcl/networks.hpp"
#include "mdcl/objectives.hpp"

namespace {

torch::Tensor unit_rows(int64_t m, int64_t d) {
  auto x = torch::randn({m, d});
  return x / x.norm(2, 1, true);
}

void BM_PatchNceLoss(benchmark::State& state) {
  torch::manual_seed(0);
  const auto a = unit_rows(state.range(0), 256);
  const auto p = unit_rows(state.range(0), 256);
  for (auto _ : state) benchmark::DoNotOptimize(mdcl::patchnce_loss(a, p, 0.07));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_PatchNceLoss)->Arg(64)->Arg(256)->Arg(1024);

void BM_MixDomainLoss(benchmark::State& state) {
  torch::manual_seed(0);
  const auto a = unit_rows(state.range(0), 256);
  const auto p = unit_rows(state.range(0), 256);
  for (auto _ : state) benchmark::DoNotOptimize(mdcl::mix_domain_loss(a, p, 0.07));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_MixDomainLoss)->Arg(64)->Arg(256)->Arg(1024);

void BM_MixDomainLossBackward(benchmark::State& state) {
  torch::manual_seed(0);
  const auto a = unit_rows(state.range(0), 256).requires_grad_(true);
  const auto p = unit_rows(state.range(0), 256);
  for (auto _ : state) {
    auto loss = mdcl::mix_domain_loss(a, p, 0.07);
    loss.backward();
    a.mutable_grad().reset();
  }
}
BENCHMARK(BM_MixDomainLossBackward)->Arg(256);

void BM_GaussianPyramidLoss(benchmark::State& state) {
  torch::manual_seed(0);
  const auto size = state.range(0);
  const auto a = torch::rand({1, 3, size, size});
  const auto b = torch::rand({1, 3, size, size});
  for (auto _ : state) benchmark::DoNotOptimize(mdcl::gp_loss(a, b));
}
BENCHMARK(BM_GaussianPyramidLoss)->Arg(64)->Arg(256);

void BM_GeneratorForward(benchmark::State& state) {
  torch::manual_seed(0);
  mdcl::GeneratorNet g(mdcl::GeneratorOptions{});
  g->eval();
  torch::NoGradGuard no_grad;
  const auto x = torch::rand({1, 3, state.range(0), state.range(0)}) * 2 - 1;
  for (auto _ : state) benchmark::DoNotOptimize(g->forward(x));
}
BENCHMARK(BM_GeneratorForward)->Arg(64)->Arg(256)->Unit(benchmark::kMillisecond);

void BM_Fid(benchmark::State& state) {
  const auto n = static_cast<int>(state.range(0));
  const mdcl::FeatureMatrix a{Eigen::MatrixXd::Random(n, 128), "bench", std::nullopt};
  const mdcl::FeatureMatrix b{Eigen::MatrixXd::Random(n, 128).array() + 0.1, "bench", std::nullopt};
  for (auto _ : state) benchmark::DoNotOptimize(mdcl::fid(a, b));
}
BENCHMARK(BM_Fid)->Arg(64)->Arg(512)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
