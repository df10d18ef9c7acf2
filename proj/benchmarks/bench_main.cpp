#include <benchmark/benchmark.h>

#include "jumpsae/losses.hpp"
#include "jumpsae/optimizer.hpp"
#include "jumpsae/trainer.hpp"

using namespace jumpsae;

namespace {

constexpr std::size_t kDim = 64;
constexpr std::size_t kWidth = 256;

ActivationBatch random_batch(std::size_t rows) {
  RngStream rng(1, StreamId::TrainData);
  return ActivationBatch{gaussian(rng, rows, kDim)};
}

SaeParams random_sae(Arch arch) {
  TrainConfig cfg;
  cfg.arch = arch;
  cfg.loss.kind = default_loss_for(arch);
  cfg.width = kWidth;
  cfg.k = 20;
  cfg.theta_init = 0.05;
  return initialize(cfg, kDim);
}

LossSpec spec_for(Arch arch) {
  LossSpec s;
  s.kind = default_loss_for(arch);
  s.lambda = 0.01;
  s.bandwidth = Bandwidth(0.02);
  return s;
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  RngStream rng(3, StreamId::Verify);
  const Matrix a = gaussian(rng, n, n);
  const Matrix b = gaussian(rng, n, n);
  for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(64)->Arg(256);

void BM_Forward(benchmark::State& state) {
  const auto arch = static_cast<Arch>(state.range(0));
  const SaeParams p = random_sae(arch);
  const ActivationBatch batch = random_batch(512);
  for (auto _ : state) benchmark::DoNotOptimize(forward(p, batch, true));
  state.SetItemsProcessed(state.iterations() * 512);
  state.SetLabel(std::string(to_string(arch)));
}
BENCHMARK(BM_Forward)->DenseRange(0, 4);

void BM_Backward(benchmark::State& state) {
  const auto arch = static_cast<Arch>(state.range(0));
  const SaeParams p = random_sae(arch);
  const ActivationBatch batch = random_batch(512);
  const LossSpec spec = spec_for(arch);
  for (auto _ : state) benchmark::DoNotOptimize(loss_and_grad(p, batch, spec));
  state.SetItemsProcessed(state.iterations() * 512);
  state.SetLabel(std::string(to_string(arch)));
}
BENCHMARK(BM_Backward)->DenseRange(0, 4);

void BM_TrainStep(benchmark::State& state) {
  SaeParams p = random_sae(Arch::JumpRelu);
  OptimState opt = OptimState::zeros_like(p);
  RngStream constraint_rng(1, StreamId::Resample);
  const ActivationBatch batch = random_batch(static_cast<std::size_t>(state.range(0)));
  const LossSpec spec = spec_for(Arch::JumpRelu);
  for (auto _ : state) {
    LossAndGradient lg = loss_and_grad(p, batch, spec);
    project_decoder_gradients(p, lg.grads);
    adam_step(p, opt, lg.grads, 1e-4, AdamConfig{});
    renormalize_decoder(p, constraint_rng);
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_TrainStep)->Arg(512)->Arg(4096);

}  // namespace

BENCHMARK_MAIN();
