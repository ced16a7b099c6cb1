// Serial reference vs OpenMP dense-layer kernels, plus a full critic-sized
// MLP forward/backward pass.

#include <malloc.h>

#include <benchmark/benchmark.h>

#include "drvf/kernels.hpp"
#include "drvf/mlp.hpp"
#include "drvf/rng.hpp"

namespace {

using drvf::Matrix;

Matrix random_matrix(std::size_t r, std::size_t c, drvf::Rng& rng) {
  Matrix m(r, c);
  for (double& v : m.flat()) v = rng.normal();
  return m;
}

struct Operands {
  Matrix x, w, dz;
  drvf::Vector bias;
  explicit Operands(const benchmark::State& state) {
    drvf::Rng rng(1);
    const auto batch = static_cast<std::size_t>(state.range(0));
    const auto width = static_cast<std::size_t>(state.range(1));
    x = random_matrix(batch, width, rng);
    w = random_matrix(width, width, rng);
    dz = random_matrix(batch, width, rng);
    bias.assign(width, 0.5);
  }
};

template <bool Parallel>
void BM_AffineForward(benchmark::State& state) {
  Operands op(state);
  Matrix z;
  for (auto _ : state) {
    if constexpr (Parallel) {
      drvf::kernels::affine_forward(op.x, op.w, op.bias, z);
    } else {
      drvf::kernels::serial::affine_forward(op.x, op.w, op.bias, z);
    }
    benchmark::DoNotOptimize(z.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0) * state.range(1) * state.range(1));
}

template <bool Parallel>
void BM_AffineInputGrad(benchmark::State& state) {
  Operands op(state);
  Matrix dx;
  for (auto _ : state) {
    if constexpr (Parallel) {
      drvf::kernels::affine_input_grad(op.dz, op.w, dx);
    } else {
      drvf::kernels::serial::affine_input_grad(op.dz, op.w, dx);
    }
    benchmark::DoNotOptimize(dx.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0) * state.range(1) * state.range(1));
}

template <bool Parallel>
void BM_AffineParamGrad(benchmark::State& state) {
  Operands op(state);
  Matrix dw(op.w.rows(), op.w.cols());
  drvf::Vector db(op.w.cols());
  for (auto _ : state) {
    if constexpr (Parallel) {
      drvf::kernels::affine_param_grad(op.x, op.dz, dw, db);
    } else {
      drvf::kernels::serial::affine_param_grad(op.x, op.dz, dw, db);
    }
    benchmark::DoNotOptimize(dw.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0) * state.range(1) * state.range(1));
}

void BM_CriticMlpForwardBackward(benchmark::State& state) {
  drvf::Rng rng(3);
  const auto batch = static_cast<std::size_t>(state.range(0));
  const auto hidden = static_cast<std::size_t>(state.range(1));
  drvf::Mlp net({3, hidden, hidden}, {drvf::Activation::kRelu, drvf::Activation::kRelu});
  net.init(rng);
  Matrix x = random_matrix(batch, 3, rng);
  Matrix g = random_matrix(batch, hidden, rng);
  auto grads = net.make_grads();
  drvf::MlpCache cache;
  for (auto _ : state) {
    auto y = net.forward(x, cache);
    benchmark::DoNotOptimize(y.data());
    auto dx = net.backward(cache, g, grads);
    benchmark::DoNotOptimize(dx.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

#define KERNEL_ARGS ->Args({256, 64})->Args({2816, 64})->Args({2816, 32})

BENCHMARK(BM_AffineForward<false>) KERNEL_ARGS;
BENCHMARK(BM_AffineForward<true>) KERNEL_ARGS;
BENCHMARK(BM_AffineInputGrad<false>) KERNEL_ARGS;
BENCHMARK(BM_AffineInputGrad<true>) KERNEL_ARGS;
BENCHMARK(BM_AffineParamGrad<false>) KERNEL_ARGS;
BENCHMARK(BM_AffineParamGrad<true>) KERNEL_ARGS;
BENCHMARK(BM_CriticMlpForwardBackward)->Args({2816, 64})->Args({2816, 32})->Args({1408, 32});

}  // namespace

int main(int argc, char** argv) {
  // Same allocator settings as the executables that train.
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  benchmark::Initialize(&argc, argv);
  if (benchmark::ReportUnrecognizedArguments(argc, argv)) return 1;
  benchmark::RunSpecifiedBenchmarks();
  benchmark::Shutdown();
  return 0;
}
