#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "rankiqa/kernels.hpp"
#include "rankiqa/network.hpp"
#include "rankiqa/ranking_loss.hpp"
#include "rankiqa/reference_kernels.hpp"

using namespace rankiqa;

namespace {

std::vector<float> noise(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> d(-1.0f, 1.0f);
  std::vector<float> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

// Second desk-net convolution on a batch of 10 patches.
ConvGeometry desk_conv(std::size_t batch) { return {batch, 8, 24, 24, 16, 3, 1, 1}; }

struct ConvData {
  ConvGeometry g;
  std::vector<float> in, w, b, out, gout, gin, gw, gb;
  explicit ConvData(const ConvGeometry& geom) : g(geom) {
    const std::size_t out_n = g.batch * g.out_ch * g.out_h() * g.out_w();
    in = noise(g.batch * g.in_ch * g.in_h * g.in_w, 1);
    w = noise(g.out_ch * g.in_ch * g.kernel * g.kernel, 2);
    b = noise(g.out_ch, 3);
    gout = noise(out_n, 4);
    out.resize(out_n);
    gin.resize(in.size());
    gw.resize(w.size());
    gb.resize(b.size());
  }
};

void BM_ConvForwardSerial(benchmark::State& state) {
  ConvData d(desk_conv(static_cast<std::size_t>(state.range(0))));
  for (auto _ : state) {
    reference::conv2d_forward(d.g, d.in.data(), d.w.data(), d.b.data(), d.out.data());
    benchmark::DoNotOptimize(d.out.data());
  }
}

void BM_ConvForwardParallel(benchmark::State& state) {
  ConvData d(desk_conv(static_cast<std::size_t>(state.range(0))));
  for (auto _ : state) {
    kernels::conv2d_forward(d.g, d.in.data(), d.w.data(), d.b.data(), d.out.data());
    benchmark::DoNotOptimize(d.out.data());
  }
}

void BM_ConvBackwardSerial(benchmark::State& state) {
  ConvData d(desk_conv(static_cast<std::size_t>(state.range(0))));
  for (auto _ : state) {
    reference::conv2d_backward_input(d.g, d.gout.data(), d.w.data(), d.gin.data());
    reference::conv2d_backward_params(d.g, d.in.data(), d.gout.data(), d.gw.data(), d.gb.data());
    benchmark::DoNotOptimize(d.gw.data());
  }
}

void BM_ConvBackwardParallel(benchmark::State& state) {
  ConvData d(desk_conv(static_cast<std::size_t>(state.range(0))));
  for (auto _ : state) {
    kernels::conv2d_backward_input(d.g, d.gout.data(), d.w.data(), d.gin.data());
    kernels::conv2d_backward_params(d.g, d.in.data(), d.gout.data(), d.gw.data(), d.gb.data());
    benchmark::DoNotOptimize(d.gw.data());
  }
}

Tensor random_batch(std::size_t m, std::size_t side) {
  Tensor t({m, 1, side, side});
  const auto v = noise(t.size(), 9);
  std::copy(v.begin(), v.end(), t.data().begin());
  return t;
}

ComparabilityMatrix one_group(std::size_t n) {
  std::vector<std::size_t> block(n, 0), level(n);
  for (std::size_t i = 0; i < n; ++i) level[i] = i;
  return ComparabilityMatrix::from_levels(block, level, 1.0f);
}

void BM_EfficientPairwise(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Model m = Model::create(NetworkSpec::desk_default(), 1);
  const Tensor batch = random_batch(n, 48);
  const auto labels = one_group(n);
  std::size_t passes = 0;
  for (auto _ : state) passes += efficient_pairwise_gradient(m.spec, m.params, batch, labels).forward_passes;
  state.counters["forward/iter"] = benchmark::Counter(static_cast<double>(passes), benchmark::Counter::kAvgIterations);
}

void BM_NaivePairwise(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Model m = Model::create(NetworkSpec::desk_default(), 1);
  const Tensor batch = random_batch(n, 48);
  const auto labels = one_group(n);
  std::size_t passes = 0;
  for (auto _ : state) passes += naive_pairwise_gradient(m.spec, m.params, batch, labels).forward_passes;
  state.counters["forward/iter"] = benchmark::Counter(static_cast<double>(passes), benchmark::Counter::kAvgIterations);
}

}  // namespace

BENCHMARK(BM_ConvForwardSerial)->Arg(1)->Arg(10);
BENCHMARK(BM_ConvForwardParallel)->Arg(1)->Arg(10);
BENCHMARK(BM_ConvBackwardSerial)->Arg(1)->Arg(10);
BENCHMARK(BM_ConvBackwardParallel)->Arg(1)->Arg(10);
BENCHMARK(BM_EfficientPairwise)->DenseRange(2, 8, 2)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_NaivePairwise)->DenseRange(2, 8, 2)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
