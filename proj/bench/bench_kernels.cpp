#include <cstdint>
#include <vector>

#include <benchmark/benchmark.h>
#include <omp.h>

#include "wxadapt/core/image.hpp"
#include "wxadapt/core/rng.hpp"
#include "wxadapt/kernels/conv.hpp"
#include "wxadapt/kernels/filters.hpp"
#include "wxadapt/kernels/pool.hpp"

using namespace wxa;
namespace k = wxa::kernels;

namespace {

std::vector<float> random_values(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<float> v(n);
  for (auto& x : v) x = static_cast<float>(rng.uniform(-1, 1));
  return v;
}

Plane random_plane(int h, int w, std::uint64_t seed) {
  Plane p(h, w);
  p.data = random_values(p.size(), seed);
  return p;
}

// Block-2 sized layer of the detector: batch 8, 8 -> 16 channels at 64x64.
k::ConvGeometry conv_geometry(const benchmark::State& state) {
  k::ConvGeometry g;
  g.batch = static_cast<int>(state.range(0));
  g.in_ch = 8;
  g.in_h = g.in_w = 64;
  g.out_ch = 16;
  g.kernel = 3;
  g.pad = 1;
  return g;
}

template <bool Reference>
void BM_conv2d_forward(benchmark::State& state) {
  const auto g = conv_geometry(state);
  const auto in = random_values(static_cast<std::size_t>(g.input_size()), 1);
  const auto w = random_values(static_cast<std::size_t>(g.weight_size()), 2);
  const auto b = random_values(static_cast<std::size_t>(g.out_ch), 3);
  std::vector<float> out(static_cast<std::size_t>(g.output_size()));
  for (auto _ : state) {
    if constexpr (Reference) {
      k::reference::conv2d_forward<float>(g, in, w, b, out);
    } else {
      k::conv2d_forward<float>(g, in, w, b, out);
    }
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * g.output_size());
}

template <bool Reference>
void BM_conv2d_backward(benchmark::State& state) {
  const auto g = conv_geometry(state);
  const auto in = random_values(static_cast<std::size_t>(g.input_size()), 1);
  const auto w = random_values(static_cast<std::size_t>(g.weight_size()), 2);
  const auto go = random_values(static_cast<std::size_t>(g.output_size()), 3);
  std::vector<float> gi(in.size()), gw(w.size()), gb(static_cast<std::size_t>(g.out_ch));
  for (auto _ : state) {
    if constexpr (Reference) {
      k::reference::conv2d_backward<float>(g, in, w, go, gi, gw, gb);
    } else {
      k::conv2d_backward<float>(g, in, w, go, gi, gw, gb);
    }
    benchmark::DoNotOptimize(gw.data());
  }
  state.SetItemsProcessed(state.iterations() * g.output_size());
}

template <bool Reference>
void BM_max_pool(benchmark::State& state) {
  k::PoolGeometry g;
  g.planes = static_cast<int>(state.range(0)) * 16;
  g.in_h = g.in_w = 64;
  const auto in = random_values(static_cast<std::size_t>(g.planes) * 64 * 64, 4);
  const auto n = static_cast<std::size_t>(g.planes) * g.out_h() * g.out_w();
  std::vector<float> out(n);
  std::vector<std::int32_t> arg(n);
  for (auto _ : state) {
    if constexpr (Reference) {
      k::reference::max_pool_forward<float>(g, in, out, arg);
    } else {
      k::max_pool_forward<float>(g, in, out, arg);
    }
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long>(n));
}

// Dark-channel and guided-filter windows on a 128x128 image.
template <bool Reference>
void BM_min_filter(benchmark::State& state) {
  const auto p = random_plane(128, 128, 5);
  const int r = static_cast<int>(state.range(0));
  for (auto _ : state) {
    auto out = Reference ? k::reference::min_filter(p, r) : k::min_filter(p, r);
    benchmark::DoNotOptimize(out.data.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long>(p.size()));
}

template <bool Reference>
void BM_box_mean(benchmark::State& state) {
  const auto p = random_plane(128, 128, 6);
  const int r = static_cast<int>(state.range(0));
  for (auto _ : state) {
    auto out = Reference ? k::reference::box_mean(p, r) : k::box_mean(p, r);
    benchmark::DoNotOptimize(out.data.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long>(p.size()));
}

}  // namespace

BENCHMARK(BM_conv2d_forward<true>)->Name("conv2d_forward/reference")->Arg(8)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_conv2d_forward<false>)->Name("conv2d_forward/parallel")->Arg(8)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_conv2d_backward<true>)->Name("conv2d_backward/reference")->Arg(8)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_conv2d_backward<false>)->Name("conv2d_backward/parallel")->Arg(8)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_max_pool<true>)->Name("max_pool/reference")->Arg(8);
BENCHMARK(BM_max_pool<false>)->Name("max_pool/parallel")->Arg(8);
BENCHMARK(BM_min_filter<true>)->Name("min_filter/reference")->Arg(7);
BENCHMARK(BM_min_filter<false>)->Name("min_filter/parallel")->Arg(7);
BENCHMARK(BM_box_mean<true>)->Name("box_mean/reference")->Arg(20);
BENCHMARK(BM_box_mean<false>)->Name("box_mean/parallel")->Arg(20);

int main(int argc, char** argv) {
  benchmark::Initialize(&argc, argv);
  if (benchmark::ReportUnrecognizedArguments(argc, argv)) return 1;
  benchmark::AddCustomContext("omp_max_threads", std::to_string(omp_get_max_threads()));
  benchmark::RunSpecifiedBenchmarks();
  benchmark::Shutdown();
  return 0;
}
