#include <benchmark/benchmark.h>

#include "simpsi/dsp.hpp"
#include "simpsi/rng.hpp"

using namespace simpsi;

static dsp::TimeSeries make_signal(int channels, int length) {
  rng::RngStream r(1);
  dsp::TimeSeries x(channels, length);
  for (auto& v : x.data) v = static_cast<float>(r.uniform(-1, 1));
  return x;
}

static void BM_rfft_pow2(benchmark::State& state) {
  auto x = make_signal(1, static_cast<int>(state.range(0)));
  for (auto _ : state) {
    auto s = dsp::rfft(x);
    benchmark::DoNotOptimize(s.data.data());
  }
}
BENCHMARK(BM_rfft_pow2)->Arg(128)->Arg(1024)->Arg(8192);

static void BM_rfft_bluestein(benchmark::State& state) {
  auto x = make_signal(1, static_cast<int>(state.range(0)));
  for (auto _ : state) {
    auto s = dsp::rfft(x);
    benchmark::DoNotOptimize(s.data.data());
  }
}
BENCHMARK(BM_rfft_bluestein)->Arg(100)->Arg(2500)->Arg(3000);

static void BM_roundtrip_128(benchmark::State& state) {
  auto x = make_signal(1, 128);
  for (auto _ : state) {
    auto back = dsp::irfft(dsp::rfft(x));
    benchmark::DoNotOptimize(back.data.data());
  }
}
BENCHMARK(BM_roundtrip_128);

BENCHMARK_MAIN();
