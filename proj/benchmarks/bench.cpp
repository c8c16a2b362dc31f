#include <benchmark/benchmark.h>

#include <cmath>
#include <random>
#include <vector>

#include "msnet/cfp.hpp"
#include "msnet/layers.hpp"
#include "msnet/model.hpp"

using namespace msnet;

namespace {

nn::Tensor4<float> random_input(int n, int c, int h, int w, unsigned seed) {
  nn::Tensor4<float> x(n, c, h, w);
  std::mt19937 rng(seed);
  std::uniform_real_distribution<float> dist(0.0f, 1.0f);
  for (auto& v : x.data) v = dist(rng);
  return x;
}

void bm_conv_forward(benchmark::State& state) {
  nn::Conv2d<float> conv(32, 64, 5, 5, 2, 2);
  std::mt19937 rng(1);
  conv.init(rng);
  const auto x = random_input(1, 32, 80, 64, 2);
  for (auto _ : state) {
    benchmark::DoNotOptimize(conv.forward(x, false).data.data());
  }
}
BENCHMARK(bm_conv_forward)->Unit(benchmark::kMillisecond);

void bm_model_forward(benchmark::State& state) {
  MSNet<float> model(ModelConfig::vocal(), 1);
  const auto x = random_input(1, 3, 320, 64, 3);
  for (auto _ : state) {
    benchmark::DoNotOptimize(model.forward(x, false).probs.data.data());
  }
}
BENCHMARK(bm_model_forward)->Unit(benchmark::kMillisecond);

void bm_cfp_one_second(benchmark::State& state) {
  const CfpConfig cfg = CfpConfig::vocal();
  const StftConfig stft;
  std::vector<double> audio(static_cast<std::size_t>(stft.sample_rate));
  for (std::size_t i = 0; i < audio.size(); ++i) {
    audio[i] = 0.4 * std::sin(2.0 * M_PI * 220.0 * i / stft.sample_rate) +
               0.1 * std::sin(2.0 * M_PI * 331.3 * i / stft.sample_rate);
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(compute_cfp(audio, cfg, stft).data.data());
  }
}
BENCHMARK(bm_cfp_one_second)->Unit(benchmark::kMillisecond);

void bm_softmax_freq(benchmark::State& state) {
  const auto x = random_input(16, 1, 321, 256, 4);
  for (auto _ : state) {
    benchmark::DoNotOptimize(nn::softmax_freq(x).data.data());
  }
}
BENCHMARK(bm_softmax_freq)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
