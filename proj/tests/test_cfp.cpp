#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "msnet/cfp.hpp"
#include "msnet/fft.hpp"

using namespace msnet;

namespace {

std::vector<double> sine(double freq, double seconds, double sr = 44100.0,
                         double amp = 0.5) {
  std::vector<double> out(static_cast<std::size_t>(seconds * sr));
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = amp * std::sin(2.0 * std::numbers::pi * freq * i / sr);
  }
  return out;
}

std::vector<double> harmonic_tone(double f0, int harmonics, double seconds,
                                  double sr = 44100.0) {
  std::vector<double> out(static_cast<std::size_t>(seconds * sr));
  for (std::size_t i = 0; i < out.size(); ++i) {
    double v = 0.0;
    for (int h = 1; h <= harmonics; ++h) {
      v += std::sin(2.0 * std::numbers::pi * h * f0 * i / sr);
    }
    out[i] = 0.1 * v;
  }
  return out;
}

int argmax_col(const Eigen::MatrixXd& m, int col) {
  int best = 0;
  for (int i = 1; i < m.rows(); ++i) {
    if (m(i, col) > m(best, col)) best = i;
  }
  return best;
}

}  // namespace

TEST_CASE("fft matches the direct DFT oracle") {
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  std::vector<std::complex<double>> x(64);
  for (auto& v : x) v = {dist(rng), dist(rng)};
  auto fast = x;
  fft::transform(fast, false);
  const auto slow = fft::dft_reference(x, false);
  for (std::size_t i = 0; i < x.size(); ++i) {
    CHECK(std::abs(fast[i] - slow[i]) < 1e-9);
  }
  fft::transform(fast, true);  // round trip
  for (std::size_t i = 0; i < x.size(); ++i) {
    CHECK(std::abs(fast[i] - x[i]) < 1e-12);
  }
}

TEST_CASE("compute_stft zero input gives zero magnitudes") {
  StftConfig cfg;
  const auto stft = compute_stft(std::vector<double>(2048, 0.0), cfg);
  CHECK(stft.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("compute_stft frame count follows the framing rule") {
  StftConfig cfg;
  const auto stft = compute_stft(std::vector<double>(44100, 0.0), cfg);
  CHECK(stft.cols() == 173);  // floor(44100/256) + 1
  CHECK(stft.rows() == 1025);
}

TEST_CASE("compute_stft rejects audio shorter than one hop") {
  StftConfig cfg;
  CHECK_THROWS_WITH_AS(compute_stft(std::vector<double>(100, 0.1), cfg),
                       "audio too short", std::runtime_error);
}

TEST_CASE("pure 440 Hz sine peaks at the closed-form DFT bin") {
  StftConfig cfg;
  const auto stft = compute_stft(sine(440.0, 1.0), cfg);
  const Eigen::MatrixXd mag = stft.cwiseAbs();
  const int expected = static_cast<int>(std::lround(440.0 * 2048 / 44100.0));
  CHECK(expected == 20);
  for (int t = 10; t < mag.cols() - 10; ++t) {
    CHECK(argmax_col(mag, t) == expected);
  }
}

TEST_CASE("compute_cfp_linear zero input propagates") {
  StftConfig stft_cfg;
  const auto out = compute_cfp_linear(Eigen::MatrixXd::Zero(1025, 8),
                                      CfpConfig::vocal(), stft_cfg);
  CHECK(out.spec.maxCoeff() == 0.0);
  CHECK(out.gc.maxCoeff() == 0.0);
  CHECK(out.gcos.maxCoeff() == 0.0);
}

TEST_CASE("high-pass zeroes rows below the cutoffs") {
  StftConfig stft_cfg;
  const CfpConfig cfg = CfpConfig::vocal();
  const auto stft = compute_stft(harmonic_tone(220.0, 8, 0.5), stft_cfg);
  const auto out = compute_cfp_linear(stft.cwiseAbs(), cfg, stft_cfg);
  const double bin_hz = stft_cfg.sample_rate / stft_cfg.window_size;
  for (int k = 0; k * bin_hz < cfg.freq_cutoff; ++k) {
    CHECK(out.spec.row(k).cwiseAbs().maxCoeff() == 0.0);
    CHECK(out.gcos.row(k).cwiseAbs().maxCoeff() == 0.0);
  }
  for (int q = 0; q < cfg.quefrency_cutoff * stft_cfg.sample_rate; ++q) {
    CHECK(out.gc.row(q).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("generalized cepstrum peaks at the period of a harmonic tone") {
  StftConfig stft_cfg;
  const auto audio = harmonic_tone(220.0, 8, 0.5);
  const auto stft = compute_stft(audio, stft_cfg);
  const auto out =
      compute_cfp_linear(stft.cwiseAbs(), CfpConfig::vocal(), stft_cfg);
  const int expected_lag = static_cast<int>(std::lround(44100.0 / 220.0));
  CHECK(expected_lag == 200);

  // Independent oracle: autocorrelation of the raw signal.
  const int n = 4096;
  std::vector<double> ac(301, 0.0);
  for (int lag = 100; lag <= 300; ++lag) {
    for (int i = 0; i + lag < n; ++i) ac[lag] += audio[i] * audio[i + lag];
  }
  int oracle_lag = 100;
  for (int lag = 101; lag <= 300; ++lag) {
    if (ac[lag] > ac[oracle_lag]) oracle_lag = lag;
  }
  CHECK(std::abs(oracle_lag - expected_lag) <= 1);

  const int mid = static_cast<int>(stft.cols() / 2);
  int gc_peak = 100;
  for (int lag = 101; lag <= 300; ++lag) {
    if (out.gc(lag, mid) > out.gc(gc_peak, mid)) gc_peak = lag;
  }
  CHECK(std::abs(gc_peak - oracle_lag) <= 1);
  // and it is a genuine local maximum
  CHECK(out.gc(gc_peak, mid) >= out.gc(gc_peak - 1, mid));
  CHECK(out.gc(gc_peak, mid) >= out.gc(gc_peak + 1, mid));
}

TEST_CASE("vocal feature has shape 3 x 320 x T") {
  const auto feat =
      compute_cfp(sine(440.0, 0.5), CfpConfig::vocal(), StftConfig{});
  CHECK(feat.num_bins == 320);
  CHECK(feat.num_frames == 87);  // floor(22050/256) + 1
  CHECK(feat.data.size() == 3u * 320u * 87u);
  CHECK(feat.frame_times[1] == doctest::Approx(256.0 / 44100.0));
}

TEST_CASE("440 Hz sine lands on the log-bin grid at bin 230") {
  const CfpConfig cfg = CfpConfig::vocal();
  const auto feat = compute_cfp(sine(440.0, 0.5), cfg, StftConfig{});
  const int expected = static_cast<int>(std::lround(60.0 * std::log2(440.0 / 31.0)));
  CHECK(expected == 230);
  for (int t = 5; t < feat.num_frames - 5; ++t) {
    int best = 0;
    for (int b = 1; b < feat.num_bins; ++b) {
      if (feat.at(0, b, t) > feat.at(0, best, t)) best = b;
    }
    CHECK(std::abs(best - expected) <= 1);
  }
}

TEST_CASE("all-zero audio produces an all-zero feature without division issues") {
  const auto feat =
      compute_cfp(std::vector<double>(8192, 0.0), CfpConfig::vocal(), StftConfig{});
  for (float v : feat.data) {
    CHECK(v == 0.0f);
    CHECK(std::isfinite(v));
  }
}

TEST_CASE("feature entries stay within [0, 1]") {
  const auto feat =
      compute_cfp(harmonic_tone(196.0, 6, 0.4), CfpConfig::vocal(), StftConfig{});
  for (float v : feat.data) {
    CHECK(v >= 0.0f);
    CHECK(v <= 1.0f);
  }
}

TEST_CASE("scaling invariance up to per-channel normalization") {
  const auto audio = harmonic_tone(220.0, 6, 0.4);
  std::vector<double> scaled = audio;
  for (double& v : scaled) v *= 3.7;
  const auto a = compute_cfp(audio, CfpConfig::vocal(), StftConfig{});
  const auto b = compute_cfp(scaled, CfpConfig::vocal(), StftConfig{});
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    CHECK(a.data[i] == doctest::Approx(b.data[i]).epsilon(1e-6));
  }
}

TEST_CASE("harmonic consistency of the GCoS channel") {
  const CfpConfig cfg = CfpConfig::vocal();
  std::mt19937 rng(11);
  // low end 70 Hz: below ~3.2 periods per 2048-sample window the periodicity
  // channels cannot localize the fundamental
  std::uniform_real_distribution<double> dist(70.0, cfg.f_max / 4.0);
  long hits = 0, frames = 0;
  for (int trial = 0; trial < 16; ++trial) {
    const double f0 = dist(rng);
    const int expected =
        static_cast<int>(std::lround(60.0 * std::log2(f0 / cfg.f_min)));
    const auto feat = compute_cfp(harmonic_tone(f0, 6, 0.3), cfg, StftConfig{});
    for (int t = 4; t < feat.num_frames - 4; ++t) {
      int best = 0;
      for (int b = 1; b < feat.num_bins; ++b) {
        if (feat.at(1, b, t) > feat.at(1, best, t)) best = b;
      }
      ++frames;
      if (std::abs(best - expected) <= 2) ++hits;
    }
  }
  CHECK(static_cast<double>(hits) >= 0.95 * static_cast<double>(frames));
}

TEST_CASE("front-end is deterministic") {
  const auto audio = harmonic_tone(220.0, 6, 0.3);
  const auto a = compute_cfp(audio, CfpConfig::vocal(), StftConfig{});
  const auto b = compute_cfp(audio, CfpConfig::vocal(), StftConfig{});
  CHECK(a.data == b.data);
}

TEST_CASE("feature cache round trip") {
  const auto feat = compute_cfp(sine(440.0, 0.3), CfpConfig::vocal(), StftConfig{});
  const std::string path = "cfp_cache_test.bin";
  write_cfp_cache(path, feat, CfpConfig::vocal(), StftConfig{});
  const auto back = read_cfp_cache(path);
  CHECK(back.num_bins == feat.num_bins);
  CHECK(back.num_frames == feat.num_frames);
  CHECK(back.data == feat.data);
  std::remove(path.c_str());
}

TEST_CASE("config invariants are enforced") {
  CfpConfig cfg = CfpConfig::vocal();
  cfg.num_bins = 1000;  // grid would overshoot f_max
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = CfpConfig::vocal();
  cfg.gamma[0] = 1.5;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  CHECK_NOTHROW(CfpConfig::vocal().validate());
  CHECK_NOTHROW(CfpConfig::general().validate());
}
