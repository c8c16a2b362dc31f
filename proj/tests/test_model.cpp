#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <random>

#include "msnet/model.hpp"

using namespace msnet;

namespace {

// Small network with the same topology, for cheap gradient/round-trip tests.
ModelConfig tiny_config() {
  ModelConfig cfg = ModelConfig::vocal();
  cfg.num_bins = 40;
  cfg.pool_plan = {2, 2, 2};
  cfg.encoder_channels = {2, 3, 4};
  cfg.kernel_h = 3;
  cfg.kernel_w = 3;
  cfg.pad_h = 1;
  cfg.pad_w = 1;
  return cfg;
}

template <class T>
nn::Tensor4<T> random_input(const ModelConfig& cfg, int n, int t,
                            std::mt19937& rng) {
  nn::Tensor4<T> x(n, 3, cfg.num_bins, t);
  std::uniform_real_distribution<double> dist(0.0, 1.0);
  for (auto& v : x.data) v = static_cast<T>(dist(rng));
  return x;
}

}  // namespace

TEST_CASE("model config invariants") {
  CHECK_NOTHROW(ModelConfig::vocal().validate());
  CHECK_NOTHROW(ModelConfig::general().validate());
  ModelConfig bad = ModelConfig::vocal();
  bad.pool_plan = {4, 4, 5};  // 320 not divisible down to 5
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = ModelConfig::vocal();
  bad.pad_h = 1;  // 5-tap kernel no longer shape preserving
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("bin frequencies follow the log grid") {
  const ModelConfig cfg = ModelConfig::vocal();
  CHECK(cfg.bin_to_hz(0) == doctest::Approx(31.0));
  CHECK(cfg.bin_to_hz(60) == doctest::Approx(62.0));  // one octave up
  CHECK(cfg.bin_to_hz(kNoMelodyBin) == 0.0);
  const ModelConfig gen = ModelConfig::general();
  CHECK(gen.bin_to_hz(0) == doctest::Approx(20.0));
  CHECK(gen.bin_to_hz(gen.num_bins - 1) ==
        doctest::Approx(20.0 * std::exp2(399.0 / 60.0)));
}

TEST_CASE("decode_salience maps the last row to no-melody") {
  nn::Tensor4<double> probs(1, 1, 5, 3);
  probs.at(0, 0, 2, 0) = 0.9;  // melody bin 2
  probs.at(0, 0, 4, 1) = 0.9;  // non-melody row wins
  probs.at(0, 0, 1, 2) = 0.5;  // tie with row 3
  probs.at(0, 0, 3, 2) = 0.5;
  const auto bins = decode_salience(probs, 0);
  CHECK(bins[0] == 2);
  CHECK(bins[1] == kNoMelodyBin);
  CHECK(bins[2] == 1);  // ties break toward the lowest row
}

TEST_CASE("bins_to_hz maps no-melody to 0 Hz") {
  const auto hz = bins_to_hz({0, kNoMelodyBin, 230}, ModelConfig::vocal());
  CHECK(hz[0] == doctest::Approx(31.0));
  CHECK(hz[1] == 0.0);
  CHECK(hz[2] == doctest::Approx(31.0 * std::exp2(230.0 / 60.0)));
}

TEST_CASE("vocal forward shapes: 320 -> 80 -> 20 -> 5, probs 321 rows") {
  const ModelConfig cfg = ModelConfig::vocal();
  MSNet<float> model(cfg, 1);
  std::mt19937 rng(2);
  const auto x = random_input<float>(cfg, 1, 6, rng);
  const auto res = model.forward(x, false);
  CHECK(res.bottleneck.n == 1);
  CHECK(res.bottleneck.c == 128);
  CHECK(res.bottleneck.h == 5);
  CHECK(res.bottleneck.w == 6);
  CHECK(res.probs.h == 321);
  CHECK(res.probs.w == 6);
  CHECK(model.pool_indices(0).h == 80);
  CHECK(model.pool_indices(1).h == 20);
  CHECK(model.pool_indices(2).h == 5);
}

TEST_CASE("general forward shapes: 400 -> 100 -> 25 -> 5, probs 401 rows") {
  const ModelConfig cfg = ModelConfig::general();
  MSNet<float> model(cfg, 1);
  std::mt19937 rng(3);
  const auto x = random_input<float>(cfg, 1, 4, rng);
  const auto res = model.forward(x, false);
  CHECK(res.bottleneck.h == 5);
  CHECK(res.probs.h == 401);
  CHECK(model.pool_indices(0).h == 100);
  CHECK(model.pool_indices(1).h == 25);
  CHECK(model.pool_indices(2).h == 5);
}

TEST_CASE("output columns are probability distributions") {
  const ModelConfig cfg = tiny_config();
  MSNet<double> model(cfg, 4);
  std::mt19937 rng(5);
  const auto x = random_input<double>(cfg, 2, 7, rng);
  const auto res = model.forward(x, false);
  for (int i = 0; i < 2; ++i) {
    for (int t = 0; t < 7; ++t) {
      double sum = 0.0;
      for (int f = 0; f < res.probs.h; ++f) {
        const double p = res.probs.at(i, 0, f, t);
        CHECK(p >= 0.0);
        sum += p;
      }
      CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
    }
  }
}

TEST_CASE("state holds exactly seven convolution weight tensors") {
  MSNet<float> model(ModelConfig::vocal(), 0);
  int conv_weights = 0;
  for (const auto& t : model.state_tensors(true)) {
    if (t.name.size() > 7 && t.name.substr(0, 4) == "conv" &&
        t.name.substr(t.name.size() - 7) == ".weight") {
      ++conv_weights;
      CHECK(t.dims.size() == 4);
    }
  }
  CHECK(conv_weights == 7);
}

TEST_CASE("conv weight shapes follow the channel plan") {
  MSNet<float> model(ModelConfig::vocal(), 0);
  const auto tensors = model.state_tensors(true);
  const auto dims_of = [&](const std::string& name) {
    for (const auto& t : tensors) {
      if (t.name == name) return t.dims;
    }
    FAIL("missing tensor ", name);
    return std::vector<std::uint32_t>{};
  };
  CHECK(dims_of("conv_enc1.weight") == std::vector<std::uint32_t>{32, 3, 5, 5});
  CHECK(dims_of("conv_enc2.weight") == std::vector<std::uint32_t>{64, 32, 5, 5});
  CHECK(dims_of("conv_enc3.weight") == std::vector<std::uint32_t>{128, 64, 5, 5});
  CHECK(dims_of("conv_dec1.weight") == std::vector<std::uint32_t>{64, 128, 5, 5});
  CHECK(dims_of("conv_dec2.weight") == std::vector<std::uint32_t>{32, 64, 5, 5});
  CHECK(dims_of("conv_dec3.weight") == std::vector<std::uint32_t>{1, 32, 5, 5});
  CHECK(dims_of("conv_nm.weight") == std::vector<std::uint32_t>{1, 128, 5, 5});
}

TEST_CASE("decoder un-pooling places mass exactly at the encoder argmax rows") {
  const ModelConfig cfg = tiny_config();
  MSNet<double> model(cfg, 7);
  model.set_record_taps(true);
  std::mt19937 rng(8);
  const auto x = random_input<double>(cfg, 1, 3, rng);
  model.forward(x, false);
  // stage 0 pairs with the deepest pooling (indices stage 2), and so on.
  for (int stage = 0; stage < 3; ++stage) {
    const auto& tap = model.unpool_tap(stage);
    const auto& idx = model.pool_indices(2 - stage);
    const int k = idx.kernel;
    REQUIRE(tap.h == idx.h * k);
    for (int c = 0; c < tap.c; ++c) {
      for (int y = 0; y < idx.h; ++y) {
        for (int t = 0; t < tap.w; ++t) {
          for (int d = 0; d < k; ++d) {
            const double v = tap.at(0, c, y * k + d, t);
            if (d != idx.at(0, c, y, t)) CHECK(v == 0.0);
          }
        }
      }
    }
  }
  model.set_record_taps(false);
}

TEST_CASE("ablated forward is a sigmoid map over F x T") {
  const ModelConfig cfg = tiny_config();
  MSNet<double> model(cfg, 9);
  std::mt19937 rng(10);
  const auto x = random_input<double>(cfg, 1, 5, rng);
  const auto probs = model.forward_ablated(x, false);
  CHECK(probs.h == cfg.num_bins);
  CHECK(probs.w == 5);
  for (double p : probs.data) {
    CHECK(p > 0.0);
    CHECK(p < 1.0);
  }
}

TEST_CASE("same seed gives identical models, different seeds differ") {
  const ModelConfig cfg = tiny_config();
  MSNet<float> a(cfg, 42), b(cfg, 42), c(cfg, 43);
  std::mt19937 rng(11);
  const auto x = random_input<float>(cfg, 1, 4, rng);
  const auto ra = a.forward(x, false);
  const auto rb = b.forward(x, false);
  const auto rc = c.forward(x, false);
  CHECK(ra.probs.data == rb.probs.data);
  CHECK(ra.probs.data != rc.probs.data);
}

TEST_CASE("input gradient of the full network matches finite differences") {
  const ModelConfig cfg = tiny_config();
  MSNet<double> model(cfg, 12);
  std::mt19937 rng(13);
  auto x = random_input<double>(cfg, 2, 3, rng);

  const auto out0 = model.forward(x, true);
  nn::Tensor4<double> r(out0.probs.n, 1, out0.probs.h, out0.probs.w);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  for (auto& v : r.data) v = dist(rng);

  // Analytic parameter gradients under L = <probs, R>.
  model.zero_grad();
  model.forward(x, true);
  model.backward(r);
  auto params = model.parameters(true);
  std::vector<std::vector<double>> grads;
  for (const auto& p : params) {
    grads.emplace_back(p.grad, p.grad + p.size);
  }

  const auto loss_of = [&]() {
    const auto out = model.forward(x, true);
    double s = 0.0;
    for (std::size_t i = 0; i < out.probs.size(); ++i) {
      s += out.probs.data[i] * r.data[i];
    }
    return s;
  };

  // small step: a wide secant across a SELU kink or a pooling argmax flip
  // would otherwise dominate the finite difference
  const double h = 1e-5;
  int checked = 0;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto& p = params[pi];
    for (std::size_t j = 0; j < p.size; j += std::max<std::size_t>(1, p.size / 4)) {
      const double orig = p.value[j];
      p.value[j] = orig + h;
      const double up = loss_of();
      p.value[j] = orig - h;
      const double down = loss_of();
      p.value[j] = orig;
      const double fd = (up - down) / (2.0 * h);
      const double got = grads[pi][j];
      const double denom = std::max({std::abs(fd), std::abs(got), 1e-5});
      CHECK(std::abs(fd - got) / denom < 1e-3);
      ++checked;
    }
  }
  CHECK(checked > 30);
}

TEST_CASE("checkpoint round trip reproduces the forward pass bit for bit") {
  const ModelConfig cfg = tiny_config();
  MSNet<float> model(cfg, 21);
  std::mt19937 rng(22);
  const auto x = random_input<float>(cfg, 1, 6, rng);
  // run one train-mode pass so the running stats are nontrivial
  model.forward(x, true);
  const auto before = model.forward(x, false);

  Checkpoint meta;
  meta.model = cfg;
  meta.cfp = CfpConfig::vocal();
  const std::string path = "ckpt_test.msnw";
  save_checkpoint(path, model, meta);

  Checkpoint loaded_meta;
  MSNet<float> loaded = load_checkpoint(path, &loaded_meta);
  CHECK(loaded_meta.model.num_bins == cfg.num_bins);
  CHECK(loaded_meta.model.pool_plan == cfg.pool_plan);
  CHECK_FALSE(loaded_meta.ablated);
  const auto after = loaded.forward(x, false);
  CHECK(before.probs.data == after.probs.data);

  std::remove(path.c_str());
  std::remove((path + ".json").c_str());
}

TEST_CASE("ablated checkpoints omit the non-melody branch but still load") {
  const ModelConfig cfg = tiny_config();
  MSNet<float> model(cfg, 31);
  std::mt19937 rng(32);
  const auto x = random_input<float>(cfg, 1, 4, rng);
  const auto before = model.forward_ablated(x, false);

  Checkpoint meta;
  meta.model = cfg;
  meta.cfp = CfpConfig::vocal();
  meta.ablated = true;
  meta.threshold = 0.37;
  const std::string path = "ckpt_ablated_test.msnw";
  save_checkpoint(path, model, meta);

  for (const auto& t : read_tensor_container(path)) {
    CHECK(t.name.rfind("conv_nm", 0) != 0);
  }
  Checkpoint loaded_meta;
  MSNet<float> loaded = load_checkpoint(path, &loaded_meta);
  CHECK(loaded_meta.ablated);
  REQUIRE(loaded_meta.threshold.has_value());
  CHECK(*loaded_meta.threshold == doctest::Approx(0.37));
  const auto after = loaded.forward_ablated(x, false);
  CHECK(before.data == after.data);

  std::remove(path.c_str());
  std::remove((path + ".json").c_str());
}

TEST_CASE("tensor container round trip preserves names, dims and values") {
  std::vector<NamedTensor> tensors(2);
  tensors[0].name = "alpha";
  tensors[0].dims = {2, 3};
  tensors[0].values = {1.0f, -2.5f, 0.0f, 4.25f, 1e-7f, -3e8f};
  tensors[1].name = "beta.bias";
  tensors[1].dims = {4};
  tensors[1].values = {0.1f, 0.2f, 0.3f, 0.4f};
  const std::string path = "container_test.msnw";
  write_tensor_container(path, tensors);
  const auto back = read_tensor_container(path);
  REQUIRE(back.size() == 2);
  CHECK(back[0].name == "alpha");
  CHECK(back[0].dims == tensors[0].dims);
  CHECK(back[0].values == tensors[0].values);
  CHECK(back[1].name == "beta.bias");
  CHECK(back[1].values == tensors[1].values);
  std::remove(path.c_str());
}

TEST_CASE("model rejects inputs with the wrong shape") {
  MSNet<float> model(tiny_config(), 0);
  CHECK_THROWS_AS(model.forward(nn::Tensor4<float>(1, 2, 40, 4), false),
                  std::invalid_argument);
  CHECK_THROWS_AS(model.forward(nn::Tensor4<float>(1, 3, 48, 4), false),
                  std::invalid_argument);
}
