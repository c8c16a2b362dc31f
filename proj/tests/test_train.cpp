#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <random>

#include "msnet/train.hpp"

using namespace msnet;

namespace {

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

// A segment whose feature carries an obvious stripe at the target bin, so a
// small model can actually learn the mapping.
Segment make_learnable_segment(const ModelConfig& cfg, unsigned seed,
                               int valid_frames = kSegmentFrames) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> noise(0.0, 0.15);
  std::uniform_int_distribution<int> bin_dist(4, cfg.num_bins - 5);
  std::uniform_int_distribution<int> len_dist(20, 60);
  std::uniform_real_distribution<double> voiced_dist(0.0, 1.0);

  Segment seg;
  seg.source_id = "synthetic";
  seg.num_bins = cfg.num_bins;
  seg.feature.assign(static_cast<std::size_t>(3) * cfg.num_bins * kSegmentFrames, 0.0f);
  seg.target.num_rows = cfg.num_bins + 1;
  seg.target.num_frames = kSegmentFrames;
  seg.target.hot_row.assign(kSegmentFrames, cfg.num_bins);
  seg.target.mask.assign(kSegmentFrames, 0);

  int t = 0;
  while (t < valid_frames) {
    const int len = std::min(len_dist(rng), valid_frames - t);
    const bool voiced = voiced_dist(rng) > 0.25;
    const int bin = bin_dist(rng);
    for (int i = 0; i < len; ++i, ++t) {
      seg.target.mask[t] = 1;
      for (int ch = 0; ch < 3; ++ch) {
        for (int b = 0; b < cfg.num_bins; ++b) {
          double v = noise(rng);
          if (voiced && std::abs(b - bin) <= 1) v = 1.0 - 0.3 * std::abs(b - bin);
          seg.feature[(static_cast<std::size_t>(ch) * cfg.num_bins + b) *
                          kSegmentFrames + t] = static_cast<float>(v);
        }
      }
      seg.target.hot_row[t] = voiced ? bin : cfg.num_bins;
    }
  }
  return seg;
}

EvalClip clip_from_segment(const ModelConfig& cfg, const Segment& seg,
                           const std::string& id) {
  EvalClip clip;
  clip.id = id;
  clip.segments = {seg};
  for (int t = 0; t < kSegmentFrames; ++t) {
    if (seg.target.mask[t] == 0) continue;
    clip.ref_times.push_back(t * clip.hop_seconds);
    const int row = seg.target.hot_row[t];
    clip.ref_f0.push_back(row == cfg.num_bins ? 0.0 : cfg.bin_to_hz(row));
  }
  return clip;
}

float batch_loss(MSNet<float>& model, const std::vector<const Segment*>& batch,
                 bool train_mode) {
  const auto x = segment_features_to_tensor(batch);
  const auto target = segment_targets_to_tensor(batch, false);
  const auto mask = segment_masks_to_matrix(batch);
  auto probs = model.forward(x, train_mode, train_mode ? &mask : nullptr).probs;
  return nn::bce_loss(probs, target, mask);
}

}  // namespace

TEST_CASE("a single repeated segment is driven below 0.01 loss in 200 steps") {
  const ModelConfig cfg = tiny_config();
  MSNet<float> model(cfg, 1);
  const Segment seg = make_learnable_segment(cfg, 2);
  const std::vector<const Segment*> batch = {&seg};
  const auto x = segment_features_to_tensor(batch);
  const auto target = segment_targets_to_tensor(batch, false);
  const auto mask = segment_masks_to_matrix(batch);

  auto params = model.parameters(true);
  nn::Adam<float> adam(1e-2f);
  float loss = 0.0f;
  for (int step = 0; step < 200; ++step) {
    model.zero_grad();
    auto probs = model.forward(x, true, &mask).probs;
    loss = nn::bce_loss(probs, target, mask);
    if (loss < 0.01f) break;
    model.backward(nn::bce_loss_backward(probs, target, mask));
    nn::clip_gradients(params, 5.0f);
    adam.step(params);
  }
  CHECK(loss < 0.01f);
}

TEST_CASE("loss strictly decreases over the first 10 steps at lr 1e-4") {
  const ModelConfig cfg = tiny_config();
  MSNet<float> model(cfg, 3);
  const Segment seg = make_learnable_segment(cfg, 4);
  const std::vector<const Segment*> batch = {&seg};
  const auto x = segment_features_to_tensor(batch);
  const auto target = segment_targets_to_tensor(batch, false);
  const auto mask = segment_masks_to_matrix(batch);

  auto params = model.parameters(true);
  nn::Adam<float> adam(1e-4f);
  double prev = 1e9;
  for (int step = 0; step < 10; ++step) {
    model.zero_grad();
    auto probs = model.forward(x, true, &mask).probs;
    const double loss = nn::bce_loss(probs, target, mask);
    CHECK(loss < prev);
    prev = loss;
    model.backward(nn::bce_loss_backward(probs, target, mask));
    adam.step(params);
  }
}

TEST_CASE("patience 0 stops after exactly one epoch") {
  const ModelConfig cfg = tiny_config();
  MSNet<float> model(cfg, 5);
  std::vector<Segment> train_set = {make_learnable_segment(cfg, 6)};
  const std::vector<EvalClip> val = {
      clip_from_segment(cfg, make_learnable_segment(cfg, 7), "val")};
  TrainConfig tc;
  tc.batch_size = 1;
  tc.max_epochs = 50;
  tc.patience = 0;
  const TrainReport report = train(model, train_set, val, tc);
  CHECK(report.epochs.size() == 1);
  CHECK(report.best_epoch == 1);
}

TEST_CASE("training is deterministic in the seed") {
  const ModelConfig cfg = tiny_config();
  std::vector<Segment> train_set = {make_learnable_segment(cfg, 8),
                                    make_learnable_segment(cfg, 9),
                                    make_learnable_segment(cfg, 10)};
  const std::vector<EvalClip> val = {
      clip_from_segment(cfg, make_learnable_segment(cfg, 11), "val")};
  TrainConfig tc;
  tc.batch_size = 2;
  tc.max_epochs = 3;
  tc.patience = 3;
  tc.seed = 77;

  MSNet<float> a(cfg, 42), b(cfg, 42);
  const std::string ra = format_train_report(train(a, train_set, val, tc));
  const std::string rb = format_train_report(train(b, train_set, val, tc));
  CHECK(ra == rb);
  CHECK(ra.find("epoch\ttrain_loss\tval_loss\tval_oa\n") == 0);
}

TEST_CASE("appending fully padded segments changes neither loss nor gradients") {
  const ModelConfig cfg = tiny_config();
  const Segment real = make_learnable_segment(cfg, 12, 100);  // 156 padded frames
  Segment padded;
  padded.source_id = "pad";
  padded.num_bins = cfg.num_bins;
  padded.feature.assign(static_cast<std::size_t>(3) * cfg.num_bins * kSegmentFrames, 0.0f);
  padded.target.num_rows = cfg.num_bins + 1;
  padded.target.num_frames = kSegmentFrames;
  padded.target.hot_row.assign(kSegmentFrames, cfg.num_bins);
  padded.target.mask.assign(kSegmentFrames, 0);

  const auto run = [&](const std::vector<const Segment*>& batch,
                       std::vector<float>& grads_out) {
    MSNet<float> model(cfg, 13);
    const auto x = segment_features_to_tensor(batch);
    const auto target = segment_targets_to_tensor(batch, false);
    const auto mask = segment_masks_to_matrix(batch);
    model.zero_grad();
    auto probs = model.forward(x, true, &mask).probs;
    const float loss = nn::bce_loss(probs, target, mask);
    model.backward(nn::bce_loss_backward(probs, target, mask));
    for (const auto& p : model.parameters(true)) {
      grads_out.insert(grads_out.end(), p.grad, p.grad + p.size);
    }
    return loss;
  };

  std::vector<float> grads_a, grads_b;
  const float loss_a = run({&real}, grads_a);
  const float loss_b = run({&real, &padded}, grads_b);
  CHECK(std::abs(loss_a - loss_b) < 1e-6f);
  REQUIRE(grads_a.size() == grads_b.size());
  for (std::size_t i = 0; i < grads_a.size(); ++i) {
    CHECK(std::abs(grads_a[i] - grads_b[i]) < 1e-6f);
  }
}

TEST_CASE("grid search returns the smallest threshold on flat OA") {
  AblatedSalience clip;
  clip.id = "flat";
  for (int t = 0; t < 10; ++t) {
    const double time = t * 0.01;
    clip.times.push_back(time);
    clip.ref_times.push_back(time);
    clip.ref_f0.push_back(440.0);  // voiced-only clip
    clip.max_salience.push_back(1.0);
    clip.bin_hz.push_back(440.0);
  }
  const auto [theta, oa] = grid_search_threshold(std::vector<AblatedSalience>{clip});
  CHECK(theta == doctest::Approx(0.01));
  CHECK(oa == doctest::Approx(1.0));
}

TEST_CASE("grid search on a 3-frame example matches exhaustive enumeration") {
  AblatedSalience clip;
  clip.id = "hand";
  // frame 0: voiced, right pitch, salience .65
  // frame 1: unvoiced, salience .35 (false alarm unless theta > .35)
  // frame 2: voiced, wrong pitch, salience .8
  clip.times = {0.0, 0.01, 0.02};
  clip.ref_times = clip.times;
  clip.ref_f0 = {440.0, 0.0, 220.0};
  clip.max_salience = {0.65, 0.35, 0.8};
  clip.bin_hz = {440.0, 300.0, 330.0};

  double best_theta = 0.0, best_oa = -1.0;
  for (int i = 1; i <= 99; ++i) {
    const double theta = i / 100.0;
    int correct = 0;
    for (int t = 0; t < 3; ++t) {
      const bool est_voiced = clip.max_salience[t] >= theta;
      if (clip.ref_f0[t] == 0.0) {
        correct += est_voiced ? 0 : 1;
      } else if (est_voiced) {
        const double cents = 1200.0 * std::log2(clip.bin_hz[t] / clip.ref_f0[t]);
        correct += std::abs(cents) <= 50.0 ? 1 : 0;
      }
    }
    const double oa = correct / 3.0;
    if (oa > best_oa) {
      best_oa = oa;
      best_theta = theta;
    }
  }
  const auto [theta, oa] = grid_search_threshold(std::vector<AblatedSalience>{clip});
  CHECK(theta == doctest::Approx(best_theta));
  CHECK(oa == doctest::Approx(best_oa));
  // enumeration: theta in (0.35, 0.65] scores both voiced-right and the
  // true negative -> OA = 2/3, first reached at 0.36
  CHECK(theta == doctest::Approx(0.36));
  CHECK(oa == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("grid search with clean separation returns 0.11") {
  AblatedSalience clip;
  clip.id = "separated";
  for (int t = 0; t < 20; ++t) {
    const double time = t * 0.01;
    const bool voiced = (t % 2) == 0;
    clip.times.push_back(time);
    clip.ref_times.push_back(time);
    clip.ref_f0.push_back(voiced ? 440.0 : 0.0);
    clip.max_salience.push_back(voiced ? 0.9 : 0.1);
    clip.bin_hz.push_back(440.0);
  }
  const auto [theta, oa] = grid_search_threshold(std::vector<AblatedSalience>{clip});
  CHECK(theta == doctest::Approx(0.11));
  CHECK(oa == doctest::Approx(1.0));
}

TEST_CASE("score_ablated applies the threshold inclusively") {
  AblatedSalience clip;
  clip.times = {0.0, 0.01};
  clip.ref_times = clip.times;
  clip.ref_f0 = {440.0, 0.0};
  clip.max_salience = {0.5, 0.5};
  clip.bin_hz = {440.0, 440.0};
  const Scores at = score_ablated(clip, 0.5);  // 0.5 >= 0.5 -> voiced
  CHECK(at.vr == doctest::Approx(1.0));
  CHECK(at.vfa == doctest::Approx(1.0));
  const Scores above = score_ablated(clip, 0.51);
  CHECK(above.vr == 0.0);
  CHECK(above.vfa == 0.0);
}

TEST_CASE("extract_melody yields one point per real frame on the hop grid") {
  const ModelConfig cfg = tiny_config();
  MSNet<float> model(cfg, 14);
  CfpFeature feature;
  feature.num_bins = cfg.num_bins;
  feature.num_frames = 300;
  feature.data.assign(3u * cfg.num_bins * 300u, 0.25f);
  feature.frame_times.resize(300);
  const double hop = 256.0 / 44100.0;
  for (int t = 0; t < 300; ++t) feature.frame_times[t] = t * hop;

  const MelodyContour contour = extract_melody(model, feature, hop);
  REQUIRE(contour.times.size() == 300);
  CHECK(contour.times[0] == 0.0);
  CHECK(contour.times[299] == doctest::Approx(299 * hop));
  for (double f : contour.f0) CHECK(f >= 0.0);

  // high threshold forces the ablated decode fully unvoiced
  const MelodyContour gated = extract_melody_ablated(model, feature, hop, 1.1);
  REQUIRE(gated.f0.size() == 300);
  for (double f : gated.f0) CHECK(f == 0.0);
}

TEST_CASE("checkpoint round trip preserves validation OA exactly") {
  const ModelConfig cfg = tiny_config();
  MSNet<float> model(cfg, 15);
  std::vector<Segment> train_set = {make_learnable_segment(cfg, 16)};
  const std::vector<EvalClip> val = {
      clip_from_segment(cfg, make_learnable_segment(cfg, 17), "val")};
  TrainConfig tc;
  tc.batch_size = 1;
  tc.max_epochs = 2;
  tc.patience = 2;
  train(model, train_set, val, tc);

  const double before = validate(model, val);
  Checkpoint meta;
  meta.model = cfg;
  meta.cfp = CfpConfig::vocal();
  const std::string path = "train_ckpt_test.msnw";
  save_checkpoint(path, model, meta);
  MSNet<float> loaded = load_checkpoint(path);
  const double after = validate(loaded, val);
  CHECK(std::abs(before - after) < 1e-9);
  std::remove(path.c_str());
  std::remove((path + ".json").c_str());
}

TEST_CASE("ablated training runs and reports a grid-searched OA") {
  const ModelConfig cfg = tiny_config();
  MSNet<float> model(cfg, 18);
  std::vector<Segment> train_set = {make_learnable_segment(cfg, 19)};
  const std::vector<EvalClip> val = {
      clip_from_segment(cfg, make_learnable_segment(cfg, 20), "val")};
  TrainConfig tc;
  tc.batch_size = 1;
  tc.max_epochs = 2;
  tc.patience = 2;
  const TrainReport report = train(model, train_set, val, tc, true);
  CHECK(report.epochs.size() == 2);
  for (const auto& rec : report.epochs) {
    CHECK(rec.val_oa >= 0.0);
    CHECK(rec.val_oa <= 1.0);
    CHECK(std::isfinite(rec.train_loss));
  }
  const auto [theta, oa] = grid_search_threshold(model, val);
  CHECK(theta >= 0.01);
  CHECK(theta <= 0.99);
  CHECK(oa == doctest::Approx(report.best_val_oa).epsilon(1e-6));
}

TEST_CASE("train rejects empty inputs and non-finite configurations") {
  const ModelConfig cfg = tiny_config();
  MSNet<float> model(cfg, 21);
  const std::vector<EvalClip> val = {
      clip_from_segment(cfg, make_learnable_segment(cfg, 22), "val")};
  TrainConfig tc;
  CHECK_THROWS_AS(train(model, {}, val, tc), std::invalid_argument);
  std::vector<Segment> train_set = {make_learnable_segment(cfg, 23)};
  CHECK_THROWS_AS(train(model, train_set, {}, tc), std::invalid_argument);
  tc.batch_size = 0;
  CHECK_THROWS_AS(train(model, train_set, val, tc), std::invalid_argument);
}
