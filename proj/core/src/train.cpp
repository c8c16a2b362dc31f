#include "msnet/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <random>
#include <stdexcept>

namespace msnet {

namespace {

nn::Tensor4<float> forward_infer(MSNet<float>& model,
                                 const std::vector<const Segment*>& batch,
                                 bool ablated) {
  const nn::Tensor4<float> x = segment_features_to_tensor(batch);
  if (ablated) return model.forward_ablated(x, false);
  return model.forward(x, false).probs;
}

std::vector<const Segment*> to_ptrs(const std::vector<Segment>& segments) {
  std::vector<const Segment*> out(segments.size());
  for (std::size_t i = 0; i < segments.size(); ++i) out[i] = &segments[i];
  return out;
}

}  // namespace

nn::Tensor4<float> segment_features_to_tensor(
    const std::vector<const Segment*>& batch) {
  const int n = static_cast<int>(batch.size());
  const int F = batch.front()->num_bins;
  nn::Tensor4<float> x(n, 3, F, kSegmentFrames);
  for (int i = 0; i < n; ++i) {
    std::copy(batch[i]->feature.begin(), batch[i]->feature.end(), x.sample(i));
  }
  return x;
}

nn::Tensor4<float> segment_targets_to_tensor(
    const std::vector<const Segment*>& batch, bool ablated) {
  const int n = static_cast<int>(batch.size());
  const int F = batch.front()->num_bins;
  const int rows = ablated ? F : F + 1;
  nn::Tensor4<float> y(n, 1, rows, kSegmentFrames);
  for (int i = 0; i < n; ++i) {
    const TargetMatrix& tgt = batch[i]->target;
    for (int t = 0; t < kSegmentFrames; ++t) {
      if (tgt.mask[t] == 0) continue;
      const int row = tgt.hot_row[t];
      if (row < rows) y.at(i, 0, row, t) = 1.0f;
      // ablated: unvoiced frames keep an all-zero column
    }
  }
  return y;
}

nn::RowMat<float> segment_masks_to_matrix(
    const std::vector<const Segment*>& batch) {
  const int n = static_cast<int>(batch.size());
  nn::RowMat<float> mask(n, kSegmentFrames);
  for (int i = 0; i < n; ++i) {
    for (int t = 0; t < kSegmentFrames; ++t) {
      mask(i, t) = batch[i]->target.mask[t] ? 1.0f : 0.0f;
    }
  }
  return mask;
}

MelodyContour extract_melody(MSNet<float>& model, const CfpFeature& feature,
                             double hop_seconds) {
  TargetMatrix dummy;
  dummy.num_rows = model.config().num_bins + 1;
  dummy.num_frames = feature.num_frames;
  dummy.hot_row.assign(feature.num_frames, model.config().num_bins);
  dummy.mask.assign(feature.num_frames, 1);
  const std::vector<Segment> segments = make_segments(feature, dummy, "clip");
  const nn::Tensor4<float> probs =
      forward_infer(model, to_ptrs(segments), false);
  MelodyContour contour;
  for (std::size_t s = 0; s < segments.size(); ++s) {
    const std::vector<int> bins =
        decode_salience(probs, static_cast<int>(s));
    for (int t = 0; t < kSegmentFrames; ++t) {
      if (segments[s].target.mask[t] == 0) continue;
      const int frame = segments[s].frame_offset + t;
      contour.times.push_back(frame * hop_seconds);
      contour.f0.push_back(model.config().bin_to_hz(bins[t]));
    }
  }
  return contour;
}

MelodyContour extract_melody_ablated(MSNet<float>& model,
                                     const CfpFeature& feature,
                                     double hop_seconds, double threshold) {
  TargetMatrix dummy;
  dummy.num_rows = model.config().num_bins + 1;
  dummy.num_frames = feature.num_frames;
  dummy.hot_row.assign(feature.num_frames, model.config().num_bins);
  dummy.mask.assign(feature.num_frames, 1);
  const std::vector<Segment> segments = make_segments(feature, dummy, "clip");
  const nn::Tensor4<float> probs = forward_infer(model, to_ptrs(segments), true);
  const int F = model.config().num_bins;
  MelodyContour contour;
  for (std::size_t s = 0; s < segments.size(); ++s) {
    for (int t = 0; t < kSegmentFrames; ++t) {
      if (segments[s].target.mask[t] == 0) continue;
      int best = 0;
      float best_v = probs.at(static_cast<int>(s), 0, 0, t);
      for (int f = 1; f < F; ++f) {
        const float v = probs.at(static_cast<int>(s), 0, f, t);
        if (v > best_v) {
          best_v = v;
          best = f;
        }
      }
      const int frame = segments[s].frame_offset + t;
      contour.times.push_back(frame * hop_seconds);
      contour.f0.push_back(best_v >= threshold ? model.config().bin_to_hz(best)
                                               : 0.0);
    }
  }
  return contour;
}

Scores score_clip(MSNet<float>& model, const EvalClip& clip) {
  const nn::Tensor4<float> probs =
      forward_infer(model, to_ptrs(clip.segments), false);
  std::vector<double> est_f0, est_times;
  for (std::size_t s = 0; s < clip.segments.size(); ++s) {
    const std::vector<int> bins = decode_salience(probs, static_cast<int>(s));
    for (int t = 0; t < kSegmentFrames; ++t) {
      if (clip.segments[s].target.mask[t] == 0) continue;
      est_times.push_back((clip.segments[s].frame_offset + t) * clip.hop_seconds);
      est_f0.push_back(model.config().bin_to_hz(bins[t]));
    }
  }
  return score_contours(clip.ref_f0, est_f0, clip.ref_times, est_times);
}

double validate(MSNet<float>& model, const std::vector<EvalClip>& clips) {
  double sum = 0.0;
  for (const auto& clip : clips) sum += score_clip(model, clip).oa;
  return clips.empty() ? 0.0 : sum / static_cast<double>(clips.size());
}

AblatedSalience compute_ablated_salience(MSNet<float>& model,
                                         const EvalClip& clip) {
  const nn::Tensor4<float> probs =
      forward_infer(model, to_ptrs(clip.segments), true);
  const int F = model.config().num_bins;
  AblatedSalience out;
  out.id = clip.id;
  out.ref_times = clip.ref_times;
  out.ref_f0 = clip.ref_f0;
  for (std::size_t s = 0; s < clip.segments.size(); ++s) {
    for (int t = 0; t < kSegmentFrames; ++t) {
      if (clip.segments[s].target.mask[t] == 0) continue;
      int best = 0;
      float best_v = probs.at(static_cast<int>(s), 0, 0, t);
      for (int f = 1; f < F; ++f) {
        const float v = probs.at(static_cast<int>(s), 0, f, t);
        if (v > best_v) {
          best_v = v;
          best = f;
        }
      }
      out.max_salience.push_back(best_v);
      out.bin_hz.push_back(model.config().bin_to_hz(best));
      out.times.push_back((clip.segments[s].frame_offset + t) * clip.hop_seconds);
    }
  }
  return out;
}

Scores score_ablated(const AblatedSalience& clip, double threshold) {
  std::vector<double> est_f0(clip.max_salience.size());
  for (std::size_t i = 0; i < est_f0.size(); ++i) {
    est_f0[i] = clip.max_salience[i] >= threshold ? clip.bin_hz[i] : 0.0;
  }
  return score_contours(clip.ref_f0, est_f0, clip.ref_times, clip.times);
}

std::pair<double, double> grid_search_threshold(
    const std::vector<AblatedSalience>& clips) {
  double best_theta = 0.01;
  double best_oa = -1.0;
  for (int i = 1; i <= 99; ++i) {
    const double theta = i / 100.0;
    double sum = 0.0;
    for (const auto& clip : clips) sum += score_ablated(clip, theta).oa;
    const double oa = clips.empty() ? 0.0 : sum / static_cast<double>(clips.size());
    if (oa > best_oa) {  // ties keep the smallest threshold
      best_oa = oa;
      best_theta = theta;
    }
  }
  return {best_theta, best_oa};
}

std::pair<double, double> grid_search_threshold(
    MSNet<float>& model, const std::vector<EvalClip>& val_clips) {
  std::vector<AblatedSalience> salience;
  salience.reserve(val_clips.size());
  for (const auto& clip : val_clips) {
    salience.push_back(compute_ablated_salience(model, clip));
  }
  return grid_search_threshold(salience);
}

TrainReport train(MSNet<float>& model, std::vector<Segment> train_segments,
                  const std::vector<EvalClip>& val_clips,
                  const TrainConfig& cfg, bool ablated, std::ostream* log) {
  if (train_segments.empty()) throw std::invalid_argument("train: no training segments");
  if (val_clips.empty()) throw std::invalid_argument("train: no validation clips");
  if (cfg.batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");

  const auto start = std::chrono::steady_clock::now();
  std::mt19937 rng(cfg.seed);
  auto params = model.parameters(!ablated);
  nn::Adam<float> adam(static_cast<float>(cfg.learning_rate));

  std::vector<std::size_t> order(train_segments.size());
  std::iota(order.begin(), order.end(), 0);

  // Validation loss batches are fixed across epochs.
  std::vector<const Segment*> val_segments;
  for (const auto& clip : val_clips) {
    for (const auto& seg : clip.segments) val_segments.push_back(&seg);
  }

  TrainReport report;
  std::vector<NamedTensor> best_state;
  double best_oa = -1.0;

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    int num_batches = 0;
    for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
      std::vector<const Segment*> batch;
      for (std::size_t i = b; i < std::min(order.size(), b + cfg.batch_size); ++i) {
        batch.push_back(&train_segments[order[i]]);
      }
      const nn::Tensor4<float> x = segment_features_to_tensor(batch);
      const nn::Tensor4<float> target = segment_targets_to_tensor(batch, ablated);
      const nn::RowMat<float> mask = segment_masks_to_matrix(batch);

      model.zero_grad();
      nn::Tensor4<float> probs = ablated
                                     ? model.forward_ablated(x, true, &mask)
                                     : model.forward(x, true, &mask).probs;
      const float loss = nn::bce_loss(probs, target, mask);
      if (!std::isfinite(loss)) {
        float grad_norm = nn::clip_gradients(params, 0.0f);
        throw std::runtime_error(
            "train: non-finite loss at epoch " + std::to_string(epoch) +
            ", batch " + std::to_string(num_batches) +
            ", grad norm " + std::to_string(grad_norm));
      }
      const nn::Tensor4<float> dprobs = nn::bce_loss_backward(probs, target, mask);
      if (ablated) {
        model.backward_ablated(dprobs);
      } else {
        model.backward(dprobs);
      }
      if (cfg.grad_clip_norm > 0.0) {
        nn::clip_gradients(params, static_cast<float>(cfg.grad_clip_norm));
      }
      adam.step(params);
      loss_sum += loss;
      ++num_batches;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / num_batches;
    {
      const nn::Tensor4<float> x = segment_features_to_tensor(val_segments);
      const nn::Tensor4<float> target = segment_targets_to_tensor(val_segments, ablated);
      const nn::RowMat<float> mask = segment_masks_to_matrix(val_segments);
      nn::Tensor4<float> probs =
          ablated ? model.forward_ablated(x, false) : model.forward(x, false).probs;
      rec.val_loss = nn::bce_loss(probs, target, mask);
    }
    rec.val_oa = ablated ? grid_search_threshold(model, val_clips).second
                         : validate(model, val_clips);
    report.epochs.push_back(rec);
    if (log != nullptr) {
      char buf[160];
      std::snprintf(buf, sizeof(buf),
                    "epoch %3d  train_loss %.6f  val_loss %.6f  val_oa %.4f\n",
                    rec.epoch, rec.train_loss, rec.val_loss, rec.val_oa);
      (*log) << buf << std::flush;
    }

    if (rec.val_oa > best_oa) {
      best_oa = rec.val_oa;
      report.best_epoch = epoch;
      report.best_val_oa = best_oa;
      best_state = model.state_tensors(true);
    }
    if (epoch - report.best_epoch >= cfg.patience) break;
  }

  model.load_state(best_state);
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count();
  return report;
}

std::string format_train_report(const TrainReport& report) {
  // wall_seconds deliberately omitted: the formatted report is the
  // deterministic record of a run.
  std::string out = "epoch\ttrain_loss\tval_loss\tval_oa\n";
  char buf[128];
  for (const auto& rec : report.epochs) {
    std::snprintf(buf, sizeof(buf), "%d\t%.6f\t%.6f\t%.6f\n", rec.epoch,
                  rec.train_loss, rec.val_loss, rec.val_oa);
    out += buf;
  }
  std::snprintf(buf, sizeof(buf), "best_epoch\t%d\nbest_val_oa\t%.6f\n",
                report.best_epoch, report.best_val_oa);
  out += buf;
  return out;
}

}  // namespace msnet
