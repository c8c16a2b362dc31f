#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "msnet/dataset.hpp"
#include "msnet/eval.hpp"
#include "msnet/model.hpp"

namespace msnet {

struct TrainConfig {
  int batch_size = 16;
  double learning_rate = 1e-4;
  int max_epochs = 100;
  int patience = 10;  // epochs without validation-OA improvement
  unsigned seed = 0;
  double grad_clip_norm = 5.0;  // <= 0 disables clipping
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_oa = 0.0;
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  int best_epoch = 0;
  double best_val_oa = 0.0;
  double wall_seconds = 0.0;
};

// Validation clip: segmented features plus the reference contour.
struct EvalClip {
  std::string id;
  std::vector<Segment> segments;
  std::vector<double> ref_times;
  std::vector<double> ref_f0;
  double hop_seconds = 256.0 / 44100.0;
};

// Mini-batch Adam training with per-epoch validation-OA model selection and
// early stopping; the model is left holding the best parameters. With
// `ablated`, trains the sigmoid F x T variant (non-melody branch unused) and
// scores validation at the per-epoch best grid threshold.
TrainReport train(MSNet<float>& model, std::vector<Segment> train_segments,
                  const std::vector<EvalClip>& val_clips,
                  const TrainConfig& cfg, bool ablated = false,
                  std::ostream* log = nullptr);

// Full-pipeline melody extraction for one clip's features.
MelodyContour extract_melody(MSNet<float>& model, const CfpFeature& feature,
                             double hop_seconds);
MelodyContour extract_melody_ablated(MSNet<float>& model,
                                     const CfpFeature& feature,
                                     double hop_seconds, double threshold);

Scores score_clip(MSNet<float>& model, const EvalClip& clip);
double validate(MSNet<float>& model, const std::vector<EvalClip>& clips);

// Per-frame ablated salience summary used by threshold selection.
struct AblatedSalience {
  std::string id;
  std::vector<double> max_salience;  // per unmasked frame
  std::vector<double> bin_hz;        // argmax bin frequency
  std::vector<double> times;
  std::vector<double> ref_times;
  std::vector<double> ref_f0;
};

AblatedSalience compute_ablated_salience(MSNet<float>& model,
                                         const EvalClip& clip);
Scores score_ablated(const AblatedSalience& clip, double threshold);

// Sweeps thresholds 0.01..0.99 (step 0.01) for the best mean OA, smallest
// threshold on ties. Returns {threshold, mean OA}.
std::pair<double, double> grid_search_threshold(
    const std::vector<AblatedSalience>& clips);
std::pair<double, double> grid_search_threshold(
    MSNet<float>& model, const std::vector<EvalClip>& val_clips);

// One record per epoch, tab separated.
std::string format_train_report(const TrainReport& report);

// Shared helpers for assembling batches from segments.
nn::Tensor4<float> segment_features_to_tensor(
    const std::vector<const Segment*>& batch);
nn::Tensor4<float> segment_targets_to_tensor(
    const std::vector<const Segment*>& batch, bool ablated);
nn::RowMat<float> segment_masks_to_matrix(
    const std::vector<const Segment*>& batch);

}  // namespace msnet
