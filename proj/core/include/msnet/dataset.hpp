#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "msnet/cfp.hpp"
#include "msnet/model.hpp"

namespace msnet {

inline constexpr int kSegmentFrames = 256;

// Mono audio at 44100 Hz plus its F0 annotation (0 Hz = unvoiced).
struct AnnotatedClip {
  std::string id;
  double sample_rate = 44100.0;
  std::vector<double> audio;
  std::vector<double> ann_times;
  std::vector<double> ann_f0;
};

// (F+1) x T one-hot target stored as the hot row per frame, plus a frame
// mask (0 = padding).
struct TargetMatrix {
  int num_rows = 0;
  int num_frames = 0;
  std::vector<int> hot_row;
  std::vector<std::uint8_t> mask;

  float one_hot(int row, int frame) const {
    return (mask[frame] != 0 && hot_row[frame] == row) ? 1.0f : 0.0f;
  }
};

struct Segment {
  std::string source_id;
  int frame_offset = 0;
  int num_bins = 0;
  std::vector<float> feature;  // 3 x F x kSegmentFrames, row-major
  TargetMatrix target;         // (F+1) rows x kSegmentFrames

  float feature_at(int ch, int b, int t) const {
    return feature[(static_cast<std::size_t>(ch) * num_bins + b) * kSegmentFrames + t];
  }
};

struct ManifestEntry {
  std::string audio_path;
  std::string annotation_path;
  std::string split;  // train | val | test
};

// f0 = 0 -> kNoMelodyBin; otherwise round(60 log2(f0/f_min)) clamped to the
// bin grid.
int hz_to_bin(double f0, const ModelConfig& cfg);

// Two-column time/F0 text, comma or tab separated.
void load_annotation(const std::string& path, std::vector<double>& times,
                     std::vector<double>& f0);
void write_annotation(const std::string& path, const std::vector<double>& times,
                      const std::vector<double>& f0);

// Nearest-neighbor label alignment with a one-annotation-hop coverage limit.
TargetMatrix annotation_to_target(const std::vector<double>& ann_times,
                                  const std::vector<double>& ann_f0,
                                  const std::vector<double>& frame_times,
                                  const ModelConfig& cfg);

// Non-overlapping kSegmentFrames windows; the final short window is
// zero-padded with mask 0.
std::vector<Segment> make_segments(const CfpFeature& feature,
                                   const TargetMatrix& target,
                                   const std::string& source_id);

std::vector<ManifestEntry> read_manifest(const std::string& path);
void write_manifest(const std::string& path,
                    const std::vector<ManifestEntry>& entries);

// Deterministic synthetic clip: piecewise-constant melody over a semitone
// grid, triad accompaniment, pink noise, exact annotations.
AnnotatedClip synth_clip(std::uint32_t seed, double duration_s,
                         const CfpConfig& cfg);

// Writes N wav/annotation pairs plus a manifest with an 80/10/10 split;
// returns the manifest path.
std::string write_synth_dataset(const std::string& out_dir, int num_clips,
                                double duration_s, std::uint32_t seed,
                                const CfpConfig& cfg);

}  // namespace msnet
