#include "msnet/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <stdexcept>

namespace msnet {

int hz_to_bin(double f0, const ModelConfig& cfg) {
  if (f0 < 0.0) throw std::invalid_argument("hz_to_bin: negative frequency");
  if (f0 == 0.0) return kNoMelodyBin;
  const int b = static_cast<int>(
      std::lround(cfg.bins_per_octave * std::log2(f0 / cfg.f_min)));
  return std::clamp(b, 0, cfg.num_bins - 1);
}

void load_annotation(const std::string& path, std::vector<double>& times,
                     std::vector<double>& f0) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open annotation: " + path);
  times.clear();
  f0.clear();
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    for (char& c : line) {
      if (c == ',' || c == '\t') c = ' ';
    }
    std::istringstream ls(line);
    double t, f;
    if (!(ls >> t >> f)) {
      throw std::runtime_error("bad annotation line in " + path + ": " + line);
    }
    if (!times.empty() && t <= times.back()) {
      throw std::runtime_error("annotation times not strictly increasing: " + path);
    }
    if (f < 0.0) throw std::runtime_error("negative F0 in annotation: " + path);
    times.push_back(t);
    f0.push_back(f);
  }
}

void write_annotation(const std::string& path, const std::vector<double>& times,
                      const std::vector<double>& f0) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write annotation: " + path);
  char buf[64];
  for (std::size_t i = 0; i < times.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.6f\t%.3f\n", times[i], f0[i]);
    os << buf;
  }
}

TargetMatrix annotation_to_target(const std::vector<double>& ann_times,
                                  const std::vector<double>& ann_f0,
                                  const std::vector<double>& frame_times,
                                  const ModelConfig& cfg) {
  const int num_frames = static_cast<int>(frame_times.size());
  TargetMatrix target;
  target.num_rows = cfg.num_bins + 1;
  target.num_frames = num_frames;
  target.hot_row.assign(num_frames, cfg.num_bins);
  target.mask.assign(num_frames, 1);
  if (ann_times.empty()) {
    std::cerr << "warning: empty annotation, all frames treated as unvoiced\n";
    return target;
  }
  double hop = 0.01;
  if (ann_times.size() > 1) {
    hop = (ann_times.back() - ann_times.front()) /
          static_cast<double>(ann_times.size() - 1);
  } else if (frame_times.size() > 1) {
    hop = frame_times[1] - frame_times[0];
  }
  std::size_t j = 0;
  for (int t = 0; t < num_frames; ++t) {
    const double ft = frame_times[t];
    while (j + 1 < ann_times.size() && ann_times[j + 1] <= ft) ++j;
    std::size_t pick = j;
    if (j + 1 < ann_times.size() &&
        std::abs(ann_times[j + 1] - ft) < std::abs(ann_times[j] - ft)) {
      pick = j + 1;
    }
    if (std::abs(ann_times[pick] - ft) > hop) continue;  // uncovered: unvoiced
    const int bin = hz_to_bin(ann_f0[pick], cfg);
    target.hot_row[t] = (bin == kNoMelodyBin) ? cfg.num_bins : bin;
  }
  return target;
}

std::vector<Segment> make_segments(const CfpFeature& feature,
                                   const TargetMatrix& target,
                                   const std::string& source_id) {
  if (feature.num_frames != target.num_frames) {
    throw std::invalid_argument("make_segments: feature/target frame mismatch");
  }
  const int F = feature.num_bins;
  const int total = feature.num_frames;
  const int num_segments = (total + kSegmentFrames - 1) / kSegmentFrames;
  std::vector<Segment> out;
  out.reserve(num_segments);
  for (int s = 0; s < num_segments; ++s) {
    Segment seg;
    seg.source_id = source_id;
    seg.frame_offset = s * kSegmentFrames;
    seg.num_bins = F;
    seg.feature.assign(static_cast<std::size_t>(3) * F * kSegmentFrames, 0.0f);
    seg.target.num_rows = target.num_rows;
    seg.target.num_frames = kSegmentFrames;
    seg.target.hot_row.assign(kSegmentFrames, 0);
    seg.target.mask.assign(kSegmentFrames, 0);
    const int valid = std::min(kSegmentFrames, total - seg.frame_offset);
    for (int ch = 0; ch < 3; ++ch) {
      for (int b = 0; b < F; ++b) {
        for (int t = 0; t < valid; ++t) {
          seg.feature[(static_cast<std::size_t>(ch) * F + b) * kSegmentFrames + t] =
              feature.at(ch, b, seg.frame_offset + t);
        }
      }
    }
    for (int t = 0; t < valid; ++t) {
      seg.target.hot_row[t] = target.hot_row[seg.frame_offset + t];
      seg.target.mask[t] = target.mask[seg.frame_offset + t];
    }
    out.push_back(std::move(seg));
  }
  return out;
}

std::vector<ManifestEntry> read_manifest(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open manifest: " + path);
  std::vector<ManifestEntry> out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    ManifestEntry e;
    if (!std::getline(ls, e.audio_path, ',') ||
        !std::getline(ls, e.annotation_path, ',') ||
        !std::getline(ls, e.split)) {
      throw std::runtime_error("bad manifest line in " + path + ": " + line);
    }
    if (e.split != "train" && e.split != "val" && e.split != "test") {
      throw std::runtime_error("bad split '" + e.split + "' in " + path);
    }
    out.push_back(std::move(e));
  }
  return out;
}

void write_manifest(const std::string& path,
                    const std::vector<ManifestEntry>& entries) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write manifest: " + path);
  os << "# audio_path,annotation_path,split\n";
  for (const auto& e : entries) {
    os << e.audio_path << "," << e.annotation_path << "," << e.split << "\n";
  }
}

}  // namespace msnet
