#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>
#include <stdexcept>

#include "msnet/dataset.hpp"
#include "msnet/wav.hpp"

namespace msnet {

namespace {

constexpr double kSampleRate = 44100.0;
constexpr int kNumHarmonics = 6;
constexpr double kMelodyGain = 0.35;
constexpr double kAccompDb = -10.0;
constexpr double kNoiseDb = -30.0;
constexpr double kFadeSeconds = 0.01;

double db_to_amp(double db) { return std::pow(10.0, db / 20.0); }

// Raised-cosine fade at both ends of [0, len).
double envelope(long i, long len, long fade) {
  if (i < fade) return 0.5 * (1.0 - std::cos(std::numbers::pi * i / fade));
  if (i >= len - fade) {
    return 0.5 * (1.0 - std::cos(std::numbers::pi * (len - 1 - i) / fade));
  }
  return 1.0;
}

struct NoteEvent {
  long start = 0;
  long length = 0;
  double f0 = 0.0;  // 0 = rest
};

}  // namespace

AnnotatedClip synth_clip(std::uint32_t seed, double duration_s,
                         const CfpConfig& cfg) {
  if (duration_s < 2.0) throw std::invalid_argument("synth_clip: duration must be >= 2 s");
  std::mt19937 rng(seed);
  const long total = static_cast<long>(std::lround(duration_s * kSampleRate));

  // Semitone grid covering [2 f_min, f_max / 2].
  const double lo = 2.0 * cfg.f_min;
  const double hi = cfg.f_max / 2.0;
  const int num_semitones =
      static_cast<int>(std::floor(12.0 * std::log2(hi / lo))) + 1;
  std::uniform_int_distribution<int> pitch_dist(0, num_semitones - 1);
  std::uniform_real_distribution<double> dur_dist(0.2, 0.8);
  std::uniform_real_distribution<double> rest_dist(0.0, 1.0);

  std::vector<NoteEvent> notes;
  long pos = 0;
  while (pos < total) {
    NoteEvent ev;
    ev.start = pos;
    ev.length = std::min<long>(
        static_cast<long>(std::lround(dur_dist(rng) * kSampleRate)), total - pos);
    if (rest_dist(rng) < 0.2) {
      ev.f0 = 0.0;
    } else {
      ev.f0 = lo * std::exp2(pitch_dist(rng) / 12.0);
    }
    notes.push_back(ev);
    pos += ev.length;
  }

  AnnotatedClip clip;
  clip.sample_rate = kSampleRate;
  clip.audio.assign(total, 0.0);
  const long fade = static_cast<long>(kFadeSeconds * kSampleRate);

  // Melody: 6 harmonics with 1/h amplitude decay.
  double harm_norm = 0.0;
  for (int h = 1; h <= kNumHarmonics; ++h) harm_norm += 1.0 / h;
  for (const auto& ev : notes) {
    if (ev.f0 == 0.0) continue;
    for (long i = 0; i < ev.length; ++i) {
      const double t = static_cast<double>(i) / kSampleRate;
      double v = 0.0;
      for (int h = 1; h <= kNumHarmonics; ++h) {
        v += std::sin(2.0 * std::numbers::pi * h * ev.f0 * t) / h;
      }
      clip.audio[ev.start + i] +=
          kMelodyGain * envelope(i, ev.length, fade) * v / harm_norm;
    }
  }

  // Accompaniment: sustained major triads two octaves below the melody
  // register; rests keep the previous triad ringing.
  const double accomp_amp = kMelodyGain * db_to_amp(kAccompDb) / 3.0;
  double triad_root = 0.0;
  for (const auto& ev : notes) {
    if (ev.f0 > 0.0) triad_root = ev.f0 / 4.0;
    if (triad_root == 0.0) continue;
    const double freqs[3] = {triad_root, triad_root * std::exp2(4.0 / 12.0),
                             triad_root * std::exp2(7.0 / 12.0)};
    for (long i = 0; i < ev.length; ++i) {
      const double t = static_cast<double>(i) / kSampleRate;
      double v = 0.0;
      for (double f : freqs) v += std::sin(2.0 * std::numbers::pi * f * t);
      clip.audio[ev.start + i] += accomp_amp * envelope(i, ev.length, fade) * v;
    }
  }

  // Pink noise (Paul Kellet 3-pole approximation), RMS-normalized.
  {
    std::uniform_real_distribution<double> white_dist(-1.0, 1.0);
    std::vector<double> pink(total);
    double b0 = 0.0, b1 = 0.0, b2 = 0.0;
    double sq = 0.0;
    for (long i = 0; i < total; ++i) {
      const double w = white_dist(rng);
      b0 = 0.99765 * b0 + w * 0.0990460;
      b1 = 0.96300 * b1 + w * 0.2965164;
      b2 = 0.57000 * b2 + w * 1.0526913;
      pink[i] = b0 + b1 + b2 + w * 0.1848;
      sq += pink[i] * pink[i];
    }
    const double rms = std::sqrt(sq / static_cast<double>(total));
    const double amp = kMelodyGain * db_to_amp(kNoiseDb) / std::max(rms, 1e-12);
    for (long i = 0; i < total; ++i) clip.audio[i] += amp * pink[i];
  }

  for (double& s : clip.audio) s = std::clamp(s, -1.0, 1.0);

  // Exact annotation on the analysis hop grid.
  const double hop_s = 256.0 / kSampleRate;
  std::size_t note_idx = 0;
  for (double t = 0.0; t < duration_s; t += hop_s) {
    const long sample = static_cast<long>(std::lround(t * kSampleRate));
    if (sample >= total) break;
    while (note_idx + 1 < notes.size() &&
           sample >= notes[note_idx].start + notes[note_idx].length) {
      ++note_idx;
    }
    clip.ann_times.push_back(t);
    clip.ann_f0.push_back(notes[note_idx].f0);
  }
  return clip;
}

std::string write_synth_dataset(const std::string& out_dir, int num_clips,
                                double duration_s, std::uint32_t seed,
                                const CfpConfig& cfg) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  std::vector<ManifestEntry> entries;
  const int num_train = (num_clips * 8) / 10;
  const int num_val = std::max(1, num_clips / 10);
  for (int i = 0; i < num_clips; ++i) {
    AnnotatedClip clip = synth_clip(seed + static_cast<std::uint32_t>(i) * 9973u,
                                    duration_s, cfg);
    char name[64];
    std::snprintf(name, sizeof(name), "clip_%03d", i);
    const std::string wav_path = (fs::path(out_dir) / (std::string(name) + ".wav")).string();
    const std::string ann_path = (fs::path(out_dir) / (std::string(name) + ".csv")).string();
    write_wav(wav_path, clip.audio, clip.sample_rate);
    write_annotation(ann_path, clip.ann_times, clip.ann_f0);
    ManifestEntry e;
    e.audio_path = wav_path;
    e.annotation_path = ann_path;
    e.split = i < num_train ? "train" : (i < num_train + num_val ? "val" : "test");
    entries.push_back(std::move(e));
  }
  const std::string manifest_path = (fs::path(out_dir) / "manifest.csv").string();
  write_manifest(manifest_path, entries);
  return manifest_path;
}

}  // namespace msnet
