#pragma once

#include <string>
#include <vector>

namespace msnet {

// Mono audio, samples in [-1, 1].
struct AudioBuffer {
  double sample_rate = 0.0;
  std::vector<double> samples;
};

// Reads PCM WAV (16/24/32-bit int or 32-bit float), downmixes channels by
// arithmetic mean. Throws with path and reason on unreadable files.
AudioBuffer read_wav(const std::string& path);

// 16-bit PCM writer.
void write_wav(const std::string& path, const std::vector<double>& samples,
               double sample_rate);

// Windowed-sinc resampler (Hann window, 32 zero crossings).
std::vector<double> resample(const std::vector<double>& input, double src_rate,
                             double dst_rate);

// read_wav + resample to target rate if needed.
std::vector<double> load_audio(const std::string& path, double target_rate);

}  // namespace msnet
