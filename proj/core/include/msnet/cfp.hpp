#pragma once

#include <Eigen/Dense>
#include <array>
#include <complex>
#include <cstdint>
#include <string>
#include <vector>

namespace msnet {

struct StftConfig {
  double sample_rate = 44100.0;
  int window_size = 2048;  // must be a power of two
  int hop_size = 256;
  std::string window_function = "hann";
};

// Combined frequency/periodicity feature parameters. Defaults are the vocal
// task; general() switches to the wider range.
struct CfpConfig {
  // Chosen so the GCoS channel localizes F0 to a few bins with a 2048-sample
  // window; heavier compression at the first two stages biases the GCoS comb
  // peaks off the fundamental at this window length.
  std::array<double, 3> gamma = {0.7, 1.0, 1.0};
  double freq_cutoff = 31.0;       // Hz, high-pass on the frequency axis
  double quefrency_cutoff = 0.0008;  // seconds, high-pass on the lag axis
  int bins_per_octave = 60;
  int num_bins = 320;
  double f_min = 31.0;
  double f_max = 1250.0;

  static CfpConfig vocal();
  static CfpConfig general();

  double bin_frequency(int b) const;
  void validate() const;
  std::uint32_t hash() const;
};

// Outputs of Eqs. applying power-scaled rectification and the two high-pass
// filters: spectrogram, generalized cepstrum, generalized cepstrum of
// spectrum. Rows: frequency bin k (Z_S, Z_GCoS) or lag q (Z_GC); cols: frames.
struct LinearSpectra {
  Eigen::MatrixXd spec;  // (window/2+1) x T
  Eigen::MatrixXd gc;    // (window/2+1) x T
  Eigen::MatrixXd gcos;  // (window/2+1) x T
};

// 3 x F x T model input, channel order (spectrogram, GCoS, GC),
// max-normalized per channel.
struct CfpFeature {
  int num_bins = 0;
  int num_frames = 0;
  std::vector<float> data;  // channel-major, row-major per channel
  std::vector<double> frame_times;

  float at(int ch, int b, int t) const {
    return data[(static_cast<std::size_t>(ch) * num_bins + b) * num_frames + t];
  }
  float& at(int ch, int b, int t) {
    return data[(static_cast<std::size_t>(ch) * num_bins + b) * num_frames + t];
  }
};

Eigen::MatrixXcd compute_stft(const std::vector<double>& audio,
                              const StftConfig& cfg);

LinearSpectra compute_cfp_linear(const Eigen::MatrixXd& magnitudes,
                                 const CfpConfig& cfg,
                                 const StftConfig& stft_cfg);

CfpFeature map_to_log_bins(const LinearSpectra& spectra, const CfpConfig& cfg,
                           const StftConfig& stft_cfg);

// Full front-end: STFT magnitude -> linear CFP -> log-bin feature.
CfpFeature compute_cfp(const std::vector<double>& audio, const CfpConfig& cfg,
                       const StftConfig& stft_cfg);

// Feature cache: "CFP1", config hash, F, T (LE u32), then channel-major
// row-major f32 payload.
void write_cfp_cache(const std::string& path, const CfpFeature& feature,
                     const CfpConfig& cfg, const StftConfig& stft_cfg);
CfpFeature read_cfp_cache(const std::string& path);

}  // namespace msnet
