#include "msnet/cfp.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <stdexcept>

#include "msnet/fft.hpp"

namespace msnet {

namespace {

std::uint32_t fnv1a(const void* bytes, std::size_t n, std::uint32_t h) {
  const auto* p = static_cast<const unsigned char*>(bytes);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 16777619u;
  }
  return h;
}

template <typename T>
std::uint32_t fnv1a_value(const T& v, std::uint32_t h) {
  return fnv1a(&v, sizeof(T), h);
}

// Mirror an out-of-range index back into [0, n): reflection without
// repeating the edge sample.
long reflect_index(long i, long n) {
  if (n == 1) return 0;
  const long period = 2 * (n - 1);
  i = ((i % period) + period) % period;
  return i < n ? i : period - i;
}

void rectify_power(Eigen::MatrixXd& m, double gamma) {
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      const double v = m(i, j);
      m(i, j) = v > 0.0 ? std::pow(v, gamma) : 0.0;
    }
  }
}

// Column-wise DFT of a half-spectrum treated as an even-symmetric length-N
// sequence; returns the real part of bins 0..N/2.
Eigen::MatrixXd symmetric_dft(const Eigen::MatrixXd& half, int n,
                              bool inverse) {
  const int half_rows = n / 2 + 1;
  Eigen::MatrixXd out(half_rows, half.cols());
  std::vector<std::complex<double>> buf(n);
  for (Eigen::Index col = 0; col < half.cols(); ++col) {
    for (int k = 0; k < half_rows; ++k) buf[k] = half(k, col);
    for (int k = 1; k < n / 2; ++k) buf[n - k] = half(k, col);
    fft::transform(buf, inverse);
    for (int k = 0; k < half_rows; ++k) out(k, col) = buf[k].real();
  }
  return out;
}

}  // namespace

CfpConfig CfpConfig::vocal() { return CfpConfig{}; }

CfpConfig CfpConfig::general() {
  CfpConfig cfg;
  cfg.num_bins = 400;
  cfg.f_min = 20.0;
  cfg.f_max = 2048.0;
  cfg.freq_cutoff = 20.0;
  cfg.quefrency_cutoff = 1.0 / 2048.0;
  return cfg;
}

double CfpConfig::bin_frequency(int b) const {
  return f_min * std::exp2(static_cast<double>(b) / bins_per_octave);
}

void CfpConfig::validate() const {
  if (num_bins < 1 || bins_per_octave < 1 || f_min <= 0.0 || f_max <= f_min) {
    throw std::invalid_argument("cfp config: bad bin grid");
  }
  if (bin_frequency(num_bins - 1) > 1.02 * f_max) {
    throw std::invalid_argument("cfp config: bin grid exceeds frequency range");
  }
  for (double g : gamma) {
    if (!(g > 0.0 && g <= 1.0)) {
      throw std::invalid_argument("cfp config: gamma out of (0, 1]");
    }
  }
}

std::uint32_t CfpConfig::hash() const {
  std::uint32_t h = 2166136261u;
  for (double g : gamma) h = fnv1a_value(g, h);
  h = fnv1a_value(freq_cutoff, h);
  h = fnv1a_value(quefrency_cutoff, h);
  h = fnv1a_value(bins_per_octave, h);
  h = fnv1a_value(num_bins, h);
  h = fnv1a_value(f_min, h);
  h = fnv1a_value(f_max, h);
  return h;
}

Eigen::MatrixXcd compute_stft(const std::vector<double>& audio,
                              const StftConfig& cfg) {
  const int win = cfg.window_size;
  const int hop = cfg.hop_size;
  if (win <= hop || hop <= 0) {
    throw std::invalid_argument("stft config: need window_size > hop_size > 0");
  }
  if ((win & (win - 1)) != 0) {
    throw std::invalid_argument("stft config: window_size must be power of two");
  }
  const long n = static_cast<long>(audio.size());
  if (n < hop) {
    throw std::runtime_error("audio too short");
  }

  std::vector<double> window(win);
  for (int i = 0; i < win; ++i) {
    window[i] = 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * i / win));
  }

  const int num_frames = static_cast<int>(n / hop) + 1;
  const int half_rows = win / 2 + 1;
  Eigen::MatrixXcd out(half_rows, num_frames);
  std::vector<std::complex<double>> buf(win);
  for (int f = 0; f < num_frames; ++f) {
    const long center = static_cast<long>(f) * hop;
    for (int i = 0; i < win; ++i) {
      const long idx = reflect_index(center - win / 2 + i, n);
      buf[i] = audio[idx] * window[i];
    }
    fft::transform(buf, false);
    for (int k = 0; k < half_rows; ++k) out(k, f) = buf[k];
  }
  return out;
}

LinearSpectra compute_cfp_linear(const Eigen::MatrixXd& magnitudes,
                                 const CfpConfig& cfg,
                                 const StftConfig& stft_cfg) {
  cfg.validate();
  const int win = stft_cfg.window_size;
  const int half_rows = win / 2 + 1;
  if (magnitudes.rows() != half_rows) {
    throw std::invalid_argument("cfp: magnitude rows do not match window size");
  }
  const double bin_hz = stft_cfg.sample_rate / win;
  const int freq_cut_rows =
      static_cast<int>(std::ceil(cfg.freq_cutoff / bin_hz));
  const int quef_cut_rows = static_cast<int>(
      std::ceil(cfg.quefrency_cutoff * stft_cfg.sample_rate));

  LinearSpectra out;
  out.spec = magnitudes;
  out.spec.topRows(std::min(freq_cut_rows, half_rows)).setZero();
  rectify_power(out.spec, cfg.gamma[0]);

  out.gc = symmetric_dft(out.spec, win, true);
  out.gc.topRows(std::min(quef_cut_rows, half_rows)).setZero();
  rectify_power(out.gc, cfg.gamma[1]);

  out.gcos = symmetric_dft(out.gc, win, false);
  out.gcos.topRows(std::min(freq_cut_rows, half_rows)).setZero();
  rectify_power(out.gcos, cfg.gamma[2]);
  return out;
}

CfpFeature map_to_log_bins(const LinearSpectra& spectra, const CfpConfig& cfg,
                           const StftConfig& stft_cfg) {
  cfg.validate();
  const int win = stft_cfg.window_size;
  const int half_rows = win / 2 + 1;
  const int num_frames = static_cast<int>(spectra.spec.cols());
  const double sr = stft_cfg.sample_rate;
  const int F = cfg.num_bins;

  CfpFeature feat;
  feat.num_bins = F;
  feat.num_frames = num_frames;
  feat.data.assign(static_cast<std::size_t>(3) * F * num_frames, 0.0f);
  feat.frame_times.resize(num_frames);
  for (int t = 0; t < num_frames; ++t) {
    feat.frame_times[t] = t * stft_cfg.hop_size / sr;
  }

  const auto log_bin_of = [&](double freq) -> int {
    if (freq <= 0.0) return -1;
    const int b = static_cast<int>(
        std::lround(cfg.bins_per_octave * std::log2(freq / cfg.f_min)));
    return (b >= 0 && b < F) ? b : -1;
  };

  // Per log bin either the contributing linear rows, or — where the log grid
  // is finer than the linear grid and the band is empty — an interpolated
  // value at the bin center. A nearest-row copy would quantize peaks to the
  // linear grid and leave flat plateaus, which pulls argmax positions several
  // log bins off.
  struct BinPlan {
    std::vector<int> rows;  // populated band
    int anchor = 0;         // else: stencil {anchor-1, anchor, anchor+1}
    double u = 0.0;         // bin center offset from anchor, in row units
  };
  const auto build_plans = [&](auto row_freq, auto row_of_freq, int first_row) {
    std::vector<BinPlan> plans(F);
    for (int r = first_row; r < half_rows; ++r) {
      const int b = log_bin_of(row_freq(r));
      if (b >= 0) plans[b].rows.push_back(r);
    }
    for (int b = 0; b < F; ++b) {
      if (!plans[b].rows.empty()) continue;
      const double pos = row_of_freq(cfg.bin_frequency(b));
      const int anchor = std::clamp(static_cast<int>(std::lround(pos)),
                                    first_row + 1, half_rows - 2);
      plans[b].anchor = anchor;
      plans[b].u = std::clamp(pos - anchor, -1.0, 1.0);
    }
    return plans;
  };

  const auto freq_of_row = [&](int r) { return r * sr / win; };
  const auto row_of_freq = [&](double f) { return f * win / sr; };
  const auto freq_of_lag = [&](int q) { return sr / q; };
  const auto lag_of_freq = [&](double f) { return sr / f; };
  const auto freq_plans = build_plans(freq_of_row, row_of_freq, 0);
  const auto lag_plans = build_plans(freq_of_lag, lag_of_freq, 1);

  const double bin_hz = sr / win;
  const int freq_cut_rows = static_cast<int>(std::ceil(cfg.freq_cutoff / bin_hz));
  const int quef_cut_rows =
      static_cast<int>(std::ceil(cfg.quefrency_cutoff * sr));

  // GC and GCoS are symmetric DFTs of stored sequences (spec and gc), so
  // their value between sample rows is exactly recoverable: evaluate the
  // transform at the bin-center position before the high-pass/rectify/power
  // steps that produced the stored channel. Returns one row per empty bin.
  const auto exact_empty = [&](const std::vector<BinPlan>& plans,
                               auto pos_of_freq, int cut_pos,
                               const Eigen::MatrixXd& basis, double dft_scale,
                               double gamma_out) {
    std::vector<int> order(F, -1);
    std::vector<double> xs;
    for (int b = 0; b < F; ++b) {
      if (!plans[b].rows.empty()) continue;
      order[b] = static_cast<int>(xs.size());
      xs.push_back(pos_of_freq(cfg.bin_frequency(b)));
    }
    Eigen::MatrixXd w =
        Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(xs.size()), half_rows);
    for (std::size_t e = 0; e < xs.size(); ++e) {
      const double x = xs[e];
      if (x < static_cast<double>(cut_pos)) continue;  // high-passed region
      w(static_cast<Eigen::Index>(e), 0) = 1.0;
      for (int j = 1; j < half_rows - 1; ++j) {
        w(static_cast<Eigen::Index>(e), j) =
            2.0 * std::cos(2.0 * std::numbers::pi * j * x / win);
      }
      w(static_cast<Eigen::Index>(e), half_rows - 1) =
          std::cos(std::numbers::pi * x);
    }
    Eigen::MatrixXd values = (w * basis) * dft_scale;
    for (Eigen::Index i = 0; i < values.rows(); ++i) {
      for (Eigen::Index j = 0; j < values.cols(); ++j) {
        const double v = values(i, j);
        values(i, j) = v > 0.0 ? std::pow(v, gamma_out) : 0.0;
      }
    }
    return std::pair{std::move(order), std::move(values)};
  };

  // The spectrogram channel has no generating sequence to re-evaluate
  // (magnitudes are nonlinear in the frame), so empty bins take a local
  // quadratic fit through the three nearest rows. Fit in the log domain
  // when all three values are positive — a window main lobe is close to a
  // Gaussian there, so log-parabolic interpolation tracks sub-row peak
  // positions much more tightly than a linear-domain parabola.
  const auto quad_at = [](const Eigen::MatrixXd& src, const BinPlan& plan,
                          int t) {
    double ym = src(plan.anchor - 1, t);
    double y0 = src(plan.anchor, t);
    double yp = src(plan.anchor + 1, t);
    // Log-fit only over a peak (anchor value is the stencil max): that keeps
    // the parabola concave with its vertex within half a row, so exp() can't
    // overshoot. Off-peak stencils can straddle a spectral null, where the
    // log values are wildly non-parabolic and the fit extrapolates above the
    // true peak; those fall back to a linear-domain fit.
    const bool log_fit =
        ym > 0.0 && yp > 0.0 && y0 >= ym && y0 >= yp;
    if (log_fit) {
      ym = std::log(ym);
      y0 = std::log(y0);
      yp = std::log(yp);
    }
    const double q = y0 + 0.5 * (yp - ym) * plan.u +
                     0.5 * (yp - 2.0 * y0 + ym) * plan.u * plan.u;
    return log_fit ? std::exp(q) : std::max(0.0, q);
  };

  const auto fill_channel = [&](int ch, const Eigen::MatrixXd& src,
                                const std::vector<BinPlan>& plans,
                                const std::vector<int>* order,
                                const Eigen::MatrixXd* exact) {
    double max_val = 0.0;
    std::vector<double> tmp(static_cast<std::size_t>(F) * num_frames);
    for (int b = 0; b < F; ++b) {
      const BinPlan& plan = plans[b];
      for (int t = 0; t < num_frames; ++t) {
        double v;
        if (!plan.rows.empty()) {
          double acc = 0.0;
          for (int r : plan.rows) acc += src(r, t);
          v = acc / static_cast<double>(plan.rows.size());
        } else if (exact != nullptr) {
          v = (*exact)((*order)[b], t);
        } else {
          v = quad_at(src, plan, t);
        }
        tmp[static_cast<std::size_t>(b) * num_frames + t] = v;
        max_val = std::max(max_val, v);
      }
    }
    const double scale = max_val > 0.0 ? 1.0 / max_val : 0.0;
    for (int b = 0; b < F; ++b) {
      for (int t = 0; t < num_frames; ++t) {
        feat.at(ch, b, t) = static_cast<float>(
            tmp[static_cast<std::size_t>(b) * num_frames + t] * scale);
      }
    }
  };

  const auto [gcos_order, gcos_vals] =
      exact_empty(freq_plans, row_of_freq, freq_cut_rows, spectra.gc, 1.0,
                  cfg.gamma[2]);
  const auto [gc_order, gc_vals] =
      exact_empty(lag_plans, lag_of_freq, quef_cut_rows, spectra.spec,
                  1.0 / win, cfg.gamma[1]);

  fill_channel(0, spectra.spec, freq_plans, nullptr, nullptr);
  fill_channel(1, spectra.gcos, freq_plans, &gcos_order, &gcos_vals);
  fill_channel(2, spectra.gc, lag_plans, &gc_order, &gc_vals);
  return feat;
}

CfpFeature compute_cfp(const std::vector<double>& audio, const CfpConfig& cfg,
                       const StftConfig& stft_cfg) {
  const Eigen::MatrixXcd stft = compute_stft(audio, stft_cfg);
  const Eigen::MatrixXd mag = stft.cwiseAbs();
  return map_to_log_bins(compute_cfp_linear(mag, cfg, stft_cfg), cfg, stft_cfg);
}

namespace {
std::uint32_t cache_hash(const CfpConfig& cfg, const StftConfig& stft_cfg) {
  std::uint32_t h = cfg.hash();
  h = fnv1a_value(stft_cfg.sample_rate, h);
  h = fnv1a_value(stft_cfg.window_size, h);
  h = fnv1a_value(stft_cfg.hop_size, h);
  return h;
}

void write_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  return static_cast<std::uint32_t>(b[0]) |
         (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) |
         (static_cast<std::uint32_t>(b[3]) << 24);
}
}  // namespace

void write_cfp_cache(const std::string& path, const CfpFeature& feature,
                     const CfpConfig& cfg, const StftConfig& stft_cfg) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  os.write("CFP1", 4);
  write_u32(os, cache_hash(cfg, stft_cfg));
  write_u32(os, static_cast<std::uint32_t>(feature.num_bins));
  write_u32(os, static_cast<std::uint32_t>(feature.num_frames));
  static_assert(sizeof(float) == 4);
  os.write(reinterpret_cast<const char*>(feature.data.data()),
           static_cast<std::streamsize>(feature.data.size() * 4));
  if (!os) throw std::runtime_error("write failed: " + path);
}

CfpFeature read_cfp_cache(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "CFP1", 4) != 0) {
    throw std::runtime_error("not a CFP cache file: " + path);
  }
  read_u32(is);  // config hash; informational
  const std::uint32_t f = read_u32(is);
  const std::uint32_t t = read_u32(is);
  CfpFeature feat;
  feat.num_bins = static_cast<int>(f);
  feat.num_frames = static_cast<int>(t);
  feat.data.resize(static_cast<std::size_t>(3) * f * t);
  is.read(reinterpret_cast<char*>(feat.data.data()),
          static_cast<std::streamsize>(feat.data.size() * 4));
  if (!is) throw std::runtime_error("truncated CFP cache file: " + path);
  return feat;
}

}  // namespace msnet
