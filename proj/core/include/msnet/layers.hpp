#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "msnet/tensor.hpp"

namespace msnet::nn {

template <class T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;

// SELU self-normalizing constants.
inline constexpr double kSeluLambda = 1.0507009873554805;
inline constexpr double kSeluAlpha = 1.6732632423543772;

inline constexpr double kProbClamp = 1e-7;

// Named view of one parameter tensor and its gradient accumulator.
template <class T>
struct ParamRef {
  std::string name;
  T* value = nullptr;
  T* grad = nullptr;
  std::size_t size = 0;
  std::vector<int> dims;
};

// ---------------------------------------------------------------------------
// Convolution (cross-correlation), stride 1, zero padding. Backed by
// im2col + GEMM with time-tiling to bound the scratch buffer.

template <class T>
class Conv2d {
 public:
  Conv2d(int in_c, int out_c, int kh, int kw, int ph, int pw)
      : in_c_(in_c), out_c_(out_c), kh_(kh), kw_(kw), ph_(ph), pw_(pw),
        weight_(out_c, in_c * kh * kw), bias_(Vec<T>::Zero(out_c)),
        weight_grad_(Mat<T>::Zero(out_c, in_c * kh * kw)),
        bias_grad_(Vec<T>::Zero(out_c)) {
    weight_.setZero();
  }

  void init(std::mt19937& rng) {
    const double stddev = std::sqrt(1.0 / (in_c_ * kh_ * kw_));
    std::normal_distribution<double> dist(0.0, stddev);
    for (Eigen::Index i = 0; i < weight_.size(); ++i) {
      weight_.data()[i] = static_cast<T>(dist(rng));
    }
    bias_.setZero();
  }

  Tensor4<T> forward(const Tensor4<T>& x, bool cache = true) {
    if (x.c != in_c_) throw std::invalid_argument("conv2d: channel mismatch");
    const int oh = x.h + 2 * ph_ - kh_ + 1;
    const int ow = x.w + 2 * pw_ - kw_ + 1;
    if (oh <= 0 || ow <= 0) throw std::invalid_argument("conv2d: output collapsed");
    Tensor4<T> out(x.n, out_c_, oh, ow);
    Mat<T> cols;
    for (int i = 0; i < x.n; ++i) {
      Eigen::Map<RowMat<T>> out_map(out.sample(i), out_c_,
                                    static_cast<Eigen::Index>(oh) * ow);
      for (int y0 = 0; y0 < oh; y0 += tile_rows(oh, ow)) {
        const int rows = std::min(tile_rows(oh, ow), oh - y0);
        im2col(x, i, y0, rows, ow, cols);
        out_map.middleCols(static_cast<Eigen::Index>(y0) * ow,
                           static_cast<Eigen::Index>(rows) * ow)
            .noalias() = weight_ * cols;
      }
      out_map.colwise() += bias_;
    }
    if (cache) {
      cached_input_ = x;
      has_cache_ = true;
    }
    return out;
  }

  // Accumulates parameter gradients, returns input gradient.
  Tensor4<T> backward(const Tensor4<T>& dout) {
    if (!has_cache_) throw std::logic_error("conv2d: backward without forward");
    const Tensor4<T>& x = cached_input_;
    const int oh = dout.h, ow = dout.w;
    Tensor4<T> dx(x.n, x.c, x.h, x.w);
    Mat<T> cols, dcols;
    for (int i = 0; i < x.n; ++i) {
      Eigen::Map<const RowMat<T>> dout_map(dout.sample(i), out_c_,
                                           static_cast<Eigen::Index>(oh) * ow);
      bias_grad_ += dout_map.rowwise().sum();
      for (int y0 = 0; y0 < oh; y0 += tile_rows(oh, ow)) {
        const int rows = std::min(tile_rows(oh, ow), oh - y0);
        im2col(x, i, y0, rows, ow, cols);
        const auto dout_tile =
            dout_map.middleCols(static_cast<Eigen::Index>(y0) * ow,
                                static_cast<Eigen::Index>(rows) * ow);
        weight_grad_.noalias() += dout_tile * cols.transpose();
        dcols.noalias() = weight_.transpose() * dout_tile;
        col2im(dcols, i, y0, rows, ow, dx);
      }
    }
    return dx;
  }

  void zero_grad() {
    weight_grad_.setZero();
    bias_grad_.setZero();
  }

  void collect_params(const std::string& prefix, std::vector<ParamRef<T>>& out) {
    out.push_back({prefix + ".weight", weight_.data(), weight_grad_.data(),
                   static_cast<std::size_t>(weight_.size()),
                   {out_c_, in_c_, kh_, kw_}});
    out.push_back({prefix + ".bias", bias_.data(), bias_grad_.data(),
                   static_cast<std::size_t>(bias_.size()), {out_c_}});
  }

  Mat<T>& weight() { return weight_; }
  Vec<T>& bias() { return bias_; }
  int in_channels() const { return in_c_; }
  int out_channels() const { return out_c_; }

 private:
  int tile_rows(int oh, int ow) const {
    // Keep the im2col buffer around <= 4M scalars.
    const std::size_t per_row = static_cast<std::size_t>(in_c_) * kh_ * kw_ * ow;
    const int rows = static_cast<int>(std::max<std::size_t>(1, (4u << 20) / std::max<std::size_t>(1, per_row)));
    return std::min(rows, oh);
  }

  void im2col(const Tensor4<T>& x, int sample, int y0, int rows, int ow,
              Mat<T>& cols) const {
    const int k = in_c_ * kh_ * kw_;
    cols.resize(k, static_cast<Eigen::Index>(rows) * ow);
    const T* src = x.sample(sample);
    for (int dy = 0; dy < rows; ++dy) {
      const int oy = y0 + dy;
      for (int ox = 0; ox < ow; ++ox) {
        T* col = cols.data() + (static_cast<std::size_t>(dy) * ow + ox) * k;
        std::size_t r = 0;
        for (int ic = 0; ic < in_c_; ++ic) {
          for (int ky = 0; ky < kh_; ++ky) {
            const int iy = oy + ky - ph_;
            if (iy < 0 || iy >= x.h) {
              for (int kx = 0; kx < kw_; ++kx) col[r++] = T(0);
              continue;
            }
            const T* row_ptr =
                src + (static_cast<std::size_t>(ic) * x.h + iy) * x.w;
            for (int kx = 0; kx < kw_; ++kx) {
              const int ix = ox + kx - pw_;
              col[r++] = (ix >= 0 && ix < x.w) ? row_ptr[ix] : T(0);
            }
          }
        }
      }
    }
  }

  void col2im(const Mat<T>& dcols, int sample, int y0, int rows, int ow,
              Tensor4<T>& dx) const {
    T* dst = dx.sample(sample);
    for (int dy = 0; dy < rows; ++dy) {
      const int oy = y0 + dy;
      for (int ox = 0; ox < ow; ++ox) {
        const T* col =
            dcols.data() + (static_cast<std::size_t>(dy) * ow + ox) *
                               static_cast<std::size_t>(in_c_) * kh_ * kw_;
        std::size_t r = 0;
        for (int ic = 0; ic < in_c_; ++ic) {
          for (int ky = 0; ky < kh_; ++ky) {
            const int iy = oy + ky - ph_;
            if (iy < 0 || iy >= dx.h) {
              r += kw_;
              continue;
            }
            T* row_ptr = dst + (static_cast<std::size_t>(ic) * dx.h + iy) * dx.w;
            for (int kx = 0; kx < kw_; ++kx) {
              const int ix = ox + kx - pw_;
              if (ix >= 0 && ix < dx.w) row_ptr[ix] += col[r];
              ++r;
            }
          }
        }
      }
    }
  }

  int in_c_, out_c_, kh_, kw_, ph_, pw_;
  Mat<T> weight_;
  Vec<T> bias_;
  Mat<T> weight_grad_;
  Vec<T> bias_grad_;
  Tensor4<T> cached_input_;
  bool has_cache_ = false;
};

// ---------------------------------------------------------------------------
// Batch normalization over (batch, freq, time) per channel.

template <class T>
class BatchNorm {
 public:
  explicit BatchNorm(int channels, T momentum = T(0.1), T eps = T(1e-5))
      : channels_(channels), momentum_(momentum), eps_(eps),
        gamma_(Vec<T>::Ones(channels)), beta_(Vec<T>::Zero(channels)),
        run_mean_(Vec<T>::Zero(channels)), run_var_(Vec<T>::Ones(channels)),
        gamma_grad_(Vec<T>::Zero(channels)), beta_grad_(Vec<T>::Zero(channels)) {}

  // `mask` (n x w, 0 = padding) restricts the batch statistics to real
  // frames; normalization still applies everywhere.
  Tensor4<T> forward(const Tensor4<T>& x, bool train,
                     const RowMat<T>* mask = nullptr) {
    if (x.c != channels_) throw std::invalid_argument("batch_norm: channel mismatch");
    Tensor4<T> out(x.n, x.c, x.h, x.w);
    if (train) {
      if (mask != nullptr) {
        mask_ = *mask;
        has_mask_ = true;
      } else {
        has_mask_ = false;
      }
      std::size_t stat_count = 0;
      if (has_mask_) {
        for (int i = 0; i < x.n; ++i) {
          for (int t = 0; t < x.w; ++t) {
            if (mask_(i, t) > T(0)) ++stat_count;
          }
        }
        stat_count *= static_cast<std::size_t>(x.h);
      } else {
        stat_count = static_cast<std::size_t>(x.n) * x.h * x.w;
      }
      if (stat_count <= 1) {
        throw std::invalid_argument("batch_norm: need more than one value per channel");
      }
      stat_count_ = stat_count;
      mean_.resize(channels_);
      inv_std_.resize(channels_);
      for (int ch = 0; ch < channels_; ++ch) {
        T sum = T(0);
        for_stat_entries(x, ch, [&](T v) { sum += v; });
        const T mean = sum / static_cast<T>(stat_count);
        T sq = T(0);
        for_stat_entries(x, ch, [&](T v) { sq += (v - mean) * (v - mean); });
        const T var = sq / static_cast<T>(stat_count);
        mean_[ch] = mean;
        inv_std_[ch] = T(1) / std::sqrt(var + eps_);
        run_mean_[ch] = (T(1) - momentum_) * run_mean_[ch] + momentum_ * mean;
        run_var_[ch] = (T(1) - momentum_) * run_var_[ch] + momentum_ * var;
      }
      xhat_ = Tensor4<T>(x.n, x.c, x.h, x.w);
      for (int ch = 0; ch < channels_; ++ch) {
        const T m = mean_[ch], is = inv_std_[ch];
        const T g = gamma_[ch], b = beta_[ch];
        transform_channel(x, out, ch, [&](T v, std::size_t idx, bool) {
          const T xh = (v - m) * is;
          xhat_.data[idx] = xh;
          return g * xh + b;
        });
      }
      train_cached_ = true;
    } else {
      for (int ch = 0; ch < channels_; ++ch) {
        const T m = run_mean_[ch];
        const T is = T(1) / std::sqrt(run_var_[ch] + eps_);
        const T g = gamma_[ch], b = beta_[ch];
        transform_channel(x, out, ch, [&](T v, std::size_t, bool) {
          return g * (v - m) * is + b;
        });
      }
      train_cached_ = false;
    }
    return out;
  }

  Tensor4<T> backward(const Tensor4<T>& dout) {
    if (!train_cached_) throw std::logic_error("batch_norm: backward without train forward");
    const T inv_count = T(1) / static_cast<T>(stat_count_);
    Tensor4<T> dx(dout.n, dout.c, dout.h, dout.w);
    for (int ch = 0; ch < channels_; ++ch) {
      T sum_d = T(0), sum_dx = T(0);
      for_channel(dout, ch, [&](T v, std::size_t idx, bool) {
        sum_d += v;
        sum_dx += v * xhat_.data[idx];
      });
      gamma_grad_[ch] += sum_dx;
      beta_grad_[ch] += sum_d;
      const T g = gamma_[ch], is = inv_std_[ch];
      // Statistic-path terms apply only where the statistics were computed.
      transform_channel(dout, dx, ch, [&](T v, std::size_t idx, bool in_stats) {
        if (!in_stats) return g * is * v;
        return g * is * (v - inv_count * sum_d -
                         xhat_.data[idx] * inv_count * sum_dx);
      });
    }
    return dx;
  }

  void zero_grad() {
    gamma_grad_.setZero();
    beta_grad_.setZero();
  }

  void collect_params(const std::string& prefix, std::vector<ParamRef<T>>& out) {
    out.push_back({prefix + ".gamma", gamma_.data(), gamma_grad_.data(),
                   static_cast<std::size_t>(channels_), {channels_}});
    out.push_back({prefix + ".beta", beta_.data(), beta_grad_.data(),
                   static_cast<std::size_t>(channels_), {channels_}});
  }

  Vec<T>& running_mean() { return run_mean_; }
  Vec<T>& running_var() { return run_var_; }
  Vec<T>& gamma() { return gamma_; }
  Vec<T>& beta() { return beta_; }

 private:
  bool in_stats(int sample, int t) const {
    return !has_mask_ || mask_(sample, t) > T(0);
  }
  template <class Fn>
  void for_stat_entries(const Tensor4<T>& x, int ch, Fn fn) const {
    const std::size_t plane = static_cast<std::size_t>(x.h) * x.w;
    for (int i = 0; i < x.n; ++i) {
      const T* p = x.sample(i) + ch * plane;
      for (int y = 0; y < x.h; ++y) {
        for (int t = 0; t < x.w; ++t) {
          if (in_stats(i, t)) fn(p[static_cast<std::size_t>(y) * x.w + t]);
        }
      }
    }
  }
  template <class Fn>
  void for_channel(const Tensor4<T>& x, int ch, Fn fn) const {
    const std::size_t plane = static_cast<std::size_t>(x.h) * x.w;
    for (int i = 0; i < x.n; ++i) {
      const T* p = x.sample(i) + ch * plane;
      const std::size_t base =
          (static_cast<std::size_t>(i) * x.c + ch) * plane;
      for (int y = 0; y < x.h; ++y) {
        for (int t = 0; t < x.w; ++t) {
          const std::size_t j = static_cast<std::size_t>(y) * x.w + t;
          fn(p[j], base + j, in_stats(i, t));
        }
      }
    }
  }
  template <class Fn>
  void transform_channel(const Tensor4<T>& x, Tensor4<T>& out, int ch,
                         Fn fn) const {
    const std::size_t plane = static_cast<std::size_t>(x.h) * x.w;
    for (int i = 0; i < x.n; ++i) {
      const T* p = x.sample(i) + ch * plane;
      T* q = out.sample(i) + ch * plane;
      const std::size_t base =
          (static_cast<std::size_t>(i) * x.c + ch) * plane;
      for (int y = 0; y < x.h; ++y) {
        for (int t = 0; t < x.w; ++t) {
          const std::size_t j = static_cast<std::size_t>(y) * x.w + t;
          q[j] = fn(p[j], base + j, in_stats(i, t));
        }
      }
    }
  }

  int channels_;
  T momentum_, eps_;
  Vec<T> gamma_, beta_, run_mean_, run_var_;
  Vec<T> gamma_grad_, beta_grad_;
  std::vector<T> mean_, inv_std_;
  Tensor4<T> xhat_;
  RowMat<T> mask_;
  bool has_mask_ = false;
  std::size_t stat_count_ = 0;
  bool train_cached_ = false;
};

// ---------------------------------------------------------------------------
// SELU activation.

template <class T>
class Selu {
 public:
  Tensor4<T> forward(const Tensor4<T>& x, bool cache = true) {
    Tensor4<T> out(x.n, x.c, x.h, x.w);
    const T lambda = static_cast<T>(kSeluLambda);
    const T alpha = static_cast<T>(kSeluAlpha);
    for (std::size_t i = 0; i < x.size(); ++i) {
      const T v = x.data[i];
      out.data[i] = v > T(0) ? lambda * v : lambda * alpha * (std::exp(v) - T(1));
    }
    if (cache) {
      cached_input_ = x;
      has_cache_ = true;
    }
    return out;
  }

  Tensor4<T> backward(const Tensor4<T>& dout) {
    if (!has_cache_) throw std::logic_error("selu: backward without forward");
    const T lambda = static_cast<T>(kSeluLambda);
    const T alpha = static_cast<T>(kSeluAlpha);
    Tensor4<T> dx(dout.n, dout.c, dout.h, dout.w);
    for (std::size_t i = 0; i < dout.size(); ++i) {
      const T v = cached_input_.data[i];
      dx.data[i] = dout.data[i] *
                   (v > T(0) ? lambda : lambda * alpha * std::exp(v));
    }
    return dx;
  }

 private:
  Tensor4<T> cached_input_;
  bool has_cache_ = false;
};

// ---------------------------------------------------------------------------
// Frequency-axis max pooling / un-pooling with explicit indices.

template <class T>
std::pair<Tensor4<T>, PoolIndices> max_pool_freq(const Tensor4<T>& x, int k) {
  if (k <= 0 || x.h % k != 0) {
    throw std::invalid_argument("max_pool_freq: freq dim not divisible by kernel");
  }
  const int oh = x.h / k;
  Tensor4<T> out(x.n, x.c, oh, x.w);
  PoolIndices idx;
  idx.n = x.n; idx.c = x.c; idx.h = oh; idx.w = x.w; idx.kernel = k;
  idx.offset.resize(out.size());
  std::size_t o = 0;
  for (int i = 0; i < x.n; ++i) {
    for (int ch = 0; ch < x.c; ++ch) {
      for (int y = 0; y < oh; ++y) {
        for (int t = 0; t < x.w; ++t) {
          T best = x.at(i, ch, y * k, t);
          int best_off = 0;
          for (int d = 1; d < k; ++d) {
            const T v = x.at(i, ch, y * k + d, t);
            if (v > best) {  // ties keep the smallest offset
              best = v;
              best_off = d;
            }
          }
          out.at(i, ch, y, t) = best;
          idx.offset[o++] = static_cast<std::uint8_t>(best_off);
        }
      }
    }
  }
  return {std::move(out), std::move(idx)};
}

// Routes the upstream gradient to the argmax positions.
template <class T>
Tensor4<T> max_pool_freq_backward(const Tensor4<T>& dout,
                                  const PoolIndices& idx) {
  const int k = idx.kernel;
  Tensor4<T> dx(dout.n, dout.c, dout.h * k, dout.w);
  for (int i = 0; i < dout.n; ++i) {
    for (int ch = 0; ch < dout.c; ++ch) {
      for (int y = 0; y < dout.h; ++y) {
        for (int t = 0; t < dout.w; ++t) {
          dx.at(i, ch, y * k + idx.at(i, ch, y, t), t) = dout.at(i, ch, y, t);
        }
      }
    }
  }
  return dx;
}

template <class T>
Tensor4<T> max_unpool_freq(const Tensor4<T>& x, const PoolIndices& idx) {
  if (x.n != idx.n || x.c != idx.c || x.h != idx.h || x.w != idx.w) {
    throw std::invalid_argument("max_unpool_freq: indices shape mismatch");
  }
  const int k = idx.kernel;
  Tensor4<T> out(x.n, x.c, x.h * k, x.w);
  for (int i = 0; i < x.n; ++i) {
    for (int ch = 0; ch < x.c; ++ch) {
      for (int y = 0; y < x.h; ++y) {
        for (int t = 0; t < x.w; ++t) {
          const int off = idx.at(i, ch, y, t);
          if (off >= k) throw std::runtime_error("corrupt indices");
          out.at(i, ch, y * k + off, t) = x.at(i, ch, y, t);
        }
      }
    }
  }
  return out;
}

template <class T>
Tensor4<T> max_unpool_freq_backward(const Tensor4<T>& dout,
                                    const PoolIndices& idx) {
  const int k = idx.kernel;
  Tensor4<T> dx(idx.n, idx.c, idx.h, idx.w);
  for (int i = 0; i < idx.n; ++i) {
    for (int ch = 0; ch < idx.c; ++ch) {
      for (int y = 0; y < idx.h; ++y) {
        for (int t = 0; t < idx.w; ++t) {
          dx.at(i, ch, y, t) = dout.at(i, ch, y * k + idx.at(i, ch, y, t), t);
        }
      }
    }
  }
  return dx;
}

// ---------------------------------------------------------------------------
// Column softmax over the frequency axis (applied per sample, c must be 1).

template <class T>
Tensor4<T> softmax_freq(const Tensor4<T>& logits) {
  if (logits.c != 1) throw std::invalid_argument("softmax_freq: expected 1 channel");
  Tensor4<T> out(logits.n, 1, logits.h, logits.w);
  for (int i = 0; i < logits.n; ++i) {
    for (int t = 0; t < logits.w; ++t) {
      T max_v = logits.at(i, 0, 0, t);
      for (int f = 1; f < logits.h; ++f) max_v = std::max(max_v, logits.at(i, 0, f, t));
      T sum = T(0);
      for (int f = 0; f < logits.h; ++f) {
        const T e = std::exp(logits.at(i, 0, f, t) - max_v);
        out.at(i, 0, f, t) = e;
        sum += e;
      }
      const T inv = T(1) / sum;
      for (int f = 0; f < logits.h; ++f) out.at(i, 0, f, t) *= inv;
    }
  }
  return out;
}

// d(logits) from d(probs) for a column softmax.
template <class T>
Tensor4<T> softmax_freq_backward(const Tensor4<T>& probs,
                                 const Tensor4<T>& dprobs) {
  Tensor4<T> dz(probs.n, 1, probs.h, probs.w);
  for (int i = 0; i < probs.n; ++i) {
    for (int t = 0; t < probs.w; ++t) {
      T dot = T(0);
      for (int f = 0; f < probs.h; ++f) {
        dot += dprobs.at(i, 0, f, t) * probs.at(i, 0, f, t);
      }
      for (int f = 0; f < probs.h; ++f) {
        dz.at(i, 0, f, t) =
            probs.at(i, 0, f, t) * (dprobs.at(i, 0, f, t) - dot);
      }
    }
  }
  return dz;
}

// ---------------------------------------------------------------------------
// Element-wise binary cross entropy against a one-hot target, with a
// per-frame mask (mask shape: n x w). Mean over unmasked entries.

template <class T>
T bce_loss(const Tensor4<T>& pred, const Tensor4<T>& target,
           const RowMat<T>& mask) {
  if (!pred.same_shape(target)) throw std::invalid_argument("bce_loss: shape mismatch");
  const T lo = static_cast<T>(kProbClamp), hi = T(1) - lo;
  long count_frames = 0;
  T total = T(0);
  for (int i = 0; i < pred.n; ++i) {
    for (int t = 0; t < pred.w; ++t) {
      if (mask(i, t) <= T(0)) continue;
      ++count_frames;
      for (int f = 0; f < pred.h; ++f) {
        const T p = std::clamp(pred.at(i, 0, f, t), lo, hi);
        const T tv = target.at(i, 0, f, t);
        total -= tv * std::log(p) + (T(1) - tv) * std::log(T(1) - p);
      }
    }
  }
  if (count_frames == 0) throw std::runtime_error("empty batch");
  return total / static_cast<T>(count_frames * static_cast<long>(pred.h));
}

template <class T>
Tensor4<T> bce_loss_backward(const Tensor4<T>& pred, const Tensor4<T>& target,
                             const RowMat<T>& mask) {
  const T lo = static_cast<T>(kProbClamp), hi = T(1) - lo;
  long count_frames = 0;
  for (int i = 0; i < pred.n; ++i) {
    for (int t = 0; t < pred.w; ++t) {
      if (mask(i, t) > T(0)) ++count_frames;
    }
  }
  if (count_frames == 0) throw std::runtime_error("empty batch");
  const T inv = T(1) / static_cast<T>(count_frames * static_cast<long>(pred.h));
  Tensor4<T> dp(pred.n, 1, pred.h, pred.w);
  for (int i = 0; i < pred.n; ++i) {
    for (int t = 0; t < pred.w; ++t) {
      if (mask(i, t) <= T(0)) continue;
      for (int f = 0; f < pred.h; ++f) {
        const T p = pred.at(i, 0, f, t);
        if (p <= lo || p >= hi) continue;  // clamp region: zero slope
        const T tv = target.at(i, 0, f, t);
        dp.at(i, 0, f, t) = inv * (-tv / p + (T(1) - tv) / (T(1) - p));
      }
    }
  }
  return dp;
}

// ---------------------------------------------------------------------------
// Adam with bias correction.

template <class T>
class Adam {
 public:
  Adam(T lr, T beta1 = T(0.9), T beta2 = T(0.999), T eps = T(1e-8))
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(std::vector<ParamRef<T>>& params) {
    if (m_.empty()) {
      for (const auto& p : params) {
        m_.emplace_back(p.size, T(0));
        v_.emplace_back(p.size, T(0));
      }
    }
    ++t_;
    const T bc1 = T(1) - std::pow(beta1_, static_cast<T>(t_));
    const T bc2 = T(1) - std::pow(beta2_, static_cast<T>(t_));
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
      auto& p = params[pi];
      auto& m = m_[pi];
      auto& v = v_[pi];
      for (std::size_t j = 0; j < p.size; ++j) {
        const T g = p.grad[j];
        m[j] = beta1_ * m[j] + (T(1) - beta1_) * g;
        v[j] = beta2_ * v[j] + (T(1) - beta2_) * g * g;
        const T mhat = m[j] / bc1;
        const T vhat = v[j] / bc2;
        p.value[j] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
      }
    }
  }

  long step_count() const { return t_; }
  T learning_rate() const { return lr_; }

 private:
  T lr_, beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<std::vector<T>> m_, v_;
};

// Global-norm gradient clipping; returns the pre-clip norm.
template <class T>
T clip_gradients(std::vector<ParamRef<T>>& params, T max_norm) {
  T sq = T(0);
  for (const auto& p : params) {
    for (std::size_t j = 0; j < p.size; ++j) sq += p.grad[j] * p.grad[j];
  }
  const T norm = std::sqrt(sq);
  if (max_norm > T(0) && norm > max_norm) {
    const T scale = max_norm / norm;
    for (auto& p : params) {
      for (std::size_t j = 0; j < p.size; ++j) p.grad[j] *= scale;
    }
  }
  return norm;
}

}  // namespace msnet::nn
