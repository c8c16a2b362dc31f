#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "msnet/cfp.hpp"
#include "msnet/layers.hpp"
#include "msnet/serialize.hpp"
#include "msnet/tensor.hpp"

namespace msnet {

enum class Task { kVocal, kGeneral };

std::string task_name(Task task);
Task task_from_name(const std::string& name);

inline constexpr int kNoMelodyBin = -1;

struct ModelConfig {
  Task task = Task::kVocal;
  int num_bins = 320;
  std::array<int, 3> pool_plan = {4, 4, 4};
  std::array<int, 3> encoder_channels = {32, 64, 128};
  int kernel_h = 5, kernel_w = 5;
  int pad_h = 2, pad_w = 2;
  double f_min = 31.0;
  int bins_per_octave = 60;

  static ModelConfig vocal();
  static ModelConfig general();
  static ModelConfig for_task(Task task);

  void validate() const;
  int bottleneck_bins() const {
    return num_bins / (pool_plan[0] * pool_plan[1] * pool_plan[2]);
  }
  double bin_to_hz(int bin) const;  // kNoMelodyBin -> 0.0
};

// Per-frame F0 in Hz, 0.0 = no melody.
struct MelodyContour {
  std::vector<double> times;
  std::vector<double> f0;
};

// Per-frame argmax decode: row F wins -> kNoMelodyBin, ties toward the
// lowest row index.
template <class T>
std::vector<int> decode_salience(const nn::Tensor4<T>& probs, int sample) {
  const int num_rows = probs.h;
  std::vector<int> bins(probs.w);
  for (int t = 0; t < probs.w; ++t) {
    int best = 0;
    T best_v = probs.at(sample, 0, 0, t);
    for (int f = 1; f < num_rows; ++f) {
      const T v = probs.at(sample, 0, f, t);
      if (v > best_v) {
        best_v = v;
        best = f;
      }
    }
    bins[t] = (best == num_rows - 1) ? kNoMelodyBin : best;
  }
  return bins;
}

std::vector<double> bins_to_hz(const std::vector<int>& bins,
                               const ModelConfig& cfg);

// ---------------------------------------------------------------------------
// The full network: 3-block encoder, 3-block decoder fed by the encoder's
// pooling indices, and a non-melody branch off the bottleneck whose logit
// is concatenated as the last frequency row before a joint softmax.

template <class T>
class MSNet {
 public:
  explicit MSNet(const ModelConfig& cfg, unsigned seed = 0)
      : cfg_(cfg),
        conv_enc1_(3, cfg.encoder_channels[0], cfg.kernel_h, cfg.kernel_w, cfg.pad_h, cfg.pad_w),
        conv_enc2_(cfg.encoder_channels[0], cfg.encoder_channels[1], cfg.kernel_h, cfg.kernel_w, cfg.pad_h, cfg.pad_w),
        conv_enc3_(cfg.encoder_channels[1], cfg.encoder_channels[2], cfg.kernel_h, cfg.kernel_w, cfg.pad_h, cfg.pad_w),
        conv_dec1_(cfg.encoder_channels[2], cfg.encoder_channels[1], cfg.kernel_h, cfg.kernel_w, cfg.pad_h, cfg.pad_w),
        conv_dec2_(cfg.encoder_channels[1], cfg.encoder_channels[0], cfg.kernel_h, cfg.kernel_w, cfg.pad_h, cfg.pad_w),
        conv_dec3_(cfg.encoder_channels[0], 1, cfg.kernel_h, cfg.kernel_w, cfg.pad_h, cfg.pad_w),
        // Collapses the residual bottleneck bins to a single row: no
        // frequency padding, full time padding.
        conv_nm_(cfg.encoder_channels[2], 1, cfg.bottleneck_bins(), cfg.kernel_w, 0, cfg.pad_w),
        bn_enc1_(cfg.encoder_channels[0]), bn_enc2_(cfg.encoder_channels[1]),
        bn_enc3_(cfg.encoder_channels[2]), bn_dec1_(cfg.encoder_channels[1]),
        bn_dec2_(cfg.encoder_channels[0]) {
    cfg.validate();
    std::mt19937 rng(seed);
    conv_enc1_.init(rng);
    conv_enc2_.init(rng);
    conv_enc3_.init(rng);
    conv_dec1_.init(rng);
    conv_dec2_.init(rng);
    conv_dec3_.init(rng);
    conv_nm_.init(rng);
  }

  struct ForwardResult {
    nn::Tensor4<T> probs;       // n x 1 x (F+1) x T, column-stochastic
    nn::Tensor4<T> bottleneck;  // n x 128 x 5 x T
  };

  // `mask` (n x w, 0 = padded frame) scopes batch-norm statistics to real
  // frames so padding cannot perturb training.
  ForwardResult forward(const nn::Tensor4<T>& x, bool train,
                        const nn::RowMat<T>* mask = nullptr) {
    nn::Tensor4<T> p3 = encode(x, train, mask);
    nn::Tensor4<T> sal = decode_trunk(p3, train, mask);
    nn::Tensor4<T> nm = conv_nm_.forward(p3, train);

    nn::Tensor4<T> logits(x.n, 1, cfg_.num_bins + 1, x.w);
    for (int i = 0; i < x.n; ++i) {
      for (int f = 0; f < cfg_.num_bins; ++f) {
        for (int t = 0; t < x.w; ++t) logits.at(i, 0, f, t) = sal.at(i, 0, f, t);
      }
      for (int t = 0; t < x.w; ++t) {
        logits.at(i, 0, cfg_.num_bins, t) = nm.at(i, 0, 0, t);
      }
    }
    ForwardResult res;
    res.probs = nn::softmax_freq(logits);
    res.bottleneck = std::move(p3);
    if (train) {
      probs_cache_ = res.probs;
      mode_ = Mode::kFull;
    }
    return res;
  }

  // Same trunk without the non-melody branch; element-wise sigmoid output.
  nn::Tensor4<T> forward_ablated(const nn::Tensor4<T>& x, bool train,
                                 const nn::RowMat<T>* mask = nullptr) {
    nn::Tensor4<T> p3 = encode(x, train, mask);
    nn::Tensor4<T> sal = decode_trunk(p3, train, mask);
    nn::Tensor4<T> probs(sal.n, 1, sal.h, sal.w);
    for (std::size_t i = 0; i < sal.size(); ++i) {
      probs.data[i] = T(1) / (T(1) + std::exp(-sal.data[i]));
    }
    if (train) {
      probs_cache_ = probs;
      mode_ = Mode::kAblated;
    }
    return probs;
  }

  // Backpropagates d(loss)/d(probabilities) through the joint softmax and
  // the whole network, accumulating parameter gradients.
  void backward(const nn::Tensor4<T>& dprobs) {
    if (mode_ != Mode::kFull) throw std::logic_error("msnet: backward without forward");
    const nn::Tensor4<T> dlogits = nn::softmax_freq_backward(probs_cache_, dprobs);
    nn::Tensor4<T> dsal(dlogits.n, 1, cfg_.num_bins, dlogits.w);
    nn::Tensor4<T> dnm(dlogits.n, 1, 1, dlogits.w);
    for (int i = 0; i < dlogits.n; ++i) {
      for (int f = 0; f < cfg_.num_bins; ++f) {
        for (int t = 0; t < dlogits.w; ++t) {
          dsal.at(i, 0, f, t) = dlogits.at(i, 0, f, t);
        }
      }
      for (int t = 0; t < dlogits.w; ++t) {
        dnm.at(i, 0, 0, t) = dlogits.at(i, 0, cfg_.num_bins, t);
      }
    }
    nn::Tensor4<T> dp3 = decode_trunk_backward(dsal);
    const nn::Tensor4<T> dp3_nm = conv_nm_.backward(dnm);
    for (std::size_t i = 0; i < dp3.size(); ++i) dp3.data[i] += dp3_nm.data[i];
    encode_backward(dp3);
  }

  void backward_ablated(const nn::Tensor4<T>& dprobs) {
    if (mode_ != Mode::kAblated) {
      throw std::logic_error("msnet: backward_ablated without forward_ablated");
    }
    nn::Tensor4<T> dsal(dprobs.n, 1, dprobs.h, dprobs.w);
    for (std::size_t i = 0; i < dprobs.size(); ++i) {
      const T p = probs_cache_.data[i];
      dsal.data[i] = dprobs.data[i] * p * (T(1) - p);
    }
    encode_backward(decode_trunk_backward(dsal));
  }

  void zero_grad() {
    conv_enc1_.zero_grad(); conv_enc2_.zero_grad(); conv_enc3_.zero_grad();
    conv_dec1_.zero_grad(); conv_dec2_.zero_grad(); conv_dec3_.zero_grad();
    conv_nm_.zero_grad();
    bn_enc1_.zero_grad(); bn_enc2_.zero_grad(); bn_enc3_.zero_grad();
    bn_dec1_.zero_grad(); bn_dec2_.zero_grad();
  }

  std::vector<nn::ParamRef<T>> parameters(bool include_non_melody = true) {
    std::vector<nn::ParamRef<T>> out;
    conv_enc1_.collect_params("conv_enc1", out);
    bn_enc1_.collect_params("bn_enc1", out);
    conv_enc2_.collect_params("conv_enc2", out);
    bn_enc2_.collect_params("bn_enc2", out);
    conv_enc3_.collect_params("conv_enc3", out);
    bn_enc3_.collect_params("bn_enc3", out);
    conv_dec1_.collect_params("conv_dec1", out);
    bn_dec1_.collect_params("bn_dec1", out);
    conv_dec2_.collect_params("conv_dec2", out);
    bn_dec2_.collect_params("bn_dec2", out);
    conv_dec3_.collect_params("conv_dec3", out);
    if (include_non_melody) conv_nm_.collect_params("conv_nm", out);
    return out;
  }

  // Full state, including batch-norm running statistics.
  std::vector<NamedTensor> state_tensors(bool include_non_melody = true) {
    std::vector<NamedTensor> out;
    for (const auto& p : parameters(include_non_melody)) {
      NamedTensor t;
      t.name = p.name;
      for (int d : p.dims) t.dims.push_back(static_cast<std::uint32_t>(d));
      t.values.resize(p.size);
      for (std::size_t i = 0; i < p.size; ++i) {
        t.values[i] = static_cast<float>(p.value[i]);
      }
      out.push_back(std::move(t));
    }
    const auto add_running = [&](const std::string& prefix, nn::BatchNorm<T>& bn) {
      for (auto [suffix, vec] : {std::pair{".running_mean", &bn.running_mean()},
                                 std::pair{".running_var", &bn.running_var()}}) {
        NamedTensor t;
        t.name = prefix + suffix;
        t.dims = {static_cast<std::uint32_t>(vec->size())};
        t.values.resize(vec->size());
        for (Eigen::Index i = 0; i < vec->size(); ++i) {
          t.values[static_cast<std::size_t>(i)] = static_cast<float>((*vec)[i]);
        }
        out.push_back(std::move(t));
      }
    };
    add_running("bn_enc1", bn_enc1_);
    add_running("bn_enc2", bn_enc2_);
    add_running("bn_enc3", bn_enc3_);
    add_running("bn_dec1", bn_dec1_);
    add_running("bn_dec2", bn_dec2_);
    return out;
  }

  void load_state(const std::vector<NamedTensor>& tensors) {
    auto params = parameters(true);
    const auto find = [&](const std::string& name) -> const NamedTensor* {
      for (const auto& t : tensors) {
        if (t.name == name) return &t;
      }
      return nullptr;
    };
    for (auto& p : params) {
      const NamedTensor* t = find(p.name);
      if (t == nullptr) {
        if (p.name.rfind("conv_nm", 0) == 0) continue;  // ablated checkpoint
        throw std::runtime_error("checkpoint missing tensor: " + p.name);
      }
      if (t->values.size() != p.size) {
        throw std::runtime_error("checkpoint shape mismatch for " + p.name);
      }
      for (std::size_t i = 0; i < p.size; ++i) {
        p.value[i] = static_cast<T>(t->values[i]);
      }
    }
    const auto load_running = [&](const std::string& prefix, nn::BatchNorm<T>& bn) {
      for (auto [suffix, vec] : {std::pair{".running_mean", &bn.running_mean()},
                                 std::pair{".running_var", &bn.running_var()}}) {
        const NamedTensor* t = find(prefix + suffix);
        if (t == nullptr || t->values.size() != static_cast<std::size_t>(vec->size())) {
          throw std::runtime_error("checkpoint missing " + prefix + suffix);
        }
        for (Eigen::Index i = 0; i < vec->size(); ++i) {
          (*vec)[i] = static_cast<T>(t->values[static_cast<std::size_t>(i)]);
        }
      }
    };
    load_running("bn_enc1", bn_enc1_);
    load_running("bn_enc2", bn_enc2_);
    load_running("bn_enc3", bn_enc3_);
    load_running("bn_dec1", bn_dec1_);
    load_running("bn_dec2", bn_dec2_);
  }

  const ModelConfig& config() const { return cfg_; }

  // Decoder un-pooling outputs (pre-convolution), captured only when tap
  // recording is enabled; stage 0 is the deepest un-pool.
  void set_record_taps(bool on) { record_taps_ = on; }
  const nn::Tensor4<T>& unpool_tap(int stage) const { return unpool_taps_[stage]; }
  const nn::PoolIndices& pool_indices(int stage) const {
    return stage == 0 ? idx1_ : stage == 1 ? idx2_ : idx3_;
  }

 private:
  enum class Mode { kNone, kFull, kAblated };

  nn::Tensor4<T> encode(const nn::Tensor4<T>& x, bool train,
                        const nn::RowMat<T>* mask) {
    if (x.c != 3 || x.h != cfg_.num_bins) {
      throw std::invalid_argument("msnet: input must be n x 3 x F x T");
    }
    nn::Tensor4<T> a = selu_enc1_.forward(bn_enc1_.forward(conv_enc1_.forward(x, train), train, mask), train);
    auto [p1, i1] = nn::max_pool_freq(a, cfg_.pool_plan[0]);
    idx1_ = std::move(i1);
    a = selu_enc2_.forward(bn_enc2_.forward(conv_enc2_.forward(p1, train), train, mask), train);
    auto [p2, i2] = nn::max_pool_freq(a, cfg_.pool_plan[1]);
    idx2_ = std::move(i2);
    a = selu_enc3_.forward(bn_enc3_.forward(conv_enc3_.forward(p2, train), train, mask), train);
    auto [p3, i3] = nn::max_pool_freq(a, cfg_.pool_plan[2]);
    idx3_ = std::move(i3);
    return std::move(p3);
  }

  nn::Tensor4<T> decode_trunk(const nn::Tensor4<T>& p3, bool train,
                              const nn::RowMat<T>* mask) {
    if (record_taps_) unpool_taps_.assign(3, nn::Tensor4<T>());
    nn::Tensor4<T> u = nn::max_unpool_freq(p3, idx3_);
    if (record_taps_) unpool_taps_[0] = u;
    nn::Tensor4<T> d = selu_dec1_.forward(bn_dec1_.forward(conv_dec1_.forward(u, train), train, mask), train);
    u = nn::max_unpool_freq(d, idx2_);
    if (record_taps_) unpool_taps_[1] = u;
    d = selu_dec2_.forward(bn_dec2_.forward(conv_dec2_.forward(u, train), train, mask), train);
    u = nn::max_unpool_freq(d, idx1_);
    if (record_taps_) unpool_taps_[2] = u;
    return conv_dec3_.forward(u, train);  // raw logits, no BN/activation
  }

  nn::Tensor4<T> decode_trunk_backward(const nn::Tensor4<T>& dsal) {
    nn::Tensor4<T> du = conv_dec3_.backward(dsal);
    nn::Tensor4<T> dd = nn::max_unpool_freq_backward(du, idx1_);
    dd = conv_dec2_.backward(bn_dec2_.backward(selu_dec2_.backward(dd)));
    dd = nn::max_unpool_freq_backward(dd, idx2_);
    dd = conv_dec1_.backward(bn_dec1_.backward(selu_dec1_.backward(dd)));
    return nn::max_unpool_freq_backward(dd, idx3_);
  }

  void encode_backward(const nn::Tensor4<T>& dp3) {
    nn::Tensor4<T> d = nn::max_pool_freq_backward(dp3, idx3_);
    d = conv_enc3_.backward(bn_enc3_.backward(selu_enc3_.backward(d)));
    d = nn::max_pool_freq_backward(d, idx2_);
    d = conv_enc2_.backward(bn_enc2_.backward(selu_enc2_.backward(d)));
    d = nn::max_pool_freq_backward(d, idx1_);
    conv_enc1_.backward(bn_enc1_.backward(selu_enc1_.backward(d)));
  }

  ModelConfig cfg_;
  nn::Conv2d<T> conv_enc1_, conv_enc2_, conv_enc3_;
  nn::Conv2d<T> conv_dec1_, conv_dec2_, conv_dec3_, conv_nm_;
  nn::BatchNorm<T> bn_enc1_, bn_enc2_, bn_enc3_, bn_dec1_, bn_dec2_;
  nn::Selu<T> selu_enc1_, selu_enc2_, selu_enc3_, selu_dec1_, selu_dec2_;
  nn::PoolIndices idx1_, idx2_, idx3_;
  nn::Tensor4<T> probs_cache_;
  Mode mode_ = Mode::kNone;
  bool record_taps_ = false;
  std::vector<nn::Tensor4<T>> unpool_taps_;
};

// ---------------------------------------------------------------------------
// Checkpoints: MSNW container next to a JSON sidecar carrying the model and
// front-end configuration, so extraction is self-describing.

struct Checkpoint {
  ModelConfig model;
  CfpConfig cfp;
  StftConfig stft;
  bool ablated = false;
  std::optional<double> threshold;  // ablated binarization threshold
};

void save_checkpoint(const std::string& path, MSNet<float>& model,
                     const Checkpoint& meta);
Checkpoint load_checkpoint_meta(const std::string& path);
MSNet<float> load_checkpoint(const std::string& path, Checkpoint* meta_out = nullptr);

}  // namespace msnet
