#pragma once

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <new>
#include <stdexcept>
#include <vector>

namespace msnet::nn {

// Fixed 64-byte alignment so Eigen maps over tensor memory always take the
// same SIMD code path: with malloc's variable alignment, identical inputs
// can sum in different orders and the last float bits stop being
// reproducible across runs.
template <class T>
struct AlignedAlloc {
  using value_type = T;
  AlignedAlloc() = default;
  template <class U>
  AlignedAlloc(const AlignedAlloc<U>&) {}
  T* allocate(std::size_t n) {
    const std::size_t bytes = (n * sizeof(T) + 63) / 64 * 64;
    void* p = std::aligned_alloc(64, bytes);
    if (p == nullptr) throw std::bad_alloc();
    return static_cast<T*>(p);
  }
  void deallocate(T* p, std::size_t) { std::free(p); }
  template <class U>
  bool operator==(const AlignedAlloc<U>&) const {
    return true;
  }
};

template <class T>
using AlignedVec = std::vector<T, AlignedAlloc<T>>;

// batch x channels x freq x time, row-major (time fastest).
template <class T>
struct Tensor4 {
  int n = 0, c = 0, h = 0, w = 0;
  AlignedVec<T> data;

  Tensor4() = default;
  Tensor4(int n_, int c_, int h_, int w_)
      : n(n_), c(c_), h(h_), w(w_),
        data(static_cast<std::size_t>(n_) * c_ * h_ * w_, T(0)) {}

  std::size_t size() const { return data.size(); }
  std::size_t sample_size() const {
    return static_cast<std::size_t>(c) * h * w;
  }
  T* sample(int i) { return data.data() + i * sample_size(); }
  const T* sample(int i) const { return data.data() + i * sample_size(); }

  T& at(int a, int b, int y, int x) {
    return data[((static_cast<std::size_t>(a) * c + b) * h + y) * w + x];
  }
  T at(int a, int b, int y, int x) const {
    return data[((static_cast<std::size_t>(a) * c + b) * h + y) * w + x];
  }

  bool same_shape(const Tensor4& o) const {
    return n == o.n && c == o.c && h == o.h && w == o.w;
  }

  bool all_finite() const {
    for (const T& v : data) {
      if (!std::isfinite(static_cast<double>(v))) return false;
    }
    return true;
  }
};

// Per pooled cell, the within-window frequency offset picked by max-pooling.
struct PoolIndices {
  int n = 0, c = 0, h = 0, w = 0;
  int kernel = 0;
  std::vector<std::uint8_t> offset;

  std::uint8_t at(int a, int b, int y, int x) const {
    return offset[((static_cast<std::size_t>(a) * c + b) * h + y) * w + x];
  }
};

}  // namespace msnet::nn
