#pragma once

#include <complex>
#include <vector>

#include <unsupported/Eigen/FFT>

#include "vfgs/tensor.hpp"

namespace vfgs {

// Rank-4 complex array (B, C, H, W), the frequency-domain twin of a FeatureMap.
template <typename T>
struct ComplexSpectrum {
  Shape shape;
  std::vector<std::complex<T>> values;

  std::complex<T>& at(Index b, Index c, Index u, Index v) {
    return values[static_cast<std::size_t>(((b * shape[1] + c) * shape[2] + u) * shape[3] + v)];
  }
  const std::complex<T>& at(Index b, Index c, Index u, Index v) const {
    return values[static_cast<std::size_t>(((b * shape[1] + c) * shape[2] + u) * shape[3] + v)];
  }
};

namespace fft {

// 2-D transforms of one H x W plane, built from row and column 1-D passes.
// Forward is unnormalized; inverse carries the 1/(HW) factor, so the pair
// are exact mutual inverses.
template <typename T>
class Plan2d {
 public:
  Plan2d(Index h, Index w) : h_(h), w_(w), row_(static_cast<std::size_t>(w)), col_(static_cast<std::size_t>(h)), tmp_(static_cast<std::size_t>(h)) {}

  void forward(std::complex<T>* plane) { run(plane, false); }
  void inverse(std::complex<T>* plane) { run(plane, true); }

 private:
  // A length-1 transform is the identity, and Eigen's kissfft backend
  // faults on it, so such passes are skipped.
  void run(std::complex<T>* plane, bool inv) {
    for (Index r = 0; w_ > 1 && r < h_; ++r) {
      std::copy_n(plane + r * w_, w_, row_.begin());
      std::vector<std::complex<T>> out(static_cast<std::size_t>(w_));
      if (inv)
        engine_.inv(out, row_);
      else
        engine_.fwd(out, row_);
      std::copy(out.begin(), out.end(), plane + r * w_);
    }
    for (Index c = 0; h_ > 1 && c < w_; ++c) {
      for (Index r = 0; r < h_; ++r) col_[static_cast<std::size_t>(r)] = plane[r * w_ + c];
      if (inv)
        engine_.inv(tmp_, col_);
      else
        engine_.fwd(tmp_, col_);
      for (Index r = 0; r < h_; ++r) plane[r * w_ + c] = tmp_[static_cast<std::size_t>(r)];
    }
  }

  Index h_, w_;
  Eigen::FFT<T> engine_;
  std::vector<std::complex<T>> row_, col_, tmp_;
};

// Per-channel 2-D FFT of a real (B, C, H, W) map.
template <typename T>
ComplexSpectrum<T> fft2(const Tensor<T>& x) {
  require_rank(x.shape(), 4, "fft2");
  ComplexSpectrum<T> s{x.shape(), std::vector<std::complex<T>>(static_cast<std::size_t>(x.numel()))};
  const Index h = x.dim(2), w = x.dim(3), planes = x.dim(0) * x.dim(1);
  for (Index i = 0; i < x.numel(); ++i) s.values[static_cast<std::size_t>(i)] = x[i];
  Plan2d<T> plan(h, w);
  for (Index p = 0; p < planes; ++p) plan.forward(s.values.data() + p * h * w);
  return s;
}

template <typename T>
ComplexSpectrum<T> ifft2(ComplexSpectrum<T> s) {
  const Index h = s.shape[2], w = s.shape[3], planes = s.shape[0] * s.shape[1];
  Plan2d<T> plan(h, w);
  for (Index p = 0; p < planes; ++p) plan.inverse(s.values.data() + p * h * w);
  return s;
}

}  // namespace fft
}  // namespace vfgs
