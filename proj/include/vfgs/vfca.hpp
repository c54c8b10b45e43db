#pragma once

#include <algorithm>
#include <cmath>
#include <string>

#include "vfgs/fft.hpp"
#include "vfgs/nn/module.hpp"

namespace vfgs {

struct VFCAConfig {
  Index channels = 1;
  Index reduction = 16;

  Index hidden() const { return std::max<Index>(1, channels / reduction); }
  void validate() const {
    if (channels < 1) throw ConfigError("VFCA channels must be >= 1");
    if (reduction < 1) throw ConfigError("VFCA reduction must be >= 1");
  }
};

// Mean FFT magnitude per (batch, channel): f = (1/HW) sum |FFT2(x)|.
//
// d f / d x = Re(IFFT2(F / |F|)), with bins of zero magnitude contributing a
// zero subgradient.
template <typename T>
Var<T> freq_descriptor(const Var<T>& x) {
  require_rank(x.shape(), 4, "freq_descriptor");
  const Index bsz = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  auto spec = fft::fft2(x.value());
  Tensor<T> f(Shape{bsz, c});
  for (Index bc = 0; bc < bsz * c; ++bc) {
    T acc = 0;
    for (Index i = 0; i < hw; ++i) acc += std::abs(spec.values[static_cast<std::size_t>(bc * hw + i)]);
    f[bc] = acc / static_cast<T>(hw);
  }
  return make_op_result<T>(
      std::move(f), {x}, [spec = std::move(spec), bsz, c, hw](const Tensor<T>& g, const ops::NodePtrs<T>& p) {
        ComplexSpectrum<T> phase = spec;
        for (auto& z : phase.values) {
          const T m = std::abs(z);
          z = m > T(0) ? z / m : std::complex<T>(0);
        }
        auto back = fft::ifft2(std::move(phase));
        auto& gx = p[0]->grad_buffer();
        for (Index bc = 0; bc < bsz * c; ++bc)
          for (Index i = 0; i < hw; ++i)
            gx[bc * hw + i] += g[bc] * back.values[static_cast<std::size_t>(bc * hw + i)].real();
      });
}

// Largest |Im| left after the last spectral reweighting, relative tracking of
// the real-part extraction.
struct SpectralResidue {
  double max_imag = 0;
};

// out = Re(IFFT2(alpha_c * FFT2(x))). Scaling a spectrum by a real scalar
// commutes with the transform, so the adjoint is alpha_c * g and
// d out / d alpha_c = x.
template <typename T>
Var<T> spectral_channel_scale(const Var<T>& x, const Var<T>& alpha, SpectralResidue* residue = nullptr) {
  require_rank(x.shape(), 4, "spectral_channel_scale");
  const Index bsz = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  if (alpha.shape() != Shape{bsz, c}) throw ShapeError("spectral_channel_scale: alpha must be (B, C)");
  auto spec = fft::fft2(x.value());
  for (Index bc = 0; bc < bsz * c; ++bc)
    for (Index i = 0; i < hw; ++i) spec.values[static_cast<std::size_t>(bc * hw + i)] *= alpha.value()[bc];
  auto back = fft::ifft2(std::move(spec));
  Tensor<T> out(x.shape());
  double max_imag = 0;
  for (Index i = 0; i < out.numel(); ++i) {
    out[i] = back.values[static_cast<std::size_t>(i)].real();
    max_imag = std::max(max_imag, static_cast<double>(std::abs(back.values[static_cast<std::size_t>(i)].imag())));
  }
  if (residue) residue->max_imag = max_imag;
  return make_op_result<T>(std::move(out), {x, alpha}, [bsz, c, hw](const Tensor<T>& g, const ops::NodePtrs<T>& p) {
    for (Index bc = 0; bc < bsz * c; ++bc) {
      if (p[0]->requires_grad) {
        auto& gx = p[0]->grad_buffer();
        for (Index i = 0; i < hw; ++i) gx[bc * hw + i] += g[bc * hw + i] * p[1]->value[bc];
      }
      if (p[1]->requires_grad) {
        T acc = 0;
        for (Index i = 0; i < hw; ++i) acc += g[bc * hw + i] * p[0]->value[bc * hw + i];
        p[1]->grad_buffer()[bc] += acc;
      }
    }
  });
}

template <typename T>
struct VFCATrace {
  Var<T> descriptor;  // f, (B, C)
  Var<T> alpha;       // (B, C)
  Var<T> output;
  SpectralResidue residue;
};

// Vessel-aware frequency-domain channel attention.
template <typename T>
class VFCA {
 public:
  VFCA() = default;
  VFCA(const VFCAConfig& cfg, nn::Rng& rng) : cfg_(cfg) {
    cfg.validate();
    w1_ = nn::Linear<T>(cfg.channels, cfg.hidden(), false, rng);
    w2_ = nn::Linear<T>(cfg.hidden(), cfg.channels, false, rng);
  }

  // alpha = sigmoid(W2 relu(W1 f)).
  Var<T> attention_weights(const Var<T>& descriptor) const {
    return ops::sigmoid(w2_(ops::relu(w1_(descriptor))));
  }

  VFCATrace<T> forward_trace(const Var<T>& x) const {
    require_rank(x.shape(), 4, "vfca_forward");
    if (x.dim(1) != cfg_.channels)
      throw ShapeError("vfca_forward: expected " + std::to_string(cfg_.channels) + " channels, got " +
                       std::to_string(x.dim(1)));
    VFCATrace<T> t;
    t.descriptor = freq_descriptor(x);
    t.alpha = attention_weights(t.descriptor);
    t.output = spectral_channel_scale(x, t.alpha, &t.residue);
    return t;
  }

  Var<T> forward(const Var<T>& x) const { return forward_trace(x).output; }

  void visit(const std::string& prefix, nn::StateVisitor<T>& v) {
    w1_.visit(nn::join(prefix, "fc1"), v);
    w2_.visit(nn::join(prefix, "fc2"), v);
  }

  const VFCAConfig& config() const { return cfg_; }
  nn::Linear<T>& fc1() { return w1_; }
  nn::Linear<T>& fc2() { return w2_; }

 private:
  VFCAConfig cfg_;
  nn::Linear<T> w1_, w2_;
};

}  // namespace vfgs
