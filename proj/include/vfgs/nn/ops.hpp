#pragma once

// Differentiable tensor primitives. Every op takes Vars, computes the forward
// value eagerly and records a closure for the reverse pass.

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "vfgs/autograd.hpp"
#include "vfgs/nn/gemm.hpp"

namespace vfgs::ops {

template <typename T>
using NodePtrs = std::vector<typename Node<T>::Ptr>;

// ---------------------------------------------------------------------------
// Elementwise

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  a.value().check_same(b.value(), "add");
  Tensor<T> out = a.value();
  out += b.value();
  return make_op_result<T>(std::move(out), {a, b}, [](const Tensor<T>& g, const NodePtrs<T>& p) {
    if (p[0]->requires_grad) p[0]->accumulate(g);
    if (p[1]->requires_grad) p[1]->accumulate(g);
  });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  a.value().check_same(b.value(), "mul");
  Tensor<T> out(a.shape());
  const Index n = out.numel();
  for (Index i = 0; i < n; ++i) out[i] = a.value()[i] * b.value()[i];
  return make_op_result<T>(std::move(out), {a, b}, [](const Tensor<T>& g, const NodePtrs<T>& p) {
    const Index n = g.numel();
    if (p[0]->requires_grad) {
      auto& ga = p[0]->grad_buffer();
      for (Index i = 0; i < n; ++i) ga[i] += g[i] * p[1]->value[i];
    }
    if (p[1]->requires_grad) {
      auto& gb = p[1]->grad_buffer();
      for (Index i = 0; i < n; ++i) gb[i] += g[i] * p[0]->value[i];
    }
  });
}

template <typename T>
Var<T> scale(const Var<T>& a, T s) {
  Tensor<T> out = a.value();
  for (auto& v : out.vec()) v *= s;
  return make_op_result<T>(std::move(out), {a}, [s](const Tensor<T>& g, const NodePtrs<T>& p) {
    auto& ga = p[0]->grad_buffer();
    for (Index i = 0; i < g.numel(); ++i) ga[i] += s * g[i];
  });
}

namespace detail {

// Shared shape for unary pointwise maps f with derivative df(x, y).
template <typename T, typename F, typename DF>
Var<T> unary(const Var<T>& a, F f, DF df) {
  Tensor<T> out(a.shape());
  const Index n = out.numel();
  for (Index i = 0; i < n; ++i) out[i] = f(a.value()[i]);
  return make_op_result<T>(std::move(out), {a}, [df](const Tensor<T>& g, const NodePtrs<T>& p) {
    auto& ga = p[0]->grad_buffer();
    const auto& x = p[0]->value;
    for (Index i = 0; i < g.numel(); ++i) ga[i] += g[i] * df(x[i]);
  });
}

template <typename T>
T sigmoid(T x) {
  return x >= T(0) ? T(1) / (T(1) + std::exp(-x)) : std::exp(x) / (T(1) + std::exp(x));
}

template <typename T>
T softplus(T x) {
  return x > T(20) ? x : std::log1p(std::exp(x));
}

}  // namespace detail

template <typename T>
Var<T> relu(const Var<T>& a) {
  return detail::unary(a, [](T x) { return x > T(0) ? x : T(0); },
                       [](T x) { return x > T(0) ? T(1) : T(0); });
}

template <typename T>
Var<T> sigmoid(const Var<T>& a) {
  return detail::unary(a, [](T x) { return detail::sigmoid(x); },
                       [](T x) {
                         T s = detail::sigmoid(x);
                         return s * (T(1) - s);
                       });
}

template <typename T>
Var<T> silu(const Var<T>& a) {
  return detail::unary(a, [](T x) { return x * detail::sigmoid(x); },
                       [](T x) {
                         T s = detail::sigmoid(x);
                         return s * (T(1) + x * (T(1) - s));
                       });
}

template <typename T>
Var<T> softplus(const Var<T>& a) {
  return detail::unary(a, [](T x) { return detail::softplus(x); },
                       [](T x) { return detail::sigmoid(x); });
}

// y = -exp(x), used for the strictly negative state decay.
template <typename T>
Var<T> neg_exp(const Var<T>& a) {
  return detail::unary(a, [](T x) { return -std::exp(x); }, [](T x) { return -std::exp(x); });
}

template <typename T>
Var<T> sum(const Var<T>& a) {
  Tensor<T> out(Shape{1}, a.value().sum());
  return make_op_result<T>(std::move(out), {a}, [](const Tensor<T>& g, const NodePtrs<T>& p) {
    auto& ga = p[0]->grad_buffer();
    for (auto& v : ga.vec()) v += g[0];
  });
}

// Weighted sum with a constant tensor: sum(a * w). Handy for random
// projections in gradient checks.
template <typename T>
Var<T> dot_const(const Var<T>& a, const Tensor<T>& w) {
  a.value().check_same(w, "dot_const");
  T s = 0;
  for (Index i = 0; i < w.numel(); ++i) s += a.value()[i] * w[i];
  return make_op_result<T>(Tensor<T>(Shape{1}, s), {a},
                           [w](const Tensor<T>& g, const NodePtrs<T>& p) {
                             auto& ga = p[0]->grad_buffer();
                             for (Index i = 0; i < w.numel(); ++i) ga[i] += g[0] * w[i];
                           });
}

// ---------------------------------------------------------------------------
// Layout

// out[i] = a[src[i]]; the reverse pass scatters back.
template <typename T>
Var<T> gather(const Var<T>& a, Shape out_shape, std::vector<Index> src) {
  if (static_cast<Index>(src.size()) != numel_of(out_shape))
    throw ShapeError("gather: index count does not match output shape");
  Tensor<T> out(out_shape);
  for (std::size_t i = 0; i < src.size(); ++i) out[static_cast<Index>(i)] = a.value()[src[i]];
  return make_op_result<T>(std::move(out), {a},
                           [src = std::move(src)](const Tensor<T>& g, const NodePtrs<T>& p) {
                             auto& ga = p[0]->grad_buffer();
                             for (std::size_t i = 0; i < src.size(); ++i)
                               ga[src[i]] += g[static_cast<Index>(i)];
                           });
}

template <typename T>
Var<T> reshape(const Var<T>& a, Shape s) {
  Tensor<T> out = a.value().reshaped(s);
  return make_op_result<T>(std::move(out), {a}, [](const Tensor<T>& g, const NodePtrs<T>& p) {
    auto& ga = p[0]->grad_buffer();
    for (Index i = 0; i < g.numel(); ++i) ga[i] += g[i];
  });
}

// Concatenation along axis 1 of tensors sharing every other dimension.
template <typename T>
Var<T> concat_dim1(const std::vector<Var<T>>& xs) {
  if (xs.empty()) throw ShapeError("concat: no inputs");
  Shape s = xs[0].shape();
  if (s.size() < 2) throw ShapeError("concat: rank must be >= 2");
  const Index outer = s[0];
  Index inner = 1;
  for (std::size_t i = 2; i < s.size(); ++i) inner *= s[i];
  Index total = 0;
  std::vector<Index> widths;
  for (const auto& x : xs) {
    Shape t = x.shape();
    if (t.size() != s.size() || t[0] != s[0] ||
        !std::equal(t.begin() + 2, t.end(), s.begin() + 2))
      throw ShapeError("concat: incompatible shapes " + to_string(s) + " and " + to_string(t));
    widths.push_back(t[1]);
    total += t[1];
  }
  Shape os = s;
  os[1] = total;
  Tensor<T> out(os);
  Index off = 0;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    const auto& v = xs[k].value();
    for (Index b = 0; b < outer; ++b)
      std::copy_n(v.data() + b * widths[k] * inner, widths[k] * inner,
                  out.data() + (b * total + off) * inner);
    off += widths[k];
  }
  return make_op_result<T>(
      std::move(out), xs, [widths, outer, inner, total](const Tensor<T>& g, const NodePtrs<T>& p) {
        Index off = 0;
        for (std::size_t k = 0; k < p.size(); ++k) {
          if (p[k]->requires_grad) {
            auto& gk = p[k]->grad_buffer();
            for (Index b = 0; b < outer; ++b) {
              const T* src = g.data() + (b * total + off) * inner;
              T* dst = gk.data() + b * widths[k] * inner;
              for (Index i = 0; i < widths[k] * inner; ++i) dst[i] += src[i];
            }
          }
          off += widths[k];
        }
      });
}

// Slice [start, start+len) of the last axis.
template <typename T>
Var<T> slice_last(const Var<T>& a, Index start, Index len) {
  const Shape& s = a.shape();
  const Index d = s.back();
  if (start < 0 || len < 0 || start + len > d) throw ShapeError("slice_last: out of range");
  const Index rows = a.value().numel() / d;
  Shape os = s;
  os.back() = len;
  Tensor<T> out(os);
  for (Index r = 0; r < rows; ++r)
    std::copy_n(a.value().data() + r * d + start, len, out.data() + r * len);
  return make_op_result<T>(std::move(out), {a},
                           [rows, d, start, len](const Tensor<T>& g, const NodePtrs<T>& p) {
                             auto& ga = p[0]->grad_buffer();
                             for (Index r = 0; r < rows; ++r)
                               for (Index i = 0; i < len; ++i)
                                 ga[r * d + start + i] += g[r * len + i];
                           });
}

// Reverse axis 1 of a (N, L, D) sequence batch.
template <typename T>
Var<T> flip_seq(const Var<T>& a) {
  require_rank(a.shape(), 3, "flip_seq");
  const Index n = a.dim(0), l = a.dim(1), d = a.dim(2);
  std::vector<Index> src(static_cast<std::size_t>(n * l * d));
  for (Index i = 0; i < n; ++i)
    for (Index t = 0; t < l; ++t)
      for (Index c = 0; c < d; ++c) src[(i * l + t) * d + c] = (i * l + (l - 1 - t)) * d + c;
  return gather(a, a.shape(), std::move(src));
}

// ---------------------------------------------------------------------------
// Convolution

namespace detail {

template <typename T>
void im2col(const T* img, Index c, Index h, Index w, Index k, Index pad, Index dil, Index ho,
            Index wo, T* cols) {
  for (Index ch = 0; ch < c; ++ch)
    for (Index ki = 0; ki < k; ++ki)
      for (Index kj = 0; kj < k; ++kj) {
        T* row = cols + ((ch * k + ki) * k + kj) * ho * wo;
        for (Index oh = 0; oh < ho; ++oh) {
          const Index ih = oh - pad + ki * dil;
          T* dst = row + oh * wo;
          if (ih < 0 || ih >= h) {
            std::fill_n(dst, wo, T(0));
            continue;
          }
          const T* src = img + (ch * h + ih) * w;
          for (Index ow = 0; ow < wo; ++ow) {
            const Index iw = ow - pad + kj * dil;
            dst[ow] = (iw >= 0 && iw < w) ? src[iw] : T(0);
          }
        }
      }
}

template <typename T>
void col2im(const T* cols, Index c, Index h, Index w, Index k, Index pad, Index dil, Index ho,
            Index wo, T* img) {
  for (Index ch = 0; ch < c; ++ch)
    for (Index ki = 0; ki < k; ++ki)
      for (Index kj = 0; kj < k; ++kj) {
        const T* row = cols + ((ch * k + ki) * k + kj) * ho * wo;
        for (Index oh = 0; oh < ho; ++oh) {
          const Index ih = oh - pad + ki * dil;
          if (ih < 0 || ih >= h) continue;
          const T* src = row + oh * wo;
          T* dst = img + (ch * h + ih) * w;
          for (Index ow = 0; ow < wo; ++ow) {
            const Index iw = ow - pad + kj * dil;
            if (iw >= 0 && iw < w) dst[iw] += src[ow];
          }
        }
      }
}

}  // namespace detail

struct Conv2dOptions {
  Index padding = 0;
  Index dilation = 1;
};

// Stride-1 2-D convolution, x (B, Cin, H, W), weight (Cout, Cin, k, k),
// optional bias (Cout).
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const std::optional<Var<T>>& bias,
              Conv2dOptions opt = {}) {
  require_rank(x.shape(), 4, "conv2d input");
  require_rank(weight.shape(), 4, "conv2d weight");
  const Index bsz = x.dim(0), cin = x.dim(1), h = x.dim(2), w = x.dim(3);
  const Index cout = weight.dim(0), k = weight.dim(2);
  if (weight.dim(1) != cin)
    throw ShapeError("conv2d: input has " + std::to_string(cin) + " channels, weight expects " +
                     std::to_string(weight.dim(1)));
  if (weight.dim(3) != k) throw ShapeError("conv2d: kernel must be square");
  if (bias && (bias->shape() != Shape{cout})) throw ShapeError("conv2d: bias shape mismatch");
  const Index ho = h + 2 * opt.padding - opt.dilation * (k - 1);
  const Index wo = w + 2 * opt.padding - opt.dilation * (k - 1);
  if (ho < 1 || wo < 1) throw ShapeError("conv2d: output would be empty");
  const bool pointwise = (k == 1 && opt.padding == 0);
  const Index kk = cin * k * k, hw = ho * wo;

  Tensor<T> out(Shape{bsz, cout, ho, wo});
  std::vector<T> cols(pointwise ? 0 : static_cast<std::size_t>(kk * hw));
  auto wm = gemm::view(weight.value().data(), cout, kk);
  for (Index b = 0; b < bsz; ++b) {
    const T* img = x.value().data() + b * cin * h * w;
    const T* colp = img;
    if (!pointwise) {
      detail::im2col(img, cin, h, w, k, opt.padding, opt.dilation, ho, wo, cols.data());
      colp = cols.data();
    }
    auto om = gemm::view(out.data() + b * cout * hw, cout, hw);
    om.noalias() = wm * gemm::view(colp, kk, hw);
    if (bias) {
      for (Index c = 0; c < cout; ++c) om.row(c).array() += (*bias).value()[c];
    }
  }

  std::vector<Var<T>> inputs{x, weight};
  if (bias) inputs.push_back(*bias);
  return make_op_result<T>(
      std::move(out), inputs,
      [=](const Tensor<T>& g, const NodePtrs<T>& p) {
        const auto& xv = p[0]->value;
        const auto& wv = p[1]->value;
        std::vector<T> colbuf(pointwise ? 0 : static_cast<std::size_t>(kk * hw));
        auto wm = gemm::view(wv.data(), cout, kk);
        for (Index b = 0; b < bsz; ++b) {
          auto gm = gemm::view(g.data() + b * cout * hw, cout, hw);
          const T* img = xv.data() + b * cin * h * w;
          if (p[1]->requires_grad) {
            const T* colp = img;
            if (!pointwise) {
              detail::im2col(img, cin, h, w, k, opt.padding, opt.dilation, ho, wo, colbuf.data());
              colp = colbuf.data();
            }
            auto gw = gemm::view(p[1]->grad_buffer().data(), cout, kk);
            gw.noalias() += gm * gemm::view(colp, kk, hw).transpose();
          }
          if (p[0]->requires_grad) {
            T* gx = p[0]->grad_buffer().data() + b * cin * h * w;
            if (pointwise) {
              gemm::view(gx, kk, hw).noalias() += wm.transpose() * gm;
            } else {
              gemm::view(colbuf.data(), kk, hw).noalias() = wm.transpose() * gm;
              detail::col2im(colbuf.data(), cin, h, w, k, opt.padding, opt.dilation, ho, wo, gx);
            }
          }
          if (p.size() > 2 && p[2]->requires_grad) {
            auto& gbias = p[2]->grad_buffer();
            for (Index c = 0; c < cout; ++c) gbias[c] += gm.row(c).sum();
          }
        }
      });
}

// ---------------------------------------------------------------------------
// Normalization

struct BatchNormOptions {
  bool training = true;
  double momentum = 0.1;
  double eps = 1e-5;
};

// Per-channel batch normalization of a (B, C, H, W) map. In training mode the
// batch statistics normalize and the running buffers are updated in place
// (unbiased variance, as conventional); in eval mode the running buffers
// normalize.
template <typename T>
Var<T> batch_norm2d(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta,
                    Tensor<T>& running_mean, Tensor<T>& running_var, BatchNormOptions opt) {
  require_rank(x.shape(), 4, "batch_norm2d");
  const Index bsz = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  if (gamma.shape() != Shape{c} || beta.shape() != Shape{c} || running_mean.shape() != Shape{c} ||
      running_var.shape() != Shape{c})
    throw ShapeError("batch_norm2d: parameter shape mismatch for " + std::to_string(c) +
                     " channels");
  const Index n = bsz * hw;
  std::vector<T> mean(c), invstd(c);
  const auto& xv = x.value();
  for (Index ch = 0; ch < c; ++ch) {
    if (opt.training) {
      double s = 0, ss = 0;
      for (Index b = 0; b < bsz; ++b) {
        const T* px = xv.data() + (b * c + ch) * hw;
        for (Index i = 0; i < hw; ++i) s += px[i];
      }
      const double m = s / static_cast<double>(n);
      for (Index b = 0; b < bsz; ++b) {
        const T* px = xv.data() + (b * c + ch) * hw;
        for (Index i = 0; i < hw; ++i) ss += (px[i] - m) * (px[i] - m);
      }
      const double var = ss / static_cast<double>(n);
      mean[ch] = static_cast<T>(m);
      invstd[ch] = static_cast<T>(1.0 / std::sqrt(var + opt.eps));
      const double unbiased = n > 1 ? var * static_cast<double>(n) / static_cast<double>(n - 1) : var;
      running_mean[ch] = static_cast<T>((1 - opt.momentum) * running_mean[ch] + opt.momentum * m);
      running_var[ch] =
          static_cast<T>((1 - opt.momentum) * running_var[ch] + opt.momentum * unbiased);
    } else {
      mean[ch] = running_mean[ch];
      invstd[ch] = static_cast<T>(1.0 / std::sqrt(static_cast<double>(running_var[ch]) + opt.eps));
    }
  }
  Tensor<T> xhat(x.shape());
  Tensor<T> out(x.shape());
  for (Index b = 0; b < bsz; ++b)
    for (Index ch = 0; ch < c; ++ch) {
      const Index off = (b * c + ch) * hw;
      const T gm = gamma.value()[ch], bt = beta.value()[ch];
      for (Index i = 0; i < hw; ++i) {
        const T xh = (xv[off + i] - mean[ch]) * invstd[ch];
        xhat[off + i] = xh;
        out[off + i] = gm * xh + bt;
      }
    }
  const bool training = opt.training;
  return make_op_result<T>(
      std::move(out), {x, gamma, beta},
      [xhat = std::move(xhat), invstd, bsz, c, hw, n, training](const Tensor<T>& g,
                                                                const NodePtrs<T>& p) {
        const auto& gmv = p[1]->value;
        for (Index ch = 0; ch < c; ++ch) {
          double sg = 0, sgx = 0;
          for (Index b = 0; b < bsz; ++b) {
            const Index off = (b * c + ch) * hw;
            for (Index i = 0; i < hw; ++i) {
              sg += g[off + i];
              sgx += g[off + i] * xhat[off + i];
            }
          }
          if (p[1]->requires_grad) p[1]->grad_buffer()[ch] += static_cast<T>(sgx);
          if (p[2]->requires_grad) p[2]->grad_buffer()[ch] += static_cast<T>(sg);
          if (!p[0]->requires_grad) continue;
          auto& gx = p[0]->grad_buffer();
          const T scale = gmv[ch] * invstd[ch];
          if (training) {
            const T mg = static_cast<T>(sg / static_cast<double>(n));
            const T mgx = static_cast<T>(sgx / static_cast<double>(n));
            for (Index b = 0; b < bsz; ++b) {
              const Index off = (b * c + ch) * hw;
              for (Index i = 0; i < hw; ++i)
                gx[off + i] += scale * (g[off + i] - mg - xhat[off + i] * mgx);
            }
          } else {
            for (Index b = 0; b < bsz; ++b) {
              const Index off = (b * c + ch) * hw;
              for (Index i = 0; i < hw; ++i) gx[off + i] += scale * g[off + i];
            }
          }
        }
      });
}

// RMS normalization over the last axis with a learned gain.
template <typename T>
Var<T> rms_norm(const Var<T>& x, const Var<T>& weight, T eps = T(1e-5)) {
  const Index d = x.shape().back();
  if (weight.shape() != Shape{d}) throw ShapeError("rms_norm: weight shape mismatch");
  const Index rows = x.value().numel() / d;
  Tensor<T> out(x.shape());
  std::vector<T> inv(static_cast<std::size_t>(rows));
  for (Index r = 0; r < rows; ++r) {
    const T* px = x.value().data() + r * d;
    T ms = 0;
    for (Index i = 0; i < d; ++i) ms += px[i] * px[i];
    ms /= static_cast<T>(d);
    inv[r] = T(1) / std::sqrt(ms + eps);
    for (Index i = 0; i < d; ++i) out[r * d + i] = px[i] * inv[r] * weight.value()[i];
  }
  return make_op_result<T>(
      std::move(out), {x, weight},
      [inv = std::move(inv), rows, d](const Tensor<T>& g, const NodePtrs<T>& p) {
        const auto& xv = p[0]->value;
        const auto& wv = p[1]->value;
        for (Index r = 0; r < rows; ++r) {
          const T* px = xv.data() + r * d;
          const T* pg = g.data() + r * d;
          if (p[1]->requires_grad) {
            auto& gw = p[1]->grad_buffer();
            for (Index i = 0; i < d; ++i) gw[i] += pg[i] * px[i] * inv[r];
          }
          if (p[0]->requires_grad) {
            T dot = 0;
            for (Index i = 0; i < d; ++i) dot += pg[i] * wv[i] * px[i];
            const T k = inv[r] * inv[r] * inv[r] * dot / static_cast<T>(d);
            T* gx = p[0]->grad_buffer().data() + r * d;
            for (Index i = 0; i < d; ++i) gx[i] += pg[i] * wv[i] * inv[r] - px[i] * k;
          }
        }
      });
}

// ---------------------------------------------------------------------------
// Pooling and resampling

template <typename T>
Var<T> max_pool2x2(const Var<T>& x) {
  require_rank(x.shape(), 4, "max_pool2x2");
  const Index bsz = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const Index ho = h / 2, wo = w / 2;
  if (ho < 1 || wo < 1) throw ShapeError("max_pool2x2: input smaller than 2x2");
  Tensor<T> out(Shape{bsz, c, ho, wo});
  std::vector<Index> arg(static_cast<std::size_t>(out.numel()));
  const auto& xv = x.value();
  for (Index bc = 0; bc < bsz * c; ++bc)
    for (Index i = 0; i < ho; ++i)
      for (Index j = 0; j < wo; ++j) {
        Index best = bc * h * w + (2 * i) * w + 2 * j;
        for (Index di = 0; di < 2; ++di)
          for (Index dj = 0; dj < 2; ++dj) {
            const Index idx = bc * h * w + (2 * i + di) * w + 2 * j + dj;
            if (xv[idx] > xv[best]) best = idx;
          }
        const Index o = (bc * ho + i) * wo + j;
        out[o] = xv[best];
        arg[o] = best;
      }
  return make_op_result<T>(std::move(out), {x},
                           [arg = std::move(arg)](const Tensor<T>& g, const NodePtrs<T>& p) {
                             auto& gx = p[0]->grad_buffer();
                             for (std::size_t o = 0; o < arg.size(); ++o)
                               gx[arg[o]] += g[static_cast<Index>(o)];
                           });
}

namespace detail {

struct LerpTap {
  Index i0, i1;
  double w0, w1;
};

// Half-pixel-centre bilinear taps (align_corners = false).
inline std::vector<LerpTap> lerp_taps(Index in, Index out) {
  std::vector<LerpTap> taps(static_cast<std::size_t>(out));
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  for (Index o = 0; o < out; ++o) {
    double src = (static_cast<double>(o) + 0.5) * scale - 0.5;
    if (src < 0) src = 0;
    Index i0 = static_cast<Index>(std::floor(src));
    if (i0 > in - 1) i0 = in - 1;
    const Index i1 = std::min(i0 + 1, in - 1);
    const double l1 = src - static_cast<double>(i0);
    taps[static_cast<std::size_t>(o)] = {i0, i1, 1.0 - l1, l1};
  }
  return taps;
}

}  // namespace detail

template <typename T>
Var<T> resize_bilinear(const Var<T>& x, Index out_h, Index out_w) {
  require_rank(x.shape(), 4, "resize_bilinear");
  const Index bsz = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  auto ty = detail::lerp_taps(h, out_h);
  auto tx = detail::lerp_taps(w, out_w);
  Tensor<T> out(Shape{bsz, c, out_h, out_w});
  const auto& xv = x.value();
  for (Index bc = 0; bc < bsz * c; ++bc) {
    const T* src = xv.data() + bc * h * w;
    T* dst = out.data() + bc * out_h * out_w;
    for (Index i = 0; i < out_h; ++i) {
      const auto& a = ty[i];
      for (Index j = 0; j < out_w; ++j) {
        const auto& b = tx[j];
        dst[i * out_w + j] = static_cast<T>(
            a.w0 * (b.w0 * src[a.i0 * w + b.i0] + b.w1 * src[a.i0 * w + b.i1]) +
            a.w1 * (b.w0 * src[a.i1 * w + b.i0] + b.w1 * src[a.i1 * w + b.i1]));
      }
    }
  }
  return make_op_result<T>(
      std::move(out), {x},
      [ty = std::move(ty), tx = std::move(tx), bsz, c, h, w, out_h, out_w](const Tensor<T>& g,
                                                                         const NodePtrs<T>& p) {
        auto& gx = p[0]->grad_buffer();
        for (Index bc = 0; bc < bsz * c; ++bc) {
          T* dst = gx.data() + bc * h * w;
          const T* src = g.data() + bc * out_h * out_w;
          for (Index i = 0; i < out_h; ++i) {
            const auto& a = ty[i];
            for (Index j = 0; j < out_w; ++j) {
              const auto& b = tx[j];
              const double v = src[i * out_w + j];
              dst[a.i0 * w + b.i0] += static_cast<T>(v * a.w0 * b.w0);
              dst[a.i0 * w + b.i1] += static_cast<T>(v * a.w0 * b.w1);
              dst[a.i1 * w + b.i0] += static_cast<T>(v * a.w1 * b.w0);
              dst[a.i1 * w + b.i1] += static_cast<T>(v * a.w1 * b.w1);
            }
          }
        }
      });
}

template <typename T>
Var<T> upsample2x_bilinear(const Var<T>& x) {
  return resize_bilinear(x, 2 * x.dim(2), 2 * x.dim(3));
}

// out[b, c, :, :] = x[b, c, :, :] * s[b, c]
template <typename T>
Var<T> channel_scale(const Var<T>& x, const Var<T>& s) {
  require_rank(x.shape(), 4, "channel_scale");
  const Index bsz = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  if (s.shape() != Shape{bsz, c}) throw ShapeError("channel_scale: scale must be (B, C)");
  Tensor<T> out(x.shape());
  for (Index bc = 0; bc < bsz * c; ++bc)
    for (Index i = 0; i < hw; ++i) out[bc * hw + i] = x.value()[bc * hw + i] * s.value()[bc];
  return make_op_result<T>(std::move(out), {x, s},
                           [bsz, c, hw](const Tensor<T>& g, const NodePtrs<T>& p) {
                             for (Index bc = 0; bc < bsz * c; ++bc) {
                               if (p[0]->requires_grad) {
                                 auto& gx = p[0]->grad_buffer();
                                 for (Index i = 0; i < hw; ++i)
                                   gx[bc * hw + i] += g[bc * hw + i] * p[1]->value[bc];
                               }
                               if (p[1]->requires_grad) {
                                 T acc = 0;
                                 for (Index i = 0; i < hw; ++i)
                                   acc += g[bc * hw + i] * p[0]->value[bc * hw + i];
                                 p[1]->grad_buffer()[bc] += acc;
                               }
                             }
                           });
}

// ---------------------------------------------------------------------------
// Dense and sequence ops

// y = x W^T (+ b) applied to the last axis; weight is (Dout, Din).
template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& weight, const std::optional<Var<T>>& bias = {}) {
  require_rank(weight.shape(), 2, "linear weight");
  const Index din = x.shape().back(), dout = weight.dim(0);
  if (weight.dim(1) != din)
    throw ShapeError("linear: input width " + std::to_string(din) + " vs weight " +
                     to_string(weight.shape()));
  if (bias && bias->shape() != Shape{dout}) throw ShapeError("linear: bias shape mismatch");
  const Index rows = x.value().numel() / din;
  Shape os = x.shape();
  os.back() = dout;
  Tensor<T> out(os);
  auto om = gemm::view(out.data(), rows, dout);
  om.noalias() = gemm::view(x.value().data(), rows, din) *
                 gemm::view(weight.value().data(), dout, din).transpose();
  if (bias)
    for (Index r = 0; r < rows; ++r)
      for (Index j = 0; j < dout; ++j) om(r, j) += bias->value()[j];
  std::vector<Var<T>> inputs{x, weight};
  if (bias) inputs.push_back(*bias);
  return make_op_result<T>(std::move(out), inputs,
                           [rows, din, dout](const Tensor<T>& g, const NodePtrs<T>& p) {
                             auto gm = gemm::view(g.data(), rows, dout);
                             if (p[0]->requires_grad)
                               gemm::view(p[0]->grad_buffer().data(), rows, din).noalias() +=
                                   gm * gemm::view(p[1]->value.data(), dout, din);
                             if (p[1]->requires_grad)
                               gemm::view(p[1]->grad_buffer().data(), dout, din).noalias() +=
                                   gm.transpose() * gemm::view(p[0]->value.data(), rows, din);
                             if (p.size() > 2 && p[2]->requires_grad) {
                               auto& gb = p[2]->grad_buffer();
                               for (Index r = 0; r < rows; ++r)
                                 for (Index j = 0; j < dout; ++j) gb[j] += gm(r, j);
                             }
                           });
}

// Causal depthwise convolution over the length axis of (N, L, D):
// out[n, t, d] = b[d] + sum_j w[d, j] * x[n, t - (k - 1) + j, d].
template <typename T>
Var<T> causal_dwconv1d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias) {
  require_rank(x.shape(), 3, "causal_dwconv1d");
  const Index n = x.dim(0), l = x.dim(1), d = x.dim(2), k = weight.dim(1);
  if (weight.shape() != Shape{d, k} || bias.shape() != Shape{d})
    throw ShapeError("causal_dwconv1d: parameter shape mismatch");
  Tensor<T> out(x.shape());
  const auto& xv = x.value();
  const auto& wv = weight.value();
  for (Index s = 0; s < n; ++s)
    for (Index t = 0; t < l; ++t)
      for (Index c = 0; c < d; ++c) {
        T acc = bias.value()[c];
        for (Index j = 0; j < k; ++j) {
          const Index src = t - (k - 1) + j;
          if (src >= 0) acc += wv[c * k + j] * xv[(s * l + src) * d + c];
        }
        out[(s * l + t) * d + c] = acc;
      }
  return make_op_result<T>(
      std::move(out), {x, weight, bias}, [n, l, d, k](const Tensor<T>& g, const NodePtrs<T>& p) {
        const auto& xv = p[0]->value;
        const auto& wv = p[1]->value;
        for (Index s = 0; s < n; ++s)
          for (Index t = 0; t < l; ++t)
            for (Index c = 0; c < d; ++c) {
              const T gv = g[(s * l + t) * d + c];
              if (p[2]->requires_grad) p[2]->grad_buffer()[c] += gv;
              for (Index j = 0; j < k; ++j) {
                const Index src = t - (k - 1) + j;
                if (src < 0) continue;
                if (p[0]->requires_grad) p[0]->grad_buffer()[(s * l + src) * d + c] += wv[c * k + j] * gv;
                if (p[1]->requires_grad) p[1]->grad_buffer()[c * k + j] += xv[(s * l + src) * d + c] * gv;
              }
            }
      });
}

// Adds a per-feature bias (broadcast over leading axes) to the last axis.
template <typename T>
Var<T> add_bias_last(const Var<T>& x, const Var<T>& b) {
  const Index d = x.shape().back();
  if (b.shape() != Shape{d}) throw ShapeError("add_bias_last: bias shape mismatch");
  Tensor<T> out = x.value();
  const Index rows = out.numel() / d;
  for (Index r = 0; r < rows; ++r)
    for (Index i = 0; i < d; ++i) out[r * d + i] += b.value()[i];
  return make_op_result<T>(std::move(out), {x, b}, [rows, d](const Tensor<T>& g, const NodePtrs<T>& p) {
    if (p[0]->requires_grad) p[0]->accumulate(g);
    if (p[1]->requires_grad) {
      auto& gb = p[1]->grad_buffer();
      for (Index r = 0; r < rows; ++r)
        for (Index i = 0; i < d; ++i) gb[i] += g[r * d + i];
    }
  });
}

}  // namespace vfgs::ops
