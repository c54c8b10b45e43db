#pragma once

// Selective state-space kernel: the sequential recurrence, its chunk-parallel
// realization, and the gated Mamba2-style block built around it.
//
// Per (batch, head) lane with P channels and N state dims:
//   h_t = exp(dt_t A) h_{t-1} + dt_t x_t B_t^T     (h is P x N, h_0 = 0)
//   y_t = h_t C_t + D x_t

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "vfgs/nn/module.hpp"

namespace vfgs::ssd {

struct ScanShape {
  Index batch, length, heads, head_dim, state;
};

// Validates x (B,L,H,P), dt (B,L,H), A (H), Bm/Cm (B,L,N), D (H).
template <typename T>
ScanShape check_scan_inputs(const Tensor<T>& x, const Tensor<T>& dt, const Tensor<T>& a,
                            const Tensor<T>& bm, const Tensor<T>& cm, const Tensor<T>& d) {
  require_rank(x.shape(), 4, "ssm_scan x");
  ScanShape s{x.dim(0), x.dim(1), x.dim(2), x.dim(3), bm.rank() == 3 ? bm.dim(2) : 0};
  if (dt.shape() != Shape{s.batch, s.length, s.heads})
    throw ShapeError("ssm_scan: dt must be (B, L, H), got " + to_string(dt.shape()));
  if (a.shape() != Shape{s.heads} || d.shape() != Shape{s.heads})
    throw ShapeError("ssm_scan: A and D must be (H)");
  if (bm.shape() != Shape{s.batch, s.length, s.state} || cm.shape() != bm.shape())
    throw ShapeError("ssm_scan: B and C must be (B, L, N)");
  for (Index i = 0; i < dt.numel(); ++i)
    if (std::isnan(dt[i]))
      throw NumericError("ssm_scan: dt is NaN at flat index " + std::to_string(i));
    else if (!(dt[i] > T(0)))
      throw ContractError("ssm_scan: dt must be strictly positive (post-softplus), found " +
                          std::to_string(static_cast<double>(dt[i])) + " at flat index " + std::to_string(i));
  return s;
}

// Reference implementation: a literal step-by-step unroll of the recurrence.
template <typename T>
Tensor<T> ssm_scan_sequential(const Tensor<T>& x, const Tensor<T>& dt, const Tensor<T>& a,
                              const Tensor<T>& bm, const Tensor<T>& cm, const Tensor<T>& d) {
  const auto s = check_scan_inputs(x, dt, a, bm, cm, d);
  const Index L = s.length, H = s.heads, P = s.head_dim, N = s.state;
  Tensor<T> y(x.shape());
  std::vector<T> h(static_cast<std::size_t>(P * N));
  for (Index b = 0; b < s.batch; ++b)
    for (Index hd = 0; hd < H; ++hd) {
      std::fill(h.begin(), h.end(), T(0));
      for (Index t = 0; t < L; ++t) {
        const T step = dt[(b * L + t) * H + hd];
        const T decay = std::exp(step * a[hd]);
        const T* xt = x.data() + ((b * L + t) * H + hd) * P;
        const T* bt = bm.data() + (b * L + t) * N;
        const T* ct = cm.data() + (b * L + t) * N;
        T* yt = y.data() + ((b * L + t) * H + hd) * P;
        for (Index p = 0; p < P; ++p) {
          T acc = 0;
          for (Index n = 0; n < N; ++n) {
            T& hv = h[static_cast<std::size_t>(p * N + n)];
            hv = decay * hv + step * xt[p] * bt[n];
            acc += ct[n] * hv;
          }
          yt[p] = acc + d[hd] * xt[p];
        }
      }
    }
  return y;
}

// Chunk-parallel form. Inside a chunk of length Q with inclusive cumulative
// log-decay s_i = sum_{k<=i} dt_k A:
//   y_i = sum_{j<=i} exp(s_i - s_j) (C_i . B_j) dt_j x_j + exp(s_i) h_in C_i + D x_i
//   h_out = exp(s_{Q-1}) h_in + sum_j exp(s_{Q-1} - s_j) dt_j x_j B_j^T
// and only h_out crosses chunk boundaries.
template <typename T>
Tensor<T> ssm_scan_chunked(const Tensor<T>& x, const Tensor<T>& dt, const Tensor<T>& a,
                           const Tensor<T>& bm, const Tensor<T>& cm, const Tensor<T>& d, Index chunk_len) {
  if (chunk_len < 1) throw ConfigError("ssm_scan_chunked: chunk_len must be >= 1");
  const auto s = check_scan_inputs(x, dt, a, bm, cm, d);
  const Index L = s.length, H = s.heads, P = s.head_dim, N = s.state;
  Tensor<T> y(x.shape());
  std::vector<T> cb(static_cast<std::size_t>(chunk_len * chunk_len));
  std::vector<T> cum(static_cast<std::size_t>(chunk_len));
  std::vector<T> h(static_cast<std::size_t>(H * P * N));
  std::vector<T> ch(static_cast<std::size_t>(P));
  for (Index b = 0; b < s.batch; ++b) {
    std::fill(h.begin(), h.end(), T(0));
    for (Index start = 0; start < L; start += chunk_len) {
      const Index q = std::min(chunk_len, L - start);
      // C_i . B_j is shared by every head of this chunk.
      for (Index i = 0; i < q; ++i)
        for (Index j = 0; j <= i; ++j) {
          const T* ci = cm.data() + (b * L + start + i) * N;
          const T* bj = bm.data() + (b * L + start + j) * N;
          T acc = 0;
          for (Index n = 0; n < N; ++n) acc += ci[n] * bj[n];
          cb[static_cast<std::size_t>(i * chunk_len + j)] = acc;
        }
      for (Index hd = 0; hd < H; ++hd) {
        T run = 0;
        for (Index i = 0; i < q; ++i) {
          run += dt[(b * L + start + i) * H + hd] * a[hd];
          cum[static_cast<std::size_t>(i)] = run;
        }
        T* hs = h.data() + hd * P * N;
        for (Index i = 0; i < q; ++i) {
          const Index t = start + i;
          const T* ci = cm.data() + (b * L + t) * N;
          const T carry = std::exp(cum[static_cast<std::size_t>(i)]);
          for (Index p = 0; p < P; ++p) {
            T acc = 0;
            for (Index n = 0; n < N; ++n) acc += hs[p * N + n] * ci[n];
            ch[static_cast<std::size_t>(p)] = carry * acc;
          }
          T* yt = y.data() + ((b * L + t) * H + hd) * P;
          const T* xi = x.data() + ((b * L + t) * H + hd) * P;
          for (Index p = 0; p < P; ++p) yt[p] = ch[static_cast<std::size_t>(p)] + d[hd] * xi[p];
          for (Index j = 0; j <= i; ++j) {
            const Index tj = start + j;
            const T w = std::exp(cum[static_cast<std::size_t>(i)] - cum[static_cast<std::size_t>(j)]) *
                        cb[static_cast<std::size_t>(i * chunk_len + j)] * dt[(b * L + tj) * H + hd];
            const T* xj = x.data() + ((b * L + tj) * H + hd) * P;
            for (Index p = 0; p < P; ++p) yt[p] += w * xj[p];
          }
        }
        const T last = cum[static_cast<std::size_t>(q - 1)];
        const T total = std::exp(last);
        for (Index k = 0; k < P * N; ++k) hs[k] *= total;
        for (Index j = 0; j < q; ++j) {
          const Index tj = start + j;
          const T w = std::exp(last - cum[static_cast<std::size_t>(j)]) * dt[(b * L + tj) * H + hd];
          const T* xj = x.data() + ((b * L + tj) * H + hd) * P;
          const T* bj = bm.data() + (b * L + tj) * N;
          for (Index p = 0; p < P; ++p) {
            const T wx = w * xj[p];
            for (Index n = 0; n < N; ++n) hs[p * N + n] += wx * bj[n];
          }
        }
      }
    }
  }
  return y;
}

struct ScanOptions {
  bool chunked = true;
  Index chunk_len = 32;
};

// Differentiable scan. The forward pass uses the configured realization; the
// reverse pass is the adjoint of the sequential recurrence, recomputing each
// lane's states instead of storing them.
template <typename T>
Var<T> ssm_scan(const Var<T>& x, const Var<T>& dt, const Var<T>& a, const Var<T>& bm, const Var<T>& cm,
                const Var<T>& d, ScanOptions opt = {}) {
  Tensor<T> y = opt.chunked ? ssm_scan_chunked(x.value(), dt.value(), a.value(), bm.value(), cm.value(),
                                               d.value(), opt.chunk_len)
                            : ssm_scan_sequential(x.value(), dt.value(), a.value(), bm.value(), cm.value(),
                                                  d.value());
  return make_op_result<T>(std::move(y), {x, dt, a, bm, cm, d}, [](const Tensor<T>& g, const ops::NodePtrs<T>& p) {
    const auto& xv = p[0]->value;
    const auto& dtv = p[1]->value;
    const auto& av = p[2]->value;
    const auto& bv = p[3]->value;
    const auto& cv = p[4]->value;
    const auto& dv = p[5]->value;
    const Index B = xv.dim(0), L = xv.dim(1), H = xv.dim(2), P = xv.dim(3), N = bv.dim(2);
    Tensor<T> gx(xv.shape()), gdt(dtv.shape()), ga(av.shape()), gb(bv.shape()), gc(cv.shape()), gd(dv.shape());
    std::vector<T> hs(static_cast<std::size_t>((L + 1) * P * N));
    std::vector<T> gh(static_cast<std::size_t>(P * N));
    for (Index b = 0; b < B; ++b)
      for (Index hd = 0; hd < H; ++hd) {
        // hs[t + 1] holds h_t; hs[0] is the zero initial state.
        std::fill(hs.begin(), hs.begin() + P * N, T(0));
        for (Index t = 0; t < L; ++t) {
          const T step = dtv[(b * L + t) * H + hd];
          const T decay = std::exp(step * av[hd]);
          const T* xt = xv.data() + ((b * L + t) * H + hd) * P;
          const T* bt = bv.data() + (b * L + t) * N;
          const T* prev = hs.data() + t * P * N;
          T* cur = hs.data() + (t + 1) * P * N;
          for (Index pp = 0; pp < P; ++pp)
            for (Index n = 0; n < N; ++n) cur[pp * N + n] = decay * prev[pp * N + n] + step * xt[pp] * bt[n];
        }
        std::fill(gh.begin(), gh.end(), T(0));
        for (Index t = L - 1; t >= 0; --t) {
          const T step = dtv[(b * L + t) * H + hd];
          const T decay = std::exp(step * av[hd]);
          const T* xt = xv.data() + ((b * L + t) * H + hd) * P;
          const T* bt = bv.data() + (b * L + t) * N;
          const T* ct = cv.data() + (b * L + t) * N;
          const T* gy = g.data() + ((b * L + t) * H + hd) * P;
          const T* ht = hs.data() + (t + 1) * P * N;
          const T* hprev = hs.data() + t * P * N;
          T* gxt = gx.data() + ((b * L + t) * H + hd) * P;
          T* gbt = gb.data() + (b * L + t) * N;
          T* gct = gc.data() + (b * L + t) * N;
          T gdt_acc = 0, ga_acc = 0, gd_acc = 0;
          for (Index pp = 0; pp < P; ++pp) {
            gd_acc += gy[pp] * xt[pp];
            T gx_acc = dv[hd] * gy[pp];
            for (Index n = 0; n < N; ++n) {
              const std::size_t k = static_cast<std::size_t>(pp * N + n);
              gh[k] += gy[pp] * ct[n];
              gct[n] += gy[pp] * ht[k];
              gx_acc += step * gh[k] * bt[n];
              gbt[n] += step * gh[k] * xt[pp];
              gdt_acc += gh[k] * (xt[pp] * bt[n] + av[hd] * decay * hprev[k]);
              ga_acc += gh[k] * step * decay * hprev[k];
              gh[k] *= decay;
            }
            gxt[pp] += gx_acc;
          }
          gdt[(b * L + t) * H + hd] += gdt_acc;
          ga[hd] += ga_acc;
          gd[hd] += gd_acc;
        }
      }
    const Tensor<T>* grads[] = {&gx, &gdt, &ga, &gb, &gc, &gd};
    for (std::size_t i = 0; i < 6; ++i)
      if (p[i]->requires_grad) p[i]->accumulate(*grads[i]);
  });
}

// ---------------------------------------------------------------------------
// Mamba2-style block

struct SSDConfig {
  Index d_model = 512;
  Index d_state = 64;
  Index head_dim = 64;
  Index expand = 2;
  Index conv_kernel = 4;
  Index chunk_len = 32;
  bool chunked = true;
  double dt_min = 1e-3;
  double dt_max = 0.1;
  double a_init_min = 1.0;
  double a_init_max = 16.0;

  Index d_inner() const { return expand * d_model; }
  Index n_heads() const { return d_inner() / head_dim; }

  void validate() const {
    if (d_model < 1 || d_state < 1 || head_dim < 1 || expand < 1 || conv_kernel < 1)
      throw ConfigError("SSD config: sizes must be >= 1");
    if (d_inner() % head_dim != 0)
      throw ConfigError("SSD config: inner width " + std::to_string(d_inner()) +
                        " is not divisible by head_dim " + std::to_string(head_dim));
    if (chunk_len < 1) throw ConfigError("SSD config: chunk_len must be >= 1");
    if (!(dt_min > 0 && dt_max >= dt_min)) throw ConfigError("SSD config: need 0 < dt_min <= dt_max");
    if (!(a_init_min > 0 && a_init_max >= a_init_min)) throw ConfigError("SSD config: bad A init range");
  }
};

// RMS pre-norm -> in_proj -> (z | xBC | dt) ; causal depthwise conv + SiLU on
// xBC ; dt = softplus(dt + dt_bias) ; scan ; RMS-norm(y * SiLU(z)) ;
// out_proj ; residual.
template <typename T>
class Mamba2Block {
 public:
  Mamba2Block() = default;
  Mamba2Block(const SSDConfig& cfg, nn::Rng& rng) : cfg_(cfg) {
    cfg.validate();
    const Index di = cfg.d_inner(), n = cfg.d_state, h = cfg.n_heads();
    const Index conv_dim = di + 2 * n;
    norm_in_ = nn::make_param<T>(Shape{cfg.d_model}, T(1));
    in_proj_ = nn::Linear<T>(cfg.d_model, 2 * di + 2 * n + h, false, rng);
    conv_w_ = nn::make_param<T>(Shape{conv_dim, cfg.conv_kernel});
    nn::fill_normal(conv_w_, rng, 1.0 / std::sqrt(static_cast<double>(cfg.conv_kernel)));
    conv_b_ = nn::make_param<T>(Shape{conv_dim});
    dt_bias_ = nn::make_param<T>(Shape{h});
    a_log_ = nn::make_param<T>(Shape{h});
    d_ = nn::make_param<T>(Shape{h}, T(1));
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    for (Index i = 0; i < h; ++i) {
      // dt log-uniform in [dt_min, dt_max]; bias is its softplus inverse.
      const double dt = std::exp(std::log(cfg.dt_min) + u01(rng) * (std::log(cfg.dt_max) - std::log(cfg.dt_min)));
      dt_bias_.mutable_value()[i] = static_cast<T>(dt + std::log(-std::expm1(-dt)));
      const double a = cfg.a_init_min + u01(rng) * (cfg.a_init_max - cfg.a_init_min);
      a_log_.mutable_value()[i] = static_cast<T>(std::log(a));
    }
    norm_out_ = nn::make_param<T>(Shape{di}, T(1));
    out_proj_ = nn::Linear<T>(di, cfg.d_model, false, rng);
  }

  // s is (Nseq, L, d_model).
  Var<T> forward(const Var<T>& s) const {
    require_rank(s.shape(), 3, "mamba2_block_forward");
    if (s.dim(2) != cfg_.d_model)
      throw ShapeError("mamba2_block_forward: expected width " + std::to_string(cfg_.d_model) + ", got " +
                       std::to_string(s.dim(2)));
    const Index nseq = s.dim(0), len = s.dim(1);
    const Index di = cfg_.d_inner(), n = cfg_.d_state, h = cfg_.n_heads();
    auto u = ops::rms_norm(s, norm_in_);
    auto proj = in_proj_(u);
    auto z = ops::slice_last(proj, 0, di);
    auto xbc = ops::slice_last(proj, di, di + 2 * n);
    auto dt_raw = ops::slice_last(proj, 2 * di + 2 * n, h);
    xbc = ops::silu(ops::causal_dwconv1d(xbc, conv_w_, conv_b_));
    auto xs = ops::reshape(ops::slice_last(xbc, 0, di), Shape{nseq, len, h, cfg_.head_dim});
    auto bmat = ops::slice_last(xbc, di, n);
    auto cmat = ops::slice_last(xbc, di + n, n);
    auto dt = ops::softplus(ops::add_bias_last(dt_raw, dt_bias_));
    auto a = ops::neg_exp(a_log_);
    auto y = ssm_scan(xs, dt, a, bmat, cmat, d_, ScanOptions{cfg_.chunked, cfg_.chunk_len});
    y = ops::reshape(y, Shape{nseq, len, di});
    y = ops::rms_norm(ops::mul(y, ops::silu(z)), norm_out_);
    return ops::add(s, out_proj_(y));
  }

  Var<T> operator()(const Var<T>& s) const { return forward(s); }

  void visit(const std::string& prefix, nn::StateVisitor<T>& v) {
    v.param(nn::join(prefix, "norm_in"), norm_in_);
    in_proj_.visit(nn::join(prefix, "in_proj"), v);
    v.param(nn::join(prefix, "conv.weight"), conv_w_);
    v.param(nn::join(prefix, "conv.bias"), conv_b_);
    v.param(nn::join(prefix, "dt_bias"), dt_bias_);
    v.param(nn::join(prefix, "a_log"), a_log_);
    v.param(nn::join(prefix, "D"), d_);
    v.param(nn::join(prefix, "norm_out"), norm_out_);
    out_proj_.visit(nn::join(prefix, "out_proj"), v);
  }

  const SSDConfig& config() const { return cfg_; }
  nn::Linear<T>& out_proj() { return out_proj_; }
  nn::Linear<T>& in_proj() { return in_proj_; }

 private:
  SSDConfig cfg_;
  Var<T> norm_in_;
  nn::Linear<T> in_proj_;
  Var<T> conv_w_, conv_b_;
  Var<T> dt_bias_, a_log_, d_;
  Var<T> norm_out_;
  nn::Linear<T> out_proj_;
};

}  // namespace vfgs::ssd
