#pragma once

#include <optional>
#include <string>

#include "vfgs/ssd.hpp"

namespace vfgs {

// (B, C, H, W) -> (B*H, W, C): row h of image b becomes sequence b*H + h.
template <typename T>
Var<T> axial_reshape_w(const Var<T>& x) {
  require_rank(x.shape(), 4, "axial_reshape_w");
  const Index B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  std::vector<Index> src(static_cast<std::size_t>(B * C * H * W));
  for (Index b = 0; b < B; ++b)
    for (Index h = 0; h < H; ++h)
      for (Index w = 0; w < W; ++w)
        for (Index c = 0; c < C; ++c)
          src[static_cast<std::size_t>(((b * H + h) * W + w) * C + c)] = ((b * C + c) * H + h) * W + w;
  return ops::gather(x, Shape{B * H, W, C}, std::move(src));
}

template <typename T>
Var<T> axial_unreshape_w(const Var<T>& s, Index B, Index H) {
  require_rank(s.shape(), 3, "axial_unreshape_w");
  const Index W = s.dim(1), C = s.dim(2);
  if (s.dim(0) != B * H) throw ShapeError("axial_unreshape_w: sequence count does not match B*H");
  std::vector<Index> src(static_cast<std::size_t>(B * C * H * W));
  for (Index b = 0; b < B; ++b)
    for (Index c = 0; c < C; ++c)
      for (Index h = 0; h < H; ++h)
        for (Index w = 0; w < W; ++w)
          src[static_cast<std::size_t>(((b * C + c) * H + h) * W + w)] = ((b * H + h) * W + w) * C + c;
  return ops::gather(s, Shape{B, C, H, W}, std::move(src));
}

// (B, C, H, W) -> (B*W, H, C): column w of image b becomes sequence b*W + w.
template <typename T>
Var<T> axial_reshape_h(const Var<T>& x) {
  require_rank(x.shape(), 4, "axial_reshape_h");
  const Index B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  std::vector<Index> src(static_cast<std::size_t>(B * C * H * W));
  for (Index b = 0; b < B; ++b)
    for (Index w = 0; w < W; ++w)
      for (Index h = 0; h < H; ++h)
        for (Index c = 0; c < C; ++c)
          src[static_cast<std::size_t>(((b * W + w) * H + h) * C + c)] = ((b * C + c) * H + h) * W + w;
  return ops::gather(x, Shape{B * W, H, C}, std::move(src));
}

template <typename T>
Var<T> axial_unreshape_h(const Var<T>& s, Index B, Index W) {
  require_rank(s.shape(), 3, "axial_unreshape_h");
  const Index H = s.dim(1), C = s.dim(2);
  if (s.dim(0) != B * W) throw ShapeError("axial_unreshape_h: sequence count does not match B*W");
  std::vector<Index> src(static_cast<std::size_t>(B * C * H * W));
  for (Index b = 0; b < B; ++b)
    for (Index c = 0; c < C; ++c)
      for (Index h = 0; h < H; ++h)
        for (Index w = 0; w < W; ++w)
          src[static_cast<std::size_t>(((b * C + c) * H + h) * W + w)] = ((b * W + w) * H + h) * C + c;
  return ops::gather(s, Shape{B, C, H, W}, std::move(src));
}

// out = M_fwd(s) + Flip(M_bwd(Flip(s))). The reversed pass is flipped back
// so both terms are indexed by the original positions.
template <typename T, typename Fwd, typename Bwd>
Var<T> bidirectional_apply(const Var<T>& s, Fwd&& forward_model, Bwd&& backward_model) {
  auto fwd = forward_model(s);
  auto bwd = ops::flip_seq(backward_model(ops::flip_seq(s)));
  return ops::add(fwd, bwd);
}

template <typename T, typename M>
Var<T> bidirectional_apply(const Var<T>& s, M&& model) {
  return bidirectional_apply<T>(s, model, model);
}

struct BAMamba2Config {
  Index channels = 512;
  ssd::SSDConfig ssd{};
  // Separate parameters for the reversed pass inside each axial path.
  bool untied_directions = false;

  ssd::SSDConfig path_config() const {
    auto c = ssd;
    c.d_model = channels;
    return c;
  }
};

template <typename T>
struct AxialPath {
  ssd::Mamba2Block<T> forward_model;
  std::optional<ssd::Mamba2Block<T>> backward_model;

  Var<T> operator()(const Var<T>& s) const {
    if (backward_model) return bidirectional_apply<T>(s, forward_model, *backward_model);
    return bidirectional_apply<T>(s, forward_model);
  }

  void visit(const std::string& prefix, nn::StateVisitor<T>& v) {
    forward_model.visit(nn::join(prefix, "fwd"), v);
    if (backward_model) backward_model->visit(nn::join(prefix, "bwd"), v);
  }
};

template <typename T>
struct BAMamba2Trace {
  Var<T> rows;     // Y_wh, (B, C, H, W)
  Var<T> columns;  // Y_hw, (B, C, H, W)
  Var<T> output;
};

// Bidirectional asymmetric axial state-space bottleneck: rows and columns are
// modeled by independent bidirectional Mamba2 paths and fused by a 1x1 conv.
template <typename T>
class BAMamba2 {
 public:
  BAMamba2() = default;
  BAMamba2(const BAMamba2Config& cfg, nn::Rng& rng) : cfg_(cfg) {
    if (cfg.channels < 1) throw ConfigError("BA-Mamba2 channels must be >= 1");
    const auto sc = cfg.path_config();
    row_.forward_model = ssd::Mamba2Block<T>(sc, rng);
    if (cfg.untied_directions) row_.backward_model = ssd::Mamba2Block<T>(sc, rng);
    col_.forward_model = ssd::Mamba2Block<T>(sc, rng);
    if (cfg.untied_directions) col_.backward_model = ssd::Mamba2Block<T>(sc, rng);
    fuse_ = nn::Conv2d<T>(2 * cfg.channels, cfg.channels, 1, 0, 1, true, rng);
  }

  BAMamba2Trace<T> forward_trace(const Var<T>& x) const {
    require_rank(x.shape(), 4, "ba_mamba2_forward");
    if (x.dim(1) != cfg_.channels)
      throw ShapeError("ba_mamba2_forward: expected " + std::to_string(cfg_.channels) + " channels, got " +
                       std::to_string(x.dim(1)));
    const Index B = x.dim(0), H = x.dim(2), W = x.dim(3);
    BAMamba2Trace<T> t;
    t.rows = axial_unreshape_w(row_(axial_reshape_w(x)), B, H);
    t.columns = axial_unreshape_h(col_(axial_reshape_h(x)), B, W);
    t.output = fuse_(ops::concat_dim1<T>({t.rows, t.columns}));
    return t;
  }

  Var<T> forward(const Var<T>& x) const { return forward_trace(x).output; }

  void visit(const std::string& prefix, nn::StateVisitor<T>& v) {
    row_.visit(nn::join(prefix, "row"), v);
    col_.visit(nn::join(prefix, "col"), v);
    fuse_.visit(nn::join(prefix, "fuse"), v);
  }

  const BAMamba2Config& config() const { return cfg_; }
  AxialPath<T>& row_path() { return row_; }
  AxialPath<T>& column_path() { return col_; }
  nn::Conv2d<T>& fuse() { return fuse_; }

 private:
  BAMamba2Config cfg_;
  AxialPath<T> row_, col_;
  nn::Conv2d<T> fuse_;
};

}  // namespace vfgs
