#pragma once

#include <string>

#include "vfgs/nn/module.hpp"

namespace vfgs {

struct DFCConfig {
  Index in_channels = 1;
  Index out_channels = 1;
  Index dilation = 2;

  void validate() const {
    if (in_channels < 1 || out_channels < 1) throw ConfigError("DFC channel counts must be >= 1");
    if (dilation < 1) throw ConfigError("DFC dilation must be >= 1");
  }
};

// Conv3x3 -> BN -> ReLU -> Conv3x3 -> BN, with the residual added by the
// caller. Padding equals the dilation, so spatial size is preserved.
template <typename T>
class ResidualConvPath {
 public:
  ResidualConvPath() = default;
  ResidualConvPath(Index channels, Index dilation, nn::Rng& rng)
      : conv1_(channels, channels, 3, dilation, dilation, false, rng),
        bn1_(channels),
        conv2_(channels, channels, 3, dilation, dilation, false, rng),
        bn2_(channels) {}

  Var<T> operator()(const Var<T>& xp, bool training) {
    auto h = ops::relu(bn1_(conv1_(xp), training));
    return ops::add(bn2_(conv2_(h), training), xp);
  }

  void visit(const std::string& prefix, nn::StateVisitor<T>& v) {
    conv1_.visit(nn::join(prefix, "conv1"), v);
    bn1_.visit(nn::join(prefix, "bn1"), v);
    conv2_.visit(nn::join(prefix, "conv2"), v);
    bn2_.visit(nn::join(prefix, "bn2"), v);
  }

  nn::Conv2d<T>& conv1() { return conv1_; }
  nn::Conv2d<T>& conv2() { return conv2_; }
  nn::BatchNorm2d<T>& bn1() { return bn1_; }
  nn::BatchNorm2d<T>& bn2() { return bn2_; }

 private:
  nn::Conv2d<T> conv1_;
  nn::BatchNorm2d<T> bn1_;
  nn::Conv2d<T> conv2_;
  nn::BatchNorm2d<T> bn2_;
};

template <typename T>
struct DFCTrace {
  Var<T> projected;  // X_p
  Var<T> standard;   // R
  Var<T> dilated;    // D
  Var<T> output;     // Y
};

// Dual-path feature convolution: a shared 1x1 projection feeds a standard
// and a dilated residual path whose concatenation is fused by
// Conv1x1 -> BN -> ReLU.
template <typename T>
class DFCBlock {
 public:
  DFCBlock() = default;
  DFCBlock(const DFCConfig& cfg, nn::Rng& rng) : cfg_(cfg) {
    cfg.validate();
    const Index c = cfg.out_channels;
    proj_ = nn::Conv2d<T>(cfg.in_channels, c, 1, 0, 1, true, rng);
    std_path_ = ResidualConvPath<T>(c, 1, rng);
    dil_path_ = ResidualConvPath<T>(c, cfg.dilation, rng);
    fuse_ = nn::Conv2d<T>(2 * c, c, 1, 0, 1, false, rng);
    fuse_bn_ = nn::BatchNorm2d<T>(c);
  }

  DFCTrace<T> forward_trace(const Var<T>& x, bool training) {
    check_input(x);
    DFCTrace<T> t;
    t.projected = proj_(x);
    t.standard = std_path_(t.projected, training);
    t.dilated = dil_path_(t.projected, training);
    t.output = ops::relu(fuse_bn_(fuse_(ops::concat_dim1<T>({t.standard, t.dilated})), training));
    return t;
  }

  Var<T> forward(const Var<T>& x, bool training) { return forward_trace(x, training).output; }

  void visit(const std::string& prefix, nn::StateVisitor<T>& v) {
    proj_.visit(nn::join(prefix, "proj"), v);
    std_path_.visit(nn::join(prefix, "std_path"), v);
    dil_path_.visit(nn::join(prefix, "dil_path"), v);
    fuse_.visit(nn::join(prefix, "fuse"), v);
    fuse_bn_.visit(nn::join(prefix, "fuse_bn"), v);
  }

  const DFCConfig& config() const { return cfg_; }
  nn::Conv2d<T>& proj() { return proj_; }
  ResidualConvPath<T>& standard_path() { return std_path_; }
  ResidualConvPath<T>& dilated_path() { return dil_path_; }
  nn::Conv2d<T>& fuse() { return fuse_; }
  nn::BatchNorm2d<T>& fuse_bn() { return fuse_bn_; }

 private:
  void check_input(const Var<T>& x) const {
    require_rank(x.shape(), 4, "dfc_forward");
    if (x.dim(1) != cfg_.in_channels)
      throw ShapeError("dfc_forward: expected " + std::to_string(cfg_.in_channels) +
                       " input channels, got " + std::to_string(x.dim(1)));
  }

  DFCConfig cfg_;
  nn::Conv2d<T> proj_;
  ResidualConvPath<T> std_path_;
  ResidualConvPath<T> dil_path_;
  nn::Conv2d<T> fuse_;
  nn::BatchNorm2d<T> fuse_bn_;
};

// The U-Net block used when DFC is ablated: two Conv3x3 -> BN -> ReLU.
template <typename T>
class DoubleConv {
 public:
  DoubleConv() = default;
  DoubleConv(Index cin, Index cout, nn::Rng& rng)
      : conv1_(cin, cout, 3, 1, 1, false, rng),
        bn1_(cout),
        conv2_(cout, cout, 3, 1, 1, false, rng),
        bn2_(cout) {}

  Var<T> forward(const Var<T>& x, bool training) {
    require_rank(x.shape(), 4, "plain_double_conv");
    if (x.dim(1) != conv1_.in_channels())
      throw ShapeError("plain_double_conv: expected " + std::to_string(conv1_.in_channels()) +
                       " input channels, got " + std::to_string(x.dim(1)));
    auto h = ops::relu(bn1_(conv1_(x), training));
    return ops::relu(bn2_(conv2_(h), training));
  }

  void visit(const std::string& prefix, nn::StateVisitor<T>& v) {
    conv1_.visit(nn::join(prefix, "conv1"), v);
    bn1_.visit(nn::join(prefix, "bn1"), v);
    conv2_.visit(nn::join(prefix, "conv2"), v);
    bn2_.visit(nn::join(prefix, "bn2"), v);
  }

  nn::Conv2d<T>& conv1() { return conv1_; }
  nn::Conv2d<T>& conv2() { return conv2_; }

 private:
  nn::Conv2d<T> conv1_;
  nn::BatchNorm2d<T> bn1_;
  nn::Conv2d<T> conv2_;
  nn::BatchNorm2d<T> bn2_;
};

}  // namespace vfgs
