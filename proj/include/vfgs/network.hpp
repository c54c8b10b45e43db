#pragma once

#include <array>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "vfgs/ba_mamba2.hpp"
#include "vfgs/dfc.hpp"
#include "vfgs/vfca.hpp"

namespace vfgs {

struct ModelConfig {
  Index in_channels = 1;
  Index base_channels = 32;
  std::array<Index, 4> stage_channels{32, 64, 128, 256};
  Index bottleneck_channels = 512;
  bool use_dfc = true;
  bool use_ba_mamba2 = true;
  bool use_vfca = true;
  Index dfc_dilation = 2;
  Index vfca_reduction = 16;
  ssd::SSDConfig ssd{};
  bool ba_untied_directions = false;
  std::uint64_t init_seed = 0;

  // Stage widths double from base_channels; the bottleneck doubles stage 4.
  static ModelConfig with_base(Index base) {
    ModelConfig c;
    c.base_channels = base;
    c.stage_channels = {base, 2 * base, 4 * base, 8 * base};
    c.bottleneck_channels = 16 * base;
    return c;
  }

  void validate() const {
    if (in_channels < 1) throw ConfigError("model.in_channels must be >= 1");
    if (stage_channels[0] != base_channels)
      throw ConfigError("model.stage_channels must start at model.base_channels");
    for (std::size_t i = 1; i < 4; ++i)
      if (stage_channels[i] != 2 * stage_channels[i - 1])
        throw ConfigError("model.stage_channels must double at every stage");
    if (bottleneck_channels < 1) throw ConfigError("model.bottleneck_channels must be >= 1");
    DFCConfig{1, 1, dfc_dilation}.validate();
    VFCAConfig{stage_channels[3], vfca_reduction}.validate();
    if (use_ba_mamba2) ba_config().path_config().validate();
  }

  BAMamba2Config ba_config() const { return BAMamba2Config{bottleneck_channels, ssd, ba_untied_directions}; }
};

// The eight ablation variants over the U-Net baseline.
enum class Variant { U, UD, UB, UV, UDB, UDV, UBV, Full };

inline constexpr std::array<Variant, 8> kAllVariants{Variant::U,   Variant::UD,  Variant::UB,  Variant::UV,
                                                     Variant::UDB, Variant::UDV, Variant::UBV, Variant::Full};

inline std::string variant_tag(Variant v) {
  switch (v) {
    case Variant::U: return "U";
    case Variant::UD: return "U+D";
    case Variant::UB: return "U+B";
    case Variant::UV: return "U+V";
    case Variant::UDB: return "U+D+B";
    case Variant::UDV: return "U+D+V";
    case Variant::UBV: return "U+B+V";
    case Variant::Full: return "U+D+B+V";
  }
  return "?";
}

inline Variant parse_variant(const std::string& tag) {
  if (tag == "FULL") return Variant::Full;
  for (auto v : kAllVariants)
    if (variant_tag(v) == tag) return v;
  throw ConfigError("unknown ablation variant '" + tag + "' (expected U, U+D, U+B, U+V, U+D+B, U+D+V, U+B+V, U+D+B+V/FULL)");
}

inline ModelConfig build_variant(Variant v, ModelConfig base) {
  const std::string tag = variant_tag(v);
  base.use_dfc = tag.find('D') != std::string::npos;
  base.use_ba_mamba2 = tag.find('B') != std::string::npos;
  base.use_vfca = tag.find('V') != std::string::npos;
  return base;
}

inline ModelConfig build_variant(const std::string& tag, ModelConfig base) {
  return build_variant(parse_variant(tag), std::move(base));
}

// Either a DFC block or the plain double convolution, chosen by use_dfc.
template <typename T>
class ConvBlock {
 public:
  ConvBlock() = default;
  ConvBlock(bool dfc, Index cin, Index cout, Index dilation, nn::Rng& rng) {
    if (dfc)
      impl_ = DFCBlock<T>(DFCConfig{cin, cout, dilation}, rng);
    else
      impl_ = DoubleConv<T>(cin, cout, rng);
  }

  Var<T> forward(const Var<T>& x, bool training) {
    return std::visit([&](auto& b) { return b.forward(x, training); }, impl_);
  }

  void visit(const std::string& prefix, nn::StateVisitor<T>& v) {
    std::visit([&](auto& b) { b.visit(prefix, v); }, impl_);
  }

 private:
  std::variant<DoubleConv<T>, DFCBlock<T>> impl_;
};

template <typename T>
struct ForwardTrace {
  std::array<Var<T>, 4> encoder;  // E_1..E_4
  Var<T> bottleneck_in;           // E_5
  Var<T> bottleneck_out;          // Ê_5
  Var<T> skip4;                   // VFCA(E_4) or E_4
  std::array<Var<T>, 4> decoder;  // D_1..D_4
  Var<T> logits;                  // (B, 1, H, W)
};

// Encoder-decoder: four encoder stages with 2x2 max-pooling, a fifth block at
// bottleneck width, the optional BA-Mamba2 bottleneck, VFCA on the deepest
// skip, four bilinear-upsampling decoder stages and a 1x1 logit head.
template <typename T>
class VFGSNet {
 public:
  VFGSNet() = default;
  explicit VFGSNet(const ModelConfig& cfg) : cfg_(cfg) {
    cfg.validate();
    nn::Rng rng(cfg.init_seed);
    const auto& ch = cfg.stage_channels;
    Index cin = cfg.in_channels;
    for (std::size_t i = 0; i < 4; ++i) {
      encoders_[i] = ConvBlock<T>(cfg.use_dfc, cin, ch[i], cfg.dfc_dilation, rng);
      cin = ch[i];
    }
    bottleneck_block_ = ConvBlock<T>(cfg.use_dfc, ch[3], cfg.bottleneck_channels, cfg.dfc_dilation, rng);
    if (cfg.use_ba_mamba2) ba_ = BAMamba2<T>(cfg.ba_config(), rng);
    if (cfg.use_vfca) vfca_ = VFCA<T>(VFCAConfig{ch[3], cfg.vfca_reduction}, rng);
    for (std::size_t i = 4; i-- > 0;) {
      const Index up = i == 3 ? cfg.bottleneck_channels : ch[i + 1];
      decoders_[i] = ConvBlock<T>(cfg.use_dfc, up + ch[i], ch[i], cfg.dfc_dilation, rng);
    }
    head_ = nn::Conv2d<T>(ch[0], 1, 1, 0, 1, true, rng);
  }

  struct Encoded {
    std::array<Var<T>, 4> skips;
    Var<T> deepest;
  };

  Encoded encode(const Var<T>& x, bool training) {
    require_rank(x.shape(), 4, "encode");
    if (x.dim(1) != cfg_.in_channels)
      throw ShapeError("encode: expected " + std::to_string(cfg_.in_channels) + " input channels, got " +
                       std::to_string(x.dim(1)));
    if (x.dim(2) % 16 != 0 || x.dim(3) % 16 != 0)
      throw ShapeError("encode: input spatial dims must be divisible by 16 (four 2x2 poolings), got " +
                       std::to_string(x.dim(2)) + "x" + std::to_string(x.dim(3)));
    Encoded e;
    Var<T> cur = x;
    for (std::size_t i = 0; i < 4; ++i) {
      e.skips[i] = encoders_[i].forward(cur, training);
      cur = ops::max_pool2x2(e.skips[i]);
    }
    e.deepest = bottleneck_block_.forward(cur, training);
    return e;
  }

  Var<T> bottleneck(const Var<T>& e5) const { return ba_ ? ba_->forward(e5) : e5; }

  Var<T> skip4(const Var<T>& e4) const { return vfca_ ? vfca_->forward(e4) : e4; }

  ForwardTrace<T> forward(const Var<T>& x, bool training) {
    ForwardTrace<T> t;
    auto enc = encode(x, training);
    t.encoder = enc.skips;
    t.bottleneck_in = enc.deepest;
    t.bottleneck_out = bottleneck(enc.deepest);
    t.skip4 = skip4(enc.skips[3]);
    Var<T> up = t.bottleneck_out;
    for (std::size_t i = 4; i-- > 0;) {
      const Var<T>& skip = i == 3 ? t.skip4 : t.encoder[i];
      auto y = ops::concat_dim1<T>({ops::upsample2x_bilinear(up), skip});
      t.decoder[i] = decoders_[i].forward(y, training);
      up = t.decoder[i];
    }
    t.logits = head_(t.decoder[0]);
    return t;
  }

  Var<T> logits(const Var<T>& x, bool training) { return forward(x, training).logits; }

  void visit(const std::string& prefix, nn::StateVisitor<T>& v) {
    for (std::size_t i = 0; i < 4; ++i) encoders_[i].visit(nn::join(prefix, "enc" + std::to_string(i + 1)), v);
    bottleneck_block_.visit(nn::join(prefix, "enc5"), v);
    if (ba_) ba_->visit(nn::join(prefix, "ba_mamba2"), v);
    if (vfca_) vfca_->visit(nn::join(prefix, "vfca"), v);
    for (std::size_t i = 0; i < 4; ++i) decoders_[i].visit(nn::join(prefix, "dec" + std::to_string(i + 1)), v);
    head_.visit(nn::join(prefix, "head"), v);
  }

  Index parameter_count() { return nn::parameter_count<T>(*this); }

  const ModelConfig& config() const { return cfg_; }
  std::optional<BAMamba2<T>>& ba() { return ba_; }
  std::optional<VFCA<T>>& vfca() { return vfca_; }

 private:
  ModelConfig cfg_;
  std::array<ConvBlock<T>, 4> encoders_;
  ConvBlock<T> bottleneck_block_;
  std::optional<BAMamba2<T>> ba_;
  std::optional<VFCA<T>> vfca_;
  std::array<ConvBlock<T>, 4> decoders_;
  nn::Conv2d<T> head_;
};

}  // namespace vfgs
