#include <gtest/gtest.h>

#include <map>

#include "support.hpp"
#include "vfgs/network.hpp"

using namespace vfgs;
using vfgs::testing::random_tensor;

namespace {

ModelConfig toy(Index base = 4) {
  auto c = ModelConfig::with_base(base);
  c.ssd.d_state = 8;
  c.ssd.head_dim = 16;
  c.vfca_reduction = 4;
  c.init_seed = 3;
  return c;
}

std::map<std::string, Index> variant_params(const ModelConfig& base) {
  std::map<std::string, Index> out;
  for (auto v : kAllVariants) {
    VFGSNet<float> net(build_variant(v, base));
    out[variant_tag(v)] = net.parameter_count();
  }
  return out;
}

}  // namespace

TEST(Network, DefaultEncoderShapes) {
  VFGSNet<float> net(ModelConfig{});
  std::mt19937_64 g(1);
  NoGradGuard ng;
  const auto t = net.forward(Var<float>(random_tensor<float>({1, 1, 512, 512}, g, 0, 1)), false);
  EXPECT_EQ(t.encoder[0].shape(), (Shape{1, 32, 512, 512}));
  EXPECT_EQ(t.encoder[3].shape(), (Shape{1, 256, 64, 64}));
  EXPECT_EQ(t.bottleneck_in.shape(), (Shape{1, 512, 32, 32}));
  EXPECT_EQ(t.bottleneck_out.shape(), (Shape{1, 512, 32, 32}));
  EXPECT_EQ(t.logits.shape(), (Shape{1, 1, 512, 512}));
  EXPECT_TRUE(t.logits.value().all_finite());
}

TEST(Network, ToyBottleneckIsOnePixel) {
  VFGSNet<float> net(toy());
  std::mt19937_64 g(2);
  const auto t = net.forward(Var<float>(random_tensor<float>({1, 1, 16, 16}, g)), true);
  EXPECT_EQ(t.bottleneck_in.shape(), (Shape{1, 64, 1, 1}));
  EXPECT_EQ(t.logits.shape(), (Shape{1, 1, 16, 16}));
}

TEST(Network, SpatialHalvingAndFiniteTrace) {
  VFGSNet<double> net(toy());
  std::mt19937_64 g(3);
  const auto t = net.forward(Var<double>(random_tensor<double>({2, 1, 32, 48}, g)), true);
  for (std::size_t i = 0; i < 4; ++i) {
    const Index f = Index(1) << i;
    EXPECT_EQ(t.encoder[i].shape(), (Shape{2, 4 * f, 32 / f, 48 / f}));
    EXPECT_EQ(t.decoder[i].shape(), t.encoder[i].shape());
    EXPECT_TRUE(t.encoder[i].value().all_finite());
    EXPECT_TRUE(t.decoder[i].value().all_finite());
  }
  EXPECT_TRUE(t.bottleneck_out.value().all_finite());
  EXPECT_TRUE(t.skip4.value().all_finite());
  EXPECT_EQ(t.logits.shape(), (Shape{2, 1, 32, 48}));
  EXPECT_TRUE(t.logits.value().all_finite());
}

TEST(Network, IndivisibleInputRejected) {
  VFGSNet<float> net(toy());
  try {
    net.forward(Var<float>(Tensor<float>({1, 1, 24, 32})), false);
    FAIL();
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("divisible by 16"), std::string::npos);
  }
  EXPECT_THROW(net.forward(Var<float>(Tensor<float>({1, 2, 32, 32})), false), ShapeError);
}

TEST(Network, MaxPoolOfConstant) {
  Tensor<float> x({1, 2, 4, 6}, 2.5f);
  const auto y = ops::max_pool2x2(Var<float>(x));
  EXPECT_EQ(y.shape(), (Shape{1, 2, 2, 3}));
  for (float v : y.value().vec()) EXPECT_EQ(v, 2.5f);
}

TEST(Network, DisabledModulesPassThrough) {
  auto c = build_variant(Variant::UD, toy());
  VFGSNet<float> net(c);
  EXPECT_FALSE(net.ba().has_value());
  EXPECT_FALSE(net.vfca().has_value());
  std::mt19937_64 g(4);
  const auto t = net.forward(Var<float>(random_tensor<float>({1, 1, 32, 32}, g)), false);
  EXPECT_EQ(t.bottleneck_out.value(), t.bottleneck_in.value());
  EXPECT_EQ(t.skip4.value(), t.encoder[3].value());
}

TEST(Network, DeepestDecoderSeesConcatenatedWidth) {
  VFGSNet<float> net(ModelConfig{});
  for (auto& [name, p] : nn::named_parameters<float>(net))
    if (name == "dec4.proj.weight") {
      EXPECT_EQ(p->value().dim(1), 512 + 256);
      return;
    }
  FAIL() << "dec4.proj.weight not found";
}

TEST(Network, EvalForwardIsDeterministic) {
  VFGSNet<float> net(toy());
  std::mt19937_64 g(5);
  const Var<float> x(random_tensor<float>({1, 1, 32, 32}, g));
  EXPECT_EQ(net.logits(x, false).value(), net.logits(x, false).value());
  VFGSNet<float> twin(toy());
  EXPECT_EQ(twin.logits(x, false).value(), net.logits(x, false).value());
}

// Evaluation-mode normalization: in training mode each DFC path's final BN
// shift is cancelled exactly by the fuse BN.
TEST(Network, EveryParameterReceivesGradient) {
  VFGSNet<double> net(toy());
  std::mt19937_64 g(6);
  backward(ops::sum(net.logits(Var<double>(random_tensor<double>({1, 1, 32, 32}, g)), false)));
  for (auto& [name, p] : nn::named_parameters<double>(net)) {
    ASSERT_FALSE(p->grad().empty()) << name;
    EXPECT_GT(p->grad().max_abs(), 0.0) << name;
  }
}

TEST(Variants, Tags) {
  const auto u = build_variant("U", toy());
  EXPECT_FALSE(u.use_dfc || u.use_ba_mamba2 || u.use_vfca);
  const auto udv = build_variant("U+D+V", toy());
  EXPECT_TRUE(udv.use_dfc);
  EXPECT_FALSE(udv.use_ba_mamba2);
  EXPECT_TRUE(udv.use_vfca);
  for (const char* t : {"FULL", "U+D+B+V"}) {
    const auto f = build_variant(t, toy());
    EXPECT_TRUE(f.use_dfc && f.use_ba_mamba2 && f.use_vfca);
  }
  EXPECT_THROW(build_variant("U+X", toy()), ConfigError);
  for (auto v : kAllVariants) EXPECT_EQ(parse_variant(variant_tag(v)), v);
}

TEST(Variants, ParameterCountsAreMonotone) {
  for (Index base : {4, 32}) {
    auto c = base == 4 ? toy() : ModelConfig{};
    const auto p = variant_params(c);
    const std::vector<std::pair<std::string, std::string>> edges{
        {"U", "U+D"},     {"U", "U+B"},     {"U", "U+V"},     {"U+D", "U+D+B"},   {"U+D", "U+D+V"},
        {"U+B", "U+D+B"}, {"U+B", "U+B+V"}, {"U+V", "U+D+V"}, {"U+V", "U+B+V"},   {"U+D+B", "U+D+B+V"},
        {"U+D+V", "U+D+B+V"}, {"U+B+V", "U+D+B+V"}};
    for (const auto& [lo, hi] : edges) EXPECT_LT(p.at(lo), p.at(hi)) << lo << " -> " << hi << " base " << base;
    for (const auto& [tag, n] : p)
      if (tag != "U+D+B+V") EXPECT_LT(n, p.at("U+D+B+V"));
  }
}

TEST(ModelConfig, Validation) {
  auto c = toy();
  EXPECT_NO_THROW(c.validate());
  c.stage_channels[2] = 15;
  EXPECT_THROW(c.validate(), ConfigError);
  c = toy();
  c.ssd.head_dim = 48;
  EXPECT_THROW(c.validate(), ConfigError);
  c.use_ba_mamba2 = false;
  EXPECT_NO_THROW(c.validate());
  c = toy();
  c.dfc_dilation = 0;
  EXPECT_THROW(VFGSNet<float>{c}, ConfigError);
}
