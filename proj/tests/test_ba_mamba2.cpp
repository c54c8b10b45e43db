#include <gtest/gtest.h>

#include "support.hpp"
#include "vfgs/ba_mamba2.hpp"

using namespace vfgs;
using vfgs::testing::max_abs_diff;
using vfgs::testing::random_tensor;

namespace {

BAMamba2Config toy(Index c, bool untied = false) {
  BAMamba2Config cfg;
  cfg.channels = c;
  cfg.ssd.d_state = 4;
  cfg.ssd.head_dim = 4;
  cfg.ssd.chunk_len = 3;
  cfg.untied_directions = untied;
  return cfg;
}

template <typename T>
Tensor<T> flip(const Tensor<T>& s) {
  const Index N = s.dim(0), L = s.dim(1), C = s.dim(2);
  Tensor<T> out(s.shape());
  for (Index n = 0; n < N; ++n)
    for (Index l = 0; l < L; ++l)
      for (Index c = 0; c < C; ++c) out[(n * L + l) * C + c] = s[(n * L + (L - 1 - l)) * C + c];
  return out;
}

template <typename T>
Tensor<T> transpose_hw(const Tensor<T>& x) {
  const Index B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  Tensor<T> out({B, C, W, H});
  for (Index bc = 0; bc < B * C; ++bc)
    for (Index h = 0; h < H; ++h)
      for (Index w = 0; w < W; ++w) out[(bc * W + w) * H + h] = x[(bc * H + h) * W + w];
  return out;
}

template <typename T>
void copy_params(AxialPath<T>& dst, AxialPath<T>& src) {
  auto d = nn::named_parameters<T>(dst);
  auto s = nn::named_parameters<T>(src);
  ASSERT_EQ(d.size(), s.size());
  for (std::size_t i = 0; i < d.size(); ++i) d[i].second->mutable_value() = s[i].second->value();
}

}  // namespace

TEST(AxialReshape, Shapes) {
  const Var<float> x(Tensor<float>({2, 8, 4, 6}));
  EXPECT_EQ(axial_reshape_w(x).shape(), (Shape{8, 6, 8}));
  EXPECT_EQ(axial_reshape_h(x).shape(), (Shape{12, 4, 8}));
}

TEST(AxialReshape, RoundTripIsExact) {
  std::mt19937_64 g(1);
  const auto x = random_tensor<float>({3, 5, 4, 7}, g);
  EXPECT_EQ(axial_unreshape_w(axial_reshape_w(Var<float>(x)), 3, 4).value(), x);
  EXPECT_EQ(axial_unreshape_h(axial_reshape_h(Var<float>(x)), 3, 7).value(), x);
  EXPECT_THROW(axial_unreshape_w(axial_reshape_w(Var<float>(x)), 3, 5), ShapeError);
}

TEST(AxialReshape, ExhaustiveIndexing) {
  Tensor<double> x({2, 2, 2, 2});
  for (Index i = 0; i < 16; ++i) x[i] = static_cast<double>(i);
  const auto rw = axial_reshape_w(Var<double>(x)).value();
  const auto rh = axial_reshape_h(Var<double>(x)).value();
  for (Index b = 0; b < 2; ++b)
    for (Index c = 0; c < 2; ++c)
      for (Index h = 0; h < 2; ++h)
        for (Index w = 0; w < 2; ++w) {
          const double v = x[((b * 2 + c) * 2 + h) * 2 + w];
          EXPECT_EQ(rw[((b * 2 + h) * 2 + w) * 2 + c], v);
          EXPECT_EQ(rh[((b * 2 + w) * 2 + h) * 2 + c], v);
        }
}

TEST(Bidirectional, LengthOneDoubles) {
  nn::Rng rng(2);
  ssd::Mamba2Block<double> m(toy(8).path_config(), rng);
  std::mt19937_64 g(3);
  const Var<double> s(random_tensor<double>({3, 1, 8}, g));
  const auto out = bidirectional_apply<double>(s, m).value();
  const auto once = m.forward(s).value();
  for (Index i = 0; i < out.numel(); ++i) EXPECT_EQ(out[i], 2 * once[i]);
}

TEST(Bidirectional, PalindromesAndReversal) {
  nn::Rng rng(4);
  ssd::Mamba2Block<double> m(toy(8).path_config(), rng);
  std::mt19937_64 g(5);
  for (int t = 0; t < 10; ++t) {
    const Index L = 2 + t;
    auto s = random_tensor<double>({2, L, 8}, g);
    const auto rev = bidirectional_apply<double>(Var<double>(flip(s)), m).value();
    EXPECT_LE(max_abs_diff(rev, flip(bidirectional_apply<double>(Var<double>(s), m).value())), 1e-10);
    for (Index n = 0; n < 2; ++n)
      for (Index l = 0; l < L / 2; ++l)
        for (Index c = 0; c < 8; ++c) s[(n * L + (L - 1 - l)) * 8 + c] = s[(n * L + l) * 8 + c];
    const auto out = bidirectional_apply<double>(Var<double>(s), m).value();
    EXPECT_LE(max_abs_diff(out, flip(out)), 1e-10);
  }
}

TEST(BaMamba2, ShapeAndChannelCheck) {
  nn::Rng rng(6);
  BAMamba2<float> m(toy(8), rng);
  std::mt19937_64 g(7);
  EXPECT_EQ(m.forward(Var<float>(random_tensor<float>({2, 8, 5, 3}, g))).shape(), (Shape{2, 8, 5, 3}));
  EXPECT_EQ(m.fuse().in_channels(), 16);
  EXPECT_THROW(m.forward(Var<float>(Tensor<float>({1, 4, 4, 4}))), ShapeError);
}

TEST(BaMamba2, DefaultBottleneckShape) {
  BAMamba2Config cfg;
  nn::Rng rng(8);
  BAMamba2<float> m(cfg, rng);
  std::mt19937_64 g(9);
  NoGradGuard ng;
  const auto y = m.forward(Var<float>(random_tensor<float>({1, 512, 32, 32}, g)));
  EXPECT_EQ(y.shape(), (Shape{1, 512, 32, 32}));
  EXPECT_TRUE(y.value().all_finite());
}

TEST(BaMamba2, IdentityPlumbing) {
  nn::Rng rng(10);
  BAMamba2<double> m(toy(4), rng);
  m.row_path().forward_model.out_proj().weight().mutable_value().fill(0);
  m.column_path().forward_model.out_proj().weight().mutable_value().fill(0);
  // Each bidirectional path returns 2x; a quarter of each half recovers x.
  auto& w = m.fuse().weight().mutable_value();
  w.fill(0);
  for (Index c = 0; c < 4; ++c) {
    w[c * 8 + c] = 0.25;
    w[c * 8 + 4 + c] = 0.25;
  }
  for (auto& [n, p] : nn::named_parameters<double>(m.fuse()))
    if (n == "bias") p->mutable_value().fill(0);
  std::mt19937_64 g(11);
  const auto x = random_tensor<double>({2, 4, 3, 5}, g);
  EXPECT_LE(max_abs_diff(m.forward(Var<double>(x)).value(), x), 1e-12);
}

TEST(BaMamba2, TransposeEquivarianceWhenTied) {
  nn::Rng rng(12);
  BAMamba2<double> m(toy(4), rng);
  copy_params(m.column_path(), m.row_path());
  auto& w = m.fuse().weight().mutable_value();
  for (Index o = 0; o < 4; ++o)
    for (Index c = 0; c < 4; ++c) w[o * 8 + 4 + c] = w[o * 8 + c];
  std::mt19937_64 g(13);
  const auto x = random_tensor<double>({2, 4, 3, 5}, g);
  const auto a = m.forward(Var<double>(transpose_hw(x))).value();
  const auto b = transpose_hw(m.forward(Var<double>(x)).value());
  EXPECT_LE(max_abs_diff(a, b), 1e-10);
}

TEST(BaMamba2, AxialReceptiveField) {
  nn::Rng rng(14);
  BAMamba2<double> m(toy(4), rng);
  std::mt19937_64 g(15);
  const Index H = 5, W = 6, r = 2, c = 3;
  const auto x = random_tensor<double>({1, 4, H, W}, g);
  auto xp = x;
  for (Index ch = 0; ch < 4; ++ch) xp[(ch * H + r) * W + c] += 0.5;
  const auto t0 = m.forward_trace(Var<double>(x)), t1 = m.forward_trace(Var<double>(xp));
  for (Index h = 0; h < H; ++h)
    for (Index w = 0; w < W; ++w) {
      double dr = 0, dc = 0, dout = 0;
      for (Index ch = 0; ch < 4; ++ch) {
        const Index i = (ch * H + h) * W + w;
        dr += std::abs(t1.rows.value()[i] - t0.rows.value()[i]);
        dc += std::abs(t1.columns.value()[i] - t0.columns.value()[i]);
        dout += std::abs(t1.output.value()[i] - t0.output.value()[i]);
      }
      EXPECT_EQ(dr > 0, h == r) << h << "," << w;
      EXPECT_EQ(dc > 0, w == c) << h << "," << w;
      EXPECT_EQ(dout > 0, h == r || w == c) << h << "," << w;
    }
}

TEST(BaMamba2, UntiedDirectionsAddParameters) {
  nn::Rng r1(16), r2(16);
  BAMamba2<float> tied(toy(8), r1), untied(toy(8, true), r2);
  const Index block = nn::parameter_count<float>(tied.row_path().forward_model);
  EXPECT_EQ(nn::parameter_count<float>(untied), nn::parameter_count<float>(tied) + 2 * block);
}

TEST(BaMamba2, GradientReachesBothPaths) {
  nn::Rng rng(17);
  BAMamba2<double> m(toy(4, true), rng);
  std::mt19937_64 g(18);
  Var<double> x(random_tensor<double>({1, 4, 3, 4}, g), true);
  const auto y = m.forward(x);
  backward(ops::dot_const(y, random_tensor<double>(y.shape(), g)));
  for (auto& [name, p] : nn::named_parameters<double>(m)) {
    ASSERT_FALSE(p->grad().empty()) << name;
    EXPECT_GT(p->grad().max_abs(), 0.0) << name;
  }
  EXPECT_GT(x.grad().max_abs(), 0.0);
}
