#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "vfgs/loss.hpp"
#include "vfgs/metrics.hpp"

using namespace vfgs;

namespace {

BinaryMask mask(Index h, Index w, std::initializer_list<std::uint8_t> v) {
  BinaryMask m(h, w);
  m.data.assign(v.begin(), v.end());
  return m;
}

BinaryMask random_mask(Index h, Index w, double frac, std::mt19937_64& g) {
  std::bernoulli_distribution b(frac);
  BinaryMask m(h, w);
  for (auto& v : m.data) v = b(g) ? 1 : 0;
  return m;
}

// Brute-force surface oracle, written independently of the library.
std::vector<std::pair<Index, Index>> boundary_pixels(const BinaryMask& m) {
  std::vector<std::pair<Index, Index>> out;
  auto bg = [&](Index r, Index c) { return r < 0 || c < 0 || r >= m.height || c >= m.width || !m.at(r, c); };
  for (Index r = 0; r < m.height; ++r)
    for (Index c = 0; c < m.width; ++c)
      if (m.at(r, c) && (bg(r - 1, c) || bg(r + 1, c) || bg(r, c - 1) || bg(r, c + 1))) out.emplace_back(r, c);
  return out;
}

std::vector<double> pooled_oracle(const BinaryMask& a, const BinaryMask& b) {
  const auto pa = boundary_pixels(a), pb = boundary_pixels(b);
  std::vector<double> out;
  auto directed = [&](const auto& from, const auto& to) {
    for (auto [r, c] : from) {
      double best = 1e300;
      for (auto [r2, c2] : to) best = std::min(best, std::hypot(double(r - r2), double(c - c2)));
      out.push_back(best);
    }
  };
  directed(pa, pb);
  directed(pb, pa);
  return out;
}

double naive_percentile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double pos = q / 100 * double(v.size() - 1);
  const std::size_t i = static_cast<std::size_t>(pos);
  if (i + 1 >= v.size()) return v.back();
  return v[i] + (pos - double(i)) * (v[i + 1] - v[i]);
}

double naive_mean(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  double s = 0;
  for (double x : v) s += x;
  return s / double(v.size());
}

bool empty(const BinaryMask& m) {
  for (auto v : m.data)
    if (v) return false;
  return true;
}

}  // namespace

TEST(Confusion, HandCases) {
  const auto pred = mask(2, 2, {1, 0, 0, 0}), gt = mask(2, 2, {1, 1, 0, 0});
  const auto c = confusion_counts(pred, gt);
  EXPECT_EQ(c.tp, 1);
  EXPECT_EQ(c.fn, 1);
  EXPECT_EQ(c.fp, 0);
  EXPECT_EQ(c.tn, 2);
  EXPECT_NEAR(dice_score(c), 2.0 / 3, 1e-15);
  EXPECT_DOUBLE_EQ(sensitivity(c), 0.5);
  EXPECT_DOUBLE_EQ(specificity(c), 1.0);
  const auto same = confusion_counts(gt, gt);
  EXPECT_EQ(same.fp + same.fn, 0);
  EXPECT_EQ(dice_score(same), 1.0);
  BinaryMask inv = gt;
  for (auto& v : inv.data) v = !v;
  const auto comp = confusion_counts(inv, gt);
  EXPECT_EQ(comp.tp + comp.tn, 0);
  const auto e = confusion_counts(BinaryMask(3, 3), BinaryMask(3, 3));
  EXPECT_EQ(dice_score(e), 1.0);
  EXPECT_EQ(sensitivity(e), 1.0);
  EXPECT_THROW(confusion_counts(BinaryMask(2, 2), BinaryMask(2, 3)), ShapeError);
}

TEST(Confusion, RoiRestrictsCounts) {
  const auto pred = mask(2, 2, {1, 1, 0, 0}), gt = mask(2, 2, {1, 0, 1, 0}), roi = mask(2, 2, {1, 1, 0, 0});
  const auto c = confusion_counts(pred, gt, &roi);
  EXPECT_EQ(c.total(), 2);
  EXPECT_EQ(c.tp, 1);
  EXPECT_EQ(c.fp, 1);
}

TEST(Confusion, MatchesDirectCounts) {
  std::mt19937_64 g(1);
  for (int t = 0; t < 100; ++t) {
    const auto p = random_mask(9, 11, 0.4, g), q = random_mask(9, 11, 0.3, g);
    double tp = 0, fp = 0, tn = 0, fn = 0;
    for (std::size_t i = 0; i < p.data.size(); ++i) {
      tp += p.data[i] && q.data[i];
      fp += p.data[i] && !q.data[i];
      tn += !p.data[i] && !q.data[i];
      fn += !p.data[i] && q.data[i];
    }
    const auto c = confusion_counts(p, q);
    EXPECT_DOUBLE_EQ(dice_score(c), tp + fp + fn == 0 ? 1.0 : 2 * tp / (2 * tp + fp + fn));
    EXPECT_DOUBLE_EQ(sensitivity(c), tp + fn == 0 ? 1.0 : tp / (tp + fn));
    EXPECT_DOUBLE_EQ(specificity(c), tn + fp == 0 ? 1.0 : tn / (tn + fp));
  }
}

TEST(Confusion, DiceAgreesWithHardDiceLoss) {
  std::mt19937_64 g(2);
  for (int t = 0; t < 20; ++t) {
    const auto p = random_mask(8, 8, 0.4, g), q = random_mask(8, 8, 0.4, g);
    Tensor<double> z({1, 1, 8, 8}), y({1, 1, 8, 8});
    for (Index i = 0; i < 64; ++i) {
      z[i] = p.data[i] ? 60 : -60;
      y[i] = q.data[i];
    }
    EXPECT_NEAR(dice_score(confusion_counts(p, q)), 1 - dice_loss(Var<double>(z), y, 1e-30).value()[0], 1e-6);
  }
}

TEST(Confusion, AddingCorrectPixelNeverLowersDice) {
  std::mt19937_64 g(3);
  for (int t = 0; t < 100; ++t) {
    auto p = random_mask(6, 6, 0.3, g);
    const auto q = random_mask(6, 6, 0.5, g);
    for (std::size_t i = 0; i < p.data.size(); ++i)
      if (q.data[i] && !p.data[i]) {
        const double before = dice_score(confusion_counts(p, q));
        p.data[i] = 1;
        EXPECT_GE(dice_score(confusion_counts(p, q)), before);
        break;
      }
  }
}

TEST(Surface, HandCases) {
  BinaryMask a(5, 5), b(5, 5);
  a.at(0, 0) = 1;
  b.at(3, 4) = 1;
  const auto d = surface_distances(a, b);
  ASSERT_EQ(d.size(), 2u);
  EXPECT_EQ(d[0], 5.0);
  EXPECT_EQ(d[1], 5.0);
  EXPECT_EQ(hd95(a, b), 5.0);
  EXPECT_EQ(assd(a, b), 5.0);
  EXPECT_EQ(hd95(a, a), 0.0);
  EXPECT_EQ(assd(a, a), 0.0);
  // Two horizontal segments one row apart.
  BinaryMask s(6, 8), u(6, 8);
  for (Index c = 1; c < 7; ++c) {
    s.at(2, c) = 1;
    u.at(3, c) = 1;
  }
  for (double v : surface_distances(s, u)) EXPECT_EQ(v, 1.0);
}

TEST(Surface, PercentileGolden) {
  std::vector<double> v(19, 0.0);
  v.push_back(10);
  EXPECT_NEAR(naive_percentile(v, 95), 0.5, 1e-12);
  EXPECT_NEAR(hd95_from(v), 0.5, 1e-12);
  EXPECT_DOUBLE_EQ(assd_from(v), 0.5);
  EXPECT_DOUBLE_EQ(hd95_from({5, 5}), 5.0);
  EXPECT_DOUBLE_EQ(percentile({1, 2, 3, 4}, 50), 2.5);
}

TEST(Surface, EmptyMaskConventions) {
  BinaryMask a(3, 4), b(3, 4);
  EXPECT_EQ(hd95(a, b), 0.0);
  EXPECT_EQ(assd(a, b), 0.0);
  b.at(1, 1) = 1;
  EXPECT_DOUBLE_EQ(hd95(a, b), 5.0);
  EXPECT_DOUBLE_EQ(assd(b, a), 5.0);
}

TEST(Surface, MatchesBruteForceExactly) {
  std::mt19937_64 g(4);
  std::uniform_int_distribution<Index> dim(1, 16);
  std::uniform_real_distribution<double> frac(0.02, 0.7);
  int compared = 0;
  for (int t = 0; t < 500; ++t) {
    const Index h = dim(g), w = dim(g);
    const auto a = random_mask(h, w, frac(g), g), b = random_mask(h, w, frac(g), g);
    if (empty(a) || empty(b)) {
      EXPECT_EQ(hd95(a, b), empty(a) && empty(b) ? 0.0 : std::hypot(double(h), double(w)));
      continue;
    }
    auto oracle = pooled_oracle(a, b), fast = surface_distances(a, b);
    // Both pools are in raster order of a's boundary, then b's.
    ASSERT_EQ(oracle, fast) << t;
    EXPECT_EQ(hd95(a, b), naive_percentile(oracle, 95)) << t;
    EXPECT_EQ(assd(a, b), naive_mean(oracle)) << t;
    EXPECT_EQ(hd95(a, b), hd95(b, a));
    EXPECT_EQ(assd(a, b), assd(b, a));
    ++compared;
  }
  EXPECT_GT(compared, 400);
}

TEST(DifferenceMap, Colours) {
  const auto pred = mask(2, 2, {1, 0, 0, 1}), gt = mask(2, 2, {1, 1, 0, 0});
  const auto m = difference_map(pred, gt);
  auto is = [&](Index r, Index c, int R, int G, int B) {
    const auto* p = m.px(r, c);
    return p[0] == R && p[1] == G && p[2] == B;
  };
  EXPECT_TRUE(is(0, 0, 0, 255, 0));
  EXPECT_TRUE(is(0, 1, 255, 0, 0));
  EXPECT_TRUE(is(1, 0, 0, 0, 0));
  EXPECT_TRUE(is(1, 1, 0, 0, 255));
  const auto miss = difference_map(BinaryMask(2, 2), gt);
  EXPECT_TRUE(miss.px(0, 0)[0] == 255 && miss.px(0, 1)[0] == 255 && miss.px(1, 0)[0] == 0);
}

TEST(Report, AggregateAndCsv) {
  std::mt19937_64 g(5);
  MetricsReport r;
  for (int i = 0; i < 5; ++i)
    r.per_image.push_back(image_metrics("img" + std::to_string(i), random_mask(10, 10, 0.3, g), random_mask(10, 10, 0.3, g)));
  r.finalize();
  double mean = 0;
  for (const auto& m : r.per_image) mean += m.dice;
  EXPECT_NEAR(r.aggregate.dice, mean / 5, 1e-12);
  const auto csv = to_csv(r);
  std::istringstream is(csv);
  std::string line;
  std::getline(is, line);
  EXPECT_EQ(line, "id,dice,se,sp,hd95,assd");
  int rows = 0;
  while (std::getline(is, line)) {
    ++rows;
    EXPECT_EQ(std::count(line.begin(), line.end(), ','), 5);
  }
  EXPECT_EQ(rows, 6);
  EXPECT_EQ(csv.rfind("MEAN,", csv.size() - 2) != std::string::npos, true);
}

TEST(Report, RoiMetrics) {
  const auto pred = mask(2, 3, {1, 1, 0, 0, 0, 1}), gt = mask(2, 3, {1, 0, 0, 0, 0, 0});
  const auto roi = mask(2, 3, {1, 1, 1, 1, 1, 0});
  const auto m = image_metrics("x", pred, gt, &roi);
  EXPECT_DOUBLE_EQ(m.dice, 2.0 / 3);
  EXPECT_DOUBLE_EQ(m.sp, 3.0 / 4);
}
