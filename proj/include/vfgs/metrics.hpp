#pragma once

// Overlap metrics (Dice, sensitivity, specificity), surface metrics (HD95,
// ASSD) and difference maps on binary masks.
//
// Conventions:
//  * boundary pixel = foreground pixel with a background 4-neighbour; the
//    frame edge counts as background;
//  * distances are Euclidean, in pixels, pooled over both directions;
//  * HD95 is the linearly interpolated 95th percentile of the pooled set;
//  * one mask empty -> HD95 = ASSD = image diagonal; both empty -> 0;
//  * a ratio with a zero denominator is defined as 1.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "vfgs/image.hpp"

namespace vfgs {

struct ConfusionCounts {
  Index tp = 0, fp = 0, tn = 0, fn = 0;
  Index total() const { return tp + fp + tn + fn; }
};

inline void require_same_shape(const BinaryMask& a, const BinaryMask& b, const char* what) {
  if (!a.same_shape(b))
    throw ShapeError(std::string(what) + ": mask shapes differ (" + std::to_string(a.height) + "x" +
                     std::to_string(a.width) + " vs " + std::to_string(b.height) + "x" + std::to_string(b.width) + ")");
}

inline ConfusionCounts confusion_counts(const BinaryMask& pred, const BinaryMask& gt,
                                        const BinaryMask* roi = nullptr) {
  require_same_shape(pred, gt, "confusion_counts");
  if (roi) require_same_shape(pred, *roi, "confusion_counts roi");
  ConfusionCounts c;
  for (std::size_t i = 0; i < pred.data.size(); ++i) {
    if (roi && !roi->data[i]) continue;
    const bool p = pred.data[i] != 0, g = gt.data[i] != 0;
    if (p && g) ++c.tp;
    else if (p) ++c.fp;
    else if (g) ++c.fn;
    else ++c.tn;
  }
  return c;
}

inline double safe_ratio(double num, double den) { return den == 0 ? 1.0 : num / den; }

inline double dice_score(const ConfusionCounts& c) {
  return safe_ratio(2.0 * static_cast<double>(c.tp), static_cast<double>(2 * c.tp + c.fp + c.fn));
}
inline double sensitivity(const ConfusionCounts& c) {
  return safe_ratio(static_cast<double>(c.tp), static_cast<double>(c.tp + c.fn));
}
inline double specificity(const ConfusionCounts& c) {
  return safe_ratio(static_cast<double>(c.tn), static_cast<double>(c.tn + c.fp));
}

inline bool is_boundary(const BinaryMask& m, Index r, Index c) {
  if (!m.at(r, c)) return false;
  if (r == 0 || c == 0 || r == m.height - 1 || c == m.width - 1) return true;
  return !m.at(r - 1, c) || !m.at(r + 1, c) || !m.at(r, c - 1) || !m.at(r, c + 1);
}

inline BinaryMask boundary(const BinaryMask& m) {
  BinaryMask out(m.height, m.width);
  for (Index r = 0; r < m.height; ++r)
    for (Index c = 0; c < m.width; ++c) out.at(r, c) = is_boundary(m, r, c);
  return out;
}

namespace detail {

// One pass of the lower-envelope-of-parabolas squared distance transform
// along a line of n samples with stride.
inline void edt_1d(const double* f, Index n, double* d, std::vector<Index>& v, std::vector<double>& z) {
  constexpr double kInf = std::numeric_limits<double>::infinity();
  Index k = -1;
  for (Index q = 0; q < n; ++q) {
    if (f[q] == kInf) continue;
    if (k < 0) {
      k = 0;
      v[0] = q;
      z[0] = -kInf;
      z[1] = kInf;
      continue;
    }
    double s;
    while (true) {
      const Index p = v[static_cast<std::size_t>(k)];
      s = ((f[q] + static_cast<double>(q * q)) - (f[p] + static_cast<double>(p * p))) / (2.0 * static_cast<double>(q - p));
      if (s <= z[static_cast<std::size_t>(k)] && k > 0) {
        --k;
      } else {
        break;
      }
    }
    if (s <= z[static_cast<std::size_t>(k)]) {
      // k == 0 and the new parabola dominates everywhere.
      v[0] = q;
      z[0] = -kInf;
      z[1] = kInf;
      continue;
    }
    ++k;
    v[static_cast<std::size_t>(k)] = q;
    z[static_cast<std::size_t>(k)] = s;
    z[static_cast<std::size_t>(k + 1)] = kInf;
  }
  if (k < 0) {
    std::fill_n(d, n, kInf);
    return;
  }
  Index j = 0;
  for (Index q = 0; q < n; ++q) {
    while (z[static_cast<std::size_t>(j + 1)] < static_cast<double>(q)) ++j;
    const Index p = v[static_cast<std::size_t>(j)];
    d[q] = static_cast<double>((q - p) * (q - p)) + f[p];
  }
}

}  // namespace detail

// Exact squared Euclidean distance from every pixel to the nearest set pixel
// of `sites` (separable lower-envelope transform). Values are integers held
// in doubles, so sqrt() of them matches a brute-force search bit for bit.
inline std::vector<double> squared_distance_transform(const BinaryMask& sites) {
  constexpr double kInf = std::numeric_limits<double>::infinity();
  const Index h = sites.height, w = sites.width;
  std::vector<double> grid(static_cast<std::size_t>(h * w));
  for (std::size_t i = 0; i < grid.size(); ++i) grid[i] = sites.data[i] ? 0.0 : kInf;
  const Index n = std::max(h, w);
  std::vector<double> f(static_cast<std::size_t>(n)), d(static_cast<std::size_t>(n)), z(static_cast<std::size_t>(n + 1));
  std::vector<Index> v(static_cast<std::size_t>(n));
  for (Index c = 0; c < w; ++c) {
    for (Index r = 0; r < h; ++r) f[static_cast<std::size_t>(r)] = grid[static_cast<std::size_t>(r * w + c)];
    detail::edt_1d(f.data(), h, d.data(), v, z);
    for (Index r = 0; r < h; ++r) grid[static_cast<std::size_t>(r * w + c)] = d[static_cast<std::size_t>(r)];
  }
  for (Index r = 0; r < h; ++r) {
    std::copy_n(grid.begin() + r * w, w, f.begin());
    detail::edt_1d(f.data(), w, d.data(), v, z);
    std::copy_n(d.begin(), w, grid.begin() + r * w);
  }
  return grid;
}

// Pooled symmetric boundary-to-boundary distances. Empty when either mask
// has no foreground (the callers apply the empty-mask conventions).
inline std::vector<double> surface_distances(const BinaryMask& a, const BinaryMask& b) {
  require_same_shape(a, b, "surface_distances");
  const auto ba = boundary(a), bb = boundary(b);
  const bool ea = std::none_of(ba.data.begin(), ba.data.end(), [](auto v) { return v != 0; });
  const bool eb = std::none_of(bb.data.begin(), bb.data.end(), [](auto v) { return v != 0; });
  std::vector<double> out;
  if (ea || eb) return out;
  const auto da = squared_distance_transform(ba), db = squared_distance_transform(bb);
  for (std::size_t i = 0; i < ba.data.size(); ++i)
    if (ba.data[i]) out.push_back(std::sqrt(db[i]));
  for (std::size_t i = 0; i < bb.data.size(); ++i)
    if (bb.data[i]) out.push_back(std::sqrt(da[i]));
  return out;
}

// Linear-interpolation percentile, q in [0, 100].
inline double percentile(std::vector<double> values, double q) {
  if (values.empty()) return 0;
  std::sort(values.begin(), values.end());
  const double rank = q / 100.0 * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(rank));
  const auto hi = static_cast<std::size_t>(std::ceil(rank));
  return values[lo] + (rank - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

inline double diagonal(const BinaryMask& m) {
  return std::sqrt(static_cast<double>(m.height * m.height + m.width * m.width));
}

namespace detail {

inline std::optional<double> empty_mask_convention(const BinaryMask& a, const BinaryMask& b) {
  const bool ea = std::none_of(a.data.begin(), a.data.end(), [](auto v) { return v != 0; });
  const bool eb = std::none_of(b.data.begin(), b.data.end(), [](auto v) { return v != 0; });
  if (ea && eb) return 0.0;
  if (ea || eb) return diagonal(a);
  return std::nullopt;
}

}  // namespace detail

inline double hd95_from(const std::vector<double>& pooled) { return percentile(pooled, 95.0); }

// Summed in sorted order so the result depends only on the multiset, which
// keeps assd(a, b) == assd(b, a) bit-for-bit.
inline double assd_from(std::vector<double> pooled) {
  if (pooled.empty()) return 0;
  std::sort(pooled.begin(), pooled.end());
  double s = 0;
  for (double d : pooled) s += d;
  return s / static_cast<double>(pooled.size());
}

inline double hd95(const BinaryMask& a, const BinaryMask& b) {
  require_same_shape(a, b, "hd95");
  if (auto e = detail::empty_mask_convention(a, b)) return *e;
  return hd95_from(surface_distances(a, b));
}

inline double assd(const BinaryMask& a, const BinaryMask& b) {
  require_same_shape(a, b, "assd");
  if (auto e = detail::empty_mask_convention(a, b)) return *e;
  return assd_from(surface_distances(a, b));
}

// TP green, FN red, FP blue, TN black.
inline RgbImage difference_map(const BinaryMask& pred, const BinaryMask& gt) {
  require_same_shape(pred, gt, "difference_map");
  RgbImage out(pred.height, pred.width);
  for (Index r = 0; r < pred.height; ++r)
    for (Index c = 0; c < pred.width; ++c) {
      const bool p = pred.at(r, c), g = gt.at(r, c);
      auto* px = out.px(r, c);
      if (p && g) px[1] = 255;
      else if (g) px[0] = 255;
      else if (p) px[2] = 255;
    }
  return out;
}

struct ImageMetrics {
  std::string id;
  double dice = 0, se = 0, sp = 0, hd95 = 0, assd = 0;
};

inline ImageMetrics image_metrics(const std::string& id, const BinaryMask& pred, const BinaryMask& gt,
                                  const BinaryMask* roi = nullptr) {
  const auto counts = confusion_counts(pred, gt, roi);
  ImageMetrics m{id, dice_score(counts), sensitivity(counts), specificity(counts), 0, 0};
  BinaryMask p = pred, g = gt;
  if (roi) {
    for (std::size_t i = 0; i < p.data.size(); ++i)
      if (!roi->data[i]) p.data[i] = g.data[i] = 0;
  }
  if (auto e = detail::empty_mask_convention(p, g)) {
    m.hd95 = m.assd = *e;
  } else {
    const auto pooled = surface_distances(p, g);
    m.hd95 = hd95_from(pooled);
    m.assd = assd_from(pooled);
  }
  return m;
}

struct MetricsReport {
  std::vector<ImageMetrics> per_image;
  ImageMetrics aggregate{"MEAN"};

  void finalize() {
    aggregate = ImageMetrics{"MEAN"};
    if (per_image.empty()) return;
    for (const auto& m : per_image) {
      aggregate.dice += m.dice;
      aggregate.se += m.se;
      aggregate.sp += m.sp;
      aggregate.hd95 += m.hd95;
      aggregate.assd += m.assd;
    }
    const double n = static_cast<double>(per_image.size());
    aggregate.dice /= n;
    aggregate.se /= n;
    aggregate.sp /= n;
    aggregate.hd95 /= n;
    aggregate.assd /= n;
  }
};

inline constexpr const char* kMetricsCsvHeader = "id,dice,se,sp,hd95,assd";

inline std::string csv_row(const ImageMetrics& m) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%s,%.6f,%.6f,%.6f,%.6f,%.6f", m.id.c_str(), m.dice, m.se, m.sp, m.hd95, m.assd);
  return buf;
}

inline std::string to_csv(const MetricsReport& r) {
  std::ostringstream os;
  os << kMetricsCsvHeader << '\n';
  for (const auto& m : r.per_image) os << csv_row(m) << '\n';
  os << csv_row(r.aggregate) << '\n';
  return os.str();
}

}  // namespace vfgs
