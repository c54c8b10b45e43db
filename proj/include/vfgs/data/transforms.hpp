#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <random>

#include "vfgs/data/sample.hpp"
#include "vfgs/nn/ops.hpp"

namespace vfgs::data {

using Rng = std::mt19937_64;

inline BinaryMask binarize_mask(const Plane<std::uint8_t>& raw) {
  BinaryMask m(raw.height, raw.width);
  for (std::size_t i = 0; i < raw.data.size(); ++i) m.data[i] = raw.data[i] > 127 ? 1 : 0;
  return m;
}

// Contrast-limited adaptive histogram equalization on a [0,1] image.
// 256 bins; per-tile histograms are clipped at clip_limit * tile_pixels / 256
// with the excess spread evenly over all bins; each tile maps through its
// normalized CDF and mappings are bilinearly blended between tile centres.
// A constant image maps to a constant (the CDF value of its bin).
inline ImagePlane apply_clahe(const ImagePlane& img, double clip_limit, std::pair<Index, Index> tiles) {
  const auto [rows, cols] = tiles;
  if (rows < 1 || cols < 1) throw ConfigError("CLAHE: tile grid must be positive");
  if (rows > img.height || cols > img.width)
    throw ConfigError("CLAHE: tile grid " + std::to_string(rows) + "x" + std::to_string(cols) + " is larger than the " +
                      std::to_string(img.height) + "x" + std::to_string(img.width) + " image");
  if (!(clip_limit > 0)) throw ConfigError("CLAHE: clip limit must be > 0");
  auto bin_of = [](float v) { return static_cast<int>(std::lround(std::clamp(v, 0.f, 1.f) * 255.f)); };
  std::vector<Index> ys(static_cast<std::size_t>(rows + 1)), xs(static_cast<std::size_t>(cols + 1));
  for (Index r = 0; r <= rows; ++r) ys[static_cast<std::size_t>(r)] = r * img.height / rows;
  for (Index c = 0; c <= cols; ++c) xs[static_cast<std::size_t>(c)] = c * img.width / cols;

  std::vector<std::array<double, 256>> lut(static_cast<std::size_t>(rows * cols));
  for (Index tr = 0; tr < rows; ++tr)
    for (Index tc = 0; tc < cols; ++tc) {
      std::array<double, 256> hist{};
      const Index y0 = ys[tr], y1 = ys[tr + 1], x0 = xs[tc], x1 = xs[tc + 1];
      for (Index y = y0; y < y1; ++y)
        for (Index x = x0; x < x1; ++x) hist[static_cast<std::size_t>(bin_of(img.at(y, x)))] += 1;
      const double npx = static_cast<double>((y1 - y0) * (x1 - x0));
      const double clip = clip_limit * npx / 256.0;
      double excess = 0;
      for (auto& h : hist)
        if (h > clip) {
          excess += h - clip;
          h = clip;
        }
      const double share = excess / 256.0;
      auto& l = lut[static_cast<std::size_t>(tr * cols + tc)];
      double cdf = 0;
      for (std::size_t b = 0; b < 256; ++b) {
        cdf += hist[b] + share;
        l[b] = std::min(1.0, cdf / npx);
      }
    }

  auto centre = [](const std::vector<Index>& edges, Index i) {
    return 0.5 * static_cast<double>(edges[static_cast<std::size_t>(i)] + edges[static_cast<std::size_t>(i + 1)] - 1);
  };
  auto locate = [&](const std::vector<Index>& edges, Index n, double pos, Index& i0, Index& i1, double& wgt) {
    i0 = 0;
    while (i0 + 1 < n && centre(edges, i0 + 1) <= pos) ++i0;
    i1 = std::min(i0 + 1, n - 1);
    const double c0 = centre(edges, i0), c1 = centre(edges, i1);
    wgt = (i1 == i0) ? 0.0 : std::clamp((pos - c0) / (c1 - c0), 0.0, 1.0);
  };

  ImagePlane out(img.height, img.width);
  for (Index y = 0; y < img.height; ++y) {
    Index r0, r1;
    double wy;
    locate(ys, rows, static_cast<double>(y), r0, r1, wy);
    for (Index x = 0; x < img.width; ++x) {
      Index c0, c1;
      double wx;
      locate(xs, cols, static_cast<double>(x), c0, c1, wx);
      const auto b = static_cast<std::size_t>(bin_of(img.at(y, x)));
      const double v = (1 - wy) * ((1 - wx) * lut[static_cast<std::size_t>(r0 * cols + c0)][b] +
                                   wx * lut[static_cast<std::size_t>(r0 * cols + c1)][b]) +
                       wy * ((1 - wx) * lut[static_cast<std::size_t>(r1 * cols + c0)][b] +
                             wx * lut[static_cast<std::size_t>(r1 * cols + c1)][b]);
      out.at(y, x) = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
  }
  return out;
}

template <typename P>
Plane<P> flip_horizontal(const Plane<P>& p) {
  Plane<P> o(p.height, p.width);
  for (Index y = 0; y < p.height; ++y)
    for (Index x = 0; x < p.width; ++x) o.at(y, x) = p.at(y, p.width - 1 - x);
  return o;
}

template <typename P>
Plane<P> flip_vertical(const Plane<P>& p) {
  Plane<P> o(p.height, p.width);
  for (Index y = 0; y < p.height; ++y)
    for (Index x = 0; x < p.width; ++x) o.at(y, x) = p.at(p.height - 1 - y, x);
  return o;
}

// Rotation about the image centre; pixels mapped from outside the frame are 0.
inline ImagePlane rotate_bilinear(const ImagePlane& p, double degrees) {
  const double th = degrees * std::numbers::pi / 180.0, cs = std::cos(th), sn = std::sin(th);
  const double cy = 0.5 * static_cast<double>(p.height - 1), cx = 0.5 * static_cast<double>(p.width - 1);
  ImagePlane o(p.height, p.width);
  auto px = [&](Index y, Index x) -> double {
    return (y < 0 || x < 0 || y >= p.height || x >= p.width) ? 0.0 : static_cast<double>(p.at(y, x));
  };
  for (Index y = 0; y < p.height; ++y)
    for (Index x = 0; x < p.width; ++x) {
      const double dy = static_cast<double>(y) - cy, dx = static_cast<double>(x) - cx;
      const double sy = cy + cs * dy - sn * dx, sx = cx + sn * dy + cs * dx;
      if (sy <= -1 || sx <= -1 || sy >= static_cast<double>(p.height) || sx >= static_cast<double>(p.width)) continue;
      const auto y0 = static_cast<Index>(std::floor(sy)), x0 = static_cast<Index>(std::floor(sx));
      const double fy = sy - static_cast<double>(y0), fx = sx - static_cast<double>(x0);
      const double v = (1 - fy) * ((1 - fx) * px(y0, x0) + fx * px(y0, x0 + 1)) +
                       fy * ((1 - fx) * px(y0 + 1, x0) + fx * px(y0 + 1, x0 + 1));
      o.at(y, x) = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
  return o;
}

inline BinaryMask rotate_nearest(const BinaryMask& m, double degrees) {
  const double th = degrees * std::numbers::pi / 180.0, cs = std::cos(th), sn = std::sin(th);
  const double cy = 0.5 * static_cast<double>(m.height - 1), cx = 0.5 * static_cast<double>(m.width - 1);
  BinaryMask o(m.height, m.width);
  for (Index y = 0; y < m.height; ++y)
    for (Index x = 0; x < m.width; ++x) {
      const double dy = static_cast<double>(y) - cy, dx = static_cast<double>(x) - cx;
      const auto sy = static_cast<Index>(std::lround(cy + cs * dy - sn * dx));
      const auto sx = static_cast<Index>(std::lround(cx + sn * dy + cs * dx));
      if (sy >= 0 && sx >= 0 && sy < m.height && sx < m.width) o.at(y, x) = m.at(sy, sx);
    }
  return o;
}

inline ImagePlane gamma_correct(const ImagePlane& p, double gamma) {
  ImagePlane o = p;
  for (auto& v : o.data) v = static_cast<float>(std::pow(static_cast<double>(v), gamma));
  return o;
}

inline ImagePlane resize_bilinear(const ImagePlane& p, Index h, Index w) {
  const auto ty = ops::detail::lerp_taps(p.height, h), tx = ops::detail::lerp_taps(p.width, w);
  ImagePlane o(h, w);
  for (Index y = 0; y < h; ++y) {
    const auto& a = ty[static_cast<std::size_t>(y)];
    for (Index x = 0; x < w; ++x) {
      const auto& b = tx[static_cast<std::size_t>(x)];
      const double v = a.w0 * (b.w0 * p.at(a.i0, b.i0) + b.w1 * p.at(a.i0, b.i1)) +
                       a.w1 * (b.w0 * p.at(a.i1, b.i0) + b.w1 * p.at(a.i1, b.i1));
      o.at(y, x) = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
  }
  return o;
}

inline BinaryMask resize_nearest(const BinaryMask& m, Index h, Index w) {
  BinaryMask o(h, w);
  for (Index y = 0; y < h; ++y) {
    const Index sy = std::min(m.height - 1, static_cast<Index>(std::floor((static_cast<double>(y) + 0.5) *
                                                                           static_cast<double>(m.height) / static_cast<double>(h))));
    for (Index x = 0; x < w; ++x) {
      const Index sx = std::min(m.width - 1, static_cast<Index>(std::floor((static_cast<double>(x) + 0.5) *
                                                                           static_cast<double>(m.width) / static_cast<double>(w))));
      o.at(y, x) = m.at(sy, sx) ? 1 : 0;
    }
  }
  return o;
}

// CLAHE binning and the clamps below would quietly turn NaN into a valid
// intensity.
inline void require_finite(const ImageSample& s) {
  for (float v : s.image.data)
    if (!std::isfinite(v)) throw DataError("non-finite pixel in " + s.source_path);
}

// Image bilinear, mask nearest-neighbour then re-binarized.
inline ImageSample resize_pair(const ImageSample& s, std::pair<Index, Index> target) {
  if (target.first < 1 || target.second < 1) throw ConfigError("resize_pair: target must be positive");
  require_finite(s);
  if (s.image.height == target.first && s.image.width == target.second) return s;
  ImageSample o = s;
  o.image = resize_bilinear(s.image, target.first, target.second);
  o.mask = resize_nearest(s.mask, target.first, target.second);
  return o;
}

// Independent stream per (seed, sample, epoch), so parallel loaders stay
// deterministic.
inline Rng sample_rng(std::uint64_t seed, std::uint64_t sample_index, std::uint64_t epoch) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(sample_index), static_cast<std::uint32_t>(sample_index >> 32),
                    static_cast<std::uint32_t>(epoch), static_cast<std::uint32_t>(epoch >> 32)};
  return Rng(seq);
}

// hflip, vflip, rotation, gamma, CLAHE, then resize. Every draw is taken
// whether or not its transform fires, so the stream layout is fixed.
inline ImageSample augment(const ImageSample& sample, const AugmentConfig& cfg, Rng& rng) {
  cfg.validate();
  require_finite(sample);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const double r_h = u01(rng), r_v = u01(rng), r_rot = u01(rng), r_g = u01(rng), r_gv = u01(rng), r_c = u01(rng);
  ImageSample s = sample;
  if (r_h < cfg.p_hflip) {
    s.image = flip_horizontal(s.image);
    s.mask = flip_horizontal(s.mask);
  }
  if (r_v < cfg.p_vflip) {
    s.image = flip_vertical(s.image);
    s.mask = flip_vertical(s.mask);
  }
  const double angle = (2 * r_rot - 1) * cfg.max_rotation_deg;
  if (angle != 0) {
    s.image = rotate_bilinear(s.image, angle);
    s.mask = rotate_nearest(s.mask, angle);
  }
  if (r_g < cfg.p_gamma) {
    const double g = cfg.gamma_range.first + r_gv * (cfg.gamma_range.second - cfg.gamma_range.first);
    s.image = gamma_correct(s.image, g);
  }
  if (r_c < cfg.p_clahe) s.image = apply_clahe(s.image, cfg.clahe_clip_limit, cfg.clahe_tiles);
  return resize_pair(s, cfg.target_size);
}

}  // namespace vfgs::data
