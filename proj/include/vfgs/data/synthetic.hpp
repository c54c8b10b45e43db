#pragma once

// Procedural fundus-like images with known vessel masks, laid out like DRIVE
// so the loaders, the CLI and the overfit smoke run work without the real
// datasets.

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "vfgs/data/io.hpp"
#include "vfgs/data/split.hpp"

namespace vfgs::data {

struct SyntheticConfig {
  Index height = 584;
  Index width = 565;
  double min_width = 3.0;   // vessel diameter in pixels at the finest branch
  double max_width = 11.0;  // at the trunks
  int trunks = 4;
  int max_depth = 4;
  double contrast = 0.28;  // green-channel darkening on a vessel
  double noise = 0.02;
  std::uint64_t seed = 0;
};

struct SyntheticFundus {
  RgbImage rgb;
  BinaryMask vessels;
  BinaryMask fov;
};

namespace synth_detail {

inline void stamp_disk(BinaryMask& m, double cy, double cx, double radius) {
  const Index r0 = std::max<Index>(0, static_cast<Index>(std::floor(cy - radius)));
  const Index r1 = std::min<Index>(m.height - 1, static_cast<Index>(std::ceil(cy + radius)));
  const Index c0 = std::max<Index>(0, static_cast<Index>(std::floor(cx - radius)));
  const Index c1 = std::min<Index>(m.width - 1, static_cast<Index>(std::ceil(cx + radius)));
  for (Index r = r0; r <= r1; ++r)
    for (Index c = c0; c <= c1; ++c) {
      const double dy = static_cast<double>(r) - cy, dx = static_cast<double>(c) - cx;
      if (dy * dy + dx * dx <= radius * radius) m.at(r, c) = 1;
    }
}

struct Branch {
  double y, x, angle, width;
  int depth;
};

}  // namespace synth_detail

inline SyntheticFundus make_synthetic_fundus(const SyntheticConfig& cfg) {
  if (cfg.height < 16 || cfg.width < 16) throw ConfigError("synthetic: image must be at least 16x16");
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  std::normal_distribution<double> N(0.0, 1.0);

  const double H = static_cast<double>(cfg.height), W = static_cast<double>(cfg.width);
  const double cy = H / 2, cx = W / 2, radius = 0.47 * std::min(H, W);
  SyntheticFundus out;
  out.fov = BinaryMask(cfg.height, cfg.width);
  for (Index r = 0; r < cfg.height; ++r)
    for (Index c = 0; c < cfg.width; ++c) {
      const double dy = static_cast<double>(r) - cy, dx = static_cast<double>(c) - cx;
      out.fov.at(r, c) = dy * dy + dx * dx <= radius * radius;
    }

  // Optic disc on one side; trunks leave it and branch outwards.
  const double side = U(rng) < 0.5 ? -1 : 1;
  const double disc_y = cy + (U(rng) - 0.5) * 0.2 * H, disc_x = cx + side * 0.28 * W;
  out.vessels = BinaryMask(cfg.height, cfg.width);
  std::vector<synth_detail::Branch> stack;
  for (int t = 0; t < cfg.trunks; ++t) {
    const double a = 2 * M_PI * (static_cast<double>(t) + 0.3 * U(rng)) / cfg.trunks;
    stack.push_back({disc_y, disc_x, a, cfg.max_width, 0});
  }
  const double step = 1.5;
  while (!stack.empty()) {
    auto b = stack.back();
    stack.pop_back();
    const double length = radius * (0.5 + 0.5 * U(rng)) / (1.0 + 0.6 * b.depth);
    const int n = static_cast<int>(length / step);
    double y = b.y, x = b.x, a = b.angle, w = b.width;
    for (int i = 0; i < n; ++i) {
      a += 0.05 * N(rng);
      y += step * std::sin(a);
      x += step * std::cos(a);
      const double dy = y - cy, dx = x - cx;
      if (dy * dy + dx * dx > radius * radius) break;
      synth_detail::stamp_disk(out.vessels, y, x, w / 2);
      if (b.depth < cfg.max_depth && i > 10 && U(rng) < 1.5 / (length / step / 2 + 1)) {
        const double nw = std::max(cfg.min_width, w * 0.7);
        const double turn = (U(rng) < 0.5 ? -1 : 1) * (0.5 + 0.5 * U(rng));
        stack.push_back({y, x, a + turn, nw, b.depth + 1});
        w = std::max(cfg.min_width, w * 0.85);
      }
    }
  }
  for (std::size_t i = 0; i < out.vessels.data.size(); ++i) out.vessels.data[i] &= out.fov.data[i];

  out.rgb = RgbImage(cfg.height, cfg.width);
  for (Index r = 0; r < cfg.height; ++r)
    for (Index c = 0; c < cfg.width; ++c) {
      auto* px = out.rgb.px(r, c);
      if (!out.fov.at(r, c)) continue;
      const double dy = (static_cast<double>(r) - cy) / radius, dx = (static_cast<double>(c) - cx) / radius;
      const double vignette = 1.0 - 0.35 * (dy * dy + dx * dx);
      const double ddy = static_cast<double>(r) - disc_y, ddx = static_cast<double>(c) - disc_x;
      const double disc = 0.3 * std::exp(-(ddy * ddy + ddx * ddx) / (2 * std::pow(0.06 * W, 2)));
      double g = 0.45 * vignette + disc;
      if (out.vessels.at(r, c)) g -= cfg.contrast;
      g += cfg.noise * N(rng);
      const double red = std::clamp(0.75 * vignette + disc, 0.0, 1.0);
      px[0] = static_cast<std::uint8_t>(std::lround(255 * red));
      px[1] = static_cast<std::uint8_t>(std::lround(255 * std::clamp(g, 0.0, 1.0)));
      px[2] = static_cast<std::uint8_t>(std::lround(255 * std::clamp(0.5 * g, 0.0, 1.0)));
    }
  return out;
}

// Writes n images as <root>/DRIVE/images/<k>_training.png with masks
// <k>_manual1.png and FOV masks fov/<stem>_mask.png, numbering training images
// from 21 and test images from 1.
inline std::vector<std::string> write_synthetic_drive(const fs::path& root, int n_train, int n_test,
                                                      SyntheticConfig cfg = {}) {
  const fs::path dir = root / "DRIVE";
  fs::create_directories(dir / "images");
  fs::create_directories(dir / "masks");
  fs::create_directories(dir / "fov");
  std::vector<std::string> stems;
  const std::uint64_t base_seed = cfg.seed;
  auto emit = [&](int number, const std::string& tag) {
    char num[8];
    std::snprintf(num, sizeof num, "%02d", number);
    cfg.seed = base_seed * 1000 + static_cast<std::uint64_t>(number);
    const auto f = make_synthetic_fundus(cfg);
    const std::string stem = std::string(num) + "_" + tag;
    write_png((dir / "images" / (stem + ".png")).string(), f.rgb);
    BinaryMask m = f.vessels;
    for (auto& v : m.data) v = v ? 255 : 0;
    write_png((dir / "masks" / (std::string(num) + "_manual1.png")).string(), m);
    BinaryMask fov = f.fov;
    for (auto& v : fov.data) v = v ? 255 : 0;
    write_png((dir / "fov" / (stem + "_mask.png")).string(), fov);
    stems.push_back(stem);
  };
  for (int i = 0; i < n_train; ++i) emit(21 + i, "training");
  for (int i = 0; i < n_test; ++i) emit(1 + i, "test");
  return stems;
}

}  // namespace vfgs::data
