#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vfgs/tensor.hpp"

namespace vfgs {

// A single 2-D raster plane, row-major.
template <typename P>
struct Plane {
  Index height = 0;
  Index width = 0;
  std::vector<P> data;

  Plane() = default;
  Plane(Index h, Index w, P fill = P{}) : height(h), width(w), data(static_cast<std::size_t>(h * w), fill) {}

  P& at(Index r, Index c) { return data[static_cast<std::size_t>(r * width + c)]; }
  const P& at(Index r, Index c) const { return data[static_cast<std::size_t>(r * width + c)]; }
  Index size() const { return height * width; }
  template <typename Q>
  bool same_shape(const Plane<Q>& o) const { return height == o.height && width == o.width; }

  friend bool operator==(const Plane& a, const Plane& b) = default;
};

using ImagePlane = Plane<float>;
using BinaryMask = Plane<std::uint8_t>;

// Interleaved 8-bit RGB raster.
struct RgbImage {
  Index height = 0;
  Index width = 0;
  std::vector<std::uint8_t> data;  // r, g, b per pixel

  RgbImage() = default;
  RgbImage(Index h, Index w) : height(h), width(w), data(static_cast<std::size_t>(h * w * 3), 0) {}
  std::uint8_t* px(Index r, Index c) { return data.data() + (r * width + c) * 3; }
  const std::uint8_t* px(Index r, Index c) const { return data.data() + (r * width + c) * 3; }
};

inline BinaryMask from_rows(const std::vector<std::vector<int>>& rows) {
  BinaryMask m(static_cast<Index>(rows.size()), rows.empty() ? 0 : static_cast<Index>(rows[0].size()));
  for (Index r = 0; r < m.height; ++r)
    for (Index c = 0; c < m.width; ++c) m.at(r, c) = static_cast<std::uint8_t>(rows[r][c] != 0);
  return m;
}

}  // namespace vfgs
