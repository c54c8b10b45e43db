#pragma once

// First-frame GIF decoder (87a/89a, global or local palette, interlacing).
// DRIVE ships its manual annotations as GIF, which OpenCV does not read.

#include <array>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "vfgs/errors.hpp"
#include "vfgs/tensor.hpp"

namespace vfgs::data {

struct RgbFrame {
  Index width = 0, height = 0;
  std::vector<std::uint8_t> rgb;
};

namespace gif_detail {

class Reader {
 public:
  Reader(const std::vector<std::uint8_t>& b, const std::string& path) : b_(b), path_(path) {}
  std::uint8_t u8() {
    if (pos_ >= b_.size()) fail("truncated file");
    return b_[pos_++];
  }
  std::uint16_t u16() {
    const std::uint16_t lo = u8();
    return static_cast<std::uint16_t>(lo | (u8() << 8));
  }
  void skip(std::size_t n) {
    if (pos_ + n > b_.size()) fail("truncated file");
    pos_ += n;
  }
  std::vector<std::uint8_t> sub_blocks() {
    std::vector<std::uint8_t> out;
    for (std::uint8_t n = u8(); n != 0; n = u8()) {
      if (pos_ + n > b_.size()) fail("truncated data block");
      out.insert(out.end(), b_.begin() + static_cast<std::ptrdiff_t>(pos_), b_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
      pos_ += n;
    }
    return out;
  }
  [[noreturn]] void fail(const std::string& why) const { throw DataError("GIF decode error in " + path_ + ": " + why); }

 private:
  const std::vector<std::uint8_t>& b_;
  std::string path_;
  std::size_t pos_ = 0;
};

inline std::vector<std::uint8_t> lzw_decode(const std::vector<std::uint8_t>& data, int min_code_size, std::size_t expected,
                                            const Reader& rd) {
  if (min_code_size < 2 || min_code_size > 8) rd.fail("bad LZW code size");
  const int clear = 1 << min_code_size, eoi = clear + 1;
  std::vector<std::uint16_t> prefix(4096);
  std::vector<std::uint8_t> suffix(4096), stack;
  std::vector<std::uint8_t> out;
  out.reserve(expected);
  for (int i = 0; i < clear; ++i) suffix[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(i);
  int code_size = min_code_size + 1, next = eoi + 1, prev = -1;
  std::uint8_t first = 0;
  std::uint32_t bits = 0;
  int nbits = 0;
  std::size_t pos = 0;
  auto emit = [&](int code) {
    stack.clear();
    while (code >= clear) {
      stack.push_back(suffix[static_cast<std::size_t>(code)]);
      code = prefix[static_cast<std::size_t>(code)];
    }
    stack.push_back(static_cast<std::uint8_t>(code));
    first = stack.back();
    out.insert(out.end(), stack.rbegin(), stack.rend());
  };
  while (out.size() < expected) {
    while (nbits < code_size) {
      if (pos >= data.size()) return out;
      bits |= static_cast<std::uint32_t>(data[pos++]) << nbits;
      nbits += 8;
    }
    const int code = static_cast<int>(bits & ((1u << code_size) - 1));
    bits >>= code_size;
    nbits -= code_size;
    if (code == clear) {
      code_size = min_code_size + 1;
      next = eoi + 1;
      prev = -1;
      continue;
    }
    if (code == eoi) break;
    if (prev < 0) {
      if (code >= clear) rd.fail("invalid first LZW code");
      emit(code);
      prev = code;
      continue;
    }
    if (code < next) {
      emit(code);
      if (next < 4096) {
        prefix[static_cast<std::size_t>(next)] = static_cast<std::uint16_t>(prev);
        suffix[static_cast<std::size_t>(next)] = first;
        ++next;
      }
    } else if (code == next) {
      emit(prev);
      out.push_back(first);
      if (next < 4096) {
        prefix[static_cast<std::size_t>(next)] = static_cast<std::uint16_t>(prev);
        suffix[static_cast<std::size_t>(next)] = first;
        ++next;
      }
    } else {
      rd.fail("LZW code out of range");
    }
    if (next == (1 << code_size) && code_size < 12) ++code_size;
    prev = code;
  }
  return out;
}

}  // namespace gif_detail

inline RgbFrame decode_gif(const std::vector<std::uint8_t>& bytes, const std::string& path = "<memory>") {
  gif_detail::Reader rd(bytes, path);
  std::array<char, 6> sig{};
  for (auto& ch : sig) ch = static_cast<char>(rd.u8());
  const std::string s(sig.begin(), sig.end());
  if (s != "GIF87a" && s != "GIF89a") rd.fail("missing GIF signature");
  RgbFrame f;
  f.width = rd.u16();
  f.height = rd.u16();
  const std::uint8_t flags = rd.u8();
  const std::uint8_t bg = rd.u8();
  rd.u8();
  std::vector<std::uint8_t> palette;
  if (flags & 0x80) {
    const std::size_t n = std::size_t{1} << ((flags & 0x07) + 1);
    palette.resize(n * 3);
    for (auto& v : palette) v = rd.u8();
  }
  f.rgb.assign(static_cast<std::size_t>(f.width * f.height * 3), 0);
  if (!palette.empty() && bg * 3u + 2 < palette.size())
    for (Index i = 0; i < f.width * f.height; ++i)
      for (int c = 0; c < 3; ++c) f.rgb[static_cast<std::size_t>(i * 3 + c)] = palette[bg * 3u + static_cast<unsigned>(c)];
  while (true) {
    const std::uint8_t tag = rd.u8();
    if (tag == 0x3B) rd.fail("no image frame");
    if (tag == 0x21) {
      rd.u8();
      rd.sub_blocks();
      continue;
    }
    if (tag != 0x2C) rd.fail("unexpected block");
    const Index left = rd.u16(), top = rd.u16(), w = rd.u16(), h = rd.u16();
    const std::uint8_t iflags = rd.u8();
    std::vector<std::uint8_t> pal = palette;
    if (iflags & 0x80) {
      const std::size_t n = std::size_t{1} << ((iflags & 0x07) + 1);
      pal.resize(n * 3);
      for (auto& v : pal) v = rd.u8();
    }
    if (pal.empty()) rd.fail("no color table");
    const int min_code = rd.u8();
    const auto data = rd.sub_blocks();
    const auto idx = gif_detail::lzw_decode(data, min_code, static_cast<std::size_t>(w * h), rd);
    std::vector<Index> rows(static_cast<std::size_t>(h));
    if (iflags & 0x40) {
      Index r = 0;
      for (auto [start, step] : {std::pair<Index, Index>{0, 8}, {4, 8}, {2, 4}, {1, 2}})
        for (Index y = start; y < h; y += step) rows[static_cast<std::size_t>(r++)] = y;
    } else {
      for (Index y = 0; y < h; ++y) rows[static_cast<std::size_t>(y)] = y;
    }
    for (Index i = 0; i < static_cast<Index>(idx.size()); ++i) {
      const Index y = top + rows[static_cast<std::size_t>(i / w)], x = left + i % w;
      if (y >= f.height || x >= f.width) continue;
      const std::size_t pi = static_cast<std::size_t>(idx[static_cast<std::size_t>(i)]) * 3;
      if (pi + 2 >= pal.size()) rd.fail("palette index out of range");
      for (int c = 0; c < 3; ++c) f.rgb[static_cast<std::size_t>((y * f.width + x) * 3 + c)] = pal[pi + static_cast<std::size_t>(c)];
    }
    return f;
  }
}

inline RgbFrame read_gif(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_gif(bytes, path);
}

}  // namespace vfgs::data
